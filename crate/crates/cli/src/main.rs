use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use newton_chaos::bands::{
    build_bands, check_hypotheses, BandError, BandOptions, BandSystem, HypothesisReport,
};
use newton_chaos::conjugacy::{admissible_samples, verify_scaling, AffineMap};
use newton_chaos::functions::{NewtonCondition, ScanOptions, DEFAULT_NF_TOL};
use newton_chaos::iteration::{iterate, IterateOptions, MapKind, MapVariant};
use newton_chaos::real::Extended;
use newton_chaos::sweep::{run_sweep, SweepParam, SweepSpec};
use newton_chaos::symbolic::{
    certify_prime_seeds, divergence_witness, find_periodic, prime_seed_count, Itinerary,
    PeriodicCertificate, SymbolPattern,
};
use newton_chaos::{Interval, SmoothFunction};
use newton_chaos_cli::config::expand_config_args;
use newton_chaos_cli::exit;
use newton_chaos_cli::spec::{
    parse_function_spec, parse_grid, parse_pair, parse_range, parse_symbols, parse_window,
};
use newton_chaos_cli::SCHEMA_VERSION;

#[derive(Parser)]
#[command(
    name = "newton-chaos",
    version,
    about = "Dynamics of Newton's map and its third-order variant"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Function spec, e.g. poly:0,4,0,-5,0,1 (ascending coefficients)
    #[arg(long = "f", global = true, allow_hyphen_values = true)]
    f: Option<String>,
    /// Search window lo:hi for roots and critical points
    #[arg(long, global = true, allow_hyphen_values = true)]
    window: Option<String>,
    /// Damping parameter
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, global = true, value_enum, default_value_t = MapArg::M)]
    map: MapArg,
    /// Machine-readable output
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "NEWTON_CHAOS_THREADS")]
    threads: Option<usize>,
    /// key=value file merged underneath the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1e-9)]
    cert_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-12)]
    root_tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    /// Classical Newton map
    N,
    /// Third-order map
    M,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the map from one starting point
    Orbit {
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e8)]
        escape_radius: f64,
    },
    /// Build and certify the two covering bands
    Bands {
        /// Comma-separated epsilon schedule
        #[arg(long)]
        eps: Option<String>,
        #[arg(long, default_value_t = 20_000)]
        cover_grid: usize,
    },
    /// Certify periodic points of a given period
    Periodic {
        #[arg(long)]
        period: usize,
        /// Single seed such as 1,2,2 (default: every prime seed)
        #[arg(long)]
        itinerary: Option<String>,
    },
    /// Point whose orbit follows a non-eventually-constant itinerary
    Witness {
        /// 'alt' or 'cycle:1,2,2'
        #[arg(long, default_value = "alt")]
        pattern: String,
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Check invariance of the map under x -> a*x + b
    VerifyScaling {
        /// a,b
        #[arg(long, allow_hyphen_values = true)]
        affine: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// lo:hi range the samples are drawn from
        #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
        sample_range: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Newton-class check, chaos hypotheses and band certification
    Classify,
    /// Parameter sweep written as CSV
    Sweep {
        /// 'lambda' or c<k> for the coefficient of x^k
        #[arg(long)]
        vary: String,
        /// lo:hi:steps
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        /// lo:hi:n seed grid
        #[arg(long, allow_hyphen_values = true)]
        seeds: String,
        #[arg(long, default_value_t = 200)]
        burn_in: usize,
        #[arg(long, default_value_t = 100)]
        tail: usize,
        #[arg(long, default_value_t = 1e8)]
        escape_radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn parse(message: impl ToString) -> Self {
        Self::new(exit::PARSE, message.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::new(exit::FAILURE, e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

fn e17(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| e17(*x)).collect::<Vec<_>>().join(" ")
}

struct Ctx {
    json: bool,
    global: Global,
}

impl Ctx {
    fn function(&self) -> Result<SmoothFunction, Failure> {
        let spec = self
            .global
            .f
            .as_deref()
            .ok_or_else(|| Failure::parse("--f <spec> is required"))?;
        let window = self
            .global
            .window
            .as_deref()
            .map(parse_window)
            .transpose()
            .map_err(Failure::parse)?;
        parse_function_spec(spec, window).map_err(Failure::parse)
    }

    fn kind(&self) -> Result<MapKind, Failure> {
        let variant = match self.global.map {
            MapArg::N => MapVariant::NewtonClassic,
            MapArg::M => MapVariant::NewtonThirdOrder,
        };
        MapKind::new(variant, self.global.lambda).map_err(Failure::parse)
    }

    fn scan(&self) -> ScanOptions {
        ScanOptions {
            tol: self.global.root_tol,
            ..ScanOptions::default()
        }
    }

    fn emit(&self, command: &str, body: Value, human: impl FnOnce() -> String) -> io::Result<()> {
        let mut out = io::stdout().lock();
        if self.json {
            let mut doc = json!({ "schema_version": SCHEMA_VERSION, "command": command });
            if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
                d.extend(b);
            }
            serde_json::to_writer_pretty(&mut out, &doc).map_err(io::Error::other)?;
            writeln!(out)
        } else {
            write!(out, "{}", human())
        }
    }
}

fn describe(func: &SmoothFunction) -> String {
    func.spec_string().unwrap_or_else(|| "closed-form".into())
}

fn hypotheses_text(h: &HypothesisReport) -> String {
    let mut s = String::new();
    let nc = &h.newton_class;
    s += &format!("newton class: {}\n", if nc.ok() { "yes" } else { "no" });
    s += &format!(
        "  simple roots: {}\n",
        if nc.nf2_ok { "ok" } else { "violated" }
    );
    s += &format!(
        "  simple critical points: {}\n",
        if nc.nf3_ok { "ok" } else { "violated" }
    );
    for w in &nc.witnesses {
        let which = match w.condition {
            NewtonCondition::SimpleRoots => "f = 0 with f' = 0",
            NewtonCondition::SimpleCriticalPoints => "f' = 0 with f'' = 0",
        };
        s += &format!(
            "  witness: {which} at x = {} (f = {}, f' = {}, f'' = {})\n",
            e17(w.x),
            e17(w.f),
            e17(w.df),
            e17(w.ddf)
        );
    }
    s += &format!("roots ({}): {}\n", h.root_count, join(&h.structure.roots));
    s += &format!("critical points: {}\n", join(&h.structure.critical_points));
    s += &format!(
        "opposite limits at ±inf: {}{}\n",
        if h.opposite_limits { "yes" } else { "no" },
        if h.limits_exact {
            ""
        } else {
            " (from window ends)"
        }
    );
    s += &format!(
        "at least four roots: {}\n",
        if h.enough_roots { "yes" } else { "no" }
    );
    s += &format!("hypotheses: {}\n", if h.passed() { "hold" } else { "fail" });
    s
}

fn bands_text(b: &BandSystem) -> String {
    let mut s = String::new();
    s += &format!("roots: {}\n", join(&b.roots));
    s += &format!("critical: {}\n", join(&b.critical));
    s += &format!("epsilon: {}\n", e17(b.epsilon));
    for (i, (band, cover)) in b.bands.iter().zip(&b.cover).enumerate() {
        s += &format!(
            "I{}: [{}, {}]  image ⊇ [{}, {}]\n",
            i + 1,
            e17(band.lo()),
            e17(band.hi()),
            e17(cover.min),
            e17(cover.max)
        );
    }
    s += &format!("certified: {}\n", b.certified);
    s
}

/// Bands for the third-order map, with the exit code of any failure.
fn certified_bands(
    ctx: &Ctx,
    func: &SmoothFunction,
    opts: &BandOptions,
) -> Result<BandSystem, (i32, Value, String)> {
    let kind = ctx
        .kind()
        .map_err(|f| (f.code, json!({ "error": f.message }), f.message))?;
    match build_bands(func, &kind, opts) {
        Ok(b) if b.certified => Ok(b),
        Ok(b) => Err((
            exit::CERTIFICATION,
            json!({ "certified": false, "bands": b }),
            bands_text(&b) + "bands not certified\n",
        )),
        Err(BandError::Hypotheses(h)) => Err((
            exit::HYPOTHESES,
            json!({ "hypotheses": *h, "passed": false }),
            hypotheses_text(&h),
        )),
        Err(e) => Err((
            exit::CERTIFICATION,
            json!({ "error": e.to_string() }),
            format!("{e}\n"),
        )),
    }
}

fn band_options(ctx: &Ctx) -> BandOptions {
    BandOptions {
        scan: ctx.scan(),
        ..BandOptions::default()
    }
}

fn cmd_orbit(ctx: &Ctx, x0: f64, max_iter: usize, escape_radius: f64) -> Outcome {
    let func = ctx.function()?;
    let kind = ctx.kind()?;
    let opts = IterateOptions {
        max_iter,
        escape_radius,
        tol: ctx.global.root_tol,
        ..IterateOptions::default()
    };
    let rec = iterate(&func, &kind, x0, &opts);
    ctx.emit(
        "orbit",
        json!({ "function": describe(&func), "variant": kind.variant(), "lambda": kind.lambda(), "orbit": rec }),
        || {
            let mut s = String::new();
            for (i, x) in rec.iterates.iter().enumerate() {
                s += &format!("{i} {}\n", e17(*x));
            }
            s += &format!("class: {}\n", rec.classification.label());
            s
        },
    )?;
    Ok(exit::OK)
}

fn cmd_bands(ctx: &Ctx, eps: Option<&str>, cover_grid: usize) -> Outcome {
    let func = ctx.function()?;
    let mut opts = band_options(ctx);
    opts.cover_grid = cover_grid;
    if let Some(e) = eps {
        opts.eps_schedule = e
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Failure::parse(format!("bad epsilon '{t}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    match certified_bands(ctx, &func, &opts) {
        Ok(b) => {
            ctx.emit(
                "bands",
                json!({ "function": describe(&func), "bands": b }),
                || bands_text(&b),
            )?;
            Ok(exit::OK)
        }
        Err((code, body, text)) => {
            ctx.emit("bands", body, || text)?;
            Ok(code)
        }
    }
}

fn certificate_row(c: &PeriodicCertificate) -> String {
    let seed: Vec<String> = c.itinerary.iter().map(|s| s.to_string()).collect();
    let bands: Vec<String> = c
        .visited_bands
        .iter()
        .map(|b| b.map(|i| i.to_string()).unwrap_or_else(|| "-".into()))
        .collect();
    format!(
        "{:<14} {} {:>3} {:.3e} {:<5} {}\n",
        seed.join(","),
        e17(c.point),
        c.period,
        c.residual,
        c.prime,
        bands.join(",")
    )
}

fn cmd_periodic(ctx: &Ctx, period: usize, itinerary: Option<&str>) -> Outcome {
    if period == 0 {
        return Err(Failure::parse("--period must be at least 1"));
    }
    let func = ctx.function()?;
    let seed = itinerary
        .map(|s| {
            let v = parse_symbols(s).map_err(Failure::parse)?;
            if v.len() != period {
                return Err(Failure::parse(format!(
                    "itinerary has {} symbols, period is {period}",
                    v.len()
                )));
            }
            Itinerary::periodic(v).map_err(Failure::parse)
        })
        .transpose()?;
    let bands = match certified_bands(ctx, &func, &band_options(ctx)) {
        Ok(b) => b,
        Err((code, body, text)) => {
            ctx.emit("periodic", body, || text)?;
            return Ok(code);
        }
    };
    let kind = ctx.kind()?;
    let g = kind.as_fn::<Extended>(&func);
    let eb: Vec<Interval<Extended>> = bands.bands.iter().map(|b| b.promote()).collect();
    let header = "itinerary      point                    n   residual  prime bands\n";
    match seed {
        Some(seed) => match find_periodic(&g, &eb, &seed, ctx.global.cert_tol) {
            Ok(c) => {
                let code = if c.prime || !seed.first_symbol_unique() {
                    exit::OK
                } else {
                    exit::CERTIFICATION
                };
                ctx.emit(
                    "periodic",
                    json!({ "epsilon": bands.epsilon, "certificates": [c] }),
                    || header.to_string() + &certificate_row(&c),
                )?;
                Ok(code)
            }
            Err(e) => {
                ctx.emit("periodic", json!({ "error": e.to_string() }), || {
                    format!("{e}\n")
                })?;
                Ok(exit::CERTIFICATION)
            }
        },
        None => {
            let count = certify_prime_seeds(&g, &eb, period, ctx.global.cert_tol);
            let expected = prime_seed_count(eb.len(), period);
            let ok = count.failures.is_empty() && count.certificates.iter().all(|c| c.prime);
            ctx.emit(
                "periodic",
                json!({
                    "epsilon": bands.epsilon,
                    "period": period,
                    "lower_bound": expected,
                    "distinct_prime": count.distinct_prime,
                    "certificates": count.certificates,
                    "failures": count.failures,
                }),
                || {
                    let mut s = header.to_string();
                    for c in &count.certificates {
                        s += &certificate_row(c);
                    }
                    for f in &count.failures {
                        s += &format!("failed {:?}: {}\n", f.seed, f.error);
                    }
                    s += &format!(
                        "distinct prime period-{period} points: {} (lower bound {expected})\n",
                        count.distinct_prime
                    );
                    s
                },
            )?;
            Ok(if ok { exit::OK } else { exit::CERTIFICATION })
        }
    }
}

fn cmd_witness(ctx: &Ctx, pattern: &str, depth: usize) -> Outcome {
    let func = ctx.function()?;
    let pattern: SymbolPattern = pattern.parse().map_err(Failure::parse)?;
    if depth < 2 {
        return Err(Failure::parse("--depth must be at least 2"));
    }
    let bands = match certified_bands(ctx, &func, &band_options(ctx)) {
        Ok(b) => b,
        Err((code, body, text)) => {
            ctx.emit("witness", body, || text)?;
            return Ok(code);
        }
    };
    let kind = ctx.kind()?;
    let g = kind.as_fn::<Extended>(&func);
    let eb: Vec<Interval<Extended>> = bands.bands.iter().map(|b| b.promote()).collect();
    let w = divergence_witness(&g, &eb, depth, &pattern, ctx.global.cert_tol)
        .map_err(Failure::parse)?;
    ctx.emit(
        "witness",
        json!({ "epsilon": bands.epsilon, "witness": w }),
        || {
            let mut s = format!("point: {}\n", e17(w.point));
            s += &format!(
                "verified prefix: {} of {}\n",
                w.verified_prefix,
                w.symbols.len()
            );
            for (i, (x, sym)) in w.orbit.iter().zip(&w.symbols).enumerate() {
                s += &format!("{i} {} band {sym}\n", e17(*x));
            }
            s
        },
    )?;
    Ok(exit::OK)
}

fn cmd_verify_scaling(
    ctx: &Ctx,
    affine: &str,
    samples: usize,
    sample_range: &str,
    tol: f64,
) -> Outcome {
    let func = ctx.function()?;
    let kind = ctx.kind()?;
    let (a, b) = parse_pair(affine).map_err(Failure::parse)?;
    let t = AffineMap::new(a, b).map_err(Failure::parse)?;
    let range = parse_window(sample_range).map_err(Failure::parse)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.global.seed);
    let candidates: Vec<f64> = (0..samples)
        .map(|_| rng.gen_range(range.lo()..range.hi()))
        .collect();
    let xs = admissible_samples(&func, &t, &candidates, ScanOptions::default().grid_n);
    let r = verify_scaling(&func, &t, &xs, &kind, tol);
    ctx.emit("verify-scaling", json!({ "function": describe(&func), "affine": t, "report": r }), || {
        format!(
            "{}: {} samples checked, {} skipped, {} excluded near critical points\nworst: x = {} rel err = {:.3e} (tol {:.1e})\n",
            if r.passed { "pass" } else { "fail" },
            r.checked,
            r.skipped.len(),
            samples - xs.len(),
            r.worst_x.map(e17).unwrap_or_else(|| "-".into()),
            r.max_rel_err,
            tol
        )
    })?;
    Ok(if r.passed {
        exit::OK
    } else {
        exit::CERTIFICATION
    })
}

fn cmd_classify(ctx: &Ctx) -> Outcome {
    let func = ctx.function()?;
    let opts = band_options(ctx);
    let h = check_hypotheses(&func, opts.scan, DEFAULT_NF_TOL);
    if !h.passed() {
        ctx.emit(
            "classify",
            json!({ "hypotheses": h, "certified": false }),
            || hypotheses_text(&h),
        )?;
        return Ok(exit::HYPOTHESES);
    }
    match certified_bands(ctx, &func, &opts) {
        Ok(b) => {
            ctx.emit(
                "classify",
                json!({ "hypotheses": h, "bands": b, "certified": true }),
                || hypotheses_text(&h) + &bands_text(&b) + "chaotic regime certified\n",
            )?;
            Ok(exit::OK)
        }
        Err((code, body, text)) => {
            ctx.emit(
                "classify",
                json!({ "hypotheses": h, "certified": false, "detail": body }),
                || hypotheses_text(&h) + &text,
            )?;
            Ok(code)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    ctx: &Ctx,
    vary: &str,
    range: &str,
    seeds: &str,
    burn_in: usize,
    tail: usize,
    escape_radius: f64,
    out: Option<&PathBuf>,
) -> Outcome {
    let func = ctx.function()?;
    let kind = ctx.kind()?;
    let param = match vary {
        "lambda" => SweepParam::Lambda,
        c => match c.strip_prefix('c').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => SweepParam::Coeff(k),
            None => {
                return Err(Failure::parse(format!(
                    "--vary must be 'lambda' or c<k>, got '{c}'"
                )))
            }
        },
    };
    let (lo, hi, steps) = parse_range(range).map_err(Failure::parse)?;
    let seeds = parse_grid(seeds).map_err(Failure::parse)?;
    let spec = SweepSpec {
        burn_in,
        tail,
        escape_radius,
        ..SweepSpec::new(func, param, lo, hi, steps, seeds)
    };
    let data = run_sweep(&spec, &kind).map_err(Failure::parse)?;
    if let Some(path) = out {
        let mut w = BufWriter::new(File::create(path)?);
        data.write_csv(&mut w)?;
        w.flush()?;
    }
    if ctx.json {
        ctx.emit("sweep", json!({ "dataset": data }), String::new)?;
    } else if out.is_none() {
        data.write_csv(io::stdout().lock())?;
    } else {
        println!("{} rows written", data.rows.len());
    }
    Ok(exit::OK)
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(exit::FAILURE, e.to_string()))?;
    }
    if !(cli.global.cert_tol > 0.0 && cli.global.root_tol > 0.0) {
        return Err(Failure::parse("tolerances must be positive"));
    }
    let ctx = Ctx {
        json: cli.global.json,
        global: cli.global,
    };
    match &cli.command {
        Command::Orbit {
            x0,
            max_iter,
            escape_radius,
        } => cmd_orbit(&ctx, *x0, *max_iter, *escape_radius),
        Command::Bands { eps, cover_grid } => cmd_bands(&ctx, eps.as_deref(), *cover_grid),
        Command::Periodic { period, itinerary } => {
            cmd_periodic(&ctx, *period, itinerary.as_deref())
        }
        Command::Witness { pattern, depth } => cmd_witness(&ctx, pattern, *depth),
        Command::VerifyScaling {
            affine,
            samples,
            sample_range,
            tol,
        } => cmd_verify_scaling(&ctx, affine, *samples, sample_range, *tol),
        Command::Classify => cmd_classify(&ctx),
        Command::Sweep {
            vary,
            range,
            seeds,
            burn_in,
            tail,
            escape_radius,
            out,
        } => cmd_sweep(
            &ctx,
            vary,
            range,
            seeds,
            *burn_in,
            *tail,
            *escape_radius,
            out.as_ref(),
        ),
    }
}

fn main() -> ExitCode {
    let args = match expand_config_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit::PARSE as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::PARSE as u8 } else { 0 });
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    ExitCode::from(code as u8)
}
