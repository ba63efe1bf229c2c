//! One line per acceptance criterion. Exits non-zero if any criterion fails.

use newton_chaos::bands::{build_bands, BandOptions, BandSystem};
use newton_chaos::conjugacy::{admissible_samples, verify_scaling, AffineMap};
use newton_chaos::symbolic::{certify_prime_seeds, divergence_witness, pullback, SymbolPattern};
use newton_chaos::{
    estimate_order, find_roots, Extended, Interval, MapKind, MapVariant, SmoothFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, Box<dyn Fn() -> Check>);

fn poly(c: &[f64]) -> SmoothFunction {
    SmoothFunction::polynomial(c.to_vec(), Interval::default_window()).unwrap()
}

fn quintic() -> SmoothFunction {
    poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0])
}

fn m(lambda: f64) -> MapKind {
    MapKind::new(MapVariant::NewtonThirdOrder, lambda).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixed_points() -> Check {
    let fs = [
        poly(&[-1.0, 0.0, 1.0]),
        poly(&[0.0, -1.0, 0.0, 1.0]),
        quintic(),
    ];
    let mut checked = 0;
    for f in &fs {
        let roots = find_roots(f, 20_000, 1e-12);
        ensure(!roots.is_empty(), || "no roots detected".into())?;
        for lambda in [0.5, 1.0, 2.0] {
            for &r in &roots {
                let y = m(lambda).step(f, r).map_err(|e| e.to_string())?;
                let gap = (y - r).abs();
                ensure(gap <= 1e-12 * (1.0 + r.abs()), || {
                    format!("r = {r}, lambda = {lambda}: |M(r) - r| = {gap:e}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (root, lambda) pairs"))
}

fn orders() -> Check {
    let mut parts = Vec::new();
    for (name, f, root) in [
        ("x^2-1", poly(&[-1.0, 0.0, 1.0]), 1.0),
        ("x^3-x", poly(&[0.0, -1.0, 0.0, 1.0]), 1.0),
    ] {
        let seeds: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .flat_map(|d| [root + d, root - d])
            .collect();
        for (kind, want) in [(MapKind::newton(), 2.0), (MapKind::third_order(), 3.0)] {
            let p = estimate_order(&f, &kind, root, &seeds).map_err(|e| e.to_string())?;
            ensure((p - want).abs() <= 0.3, || {
                format!("{name} {:?}: order {p:.3}, expected {want}", kind.variant())
            })?;
            parts.push(format!("{name} {p:.2}"));
        }
    }
    Ok(parts.join(", "))
}

fn scaling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let affine = |rng: &mut ChaCha8Rng| {
        let a = loop {
            let a: f64 = rng.gen_range(-10.0..10.0);
            if a.abs() >= 0.1 {
                break a;
            }
        };
        AffineMap::new(a, rng.gen_range(-5.0..5.0)).unwrap()
    };
    let lambdas = [0.5, 1.0, 2.0];
    let mut tuples = 0;
    let mut worst = 0.0f64;
    while tuples < 200 {
        let degree = rng.gen_range(1..=5);
        let mut c: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-5.0..5.0)).collect();
        c[degree] = rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let f = SmoothFunction::polynomial(c.clone(), Interval::new(-20.0, 20.0).unwrap()).unwrap();
        let t = affine(&mut rng);
        let lambda = lambdas[rng.gen_range(0..3)];
        let xs = admissible_samples(&f, &t, &[rng.gen_range(-3.0..3.0)], 4096);
        if xs.is_empty() {
            continue;
        }
        let r = verify_scaling(&f, &t, &xs, &m(lambda), 1e-9);
        ensure(r.passed, || {
            format!(
                "counterexample f = {c:?}, T = {t:?}, x = {}, lambda = {lambda}: {:e}",
                xs[0], r.max_rel_err
            )
        })?;
        worst = worst.max(r.max_rel_err);
        tuples += 1;
    }
    let g = SmoothFunction::closed_form(
        |x: f64| x + 2.0 * x.sin(),
        |x: f64| 1.0 + 2.0 * x.cos(),
        |x: f64| -2.0 * x.sin(),
        Interval::new(-20.0, 20.0).unwrap(),
    );
    let mut closed = 0;
    while closed < 50 {
        let t = affine(&mut rng);
        let lambda = lambdas[rng.gen_range(0..3)];
        let xs = admissible_samples(&g, &t, &[rng.gen_range(-6.0..6.0)], 20_000);
        if xs.is_empty() {
            continue;
        }
        let r = verify_scaling(&g, &t, &xs, &m(lambda), 1e-9);
        ensure(r.passed, || {
            format!(
                "counterexample f = x + 2 sin x, T = {t:?}, x = {}, lambda = {lambda}: {:e}",
                xs[0], r.max_rel_err
            )
        })?;
        worst = worst.max(r.max_rel_err);
        closed += 1;
    }
    Ok(format!(
        "{} tuples ({closed} with x + 2 sin x), worst rel err {worst:.1e}",
        tuples + closed
    ))
}

fn certified_bands(lambda: f64) -> Result<BandSystem, String> {
    let b =
        build_bands(&quintic(), &m(lambda), &BandOptions::default()).map_err(|e| e.to_string())?;
    ensure(b.certified, || {
        format!("not certified at lambda = {lambda}")
    })?;
    let [i1, i2] = b.bands;
    ensure(i1.nondegenerate() && i2.nondegenerate(), || {
        "degenerate band".into()
    })?;
    ensure(i1.hi() < i2.lo(), || format!("bands overlap: {i1} {i2}"))?;
    Ok(b)
}

fn bands_and_pullbacks(lambda: f64) -> Check {
    let b = certified_bands(lambda)?;
    let f = quintic();
    let kind = m(lambda);
    let g = |x: f64| kind.step(&f, x).unwrap_or(f64::NAN);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let band = b.bands[rng.gen_range(0..2)];
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        let (u, v) = (u.min(v), u.max(v).max(u.min(v) + 1e-6).min(1.0));
        let k = Interval::new(band.lo() + u * band.width(), band.lo() + v * band.width()).unwrap();
        let j = b.bands[rng.gen_range(0..2)];
        let l = pullback(&g, &j, &k, 1e-9).map_err(|e| format!("K = {k}, J = {j}: {e}"))?;
        let (ya, yb) = (g(l.lo()), g(l.hi()));
        let tol = 1e-9 * (1.0 + k.lo().abs().max(k.hi().abs()));
        let hit = |p: f64, q: f64| (ya - p).abs() <= tol && (yb - q).abs() <= tol;
        ensure(
            j.contains_interval(&l, 0.0) && (hit(k.lo(), k.hi()) || hit(k.hi(), k.lo())),
            || format!("K = {k}, J = {j}: L = {l}, images {ya:e} {yb:e}"),
        )?;
    }
    Ok(format!(
        "eps = {}, I1 = {}, I2 = {}, 1000 pullbacks",
        b.epsilon, b.bands[0], b.bands[1]
    ))
}

/// Sign changes of gⁿ(x) − x over `band`: a uniform grid of spacing at most
/// `h`, with cells bisected (down to 1e-10) wherever the midpoint departs from
/// linear interpolation. Poles of gⁿ sit arbitrarily close to periodic points,
/// so a purely uniform grid can bracket an even number of crossings.
fn dense_brackets(
    f: &SmoothFunction,
    kind: &MapKind,
    band: Interval,
    n: usize,
    h: f64,
) -> Vec<f64> {
    let phi = |x: f64| {
        let mut y = x;
        for _ in 0..n {
            y = match kind.step(f, y) {
                Ok(v) if v.is_finite() => v,
                _ => return f64::NAN,
            };
        }
        y - x
    };
    fn cell(phi: &dyn Fn(f64) -> f64, a: (f64, f64), b: (f64, f64), out: &mut Vec<f64>) {
        let m = 0.5 * (a.0 + b.0);
        let fm = phi(m);
        let smooth = a.1.is_finite()
            && b.1.is_finite()
            && fm.is_finite()
            && (fm - 0.5 * (a.1 + b.1)).abs() <= 1e-3 * (1.0 + a.1.abs() + b.1.abs());
        if smooth || b.0 - a.0 <= 1e-10 {
            if a.1.is_finite() && b.1.is_finite() && (a.1 <= 0.0) != (b.1 <= 0.0) {
                out.push(m);
            }
            return;
        }
        cell(phi, a, (m, fm), out);
        cell(phi, (m, fm), b, out);
    }
    let steps = (band.width() / h).ceil() as usize;
    let mut out = Vec::new();
    let mut prev = (band.lo(), phi(band.lo()));
    for i in 1..=steps {
        let x = band.lo() + band.width() * (i as f64 / steps as f64);
        let next = (x, phi(x));
        cell(&phi, prev, next, &mut out);
        prev = next;
    }
    out
}

fn periodic_points(lambda: f64, periods: std::ops::RangeInclusive<usize>) -> Check {
    let b = certified_bands(lambda)?;
    let f = quintic();
    let kind = m(lambda);
    let g = kind.as_fn::<Extended>(&f);
    let eb: Vec<Interval<Extended>> = b.bands.iter().map(|x| x.promote()).collect();
    let mut summary = Vec::new();
    for n in periods {
        let count = certify_prime_seeds(&g, &eb, n, 1e-9);
        ensure(count.distinct_prime >= 2, || {
            format!(
                "n = {n}: {} distinct prime certificates, failures {:?}",
                count.distinct_prime, count.failures
            )
        })?;
        for c in &count.certificates {
            ensure(
                c.residual <= 1e-9 && c.prime && c.realizes_itinerary(),
                || format!("n = {n}: bad certificate {c:?}"),
            )?;
        }
        if n <= 3 {
            let brackets: Vec<f64> = b
                .bands
                .iter()
                .flat_map(|band| dense_brackets(&f, &kind, *band, n, 1e-6))
                .collect();
            for c in &count.certificates {
                let near = brackets
                    .iter()
                    .map(|x| (x - c.point).abs())
                    .fold(f64::INFINITY, f64::min);
                ensure(near <= 1e-6, || {
                    format!(
                        "n = {n}: certified point {} not recovered (nearest {near:e})",
                        c.point
                    )
                })?;
            }
        }
        summary.push(format!("n={n}:{}", count.distinct_prime));
    }
    Ok(summary.join(" "))
}

fn witness() -> Check {
    let b = certified_bands(1.0)?;
    let f = quintic();
    let kind = MapKind::third_order();
    let g = kind.as_fn::<Extended>(&f);
    let eb: Vec<Interval<Extended>> = b.bands.iter().map(|x| x.promote()).collect();
    let alt = divergence_witness(&g, &eb, 10, &SymbolPattern::Alternating, 1e-9)
        .map_err(|e| e.to_string())?;
    let other: SymbolPattern = "cycle:1,2,2".parse().map_err(|e| format!("{e:?}"))?;
    let w2 = divergence_witness(&g, &eb, 10, &other, 1e-9).map_err(|e| e.to_string())?;
    ensure(alt.verified_prefix >= 8, || {
        format!(
            "alternating witness verified only {} symbols",
            alt.verified_prefix
        )
    })?;
    ensure(
        alt.symbols[..2] == w2.symbols[..2] && alt.symbols[2] != w2.symbols[2],
        || "patterns do not first differ at stage 3".into(),
    )?;
    ensure(alt.point != w2.point, || "witnesses coincide".into())?;
    Ok(format!(
        "alt verified {} at {:.16e}, cycle:1,2,2 verified {} at {:.16e}",
        alt.verified_prefix, alt.point, w2.verified_prefix, w2.point
    ))
}

fn damping() -> Check {
    let mut parts = Vec::new();
    for lambda in [0.5, 2.0] {
        bands_and_pullbacks(lambda).map_err(|e| format!("lambda = {lambda}: {e}"))?;
        let p = periodic_points(lambda, 1..=3).map_err(|e| format!("lambda = {lambda}: {e}"))?;
        parts.push(format!("lambda={lambda} [{p}]"));
    }
    Ok(parts.join(", "))
}

fn cli(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newton-chaos"))
        .args(args)
        .env("NEWTON_CHAOS_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn negative_controls() -> Check {
    for spec in ["poly:-1,0,1", "poly:4,0,-5,0,1"] {
        let out = cli(&["classify", "--f", spec], "1");
        ensure(out.status.code() == Some(3), || {
            format!("{spec}: exit {:?}", out.status.code())
        })?;
    }
    for (spec, conditions) in [
        ("poly:0,0,1", &["simple_roots"][..]),
        (
            "poly:0,0,0,1",
            &["simple_roots", "simple_critical_points"][..],
        ),
    ] {
        let out = cli(&["classify", "--f", spec, "--json"], "1");
        ensure(out.status.code() == Some(3), || {
            format!("{spec}: exit {:?}", out.status.code())
        })?;
        let doc: serde_json::Value =
            serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        let nc = &doc["hypotheses"]["newton_class"];
        let witnesses = nc["witnesses"].as_array().cloned().unwrap_or_default();
        for cond in conditions {
            ensure(
                witnesses.iter().any(|w| {
                    w["condition"] == *cond && w["x"].as_f64().is_some_and(|x| x.abs() <= 1e-6)
                }),
                || format!("{spec}: no {cond} witness at 0 in {nc}"),
            )?;
        }
    }
    Ok("x^2-1 and x^4-5x^2+4 exit 3; x^2 and x^3 report witnesses at 0".into())
}

fn determinism() -> Check {
    let q = "poly:0,4,0,-5,0,1";
    let runs: [&[&str]; 5] = [
        &["periodic", "--f", q, "--period", "4", "--json"],
        &["witness", "--f", q, "--json"],
        &[
            "verify-scaling",
            "--f",
            q,
            "--affine",
            "2.5,-1",
            "--seed",
            "11",
            "--json",
        ],
        &[
            "sweep",
            "--f",
            q,
            "--vary",
            "lambda",
            "--range",
            "0.5:2:4",
            "--seeds",
            "-2.5:2.5:25",
            "--burn-in",
            "50",
            "--tail",
            "5",
        ],
        &["bands", "--f", q, "--lambda", "2", "--json"],
    ];
    for args in runs {
        let a = cli(args, "1");
        let b = cli(args, "1");
        let c = cli(args, "4");
        ensure(a.status.success() && !a.stdout.is_empty(), || {
            format!("{}: exit {:?}", args[0], a.status.code())
        })?;
        ensure(a.stdout == b.stdout && a.stdout == c.stdout, || {
            format!("{}: output differs between runs", args[0])
        })?;
    }
    Ok(format!(
        "{} commands byte-identical across runs and thread counts",
        runs.len()
    ))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (
            "1 fixed points",
            Duration::from_secs(1),
            Box::new(fixed_points),
        ),
        (
            "2 convergence order",
            Duration::from_secs(1),
            Box::new(orders),
        ),
        ("3 scaling", Duration::from_secs(5), Box::new(scaling)),
        (
            "4 band certification",
            Duration::from_secs(30),
            Box::new(|| bands_and_pullbacks(1.0)),
        ),
        (
            "5 periodic points",
            Duration::from_secs(120),
            Box::new(|| periodic_points(1.0, 1..=6)),
        ),
        (
            "6 divergence witness",
            Duration::from_secs(30),
            Box::new(witness),
        ),
        (
            "7 damping robustness",
            Duration::from_secs(240),
            Box::new(damping),
        ),
        (
            "8 negative controls",
            Duration::from_secs(60),
            Box::new(negative_controls),
        ),
        (
            "9 determinism",
            Duration::from_secs(120),
            Box::new(determinism),
        ),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let over = if took > budget {
            format!(" (over {}s budget)", budget.as_secs())
        } else {
            String::new()
        };
        match result {
            Ok(detail) => println!(
                "PASS  criterion {name}: {detail} [{:.2}s]{over}",
                took.as_secs_f64()
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "FAIL  criterion {name}: {detail} [{:.2}s]{over}",
                    took.as_secs_f64()
                );
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
