//! Parameter sweeps: orbit tails and classifications over a grid of
//! parameter values and seeds, plus the damping robustness table.

use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bands::{build_bands, check_hypotheses, BandOptions};
use crate::functions::{Polynomial, SmoothFunction};
use crate::iteration::{
    iterate, Classification, IterateOptions, MapKind, MapVariant, DEFAULT_ESCAPE_RADIUS,
};
use crate::real::Extended;
use crate::symbolic::{certify_prime_seeds, DEFAULT_CERT_TOL};

pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_TAIL: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("tail must be at least 1")]
    EmptyTail,
    #[error("no seeds given")]
    NoSeeds,
    #[error("parameter range [{lo}, {hi}] is not finite")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("escape radius must be positive, got {0}")]
    InvalidEscapeRadius(f64),
    #[error("damping value {0} is not allowed")]
    InvalidLambda(f64),
    #[error("coefficient sweeps need a polynomial")]
    NotPolynomial,
    #[error("parameter value {0} zeroes the leading coefficient")]
    DegenerateLeading(f64),
    #[error("chaos hypotheses fail for this function")]
    Hypotheses,
}

/// Which quantity the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "slot", content = "index", rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    /// Coefficient of `x^k`.
    Coeff(usize),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SmoothFunction,
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub seeds: Vec<f64>,
    pub burn_in: usize,
    pub tail: usize,
    pub escape_radius: f64,
}

impl SweepSpec {
    pub fn new(
        base: SmoothFunction,
        param: SweepParam,
        lo: f64,
        hi: f64,
        steps: usize,
        seeds: Vec<f64>,
    ) -> Self {
        Self {
            base,
            param,
            lo,
            hi,
            steps,
            seeds,
            burn_in: DEFAULT_BURN_IN,
            tail: DEFAULT_TAIL,
            escape_radius: DEFAULT_ESCAPE_RADIUS,
        }
    }

    /// `steps` evenly spaced values from `lo` to `hi` inclusive; one step
    /// gives `[lo]`.
    pub fn param_values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.lo];
        }
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * (i as f64 / n)
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.steps == 0 {
            return Err(SweepError::NoSteps);
        }
        if self.tail == 0 {
            return Err(SweepError::EmptyTail);
        }
        if self.seeds.is_empty() {
            return Err(SweepError::NoSeeds);
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(SweepError::InvalidRange {
                lo: self.lo,
                hi: self.hi,
            });
        }
        if !(self.escape_radius > 0.0) {
            return Err(SweepError::InvalidEscapeRadius(self.escape_radius));
        }
        for p in self.param_values() {
            self.function_at(p)?;
            if self.param == SweepParam::Lambda && p == 0.0 {
                return Err(SweepError::InvalidLambda(p));
            }
        }
        Ok(())
    }

    /// The function used at parameter value `p`.
    pub fn function_at(&self, p: f64) -> Result<SmoothFunction, SweepError> {
        match self.param {
            SweepParam::Lambda => Ok(self.base.clone()),
            SweepParam::Coeff(k) => {
                let poly = self.base.as_polynomial().ok_or(SweepError::NotPolynomial)?;
                let mut c = poly.coefficients().to_vec();
                if c.len() <= k {
                    c.resize(k + 1, 0.0);
                }
                c[k] = p;
                let q = Polynomial::new(c).map_err(|_| SweepError::DegenerateLeading(p))?;
                Ok(SmoothFunction::from_polynomial(q, self.base.window()))
            }
        }
    }
}

/// A tail entry; escaped values are kept as signed infinities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailValue {
    Finite(f64),
    PosInf,
    NegInf,
}

impl TailValue {
    fn csv(&self) -> String {
        match self {
            TailValue::Finite(x) => format!("{x:.16e}"),
            TailValue::PosInf => "inf+".into(),
            TailValue::NegInf => "inf-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub seed: f64,
    pub class: Classification,
    pub tail: Vec<TailValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDataset {
    pub param: SweepParam,
    pub variant: MapVariant,
    pub burn_in: usize,
    pub tail: usize,
    pub rows: Vec<SweepRow>,
}

fn run_cell(
    func: &SmoothFunction,
    kind: &MapKind,
    spec: &SweepSpec,
    param: f64,
    seed: f64,
) -> SweepRow {
    let opts = IterateOptions {
        escape_radius: spec.escape_radius,
        ..IterateOptions::default()
    };
    let class = match iterate(func, kind, seed, &opts).classification {
        Classification::DerivativeBlowup { .. } => Classification::Escaped,
        c => c,
    };

    let mut tail = Vec::with_capacity(spec.tail);
    let mut x = seed;
    let mut gone: Option<TailValue> = None;
    for i in 0..spec.burn_in + spec.tail {
        if gone.is_none() {
            match kind.step(func, x) {
                Ok(y) if y.is_finite() && y.abs() <= spec.escape_radius => x = y,
                Ok(y) => {
                    gone = Some(if y < 0.0 {
                        TailValue::NegInf
                    } else {
                        TailValue::PosInf
                    })
                }
                Err(_) => {
                    let correction = -kind.lambda() * func.f(x) / func.df(x);
                    gone = Some(if correction < 0.0 {
                        TailValue::NegInf
                    } else {
                        TailValue::PosInf
                    });
                }
            }
        }
        if i >= spec.burn_in {
            tail.push(gone.unwrap_or(TailValue::Finite(x)));
        }
    }
    SweepRow {
        param,
        seed,
        class,
        tail,
    }
}

/// Runs every `(param, seed)` cell in parallel; rows come back in
/// param-major, seed-minor order.
pub fn run_sweep(spec: &SweepSpec, kind: &MapKind) -> Result<SweepDataset, SweepError> {
    spec.validate()?;
    let params = spec.param_values();
    let cells: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|i| (0..spec.seeds.len()).map(move |j| (i, j)))
        .collect();
    let funcs: Vec<SmoothFunction> = params
        .iter()
        .map(|&p| spec.function_at(p))
        .collect::<Result<_, _>>()?;
    let kinds: Vec<MapKind> = params
        .iter()
        .map(|&p| match spec.param {
            SweepParam::Lambda => kind
                .with_lambda(p)
                .map_err(|_| SweepError::InvalidLambda(p)),
            SweepParam::Coeff(_) => Ok(*kind),
        })
        .collect::<Result<_, _>>()?;
    let rows = cells
        .par_iter()
        .map(|&(i, j)| run_cell(&funcs[i], &kinds[i], spec, params[i], spec.seeds[j]))
        .collect();
    Ok(SweepDataset {
        param: spec.param,
        variant: kind.variant(),
        burn_in: spec.burn_in,
        tail: spec.tail,
        rows,
    })
}

impl SweepDataset {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("param,seed,class");
        for i in 0..self.tail {
            let _ = write!(h, ",tail_{i}");
        }
        h
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for r in &self.rows {
            write!(w, "{:.16e},{:.16e},{}", r.param, r.seed, r.class.label())?;
            for t in &r.tail {
                write!(w, ",{}", t.csv())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DampingRow {
    pub lambda: f64,
    pub certified: bool,
    pub epsilon: Option<f64>,
    /// `(period, distinct prime certificates)`.
    pub counts: Vec<(usize, usize)>,
    pub min_count: Option<usize>,
    pub error: Option<String>,
}

/// Rebuilds the bands of `M_λ` for every `λ` and counts certified prime
/// periodic points for each requested period. Failures are recorded per row.
pub fn damping_robustness(
    func: &SmoothFunction,
    lambdas: &[f64],
    periods: &[usize],
    opts: &BandOptions,
) -> Result<Vec<DampingRow>, SweepError> {
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(SweepError::InvalidLambda(bad));
    }
    if !check_hypotheses(func, opts.scan, opts.nf_tol).passed() {
        return Err(SweepError::Hypotheses);
    }
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let kind = MapKind::new(MapVariant::NewtonThirdOrder, lambda).expect("validated");
            let mut row = DampingRow {
                lambda,
                certified: false,
                epsilon: None,
                counts: Vec::new(),
                min_count: None,
                error: None,
            };
            let bands = match build_bands(func, &kind, opts) {
                Ok(b) => b,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            row.certified = bands.certified;
            row.epsilon = Some(bands.epsilon);
            if !bands.certified {
                row.error = Some("bands do not cover".into());
                return row;
            }
            let g = kind.as_fn::<Extended>(func);
            let eb: Vec<_> = bands
                .bands
                .iter()
                .map(|b| b.promote::<Extended>())
                .collect();
            row.counts = periods
                .iter()
                .map(|&n| {
                    (
                        n,
                        certify_prime_seeds(&g, &eb, n, DEFAULT_CERT_TOL).distinct_prime,
                    )
                })
                .collect();
            row.min_count = row.counts.iter().map(|c| c.1).min();
            row
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{find_roots, Interval};

    fn poly(c: &[f64]) -> SmoothFunction {
        SmoothFunction::polynomial(c.to_vec(), Interval::default_window()).unwrap()
    }

    #[test]
    fn lambda_sweep_converges_at_one() {
        let spec = SweepSpec::new(
            poly(&[-1.0, 0.0, 1.0]),
            SweepParam::Lambda,
            0.1,
            2.0,
            20,
            vec![2.0],
        );
        let d = run_sweep(&spec, &MapKind::third_order()).unwrap();
        assert_eq!(d.rows.len(), 20);
        let at_one = d
            .rows
            .iter()
            .find(|r| (r.param - 1.0).abs() < 1e-12)
            .unwrap();
        match at_one.class {
            Classification::ConvergedToRoot { root } => assert!((root - 1.0).abs() < 1e-6),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn param_values_hit_both_ends() {
        let spec = SweepSpec::new(
            poly(&[-1.0, 0.0, 1.0]),
            SweepParam::Lambda,
            0.1,
            2.0,
            20,
            vec![2.0],
        );
        let v = spec.param_values();
        assert_eq!((v[0], v[19]), (0.1, 2.0));
        assert!((v[9] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let f = poly(&[-1.0, 0.0, 1.0]);
        let mut s = SweepSpec::new(f.clone(), SweepParam::Coeff(2), -1.0, 1.0, 3, vec![2.0]);
        assert_eq!(s.validate(), Err(SweepError::DegenerateLeading(0.0)));
        s.param = SweepParam::Coeff(0);
        assert!(s.validate().is_ok());
        s.steps = 0;
        assert_eq!(s.validate(), Err(SweepError::NoSteps));
        let s = SweepSpec {
            tail: 0,
            ..SweepSpec::new(f.clone(), SweepParam::Lambda, 0.5, 1.0, 2, vec![1.0])
        };
        assert_eq!(s.validate(), Err(SweepError::EmptyTail));
        let s = SweepSpec::new(f, SweepParam::Lambda, -1.0, 1.0, 3, vec![1.0]);
        assert_eq!(s.validate(), Err(SweepError::InvalidLambda(0.0)));
    }

    #[test]
    fn quintic_grid_has_non_convergent_rows() {
        let f = poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0]);
        let seeds: Vec<f64> = (0..1000).map(|i| -3.0 + 6.0 * i as f64 / 999.0).collect();
        let spec = SweepSpec::new(f.clone(), SweepParam::Lambda, 1.0, 1.0, 1, seeds);
        let d = run_sweep(&spec, &MapKind::third_order()).unwrap();
        assert_eq!(d.rows.len(), 1000);
        let roots = find_roots(&f, 20_000, 1e-12);
        let mut non_converged = 0;
        for r in &d.rows {
            match r.class {
                Classification::ConvergedToRoot { root } => {
                    assert!(roots.iter().any(|x| (x - root).abs() <= 1e-6), "{root}");
                }
                Classification::DerivativeBlowup { .. } => {
                    panic!("blowups are folded into escaped")
                }
                _ => non_converged += 1,
            }
        }
        assert!(non_converged > 0);
    }

    #[test]
    fn csv_is_deterministic_and_uses_sentinels() {
        let f = poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0]);
        let seeds: Vec<f64> = (0..50).map(|i| -3.0 + 0.12 * i as f64).collect();
        let mut spec = SweepSpec::new(f, SweepParam::Coeff(0), -0.5, 0.5, 4, seeds);
        spec.burn_in = 5;
        spec.tail = 4;
        spec.escape_radius = 10.0;
        let a = run_sweep(&spec, &MapKind::third_order()).unwrap().to_csv();
        let b = run_sweep(&spec, &MapKind::third_order()).unwrap().to_csv();
        assert_eq!(a, b);
        let mut lines = a.lines();
        assert_eq!(
            lines.next().unwrap(),
            "param,seed,class,tail_0,tail_1,tail_2,tail_3"
        );
        assert_eq!(lines.count(), 200);
        assert!(a.contains("inf+") || a.contains("inf-"));
        assert!(!a.contains("NaN") && !a.contains(",inf,"));
    }

    #[test]
    fn damping_rejects_bad_inputs() {
        let q = poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0]);
        let o = BandOptions::default();
        assert_eq!(
            damping_robustness(&q, &[1.0, 0.0], &[1], &o),
            Err(SweepError::InvalidLambda(0.0))
        );
        assert_eq!(
            damping_robustness(&q, &[-1.0], &[1], &o),
            Err(SweepError::InvalidLambda(-1.0))
        );
        assert_eq!(
            damping_robustness(&poly(&[-1.0, 0.0, 1.0]), &[1.0], &[1], &o),
            Err(SweepError::Hypotheses)
        );
    }

    #[test]
    fn damping_table_for_quintic() {
        let q = poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0]);
        let rows =
            damping_robustness(&q, &[0.5, 1.0, 2.0], &[1, 2, 3], &BandOptions::default()).unwrap();
        for r in rows {
            assert!(r.certified, "{r:?}");
            assert!(r.min_count.unwrap() >= 2, "{r:?}");
        }
    }
}
