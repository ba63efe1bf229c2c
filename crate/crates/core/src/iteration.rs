//! Newton map `N` and the third-order map `M`, both with damping, plus orbit
//! iteration and an empirical convergence-order estimator.
//!
//! ```text
//! N_λ(x) = x − λ·f(x)/f'(x)
//! M_λ(x) = N_λ(x) − λ·f(N_λ(x))/f'(x)
//! ```
//!
//! `M` reuses `f'(x)` in its second correction; it never evaluates `f'` at `N(x)`.

use serde::Serialize;
use thiserror::Error;

use crate::functions::SmoothFunction;
use crate::real::Real;

/// `|f'(x)|` at or below this is a blowup.
pub const DERIV_FLOOR: f64 = 1e-300;
/// `|f'(x)|` below this is merely suspicious; iteration continues.
pub const DERIV_WARN: f64 = 1e-12;
pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e8;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_ORBIT_TOL: f64 = 1e-12;
/// Relative revisit tolerance for periodic-orbit suspicion.
pub const DEFAULT_REVISIT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_LAG: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IterationError {
    #[error("derivative vanishes at x = {at}")]
    DerivativeBlowup { at: f64 },
    #[error("damping parameter must be finite and nonzero, got {0}")]
    InvalidLambda(f64),
    #[error("only {found} usable error pairs for order estimation (need 3)")]
    InsufficientPairs { found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapVariant {
    NewtonClassic,
    NewtonThirdOrder,
}

/// Which map to iterate and its damping parameter (`1` = undamped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapKind {
    variant: MapVariant,
    lambda: f64,
}

impl MapKind {
    pub fn new(variant: MapVariant, lambda: f64) -> Result<Self, IterationError> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(IterationError::InvalidLambda(lambda));
        }
        Ok(Self { variant, lambda })
    }

    pub fn newton() -> Self {
        Self {
            variant: MapVariant::NewtonClassic,
            lambda: 1.0,
        }
    }

    pub fn third_order() -> Self {
        Self {
            variant: MapVariant::NewtonThirdOrder,
            lambda: 1.0,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self, IterationError> {
        Self::new(self.variant, lambda)
    }

    pub fn variant(&self) -> MapVariant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step(&self, func: &SmoothFunction, x: f64) -> Result<f64, IterationError> {
        self.step_real(func, x)
    }

    pub fn step_real<R: Real>(&self, func: &SmoothFunction, x: R) -> Result<R, IterationError> {
        match self.variant {
            MapVariant::NewtonClassic => step_n(func, self.lambda, x),
            MapVariant::NewtonThirdOrder => step_m(func, self.lambda, x),
        }
    }

    /// The map as a plain function; blowups evaluate to NaN.
    pub fn as_fn<'a, R: Real>(&'a self, func: &'a SmoothFunction) -> impl Fn(R) -> R + Sync + 'a {
        move |x| self.step_real(func, x).unwrap_or_else(|_| R::nan())
    }
}

#[inline]
fn derivative_checked<R: Real>(func: &SmoothFunction, x: R) -> Result<R, IterationError> {
    let d = func.df_real(x);
    if !(d.abs() > R::from_f64(DERIV_FLOOR)) {
        return Err(IterationError::DerivativeBlowup {
            at: x.to_f64_lossy(),
        });
    }
    Ok(d)
}

/// Damped Newton step `x − λ·f(x)/f'(x)`.
pub fn step_n<R: Real>(func: &SmoothFunction, lambda: f64, x: R) -> Result<R, IterationError> {
    let d = derivative_checked(func, x)?;
    Ok(x - R::from_f64(lambda) * (func.f_real(x) / d))
}

/// Damped third-order step `N_λ(x) − λ·f(N_λ(x))/f'(x)`.
pub fn step_m<R: Real>(func: &SmoothFunction, lambda: f64, x: R) -> Result<R, IterationError> {
    let d = derivative_checked(func, x)?;
    let lam = R::from_f64(lambda);
    let n = x - lam * (func.f_real(x) / d);
    Ok(n - lam * (func.f_real(n) / d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Classification {
    ConvergedToRoot { root: f64 },
    PeriodicSuspect { period: usize },
    Escaped,
    DerivativeBlowup { at: f64 },
    MaxIter,
}

impl Classification {
    /// Compact label without commas, used in CSV output.
    pub fn label(&self) -> String {
        match self {
            Classification::ConvergedToRoot { root } => format!("converged({root:.16e})"),
            Classification::PeriodicSuspect { period } => format!("periodic({period})"),
            Classification::Escaped => "escaped".to_string(),
            Classification::DerivativeBlowup { at } => format!("blowup({at:.16e})"),
            Classification::MaxIter => "max_iter".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateOptions {
    pub max_iter: usize,
    pub escape_radius: f64,
    /// Converged once `|f(x)| <= tol`.
    pub tol: f64,
    /// Revisit threshold, relative to `1 + |x|`.
    pub revisit_tol: f64,
    /// Longest lag inspected by the revisit scan.
    pub max_lag: usize,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            tol: DEFAULT_ORBIT_TOL,
            revisit_tol: DEFAULT_REVISIT_TOL,
            max_lag: DEFAULT_MAX_LAG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord {
    pub start: f64,
    /// `iterates[0] == start`; at most `max_iter + 1` entries.
    pub iterates: Vec<f64>,
    pub classification: Classification,
}

/// Iterates `kind` from `start`, stopping at the first of: root reached,
/// escape, derivative blowup, revisit of an earlier iterate, or `max_iter`.
pub fn iterate(
    func: &SmoothFunction,
    kind: &MapKind,
    start: f64,
    opts: &IterateOptions,
) -> OrbitRecord {
    let mut iterates = Vec::with_capacity(opts.max_iter.min(4096) + 1);
    let mut x = start;
    let classification = loop {
        iterates.push(x);
        let n = iterates.len() - 1;
        if !x.is_finite() || x.abs() > opts.escape_radius {
            break Classification::Escaped;
        }
        if func.f(x).abs() <= opts.tol {
            break Classification::ConvergedToRoot { root: x };
        }
        let tol = opts.revisit_tol * (1.0 + x.abs());
        if let Some(period) =
            (1..=n.min(opts.max_lag)).find(|&p| (iterates[n - p] - x).abs() <= tol)
        {
            break Classification::PeriodicSuspect { period };
        }
        if n >= opts.max_iter {
            break Classification::MaxIter;
        }
        match kind.step(func, x) {
            Ok(next) => x = next,
            Err(IterationError::DerivativeBlowup { at }) => {
                break Classification::DerivativeBlowup { at }
            }
            Err(_) => unreachable!("step only fails on blowup"),
        }
    };
    OrbitRecord {
        start,
        iterates,
        classification,
    }
}

/// Least-squares slope of `log|e_{n+1}|` against `log|e_n|`, using consecutive
/// errors that both lie in `(1e-12, 1e-2)`.
pub fn estimate_order(
    func: &SmoothFunction,
    kind: &MapKind,
    root: f64,
    seeds: &[f64],
) -> Result<f64, IterationError> {
    const LO: f64 = 1e-12;
    const HI: f64 = 1e-2;
    const STEPS: usize = 60;
    let usable = |e: f64| e > LO && e < HI;

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for &seed in seeds {
        let mut x = seed;
        let mut prev = (x - root).abs();
        for _ in 0..STEPS {
            x = match kind.step(func, x) {
                Ok(v) if v.is_finite() => v,
                _ => break,
            };
            let e = (x - root).abs();
            if usable(prev) && usable(e) {
                pairs.push((prev.ln(), e.ln()));
            }
            if e <= LO {
                break;
            }
            prev = e;
        }
    }
    if pairs.len() < 3 {
        return Err(IterationError::InsufficientPairs { found: pairs.len() });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(IterationError::InsufficientPairs { found: pairs.len() });
    }
    Ok(sxy / sxx)
}
