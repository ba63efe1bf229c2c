//! Affine changes of variable.
//!
//! For `T(x) = ax + b` with `a ≠ 0`, `T ∘ N_{λ,f∘T} ∘ T⁻¹ = N_{λ,f}` and
//! `T ∘ M_{λ,f∘T} ∘ T⁻¹ = M_{λ,f}`. The checks here evaluate both sides in
//! floating point and report the worst relative disagreement.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::functions::{find_critical_points, FunctionKind, Interval, SmoothFunction};
use crate::iteration::{iterate, IterateOptions, MapKind, MapVariant, OrbitRecord, DERIV_FLOOR};

/// Samples closer than this to a critical point of `f` (or of `f∘T`, measured
/// in its own variable) are dropped.
pub const CRITICAL_EXCLUSION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConjugacyError {
    #[error("affine scale must be finite and nonzero, got {0}")]
    DegenerateScale(f64),
    #[error("affine shift must be finite, got {0}")]
    NonFiniteShift(f64),
}

/// `x ↦ a·x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    a: f64,
    b: f64,
}

impl AffineMap {
    pub fn new(a: f64, b: f64) -> Result<Self, ConjugacyError> {
        if !a.is_finite() || a == 0.0 {
            return Err(ConjugacyError::DegenerateScale(a));
        }
        if !b.is_finite() {
            return Err(ConjugacyError::NonFiniteShift(b));
        }
        Ok(Self { a, b })
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    /// `x ↦ (x − b)/a`.
    pub fn inverse(&self) -> AffineMap {
        AffineMap {
            a: 1.0 / self.a,
            b: -self.b / self.a,
        }
    }

    /// Evaluates `T⁻¹(x)` as `(x − b)/a`, which rounds once less than
    /// applying [`AffineMap::inverse`].
    pub fn apply_inverse(&self, x: f64) -> f64 {
        (x - self.b) / self.a
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            a: self.a * other.a,
            b: self.a * other.b + self.b,
        }
    }
}

/// `f ∘ T`, with derivatives `a·f'∘T` and `a²·f''∘T`. Polynomials stay
/// polynomials (exact coefficient expansion); the window becomes `T⁻¹(window)`.
pub fn conjugate_function(func: &SmoothFunction, t: &AffineMap) -> SmoothFunction {
    let w = func.window();
    let (u, v) = (t.apply_inverse(w.lo()), t.apply_inverse(w.hi()));
    let window = Interval::new(u.min(v), u.max(v)).unwrap_or(w);
    let (a, b) = (t.a, t.b);
    match (func.kind(), func.as_polynomial()) {
        (FunctionKind::Polynomial, Some(p)) => {
            SmoothFunction::from_polynomial(p.compose_affine(a, b), window)
        }
        _ => {
            let (f0, f1, f2) = (func.clone(), func.clone(), func.clone());
            SmoothFunction::closed_form(
                move |y| f0.f(a * y + b),
                move |y| a * f1.df(a * y + b),
                move |y| a * a * f2.ddf(a * y + b),
                window,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub variant: MapVariant,
    pub lambda: f64,
    pub tol: f64,
    /// Largest `|T(g_{f∘T}(T⁻¹x)) − g_f(x)| / (1 + |g_f(x)|)`.
    pub max_rel_err: f64,
    pub worst_x: Option<f64>,
    pub checked: usize,
    /// Samples where either side hit the derivative floor.
    pub skipped: Vec<f64>,
    pub passed: bool,
}

/// Compares both sides of the conjugacy at every sample.
pub fn verify_scaling(
    func: &SmoothFunction,
    t: &AffineMap,
    samples: &[f64],
    kind: &MapKind,
    tol: f64,
) -> ScalingReport {
    let conj = conjugate_function(func, t);
    let errs: Vec<Option<f64>> = samples
        .par_iter()
        .map(|&x| {
            if func.df(x).abs() <= DERIV_FLOOR {
                return None;
            }
            let rhs = kind.step(func, x).ok()?;
            let lhs = t.apply(kind.step(&conj, t.apply_inverse(x)).ok()?);
            Some((lhs - rhs).abs() / (1.0 + rhs.abs()))
        })
        .collect();
    let mut max_rel_err = 0.0;
    let mut worst_x = None;
    let mut skipped = Vec::new();
    let mut checked = 0;
    for (&x, e) in samples.iter().zip(&errs) {
        match e {
            None => skipped.push(x),
            Some(e) => {
                checked += 1;
                // NaN compares false, so treat it as the worst possible error.
                if !(*e <= max_rel_err) {
                    max_rel_err = if e.is_nan() { f64::INFINITY } else { *e };
                    worst_x = Some(x);
                }
            }
        }
    }
    ScalingReport {
        variant: kind.variant(),
        lambda: kind.lambda(),
        tol,
        max_rel_err,
        worst_x,
        checked,
        skipped,
        passed: max_rel_err <= tol,
    }
}

pub fn verify_scaling_n(
    func: &SmoothFunction,
    t: &AffineMap,
    samples: &[f64],
    lambda: f64,
    tol: f64,
) -> Option<ScalingReport> {
    let kind = MapKind::new(MapVariant::NewtonClassic, lambda).ok()?;
    Some(verify_scaling(func, t, samples, &kind, tol))
}

pub fn verify_scaling_m(
    func: &SmoothFunction,
    t: &AffineMap,
    samples: &[f64],
    lambda: f64,
    tol: f64,
) -> Option<ScalingReport> {
    let kind = MapKind::new(MapVariant::NewtonThirdOrder, lambda).ok()?;
    Some(verify_scaling(func, t, samples, &kind, tol))
}

/// Keeps the candidates that are at least [`CRITICAL_EXCLUSION`] away from
/// every critical point of `f` and whose preimage under `T` is equally far
/// from every critical point of `f∘T`.
pub fn admissible_samples(
    func: &SmoothFunction,
    t: &AffineMap,
    candidates: &[f64],
    grid_n: usize,
) -> Vec<f64> {
    let crit = find_critical_points(func, grid_n, 1e-12);
    let crit_conj: Vec<f64> = find_critical_points(&conjugate_function(func, t), grid_n, 1e-12);
    candidates
        .iter()
        .copied()
        .filter(|&x| {
            let y = t.apply_inverse(x);
            crit.iter().all(|c| (x - c).abs() >= CRITICAL_EXCLUSION)
                && crit_conj
                    .iter()
                    .all(|c| (y - c).abs() >= CRITICAL_EXCLUSION)
        })
        .collect()
}

/// Relative gap `|x_i − T(y_i)| / (1 + |x_i|)` between the orbit of `x` under
/// the map for `f` and the `T`-image of the orbit of `T⁻¹(x)` for `f∘T`,
/// for `i = 0..=steps`. Stops early if either orbit blows up.
pub fn orbit_conjugacy_gaps(
    func: &SmoothFunction,
    t: &AffineMap,
    kind: &MapKind,
    x: f64,
    steps: usize,
) -> Vec<f64> {
    let conj = conjugate_function(func, t);
    let (mut u, mut v) = (x, t.apply_inverse(x));
    let mut gaps = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        gaps.push((u - t.apply(v)).abs() / (1.0 + u.abs()));
        if i == steps {
            break;
        }
        match (kind.step(func, u), kind.step(&conj, v)) {
            (Ok(a), Ok(b)) => {
                u = a;
                v = b;
            }
            _ => break,
        }
    }
    gaps
}

/// Orbit records of `x` for `f` and of `T⁻¹(x)` for `f∘T`. Residual and
/// revisit tolerances are shared; the escape radius is rescaled by `1/|a|`.
pub fn conjugate_orbits(
    func: &SmoothFunction,
    t: &AffineMap,
    kind: &MapKind,
    x: f64,
    opts: &IterateOptions,
) -> (OrbitRecord, OrbitRecord) {
    let conj = conjugate_function(func, t);
    let conj_opts = IterateOptions {
        escape_radius: opts.escape_radius / t.a.abs(),
        ..*opts
    };
    (
        iterate(func, kind, x, opts),
        iterate(&conj, kind, t.apply_inverse(x), &conj_opts),
    )
}
