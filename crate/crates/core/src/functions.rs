//! Newton-class functions: evaluation of `f`, `f'`, `f''`, root and critical
//! point isolation on a bounded window, and numerical checks of the
//! simple-root / simple-critical-point conditions.
//!
//! Everything here works on a finite window. Roots and critical points outside
//! the window are invisible to the scans.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::real::Real;

/// Window used when the caller does not supply one.
pub const DEFAULT_WINDOW: (f64, f64) = (-50.0, 50.0);
/// Absolute root residual, scaled by `1 + |x|`.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Threshold below which `f'` at a root (or `f''` at a critical point) counts as zero.
pub const DEFAULT_NF_TOL: f64 = 1e-8;
pub const DEFAULT_GRID: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionError {
    #[error("coefficient list is empty")]
    EmptyCoefficients,
    #[error("leading coefficient is zero")]
    ZeroLeadingCoefficient,
    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Nonempty compact interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<R = f64> {
    lo: R,
    hi: R,
}

impl<R: Real> Interval<R> {
    pub fn new(lo: R, hi: R) -> Result<Self, FunctionError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(FunctionError::InvalidInterval {
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        Ok(Self { lo, hi })
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: R) -> Result<Self, FunctionError> {
        Self::new(x, x)
    }

    pub fn lo(&self) -> R {
        self.lo
    }

    pub fn hi(&self) -> R {
        self.hi
    }

    pub fn width(&self) -> R {
        self.hi - self.lo
    }

    pub fn mid(&self) -> R {
        R::midpoint(self.lo, self.hi)
    }

    pub fn nondegenerate(&self) -> bool {
        self.lo < self.hi
    }

    pub fn contains(&self, x: R) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Membership with `slack` added on both sides.
    pub fn contains_with_slack(&self, x: R, slack: R) -> bool {
        self.lo - slack <= x && x <= self.hi + slack
    }

    pub fn contains_interval(&self, other: &Interval<R>, slack: R) -> bool {
        other.lo >= self.lo - slack && other.hi <= self.hi + slack
    }

    pub fn intersects(&self, other: &Interval<R>) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// `n + 1` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<R> {
        let n = n.max(1);
        let step = self.width() / R::from_f64(n as f64);
        let mut xs: Vec<R> = (0..n)
            .map(|i| self.lo + step * R::from_f64(i as f64))
            .collect();
        xs.push(self.hi);
        xs
    }

    pub fn cast<S: Real>(&self) -> Interval<S> {
        Interval {
            lo: S::from_f64(self.lo.to_f64_lossy()),
            hi: S::from_f64(self.hi.to_f64_lossy()),
        }
    }

    pub fn to_f64(&self) -> Interval<f64> {
        Interval {
            lo: self.lo.to_f64_lossy(),
            hi: self.hi.to_f64_lossy(),
        }
    }
}

impl Interval<f64> {
    pub fn default_window() -> Self {
        Self {
            lo: DEFAULT_WINDOW.0,
            hi: DEFAULT_WINDOW.1,
        }
    }

    pub fn promote<S: Real>(&self) -> Interval<S> {
        self.cast()
    }
}

impl<R: Real> fmt::Display for Interval<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.16e}, {:.16e}]",
            self.lo.to_f64_lossy(),
            self.hi.to_f64_lossy()
        )
    }
}

/// Dense polynomial with coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, FunctionError> {
        if coeffs.is_empty() {
            return Err(FunctionError::EmptyCoefficients);
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(FunctionError::NonFiniteCoefficient { index });
        }
        if *coeffs.last().unwrap() == 0.0 {
            return Err(FunctionError::ZeroLeadingCoefficient);
        }
        Ok(Self { coeffs })
    }

    fn new_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation in any scalar type.
    pub fn eval<R: Real>(&self, x: R) -> R {
        self.coeffs
            .iter()
            .rev()
            .fold(R::zero(), |acc, &c| acc * x + R::from_f64(c))
    }

    /// Formal derivative. The derivative of a constant is the zero polynomial `[0]`.
    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new_unchecked(vec![0.0]);
        }
        Polynomial::new_unchecked(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Coefficients of `p(a·y + b)`, expanded with Horner's scheme on polynomials.
    pub fn compose_affine(&self, a: f64, b: f64) -> Polynomial {
        let mut acc = vec![0.0; self.coeffs.len()];
        let mut len = 1;
        for &c in self.coeffs.iter().rev() {
            // acc <- acc * (a y + b) + c
            let mut next = vec![0.0; self.coeffs.len()];
            for k in 0..len {
                next[k] += acc[k] * b;
                if k + 1 < next.len() {
                    next[k + 1] += acc[k] * a;
                }
            }
            next[0] += c;
            acc = next;
            len = (len + 1).min(self.coeffs.len());
        }
        Polynomial::new_unchecked(acc)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Polynomial {
        p: Polynomial,
        dp: Polynomial,
        ddp: Polynomial,
    },
    ClosedForm {
        f: ScalarFn,
        df: ScalarFn,
        ddf: ScalarFn,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Polynomial,
    ClosedForm,
}

/// A `C²` function together with its first two derivatives and a search window.
///
/// Closed-form functions evaluate in `f64` even when asked for an extended
/// scalar; only the polynomial kind gains precision from [`crate::Extended`].
#[derive(Clone)]
pub struct SmoothFunction {
    repr: Repr,
    window: Interval,
}

impl SmoothFunction {
    pub fn polynomial(coeffs: Vec<f64>, window: Interval) -> Result<Self, FunctionError> {
        let p = Polynomial::new(coeffs)?;
        Ok(Self::from_polynomial(p, window))
    }

    pub fn from_polynomial(p: Polynomial, window: Interval) -> Self {
        let dp = p.derivative();
        let ddp = dp.derivative();
        Self {
            repr: Repr::Polynomial { p, dp, ddp },
            window,
        }
    }

    /// Caller supplies `f`, `f'` and `f''`; nothing is differentiated automatically.
    pub fn closed_form<F, D, DD>(f: F, df: D, ddf: DD, window: Interval) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        DD: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            repr: Repr::ClosedForm {
                f: Arc::new(f),
                df: Arc::new(df),
                ddf: Arc::new(ddf),
            },
            window,
        }
    }

    pub fn kind(&self) -> FunctionKind {
        match self.repr {
            Repr::Polynomial { .. } => FunctionKind::Polynomial,
            Repr::ClosedForm { .. } => FunctionKind::ClosedForm,
        }
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn with_window(mut self, window: Interval) -> Self {
        self.window = window;
        self
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match &self.repr {
            Repr::Polynomial { p, .. } => Some(p),
            Repr::ClosedForm { .. } => None,
        }
    }

    /// Canonical `poly:c0,c1,...` form; `None` for closed-form functions.
    pub fn spec_string(&self) -> Option<String> {
        self.as_polynomial().map(|p| {
            let parts: Vec<String> = p.coefficients().iter().map(|c| format!("{c:?}")).collect();
            format!("poly:{}", parts.join(","))
        })
    }

    pub fn f(&self, x: f64) -> f64 {
        self.f_real(x)
    }

    pub fn df(&self, x: f64) -> f64 {
        self.df_real(x)
    }

    pub fn ddf(&self, x: f64) -> f64 {
        self.ddf_real(x)
    }

    pub fn f_real<R: Real>(&self, x: R) -> R {
        match &self.repr {
            Repr::Polynomial { p, .. } => p.eval(x),
            Repr::ClosedForm { f, .. } => R::from_f64(f(x.to_f64_lossy())),
        }
    }

    pub fn df_real<R: Real>(&self, x: R) -> R {
        match &self.repr {
            Repr::Polynomial { dp, .. } => dp.eval(x),
            Repr::ClosedForm { df, .. } => R::from_f64(df(x.to_f64_lossy())),
        }
    }

    pub fn ddf_real<R: Real>(&self, x: R) -> R {
        match &self.repr {
            Repr::Polynomial { ddp, .. } => ddp.eval(x),
            Repr::ClosedForm { ddf, .. } => R::from_f64(ddf(x.to_f64_lossy())),
        }
    }
}

impl fmt::Debug for SmoothFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Polynomial { p, .. } => f
                .debug_struct("SmoothFunction")
                .field("coeffs", &p.coefficients())
                .field("window", &self.window)
                .finish(),
            Repr::ClosedForm { .. } => f
                .debug_struct("SmoothFunction")
                .field("kind", &"closed_form")
                .field("window", &self.window)
                .finish(),
        }
    }
}

/// Grid resolution and residual tolerance for sign-change scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    pub grid_n: usize,
    pub tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_GRID,
            tol: DEFAULT_ROOT_TOL,
        }
    }
}

#[inline]
fn scale(x: f64) -> f64 {
    1.0 + x.abs()
}

/// Sign-change scan of `g` over `window`, bisection of each bracket down to
/// `tol·(1+|x|)`, then one Newton step with `dg` kept only when it stays in the
/// bracket and lowers the residual.
fn scan_zeros<G, D>(g: G, dg: D, window: Interval, grid_n: usize, tol: f64) -> Vec<f64>
where
    G: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64,
{
    let grid_n = grid_n.max(2);
    let xs = window.grid(grid_n);
    let ys: Vec<f64> = xs.par_iter().map(|&x| g(x)).collect();

    let mut zeros: Vec<f64> = Vec::new();
    let mut push = |x: f64| {
        if let Some(&last) = zeros.last() {
            if (x - last).abs() <= 2.0 * tol * scale(x) {
                return;
            }
        }
        zeros.push(x);
    };

    for i in 0..xs.len() {
        if ys[i] == 0.0 {
            push(xs[i]);
            continue;
        }
        if i + 1 < xs.len()
            && ys[i + 1] != 0.0
            && (ys[i] < 0.0) != (ys[i + 1] < 0.0)
            && ys[i].is_finite()
            && ys[i + 1].is_finite()
        {
            push(refine_bracket(&g, &dg, xs[i], xs[i + 1], ys[i], tol));
        }
    }
    zeros
}

fn refine_bracket<G, D>(g: &G, dg: &D, a0: f64, b0: f64, ga0: f64, tol: f64) -> f64
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b, mut ga) = (a0, b0, ga0);
    let bisect_to = |a: &mut f64, b: &mut f64, ga: &mut f64, width: f64| -> Option<f64> {
        loop {
            let m = 0.5 * (*a + *b);
            if m <= *a || m >= *b || (*b - *a) <= width * scale(m) {
                return None;
            }
            let gm = g(m);
            if gm == 0.0 {
                return Some(m);
            }
            if (gm < 0.0) == (*ga < 0.0) {
                *a = m;
                *ga = gm;
            } else {
                *b = m;
            }
        }
    };

    if let Some(x) = bisect_to(&mut a, &mut b, &mut ga, tol) {
        return x;
    }
    let m = 0.5 * (a + b);
    let gm = g(m);
    let d = dg(m);
    let mut best = m;
    let mut best_res = gm.abs();
    if d != 0.0 && d.is_finite() {
        let x1 = m - gm / d;
        if x1 >= a0 && x1 <= b0 {
            let r1 = g(x1).abs();
            if r1 <= best_res {
                best = x1;
                best_res = r1;
            }
        }
    }
    if best_res <= tol * scale(best) {
        return best;
    }
    // Residual still above tolerance: finish the bracket at machine precision.
    if let Some(x) = bisect_to(&mut a, &mut b, &mut ga, 0.0) {
        return x;
    }
    let (fa, fb) = (g(a).abs(), g(b).abs());
    let cand = if fa <= fb { (a, fa) } else { (b, fb) };
    if cand.1 < best_res {
        cand.0
    } else {
        best
    }
}

/// Simple roots of `f` in the window, strictly increasing.
///
/// A grid value that is exactly zero is accepted as a root and the scan
/// continues after it.
pub fn find_roots(func: &SmoothFunction, grid_n: usize, tol: f64) -> Vec<f64> {
    scan_zeros(|x| func.f(x), |x| func.df(x), func.window(), grid_n, tol)
}

/// Roots of `f'` in the window, bracketed by sign changes of `f'`.
pub fn find_critical_points(func: &SmoothFunction, grid_n: usize, tol: f64) -> Vec<f64> {
    scan_zeros(|x| func.df(x), |x| func.ddf(x), func.window(), grid_n, tol)
}

/// Sign changes of `f''`; candidate locations of even-multiplicity roots of `f'`.
fn find_inflections(func: &SmoothFunction, grid_n: usize, tol: f64) -> Vec<f64> {
    let h = 1e-6;
    scan_zeros(
        |x| func.ddf(x),
        |x| (func.ddf(x + h) - func.ddf(x - h)) / (2.0 * h),
        func.window(),
        grid_n,
        tol,
    )
}

/// Roots and critical points of `f` on its window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalStructure {
    pub roots: Vec<f64>,
    pub critical_points: Vec<f64>,
    /// Every pair of consecutive roots has a critical point strictly between them.
    pub interlacing_ok: bool,
}

impl CriticalStructure {
    pub fn analyze(func: &SmoothFunction, scan: ScanOptions) -> Self {
        let roots = find_roots(func, scan.grid_n, scan.tol);
        let critical_points = find_critical_points(func, scan.grid_n, scan.tol);
        let interlacing_ok = roots
            .windows(2)
            .all(|w| critical_points.iter().any(|&c| c > w[0] && c < w[1]));
        Self {
            roots,
            critical_points,
            interlacing_ok,
        }
    }

    /// Critical points strictly inside `(lo, hi)`.
    pub fn critical_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.critical_points
            .iter()
            .copied()
            .filter(|&c| c > lo && c < hi)
            .collect()
    }

    pub fn roots_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.roots
            .iter()
            .copied()
            .filter(|&r| r > lo && r < hi)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonCondition {
    /// `f(x) = 0` implies `f'(x) != 0`.
    SimpleRoots,
    /// `f'(x) = 0` implies `f''(x) != 0`.
    SimpleCriticalPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonClassWitness {
    pub condition: NewtonCondition,
    pub x: f64,
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonClassReport {
    pub nf2_ok: bool,
    pub nf3_ok: bool,
    pub witnesses: Vec<NewtonClassWitness>,
}

impl NewtonClassReport {
    pub fn ok(&self) -> bool {
        self.nf2_ok && self.nf3_ok
    }
}

pub fn verify_newton_class(func: &SmoothFunction, tol: f64) -> NewtonClassReport {
    verify_newton_class_with(func, ScanOptions::default(), tol)
}

/// Checks the simple-root and simple-critical-point conditions on the window.
///
/// Multiple roots without a sign change of `f` still show up as critical
/// points with `f ≈ 0`, and even-multiplicity critical points show up as sign
/// changes of `f''` with `f' ≈ 0`; both are reported as violations.
pub fn verify_newton_class_with(
    func: &SmoothFunction,
    scan: ScanOptions,
    tol: f64,
) -> NewtonClassReport {
    let structure = CriticalStructure::analyze(func, scan);
    let inflections = find_inflections(func, scan.grid_n, scan.tol);
    let witness = |condition, x: f64| NewtonClassWitness {
        condition,
        x,
        f: func.f(x),
        df: func.df(x),
        ddf: func.ddf(x),
    };

    let mut witnesses: Vec<NewtonClassWitness> = Vec::new();
    let mut record = |w: NewtonClassWitness| {
        let dup = witnesses
            .iter()
            .any(|o| o.condition == w.condition && (o.x - w.x).abs() <= 1e-6 * scale(w.x));
        if !dup {
            witnesses.push(w);
        }
    };

    for &r in &structure.roots {
        if func.df(r).abs() <= tol {
            record(witness(NewtonCondition::SimpleRoots, r));
        }
    }
    for &c in &structure.critical_points {
        if func.f(c).abs() <= tol {
            record(witness(NewtonCondition::SimpleRoots, c));
        }
        if func.ddf(c).abs() <= tol {
            record(witness(NewtonCondition::SimpleCriticalPoints, c));
        }
    }
    for &p in &inflections {
        if func.df(p).abs() <= tol {
            record(witness(NewtonCondition::SimpleCriticalPoints, p));
            if func.f(p).abs() <= tol {
                record(witness(NewtonCondition::SimpleRoots, p));
            }
        }
    }
    witnesses.sort_by(|a, b| a.x.total_cmp(&b.x));

    NewtonClassReport {
        nf2_ok: !witnesses
            .iter()
            .any(|w| w.condition == NewtonCondition::SimpleRoots),
        nf3_ok: !witnesses
            .iter()
            .any(|w| w.condition == NewtonCondition::SimpleCriticalPoints),
        witnesses,
    }
}
