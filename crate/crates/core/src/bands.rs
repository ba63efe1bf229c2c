//! Two-band covering structure for the third-order map.
//!
//! Given four consecutive simple roots `r₁ < r₂ < r₃ < r₄` of `f`, pick
//! critical points `c₁ ∈ (r₁,r₂)`, `c₂ ≤ c₂' ∈ (r₂,r₃)`, `c₃ ∈ (r₃,r₄)` so that
//! `(c₁,c₂)` and `(c₂',c₃)` each hold exactly one root and no critical point.
//! The map diverges with opposite signs at both ends of each of those
//! intervals, so for small enough `ε` the truncated bands
//! `I₁ = [c₁+ε, c₂−ε]` and `I₂ = [c₂'+ε, c₃−ε]` both map over `[c₁, c₃]`.
//!
//! Covering is established by dense sampling with refinement of the extreme
//! samples. It is numerical evidence, not an interval-arithmetic proof.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::functions::{
    find_critical_points, find_roots, verify_newton_class_with, CriticalStructure, FunctionKind,
    Interval, NewtonClassReport, ScanOptions, SmoothFunction, DEFAULT_NF_TOL,
};
use crate::iteration::{MapKind, MapVariant};

pub const DEFAULT_EPS_SCHEDULE: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const DEFAULT_COVER_GRID: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub newton_class: NewtonClassReport,
    pub structure: CriticalStructure,
    /// `f` tends to infinities of opposite sign at the two ends of the line.
    pub opposite_limits: bool,
    /// True when `opposite_limits` is decided exactly (polynomial degree parity)
    /// rather than from the signs of `f` at the window ends.
    pub limits_exact: bool,
    pub root_count: usize,
    pub enough_roots: bool,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.newton_class.ok() && self.opposite_limits && self.enough_roots
    }
}

pub fn check_hypotheses(func: &SmoothFunction, scan: ScanOptions, nf_tol: f64) -> HypothesisReport {
    let newton_class = verify_newton_class_with(func, scan, nf_tol);
    let structure = CriticalStructure::analyze(func, scan);
    let (opposite_limits, limits_exact) = match (func.kind(), func.as_polynomial()) {
        (FunctionKind::Polynomial, Some(p)) => (p.degree() % 2 == 1, true),
        _ => {
            let w = func.window();
            let (a, b) = (func.f(w.lo()), func.f(w.hi()));
            (a != 0.0 && b != 0.0 && (a < 0.0) != (b < 0.0), false)
        }
    };
    let root_count = structure.roots.len();
    HypothesisReport {
        newton_class,
        structure,
        opposite_limits,
        limits_exact,
        root_count,
        enough_roots: root_count >= 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EdgeVerdict {
    Opposite,
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeLimits {
    /// `(h, map(c_left + h))` for shrinking `h`.
    pub left_probes: Vec<(f64, f64)>,
    /// `(h, map(c_right − h))` for shrinking `h`.
    pub right_probes: Vec<(f64, f64)>,
    pub left_sign: i8,
    pub right_sign: i8,
    pub verdict: EdgeVerdict,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Probes the map at `c_left + h` and `c_right − h` for `h = probe_h, probe_h/100,
/// probe_h/10⁴` and checks that both sides grow without bound with opposite
/// signs. The interval must hold exactly one root of `f` and no critical point.
pub fn limits_at_band_edges(
    func: &SmoothFunction,
    kind: &MapKind,
    c_left: f64,
    c_right: f64,
    probe_h: f64,
) -> EdgeLimits {
    let inconclusive = |reason: String| EdgeLimits {
        left_probes: Vec::new(),
        right_probes: Vec::new(),
        left_sign: 0,
        right_sign: 0,
        verdict: EdgeVerdict::Inconclusive { reason },
    };
    let Ok(inner) = Interval::new(c_left, c_right) else {
        return inconclusive("empty interval".into());
    };
    if !(probe_h > 0.0 && probe_h < 0.5 * inner.width()) {
        return inconclusive("probe step does not fit inside the interval".into());
    }
    let local = func.clone().with_window(inner);
    let margin = 1e-9 * (1.0 + c_left.abs().max(c_right.abs()));
    let strictly_inside = |x: &f64| *x > c_left + margin && *x < c_right - margin;
    let roots = find_roots(&local, 4096, 1e-12);
    let crit: Vec<f64> = find_critical_points(&local, 4096, 1e-12)
        .into_iter()
        .filter(strictly_inside)
        .collect();
    let nroots = roots.iter().filter(|r| strictly_inside(r)).count();
    if nroots != 1 || !crit.is_empty() {
        return inconclusive(format!(
            "expected one root and no critical point inside, found {nroots} root(s) and {} critical point(s)",
            crit.len()
        ));
    }

    let eval = |x: f64| kind.step(func, x).unwrap_or(f64::NAN);
    let hs: Vec<f64> = (0..3).map(|k| probe_h * 1e-2f64.powi(k)).collect();
    let left_probes: Vec<(f64, f64)> = hs.iter().map(|&h| (h, eval(c_left + h))).collect();
    let right_probes: Vec<(f64, f64)> = hs.iter().map(|&h| (h, eval(c_right - h))).collect();

    let side = |probes: &[(f64, f64)]| -> Result<i8, String> {
        let s = sign(probes[0].1);
        if probes
            .iter()
            .any(|p| !p.1.is_finite() || sign(p.1) != s || s == 0)
        {
            return Err("probe signs are not consistent".into());
        }
        if probes.windows(2).any(|w| w[1].1.abs() <= w[0].1.abs()) {
            return Err("probe magnitudes are not growing".into());
        }
        Ok(s)
    };
    let (verdict, left_sign, right_sign) = match (side(&left_probes), side(&right_probes)) {
        (Ok(l), Ok(r)) if l == -r => (EdgeVerdict::Opposite, l, r),
        (Ok(l), Ok(r)) => (
            EdgeVerdict::Inconclusive {
                reason: "both sides diverge with the same sign".into(),
            },
            l,
            r,
        ),
        (Err(reason), _) | (_, Err(reason)) => (EdgeVerdict::Inconclusive { reason }, 0, 0),
    };
    EdgeLimits {
        left_probes,
        right_probes,
        left_sign,
        right_sign,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandOptions {
    pub scan: ScanOptions,
    /// Tried in order; the first certifying `ε` wins.
    pub eps_schedule: Vec<f64>,
    pub cover_grid: usize,
    pub nf_tol: f64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            scan: ScanOptions::default(),
            eps_schedule: DEFAULT_EPS_SCHEDULE.to_vec(),
            cover_grid: DEFAULT_COVER_GRID,
            nf_tol: DEFAULT_NF_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    /// Truncated bands are empty or lose their root.
    Invalid,
    Covered,
    NotCovered,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonTrial {
    pub epsilon: f64,
    pub status: TrialStatus,
    pub cover: Option<[CoverRange; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSystem {
    pub lambda: f64,
    pub variant: MapVariant,
    /// `r₁ < r₂ < r₃ < r₄`.
    pub roots: [f64; 4],
    /// `c₁ < c₂ <= c₂' < c₃`.
    pub critical: [f64; 4],
    pub epsilon: f64,
    pub bands: [Interval; 2],
    /// Sampled range of the map over each band.
    pub cover: [CoverRange; 2],
    /// Both bands map over `[c₁, c₃]` ("numerically certified").
    pub certified: bool,
    /// Every valid `ε` after the chosen one also certifies.
    pub monotone_in_epsilon: bool,
    pub trials: Vec<EpsilonTrial>,
}

impl BandSystem {
    pub fn intervals(&self) -> &[Interval] {
        &self.bands
    }

    /// `[c₁, c₃]`, the interval both bands must cover.
    pub fn cover_target(&self) -> Interval {
        Interval::new(self.critical[0], self.critical[3]).expect("ordered critical points")
    }

    pub fn map_kind(&self) -> MapKind {
        MapKind::new(self.variant, self.lambda).expect("validated at construction")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BandError {
    #[error("chaos hypotheses fail (newton class: {}, opposite limits: {}, roots: {})",
        .0.newton_class.ok(), .0.opposite_limits, .0.root_count)]
    Hypotheses(Box<HypothesisReport>),
    #[error("no critical point between consecutive roots {lo} and {hi}")]
    MissingCriticalPoint { lo: f64, hi: f64 },
    #[error("no epsilon in the schedule gives nonempty bands around their roots")]
    NoValidEpsilon,
}

/// Index of the first of four consecutive roots whose span is centred closest
/// to the window centre; ties go to the lower index.
fn select_root_quadruple(roots: &[f64], centre: f64) -> usize {
    (0..=roots.len() - 4)
        .min_by(|&a, &b| {
            let da = (0.5 * (roots[a] + roots[a + 3]) - centre).abs();
            let db = (0.5 * (roots[b] + roots[b + 3]) - centre).abs();
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

/// Golden-section search for an extreme of `g` on `[a, b]`.
fn refine_extreme<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, maximize: bool) -> (f64, f64) {
    let key = |y: f64| if maximize { -y } else { y };
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut y1 = g(x1);
    let mut y2 = g(x2);
    for _ in 0..80 {
        if key(y1) <= key(y2) {
            b = x2;
            x2 = x1;
            y2 = y1;
            x1 = b - inv_phi * (b - a);
            y1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            y1 = y2;
            x2 = a + inv_phi * (b - a);
            y2 = g(x2);
        }
    }
    if key(y1) <= key(y2) {
        (x1, y1)
    } else {
        (x2, y2)
    }
}

/// Range of `g` over `band` from `grid + 1` samples, with golden-section
/// refinement around the extreme samples. `None` if any sample is not finite.
pub fn sampled_range<G: Fn(f64) -> f64 + Sync>(
    g: &G,
    band: &Interval,
    grid: usize,
) -> Option<CoverRange> {
    let xs = band.grid(grid);
    let ys: Vec<f64> = xs.par_iter().map(|&x| g(x)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return None;
    }
    let (imin, imax) = ys.iter().enumerate().fold((0, 0), |(lo, hi), (i, &y)| {
        (
            if y < ys[lo] { i } else { lo },
            if y > ys[hi] { i } else { hi },
        )
    });
    let neighbourhood = |i: usize| (xs[i.saturating_sub(1)], xs[(i + 1).min(xs.len() - 1)]);
    let (a, b) = neighbourhood(imin);
    let min = ys[imin].min(refine_extreme(g, a, b, false).1);
    let (a, b) = neighbourhood(imax);
    let max = ys[imax].max(refine_extreme(g, a, b, true).1);
    Some(CoverRange { min, max })
}

/// Selects roots and critical points, then walks the `ε` schedule until both
/// truncated bands cover `[c₁, c₃]` under the map.
///
/// When no `ε` certifies, the smallest valid `ε` is returned with
/// `certified = false`.
pub fn build_bands(
    func: &SmoothFunction,
    kind: &MapKind,
    opts: &BandOptions,
) -> Result<BandSystem, BandError> {
    let report = check_hypotheses(func, opts.scan, opts.nf_tol);
    if !report.passed() {
        return Err(BandError::Hypotheses(Box::new(report)));
    }
    let s = &report.structure;
    let i0 = select_root_quadruple(&s.roots, func.window().mid());
    let r = [
        s.roots[i0],
        s.roots[i0 + 1],
        s.roots[i0 + 2],
        s.roots[i0 + 3],
    ];

    let crit_in = |lo: f64, hi: f64| -> Result<Vec<f64>, BandError> {
        let c = s.critical_between(lo, hi);
        if c.is_empty() {
            Err(BandError::MissingCriticalPoint { lo, hi })
        } else {
            Ok(c)
        }
    };
    let left = crit_in(r[0], r[1])?;
    let mid = crit_in(r[1], r[2])?;
    let right = crit_in(r[2], r[3])?;
    let c = [
        *left.last().unwrap(),
        mid[0],
        *mid.last().unwrap(),
        right[0],
    ];

    let map = |x: f64| kind.step(func, x).unwrap_or(f64::NAN);
    let mut trials = Vec::with_capacity(opts.eps_schedule.len());
    for &eps in &opts.eps_schedule {
        let bands = (
            Interval::new(c[0] + eps, c[1] - eps),
            Interval::new(c[2] + eps, c[3] - eps),
        );
        let (b1, b2) = match bands {
            (Ok(b1), Ok(b2))
                if eps > 0.0
                    && b1.nondegenerate()
                    && b2.nondegenerate()
                    && b1.lo() < r[1]
                    && r[1] < b1.hi()
                    && b2.lo() < r[2]
                    && r[2] < b2.hi() =>
            {
                (b1, b2)
            }
            _ => {
                trials.push(EpsilonTrial {
                    epsilon: eps,
                    status: TrialStatus::Invalid,
                    cover: None,
                });
                continue;
            }
        };
        let cover = (
            sampled_range(&map, &b1, opts.cover_grid),
            sampled_range(&map, &b2, opts.cover_grid),
        );
        let (status, cover) = match cover {
            (Some(a), Some(b)) => {
                let ok = [a, b].iter().all(|cr| cr.min <= c[0] && cr.max >= c[3]);
                (
                    if ok {
                        TrialStatus::Covered
                    } else {
                        TrialStatus::NotCovered
                    },
                    Some([a, b]),
                )
            }
            _ => (TrialStatus::NotCovered, None),
        };
        trials.push(EpsilonTrial {
            epsilon: eps,
            status,
            cover,
        });
    }

    let chosen = trials
        .iter()
        .position(|t| t.status == TrialStatus::Covered)
        .or_else(|| {
            trials
                .iter()
                .rposition(|t| t.status != TrialStatus::Invalid)
        })
        .ok_or(BandError::NoValidEpsilon)?;
    let trial = &trials[chosen];
    let certified = trial.status == TrialStatus::Covered;
    let monotone_in_epsilon = certified
        && trials[chosen..]
            .iter()
            .filter(|t| t.status != TrialStatus::Invalid)
            .all(|t| t.status == TrialStatus::Covered);
    let eps = trial.epsilon;
    let unknown = CoverRange {
        min: f64::NAN,
        max: f64::NAN,
    };
    Ok(BandSystem {
        lambda: kind.lambda(),
        variant: kind.variant(),
        roots: r,
        critical: c,
        epsilon: eps,
        bands: [
            Interval::new(c[0] + eps, c[1] - eps).expect("validated"),
            Interval::new(c[2] + eps, c[3] - eps).expect("validated"),
        ],
        cover: trial.cover.unwrap_or([unknown, unknown]),
        certified,
        monotone_in_epsilon,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> SmoothFunction {
        SmoothFunction::polynomial(c.to_vec(), Interval::default_window()).unwrap()
    }

    fn quintic() -> SmoothFunction {
        poly(&[0.0, 4.0, 0.0, -5.0, 0.0, 1.0])
    }

    #[test]
    fn hypotheses_examples() {
        let q = check_hypotheses(&quintic(), ScanOptions::default(), DEFAULT_NF_TOL);
        assert!(q.passed());
        assert_eq!(q.root_count, 5);
        assert!(q.limits_exact);

        let two = check_hypotheses(
            &poly(&[-1.0, 0.0, 1.0]),
            ScanOptions::default(),
            DEFAULT_NF_TOL,
        );
        assert!(!two.enough_roots && !two.passed());

        let even = check_hypotheses(
            &poly(&[4.0, 0.0, -5.0, 0.0, 1.0]),
            ScanOptions::default(),
            DEFAULT_NF_TOL,
        );
        assert!(even.enough_roots && even.newton_class.ok());
        assert!(!even.opposite_limits && !even.passed());
    }

    #[test]
    fn closed_form_limits_use_window_signs() {
        let f = SmoothFunction::closed_form(
            |x: f64| x.sin() * (1.0 + 0.1 * x * x),
            |x: f64| x.cos() * (1.0 + 0.1 * x * x) + 0.2 * x * x.sin(),
            |x: f64| -x.sin() * (1.0 + 0.1 * x * x) + 0.4 * x * x.cos() + 0.2 * x.sin(),
            Interval::new(-10.0, 10.0).unwrap(),
        );
        let h = check_hypotheses(&f, ScanOptions::default(), DEFAULT_NF_TOL);
        assert!(!h.limits_exact);
        assert!(h.opposite_limits);
    }

    #[test]
    fn edge_limits_on_cubic() {
        let f = poly(&[0.0, -3.0, 0.0, 1.0]);
        let e = limits_at_band_edges(&f, &MapKind::newton(), -1.0, 1.0, 1e-2);
        assert_eq!(e.verdict, EdgeVerdict::Opposite);
        // N(−1 + h) ≈ −1 + 1/(3h) → +∞, N(1 − h) → −∞.
        assert_eq!((e.left_sign, e.right_sign), (1, -1));
        for w in e.left_probes.windows(2) {
            assert!(w[1].1.abs() > w[0].1.abs());
        }
        let m = limits_at_band_edges(&f, &MapKind::third_order(), -1.0, 1.0, 1e-2);
        assert_eq!(m.verdict, EdgeVerdict::Opposite);
    }

    #[test]
    fn edge_limits_on_quintic_central_band() {
        let f = quintic();
        let cs = find_critical_points(&f, 20_000, 1e-12);
        let (lo, hi) = (cs[1], cs[2]);
        assert!((hi - 0.543912255902338).abs() < 1e-12);
        for kind in [MapKind::newton(), MapKind::third_order()] {
            let e = limits_at_band_edges(&f, &kind, lo, hi, 1e-2);
            assert_eq!(e.verdict, EdgeVerdict::Opposite, "{e:?}");
        }
    }

    #[test]
    fn edge_limits_inconclusive_when_two_roots_inside() {
        let f = quintic();
        let e = limits_at_band_edges(&f, &MapKind::newton(), -1.5, 0.5, 1e-2);
        assert!(matches!(e.verdict, EdgeVerdict::Inconclusive { .. }));
    }

    #[test]
    fn quintic_bands_certify() {
        let b = build_bands(&quintic(), &MapKind::third_order(), &BandOptions::default()).unwrap();
        assert!(b.certified);
        assert!(b.monotone_in_epsilon);
        assert_eq!(b.roots, [-2.0, -1.0, 0.0, 1.0]);
        assert!(!b.bands[0].intersects(&b.bands[1]));
        assert!(b.bands.iter().all(|i| i.nondegenerate()));
        assert!(b.bands[0].contains(-1.0) && b.bands[1].contains(0.0));
        // c₂ = c₂' here: a single critical point separates the roots −1 and 0.
        assert_eq!(b.critical[1], b.critical[2]);
    }

    #[test]
    fn cover_matches_dense_oracle() {
        let f = quintic();
        let kind = MapKind::third_order();
        let b = build_bands(&f, &kind, &BandOptions::default()).unwrap();
        for (band, cover) in b.bands.iter().zip(&b.cover) {
            let n = 100_000;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..=n {
                let x = band.lo() + band.width() * (i as f64 / n as f64);
                let y = kind.step(&f, x).unwrap();
                lo = lo.min(y);
                hi = hi.max(y);
            }
            assert!(lo <= b.critical[0] && hi >= b.critical[3]);
            assert!(cover.min <= b.critical[0] && cover.max >= b.critical[3]);
        }
    }

    #[test]
    fn two_root_function_is_rejected() {
        let err = build_bands(
            &poly(&[-1.0, 0.0, 1.0]),
            &MapKind::third_order(),
            &BandOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BandError::Hypotheses(_)));
    }

    #[test]
    fn oversized_epsilon_is_skipped() {
        let opts = BandOptions {
            eps_schedule: vec![5.0, 1e-2],
            ..Default::default()
        };
        let b = build_bands(&quintic(), &MapKind::third_order(), &opts).unwrap();
        assert_eq!(b.trials[0].status, TrialStatus::Invalid);
        assert_eq!(b.epsilon, 1e-2);
        assert!(b.certified);
    }

    #[test]
    fn uncertifiable_schedule_returns_best_attempt() {
        let opts = BandOptions {
            eps_schedule: vec![0.2],
            ..Default::default()
        };
        let b = build_bands(&quintic(), &MapKind::third_order(), &opts).unwrap();
        assert!(!b.certified);
        assert_eq!(b.epsilon, 0.2);
    }
}
