//! Symbolic dynamics on a family of covering bands.
//!
//! If `g` maps each band `I_j` continuously over the union of all bands, then
//! for every finite word `j₁ j₂ … j_n` there is a nested chain
//! `I_{j₁} = A₀ ⊇ A₁ ⊇ … ` with `g^i(A_i) = I_{j_{i+1}}`. Closing the word on
//! itself gives a fixed point of `g^n` that visits the bands in that order.
//!
//! Everything here is generic over [`Real`]; the deep compositions are badly
//! conditioned and are meant to run in [`Extended`](crate::real::Extended).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::functions::Interval;
use crate::real::Real;

pub const DEFAULT_CERT_TOL: f64 = 1e-9;
pub const PULLBACK_GRID: usize = 4096;
pub const PULLBACK_DOUBLINGS: usize = 3;
const MAX_BISECTIONS: usize = 400;
const VALIDATION_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolicError {
    #[error("itinerary is empty")]
    EmptyItinerary,
    #[error("symbol {symbol} is outside 1..={bands}")]
    SymbolOutOfRange { symbol: usize, bands: usize },
    #[error("a periodic seed is required")]
    NotPeriodic,
    #[error("no preimage of {value:e} in [{lo:e}, {hi:e}]")]
    NoPreimage { value: f64, lo: f64, hi: f64 },
    #[error("pullback image leaves the target by {excess:e}")]
    PullbackValidation { excess: f64 },
    #[error("refinement stage {stage} failed: {source}")]
    StageFailed {
        stage: usize,
        #[source]
        source: Box<SymbolicError>,
    },
    #[error("g^n(x) - x has no sign change on the deepest interval")]
    NoSignChange,
    #[error("periodic residual {residual:e} exceeds tolerance {tol:e}")]
    CertificationFailed { residual: f64, tol: f64 },
    #[error("symbol pattern is eventually constant")]
    EventuallyConstant,
    #[error("witness prefix must have at least 2 symbols")]
    PrefixTooShort,
    #[error("invalid symbol pattern: {0}")]
    InvalidPattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItineraryKind {
    /// Word read cyclically: the last symbol is followed by the first.
    PeriodicSeed,
    FinitePrefix,
}

/// Word over the band alphabet `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Itinerary {
    symbols: Vec<usize>,
    kind: ItineraryKind,
}

impl Itinerary {
    pub fn periodic(symbols: Vec<usize>) -> Result<Self, SymbolicError> {
        Self::new(symbols, ItineraryKind::PeriodicSeed)
    }

    pub fn prefix(symbols: Vec<usize>) -> Result<Self, SymbolicError> {
        Self::new(symbols, ItineraryKind::FinitePrefix)
    }

    fn new(symbols: Vec<usize>, kind: ItineraryKind) -> Result<Self, SymbolicError> {
        if symbols.is_empty() {
            return Err(SymbolicError::EmptyItinerary);
        }
        if let Some(&s) = symbols.iter().find(|&&s| s == 0) {
            return Err(SymbolicError::SymbolOutOfRange {
                symbol: s,
                bands: 0,
            });
        }
        Ok(Self { symbols, kind })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn kind(&self) -> ItineraryKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `j₁ ≠ j_i` for all `i ≥ 2`, which forces the closed orbit to have
    /// exact period `n`.
    pub fn first_symbol_unique(&self) -> bool {
        self.symbols[1..].iter().all(|&s| s != self.symbols[0])
    }

    fn check_alphabet(&self, k: usize) -> Result<(), SymbolicError> {
        match self.symbols.iter().find(|&&s| s > k) {
            Some(&symbol) => Err(SymbolicError::SymbolOutOfRange { symbol, bands: k }),
            None => Ok(()),
        }
    }

    /// Band index targeted at each refinement stage.
    fn stage_targets(&self) -> Vec<usize> {
        let mut t = self.symbols[1..].to_vec();
        if self.kind == ItineraryKind::PeriodicSeed {
            t.push(self.symbols[0]);
        }
        t
    }
}

impl fmt::Display for Itinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", s.join(","))
    }
}

/// `g` applied `n` times.
pub fn compose_n<R: Real, G: Fn(R) -> R>(g: &G, mut x: R, n: usize) -> R {
    for _ in 0..n {
        x = g(x);
    }
    x
}

fn bisect<R: Real, H: Fn(R) -> R>(h: &H, mut a: R, mut b: R, mut ha: R) -> R {
    for _ in 0..MAX_BISECTIONS {
        let m = R::midpoint(a, b);
        if !(m > a && m < b) {
            break;
        }
        let hm = h(m);
        if hm.to_f64_lossy() == 0.0 && hm == R::zero() {
            return m;
        }
        if (hm < R::zero()) == (ha < R::zero()) {
            a = m;
            ha = hm;
        } else {
            b = m;
        }
    }
    let hb = h(b);
    if ha.abs() <= hb.abs() {
        a
    } else {
        b
    }
}

/// Scans `(x, g(x))` samples in order for the first crossing of `v`.
/// Brackets whose bisected point does not reproduce `v` (poles) are skipped.
fn first_crossing<R: Real, G: Fn(R) -> R>(
    g: &G,
    samples: impl Iterator<Item = (R, R)>,
    v: R,
    accept: f64,
) -> Option<R> {
    let h = |x: R| g(x) - v;
    let mut prev: Option<(R, R)> = None;
    for (x, y) in samples {
        let d = y - v;
        if d == R::zero() {
            return Some(x);
        }
        if let Some((px, pd)) = prev {
            if pd.is_finite() && d.is_finite() && (pd < R::zero()) != (d < R::zero()) {
                let (a, b, ha) = if px < x { (px, x, pd) } else { (x, px, d) };
                let z = bisect(&h, a, b, ha);
                if h(z).abs().to_f64_lossy() <= accept {
                    return Some(z);
                }
            }
        }
        prev = Some((x, d));
    }
    None
}

fn endpoint_residual<R: Real>(ya: R, yb: R, k: &Interval<R>) -> f64 {
    let d = |y: R, t: R| (y - t).abs().to_f64_lossy();
    let direct = d(ya, k.lo()).max(d(yb, k.hi()));
    let flipped = d(ya, k.hi()).max(d(yb, k.lo()));
    direct.min(flipped)
}

fn try_pullback<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    j: &Interval<R>,
    k: &Interval<R>,
    tol: f64,
    grid: usize,
) -> Result<Interval<R>, SymbolicError> {
    let (a, b) = (k.lo(), k.hi());
    let accept = tol * (1.0 + a.abs().to_f64_lossy().max(b.abs().to_f64_lossy()));
    let xs = j.grid(grid);
    let ys: Vec<R> = xs.par_iter().map(|&x| g(x)).collect();
    let no_preimage = |v: R| SymbolicError::NoPreimage {
        value: v.to_f64_lossy(),
        lo: j.lo().to_f64_lossy(),
        hi: j.hi().to_f64_lossy(),
    };
    let pts = || xs.iter().copied().zip(ys.iter().copied());

    // Greatest preimage of K.lo.
    let rev: Vec<(R, R)> = pts().rev().collect();
    let c = first_crossing(g, rev.iter().copied(), a, accept).ok_or_else(|| no_preimage(a))?;
    if a == b {
        return Ok(Interval::point(c).expect("finite"));
    }
    let gc = g(c);
    let right_of = |p: R, vp: R| std::iter::once((p, vp)).chain(pts().filter(move |(x, _)| *x > p));

    let l = if let Some(d) = first_crossing(g, right_of(c, gc), b, accept) {
        Interval::new(c, d).expect("ordered")
    } else {
        // Mirror case: K.hi is reached only to the left of c.
        let left: Vec<(R, R)> = std::iter::once((c, gc))
            .chain(rev.iter().copied().filter(|(x, _)| *x < c))
            .collect();
        let c2 = first_crossing(g, left.into_iter(), b, accept).ok_or_else(|| no_preimage(b))?;
        let gc2 = g(c2);
        let d2 = first_crossing(g, right_of(c2, gc2), a, accept).ok_or_else(|| no_preimage(a))?;
        Interval::new(c2, d2).expect("ordered")
    };

    let slack = 1e-6 * (b - a).to_f64_lossy() + accept;
    let excess = l
        .grid(VALIDATION_SAMPLES)
        .into_iter()
        .map(|x| {
            let y = g(x);
            if !y.is_finite() {
                return f64::INFINITY;
            }
            (a - y).to_f64_lossy().max((y - b).to_f64_lossy()).max(0.0)
        })
        .fold(0.0, f64::max);
    if excess > slack {
        return Err(SymbolicError::PullbackValidation { excess });
    }
    Ok(l)
}

/// Subinterval `L ⊆ J` with `g(L) = K`, assuming `g(J) ⊇ K`.
///
/// `L` runs from the greatest preimage `c` of `K.lo` to the first preimage of
/// `K.hi` after it; if there is none, from the last preimage `c'` of `K.hi`
/// below `c` to the first preimage of `K.lo` after `c'`. Either way `g` stays
/// inside `K` on `L` and meets both ends only at the endpoints.
pub fn pullback<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    j: &Interval<R>,
    k: &Interval<R>,
    tol: f64,
) -> Result<Interval<R>, SymbolicError> {
    pullback_with(g, j, k, tol, PULLBACK_GRID, PULLBACK_DOUBLINGS)
}

/// [`pullback`] with an explicit initial grid and number of grid doublings.
pub fn pullback_with<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    j: &Interval<R>,
    k: &Interval<R>,
    tol: f64,
    grid: usize,
    doublings: usize,
) -> Result<Interval<R>, SymbolicError> {
    let mut n = grid.max(2);
    let mut last = None;
    for _ in 0..=doublings {
        match try_pullback(g, j, k, tol, n) {
            Ok(l) => return Ok(l),
            Err(e) => last = Some(e),
        }
        n *= 2;
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementChain<R = f64> {
    pub symbols: Vec<usize>,
    /// `A₁, A₂, …`; `A₀` is the first band itself.
    pub intervals: Vec<Interval<R>>,
    /// Band targeted at each stage.
    pub targets: Vec<usize>,
    /// Endpoint mismatch `|g^i(A_i) − I_{target}|` per stage.
    pub residuals: Vec<f64>,
}

impl<R: Real> RefinementChain<R> {
    pub fn deepest(&self, bands: &[Interval<R>]) -> Interval<R> {
        self.intervals
            .last()
            .copied()
            .unwrap_or(bands[self.symbols[0] - 1])
    }
}

/// Builds the nested chain for `itin`: stage `i` pulls `I_{j_{i+1}}` back
/// through `g^i` into `A_{i−1}`. A periodic seed of length `n` has `n` stages
/// (the last one targets `I_{j₁}` again), a prefix of length `L` has `L − 1`.
pub fn refine_itinerary<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    bands: &[Interval<R>],
    itin: &Itinerary,
    tol: f64,
) -> Result<RefinementChain<R>, SymbolicError> {
    match refine_partial(g, bands, itin, tol)? {
        (chain, None) => Ok(chain),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`refine_itinerary`] but keeps the stages that succeeded before the
/// first failing one.
pub fn refine_partial<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    bands: &[Interval<R>],
    itin: &Itinerary,
    tol: f64,
) -> Result<(RefinementChain<R>, Option<SymbolicError>), SymbolicError> {
    itin.check_alphabet(bands.len())?;
    let all_targets = itin.stage_targets();
    let mut prev = bands[itin.symbols[0] - 1];
    let mut chain = RefinementChain {
        symbols: itin.symbols.clone(),
        intervals: Vec::with_capacity(all_targets.len()),
        targets: Vec::with_capacity(all_targets.len()),
        residuals: Vec::with_capacity(all_targets.len()),
    };
    for (i, &t) in all_targets.iter().enumerate() {
        let stage = i + 1;
        let gi = |x: R| compose_n(g, x, stage);
        let k = bands[t - 1];
        let l = match pullback(&gi, &prev, &k, tol) {
            Ok(l) => l,
            Err(e) => {
                let err = SymbolicError::StageFailed {
                    stage,
                    source: Box::new(e),
                };
                return Ok((chain, Some(err)));
            }
        };
        chain
            .residuals
            .push(endpoint_residual(gi(l.lo()), gi(l.hi()), &k));
        chain.intervals.push(l);
        chain.targets.push(t);
        prev = l;
    }
    Ok((chain, None))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicCertificate {
    /// Periodic point, nearest `f64`.
    pub point: f64,
    /// Remainder of the working-precision point beyond `point`.
    pub point_lo: f64,
    pub period: usize,
    /// `p, g(p), …, g^{n−1}(p)`.
    pub orbit: Vec<f64>,
    /// `|g^n(p) − p|` in working precision.
    pub residual: f64,
    /// `cert_tol · (1 + |p|)`.
    pub tolerance: f64,
    /// Exact period `n` and the orbit follows the itinerary.
    pub prime: bool,
    /// 1-based band holding each orbit point, if any.
    pub visited_bands: Vec<Option<usize>>,
    pub itinerary: Vec<usize>,
}

impl PeriodicCertificate {
    pub fn realizes_itinerary(&self) -> bool {
        self.visited_bands
            .iter()
            .zip(&self.itinerary)
            .all(|(v, &s)| *v == Some(s))
    }
}

fn band_of<R: Real>(bands: &[Interval<R>], x: R, slack: R) -> Option<usize> {
    bands
        .iter()
        .position(|b| b.contains_with_slack(x, slack))
        .map(|i| i + 1)
}

/// Periodic point of `g` following a periodic seed, located by bisection of
/// `g^n(x) − x` on the deepest interval of the refinement chain.
pub fn find_periodic<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    bands: &[Interval<R>],
    seed: &Itinerary,
    cert_tol: f64,
) -> Result<PeriodicCertificate, SymbolicError> {
    if seed.kind != ItineraryKind::PeriodicSeed {
        return Err(SymbolicError::NotPeriodic);
    }
    let n = seed.len();
    let chain = refine_itinerary(g, bands, seed, cert_tol)?;
    let a = chain.deepest(bands);
    let h = |x: R| compose_n(g, x, n) - x;
    let (ha, hb) = (h(a.lo()), h(a.hi()));
    let p = if ha == R::zero() {
        a.lo()
    } else if hb == R::zero() {
        a.hi()
    } else if (ha < R::zero()) != (hb < R::zero()) {
        bisect(&h, a.lo(), a.hi(), ha)
    } else {
        return Err(SymbolicError::NoSignChange);
    };

    let pf = p.to_f64_lossy();
    let tolerance = cert_tol * (1.0 + pf.abs());
    let residual = h(p).abs().to_f64_lossy();
    if !(residual <= tolerance) {
        return Err(SymbolicError::CertificationFailed {
            residual,
            tol: tolerance,
        });
    }
    let mut orbit_r = Vec::with_capacity(n);
    let mut x = p;
    for _ in 0..n {
        orbit_r.push(x);
        x = g(x);
    }
    let exact_period = orbit_r[1..]
        .iter()
        .all(|&y| (y - p).abs().to_f64_lossy() > tolerance);
    let slack = R::from_f64(tolerance);
    let visited_bands: Vec<Option<usize>> =
        orbit_r.iter().map(|&y| band_of(bands, y, slack)).collect();
    let mut cert = PeriodicCertificate {
        point: pf,
        point_lo: (p - R::from_f64(pf)).to_f64_lossy(),
        period: n,
        orbit: orbit_r.iter().map(|y| y.to_f64_lossy()).collect(),
        residual,
        tolerance,
        prime: false,
        visited_bands,
        itinerary: seed.symbols.clone(),
    };
    cert.prime = exact_period && cert.realizes_itinerary();
    Ok(cert)
}

/// All words of length `n` over `1..=k` with `j₁ ≠ j_i` for `i ≥ 2`, in
/// lexicographic order. There are `k(k−1)^{n−1}` of them.
pub fn prime_seeds(k: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for first in 1..=k {
        let others: Vec<usize> = (1..=k).filter(|&s| s != first).collect();
        let mut word = vec![first];
        extend_words(&others, n - 1, &mut word, &mut out);
    }
    out
}

fn extend_words(alphabet: &[usize], left: usize, word: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if left == 0 {
        out.push(word.clone());
        return;
    }
    for &s in alphabet {
        word.push(s);
        extend_words(alphabet, left - 1, word, out);
        word.pop();
    }
}

pub fn prime_seed_count(k: usize, n: usize) -> usize {
    if n == 0 || k == 0 {
        0
    } else {
        k * (k - 1).pow(n as u32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedFailure {
    pub seed: Vec<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicCount {
    pub period: usize,
    pub certificates: Vec<PeriodicCertificate>,
    pub failures: Vec<SeedFailure>,
    /// Prime certificates that are pairwise more than the tolerance apart.
    pub distinct_prime: usize,
}

/// Certifies one periodic point per prime seed of length `n`.
pub fn certify_prime_seeds<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    bands: &[Interval<R>],
    n: usize,
    cert_tol: f64,
) -> PeriodicCount {
    let seeds = prime_seeds(bands.len(), n);
    let results: Vec<_> = seeds
        .par_iter()
        .map(|s| {
            let itin = Itinerary::periodic(s.clone()).expect("nonempty");
            (s.clone(), find_periodic(g, bands, &itin, cert_tol))
        })
        .collect();
    let mut certificates = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(c) => certificates.push(c),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let mut kept: Vec<&PeriodicCertificate> = Vec::new();
    for c in certificates.iter().filter(|c| c.prime) {
        if kept
            .iter()
            .all(|k| (k.point - c.point).abs() > k.tolerance.max(c.tolerance))
        {
            kept.push(c);
        }
    }
    PeriodicCount {
        period: n,
        distinct_prime: kept.len(),
        certificates,
        failures,
    }
}

/// Infinite non-eventually-constant symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "pattern", content = "symbols", rename_all = "snake_case")]
pub enum SymbolPattern {
    /// `1, 2, 1, 2, …`
    Alternating,
    /// The given word repeated forever.
    Cycle(Vec<usize>),
}

impl SymbolPattern {
    pub fn validate(&self, k: usize) -> Result<(), SymbolicError> {
        let word = match self {
            SymbolPattern::Alternating => vec![1, 2],
            SymbolPattern::Cycle(w) => w.clone(),
        };
        if word.is_empty() {
            return Err(SymbolicError::EmptyItinerary);
        }
        if let Some(&symbol) = word.iter().find(|&&s| s == 0 || s > k) {
            return Err(SymbolicError::SymbolOutOfRange { symbol, bands: k });
        }
        if word.iter().all(|&s| s == word[0]) {
            return Err(SymbolicError::EventuallyConstant);
        }
        Ok(())
    }

    pub fn take(&self, len: usize) -> Vec<usize> {
        match self {
            SymbolPattern::Alternating => (0..len).map(|i| 1 + i % 2).collect(),
            SymbolPattern::Cycle(w) => (0..len).map(|i| w[i % w.len()]).collect(),
        }
    }
}

impl FromStr for SymbolPattern {
    type Err = SymbolicError;

    /// `alt` or `cycle:1,2,2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("alt") || s.eq_ignore_ascii_case("alternating") {
            return Ok(SymbolPattern::Alternating);
        }
        let body = s.strip_prefix("cycle:").ok_or_else(|| {
            SymbolicError::InvalidPattern(format!("expected 'alt' or 'cycle:…', got '{s}'"))
        })?;
        let word = body
            .split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|_| {
                    SymbolicError::InvalidPattern(format!("bad symbol '{}'", t.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SymbolPattern::Cycle(word))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceWitness {
    pub point: f64,
    pub point_lo: f64,
    pub symbols: Vec<usize>,
    /// Number of leading symbols the forward orbit actually follows.
    pub verified_prefix: usize,
    /// Refinement stages completed before precision ran out.
    pub refined_stages: usize,
    pub stage_error: Option<String>,
    /// First `symbols.len()` points of the orbit.
    pub orbit: Vec<f64>,
}

/// Point whose orbit follows the first `prefix_len` symbols of `pattern`, so
/// it keeps switching bands and cannot converge to a root or fixed point
/// within that horizon.
pub fn divergence_witness<R: Real, G: Fn(R) -> R + Sync>(
    g: &G,
    bands: &[Interval<R>],
    prefix_len: usize,
    pattern: &SymbolPattern,
    cert_tol: f64,
) -> Result<DivergenceWitness, SymbolicError> {
    if prefix_len < 2 {
        return Err(SymbolicError::PrefixTooShort);
    }
    pattern.validate(bands.len())?;
    let symbols = pattern.take(prefix_len);
    let (chain, stage_error) =
        refine_partial(g, bands, &Itinerary::prefix(symbols.clone())?, cert_tol)?;
    let p = chain.deepest(bands).mid();
    let pf = p.to_f64_lossy();
    let slack = R::from_f64(cert_tol * (1.0 + pf.abs()));
    let mut x = p;
    let mut orbit = Vec::with_capacity(prefix_len);
    let mut verified_prefix = 0;
    let mut following = true;
    for &s in &symbols {
        orbit.push(x.to_f64_lossy());
        if following && bands[s - 1].contains_with_slack(x, slack) {
            verified_prefix += 1;
        } else {
            following = false;
        }
        x = g(x);
    }
    Ok(DivergenceWitness {
        point: pf,
        point_lo: (p - R::from_f64(pf)).to_f64_lossy(),
        symbols,
        verified_prefix,
        refined_stages: chain.intervals.len(),
        stage_error: stage_error.map(|e| e.to_string()),
        orbit,
    })
}
