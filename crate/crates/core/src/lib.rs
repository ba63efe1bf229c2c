//! Numerical dynamics of Newton's map and its third-order modification
//!
//! `M_f(x) = N_f(x) − f(N_f(x))/f'(x)`, with `N_f(x) = x − f(x)/f'(x)`.
//!
//! The crate covers the whole path from a function to certified chaotic
//! behaviour of its iteration map:
//!
//! * [`functions`]: Newton-class functions, root and critical point isolation.
//! * [`iteration`]: the damped maps `N_λ`, `M_λ`, orbits, convergence order.
//! * [`bands`]: two disjoint intervals whose images each cover both.
//! * [`symbolic`]: interval pullback, itinerary refinement, periodic points of
//!   any prime period and non-convergent orbit witnesses.
//! * [`conjugacy`]: invariance of the maps under affine changes of variable.
//! * [`sweep`]: parameter sweeps producing bifurcation/basin datasets.

// Negated comparisons are used so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod conjugacy;
pub mod functions;
pub mod iteration;
pub mod real;
pub mod sweep;
pub mod symbolic;

pub use bands::{
    build_bands, check_hypotheses, limits_at_band_edges, BandError, BandOptions, BandSystem,
    HypothesisReport,
};
pub use conjugacy::{conjugate_function, verify_scaling, AffineMap, ScalingReport};
pub use functions::{
    find_critical_points, find_roots, verify_newton_class, CriticalStructure, FunctionError,
    Interval, NewtonClassReport, Polynomial, ScanOptions, SmoothFunction,
};
pub use iteration::{
    estimate_order, iterate, Classification, IterateOptions, IterationError, MapKind, MapVariant,
    OrbitRecord,
};
pub use real::{Extended, Real};
pub use sweep::{damping_robustness, run_sweep, SweepDataset, SweepParam, SweepSpec};
pub use symbolic::{
    divergence_witness, find_periodic, pullback, refine_itinerary, Itinerary, PeriodicCertificate,
    SymbolPattern, SymbolicError,
};
