use newton_chaos::bands::{build_bands, BandOptions};
use newton_chaos::symbolic::{pullback, refine_itinerary, Itinerary};
use newton_chaos::{Extended, Interval, MapKind, SmoothFunction};
use proptest::prelude::*;
use std::sync::OnceLock;

fn quintic() -> &'static (SmoothFunction, [Interval; 2]) {
    static CELL: OnceLock<(SmoothFunction, [Interval; 2])> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = SmoothFunction::polynomial(
            vec![0.0, 4.0, 0.0, -5.0, 0.0, 1.0],
            Interval::default_window(),
        )
        .unwrap();
        let b = build_bands(&f, &MapKind::third_order(), &BandOptions::default()).unwrap();
        assert!(b.certified);
        (f, b.bands)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pullback_lands_in_source_and_maps_onto_target(j in 0usize..2, i in 0usize..2, u in 0.0f64..1.0, w in 1e-6f64..1.0) {
        let (f, bands) = quintic();
        let kind = MapKind::third_order();
        let g = |x: f64| kind.step(f, x).unwrap_or(f64::NAN);
        let band = bands[i];
        let lo = band.lo() + u * (1.0 - w) * band.width();
        let k = Interval::new(lo, lo + w * band.width() * (1.0 - u * (1.0 - w))).unwrap();
        let l = pullback(&g, &bands[j], &k, 1e-9).unwrap();
        prop_assert!(bands[j].contains_interval(&l, 0.0));
        let (ya, yb) = (g(l.lo()), g(l.hi()));
        let tol = 1e-9 * (1.0 + k.lo().abs().max(k.hi().abs()));
        let direct = (ya - k.lo()).abs() <= tol && (yb - k.hi()).abs() <= tol;
        let flipped = (ya - k.hi()).abs() <= tol && (yb - k.lo()).abs() <= tol;
        prop_assert!(direct || flipped, "L = {l}, K = {k}, images {ya} {yb}");
        for x in l.grid(50) {
            let y = g(x);
            prop_assert!(y >= k.lo() - 1e-6 * k.width() - tol && y <= k.hi() + 1e-6 * k.width() + tol);
        }
    }

    #[test]
    fn refinement_chains_are_nested(symbols in prop::collection::vec(1usize..=2, 1..6), periodic in any::<bool>()) {
        let (f, bands) = quintic();
        let kind = MapKind::third_order();
        let g = kind.as_fn::<Extended>(f);
        let eb: Vec<Interval<Extended>> = bands.iter().map(|b| b.promote()).collect();
        let itin = if periodic { Itinerary::periodic(symbols.clone()) } else { Itinerary::prefix(symbols.clone()) }.unwrap();
        let chain = refine_itinerary(&g, &eb, &itin, 1e-9).unwrap();
        let stages = if periodic { symbols.len() } else { symbols.len() - 1 };
        prop_assert_eq!(chain.intervals.len(), stages);
        let mut outer = eb[symbols[0] - 1];
        for a in &chain.intervals {
            prop_assert!(outer.contains_interval(a, Extended::from(0.0)));
            outer = *a;
        }
        prop_assert!(chain.residuals.iter().all(|r| *r <= 1e-9 * 3.0));
    }
}
