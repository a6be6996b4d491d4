use nuisance_grad_cli::metrics::slope_fit;
use nuisance_grad_cli::report::Band;
use proptest::prelude::*;

proptest! {
    #[test]
    fn slope_fit_recovers_power_law(a in -3.0f64..3.0, c in 0.01f64..100.0) {
        let pairs: Vec<(f64, f64)> = [1e3, 3e3, 1e4, 3e4, 1e5].iter().map(|&n: &f64| (n, c * n.powf(a))).collect();
        let f = slope_fit(&pairs).unwrap();
        prop_assert!((f.slope - a).abs() < 1e-9);
        prop_assert!(f.r2 > 1.0 - 1e-9 || a.abs() < 1e-6);
    }

    #[test]
    fn band_is_ordered(xs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let b = Band::of(&xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= b.q25 && b.q25 <= b.median && b.median <= b.q75 && b.q75 <= hi);
    }
}
