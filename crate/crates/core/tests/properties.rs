use nuisance_grad::numkit::stats::quantile;
use nuisance_grad::numkit::{cholesky, finite_diff_grad, solve_spd, Mat, Rng};
use nuisance_grad::problems::{NuisanceFn, ProblemKind, ScalarFn};
use nuisance_grad::simdata::{Dgp, PlmConfig, SampleStream};
use proptest::prelude::*;

fn spd(n: usize, entries: &[f64]) -> Mat<f64> {
    let b = Mat::from_fn(n, n, |i, j| entries[i * n + j]);
    let mut a = b.matmul(&b.transpose());
    for i in 0..n {
        a.add_outer(&(0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>(), 0.5);
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rng_is_reproducible(seed in any::<u64>(), label in "[a-z]{1,8}") {
        let mut a = Rng::new(seed).child_named(&label);
        let mut b = Rng::new(seed).child_named(&label);
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn children_differ(seed in any::<u64>(), i in 0u64..1000) {
        let mut a = Rng::new(seed).child(i);
        let mut b = Rng::new(seed).child(i + 1);
        prop_assert_ne!(a.uniform(), b.uniform());
    }

    #[test]
    fn cholesky_reconstructs(n in 1usize..6, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
        let a = spd(n, &entries);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose());
        prop_assert!(back.sub(&a).max_abs() <= 1e-10 * (1.0 + a.max_abs()));
    }

    #[test]
    fn spd_solve_has_small_residual(n in 1usize..6, entries in prop::collection::vec(-2.0f64..2.0, 36), rhs in prop::collection::vec(-5.0f64..5.0, 6)) {
        let a = spd(n, &entries);
        let x = solve_spd(&a, &rhs[..n]).unwrap();
        let r = a.matvec(&x);
        for i in 0..n {
            prop_assert!((r[i] - rhs[i]).abs() <= 1e-8 * (1.0 + rhs[i].abs()));
        }
    }

    #[test]
    fn fd_gradient_of_quadratic(c in prop::collection::vec(-3.0f64..3.0, 3), at in prop::collection::vec(-3.0f64..3.0, 3)) {
        let f = |x: &[f64]| x.iter().zip(&c).map(|(x, c)| c * x * x).sum::<f64>();
        let g = finite_diff_grad(f, &at, 1e-5).unwrap();
        for j in 0..3 {
            prop_assert!((g[j] - 2.0 * c[j] * at[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), n in 0usize..20) {
        let dgp = Dgp::plm(PlmConfig::standard(0.3)).unwrap();
        let a: Vec<_> = SampleStream::new(dgp.clone(), Rng::new(seed), Some(n)).collect();
        let b: Vec<_> = SampleStream::new(dgp, Rng::new(seed), Some(n)).collect();
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn plus_scaled_is_pointwise(c in -3.0f64..3.0, s in -3.0f64..3.0, w in prop::collection::vec(-3.0f64..3.0, 2)) {
        let g = NuisanceFn::PlmNonorth { g: ScalarFn::analytic(|v: &[f64]| v[0].sin() + v[1]) };
        let h = NuisanceFn::PlmNonorth { g: ScalarFn::Const(c) };
        let NuisanceFn::PlmNonorth { g: sum } = g.plus_scaled(s, &h).unwrap() else { unreachable!() };
        prop_assert!((sum.eval(&w) - (w[0].sin() + w[1] + s * c)).abs() < 1e-12);
        prop_assert!(g.plus_scaled(s, &NuisanceFn::zero(ProblemKind::PlmOrth, 2)).is_err());
    }

    #[test]
    fn quantiles_are_monotone(xs in prop::collection::vec(-1e3f64..1e3, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile(&xs, lo) <= quantile(&xs, hi));
    }
}
