mod common;

use common::*;
use nuisance_grad::numkit::{finite_diff_grad, finite_diff_scalar, MonteCarlo, Rng};
use nuisance_grad::problems::{
    diagnostics, nuisance_norm, population_gradient, true_nuisance, unit_direction, GradOracle, NuisanceFn,
    ProblemKind, ScalarFn,
};
use nuisance_grad::scalar::norm_inf;

#[test]
fn score_matches_finite_differences_for_every_problem() {
    for kind in ProblemKind::ALL {
        let dgp = dgp_for(kind);
        let d = dgp.x_dim();
        let p = GradOracle::new(kind, d);
        let mut rng = Rng::new(17).child_named(kind.as_str());
        for _ in 0..100 {
            let theta: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let g = random_nuisance(&mut rng, kind, d, dgp.nuisance_input_dim());
            let z = dgp.draw(&mut rng);
            let s = p.score(&theta, &g, &z).unwrap();
            let fd = finite_diff_grad(|t: &[f64]| p.loss(t, &g, &z).unwrap(), &theta, 1e-5).unwrap();
            let tol = 1e-4 * (1.0 + norm_inf(&s));
            for j in 0..d {
                assert!((s[j] - fd[j]).abs() <= tol, "{kind}: {s:?} vs {fd:?}");
            }
        }
    }
}

#[test]
fn analytic_dirderivs_match_t_differences() {
    for kind in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
        let dgp = plm(0.5);
        let p = GradOracle::new(kind, 2);
        let mut rng = Rng::new(5).child_named(kind.as_str());
        for _ in 0..100 {
            let theta = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let g = random_nuisance(&mut rng, kind, 2, 2);
            let h = random_nuisance(&mut rng, kind, 2, 2);
            let z = dgp.draw(&mut rng);
            let at = |t: f64| g.plus_scaled(t, &h).unwrap();
            let an = p.dirderiv_g(&theta, &g, &z, &h).unwrap();
            let fd = finite_diff_scalar(|t| p.loss(&theta, &at(t), &z).unwrap(), 0.0, 1e-5);
            assert!((an - fd).abs() <= 1e-4 * (1.0 + an.abs()), "{kind}: {an} vs {fd}");
            let an = p.dirderiv_score(&theta, &g, &z, &h).unwrap();
            for j in 0..2 {
                let fd = finite_diff_scalar(|t| p.score(&theta, &at(t), &z).unwrap()[j], 0.0, 1e-5);
                assert!((an[j] - fd).abs() <= 1e-4 * (1.0 + an[j].abs()), "{kind}: {an:?} vs {fd}");
            }
        }
    }
}

#[test]
fn nonorth_finite_diff_matches_score_tightly() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g = true_nuisance(&p, &dgp).unwrap();
    let z = dgp.draw(&mut Rng::new(3));
    let th = [0.2, -0.3];
    let s = p.score(&th, &g, &z).unwrap();
    let fd = finite_diff_grad(|t: &[f64]| p.loss(t, &g, &z).unwrap(), &th, 1e-5).unwrap();
    for j in 0..2 {
        assert!((s[j] - fd[j]).abs() < 1e-5);
    }
}

#[test]
fn scores_are_unbiased_for_population_gradient() {
    let dgp = plm(0.5);
    for kind in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
        let r = diagnostics(&GradOracle::new(kind, 2), &dgp, MonteCarlo::new(100_000, 11)).unwrap();
        assert!(r.unbiased().unwrap(), "{kind}: z = {:?}", r.max_abs_z);
        assert!(r.mu_hat > 0.0);
    }
}

#[test]
fn nonorth_hessian_is_theta_independent() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g = true_nuisance(&p, &dgp).unwrap();
    let mut rng = Rng::new(2);
    let zs: Vec<_> = (0..2000).map(|_| dgp.draw(&mut rng)).collect();
    let hess_at = |th: [f64; 2]| {
        let mut h = [0.0; 4];
        for z in &zs {
            for j in 0..2 {
                let mut a = th;
                let mut b = th;
                a[j] += 1e-4;
                b[j] -= 1e-4;
                let (sa, sb) = (p.score(&a, &g, z).unwrap(), p.score(&b, &g, z).unwrap());
                for i in 0..2 {
                    h[i * 2 + j] += (sa[i] - sb[i]) / 2e-4 / zs.len() as f64;
                }
            }
        }
        h
    };
    let (a, b) = (hess_at([0.3, -2.0]), hess_at([-1.0, 4.0]));
    for k in 0..4 {
        assert!((a[k] - b[k]).abs() < 1e-8);
    }
}

#[test]
fn population_gradient_zero_at_target() {
    let dgp = plm(0.5);
    for kind in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
        let g = population_gradient(&GradOracle::new(kind, 2), &[-0.5, 1.0], &dgp).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }
}

#[test]
fn g0y_matches_conditional_mean_on_grid() {
    // E[Y | W ≈ w] by binning 10^6 draws around a few grid points.
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmOrth, 2);
    let NuisanceFn::PlmOrth { g_y, .. } = true_nuisance(&p, &dgp).unwrap() else { panic!() };
    let grid = [[2.0, 2.0], [1.0, 2.5], [3.0, 1.5]];
    let h = 0.1;
    let mut sums = [(0.0, 0.0, 0.0, 0usize); 3];
    let mut rng = Rng::new(77);
    for _ in 0..1_000_000 {
        let z = dgp.draw(&mut rng);
        for (k, c) in grid.iter().enumerate() {
            if (z.w[0] - c[0]).abs() < h && (z.w[1] - c[1]).abs() < h {
                // Compare y against g0Y at the drawn w, removing the within-bin trend.
                let e = z.y - g_y.eval(&z.w);
                sums[k].0 += e;
                sums[k].1 += e * e;
                sums[k].3 += 1;
            }
        }
    }
    for (k, s) in sums.iter().enumerate() {
        let n = s.3 as f64;
        let m = s.0 / n;
        let se = ((s.1 / n - m * m) / n).sqrt();
        assert!(s.3 > 500, "bin {k} too small");
        assert!(m.abs() <= 4.0 * se, "bin {k}: mean {m}, se {se}");
    }
}

#[test]
fn residualized_ols_recovers_theta0() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmOrth, 2);
    let NuisanceFn::PlmOrth { g_y, g_x } = true_nuisance(&p, &dgp).unwrap() else { panic!() };
    let mut rng = Rng::new(8);
    let (mut xx, mut xy) = ([0.0; 4], [0.0; 2]);
    let n = 1_000_000;
    for _ in 0..n {
        let z = dgp.draw(&mut rng);
        let xt = [z.x[0] - g_x[0].eval(&z.w), z.x[1] - g_x[1].eval(&z.w)];
        let yt = z.y - g_y.eval(&z.w);
        for i in 0..2 {
            xy[i] += xt[i] * yt;
            for j in 0..2 {
                xx[i * 2 + j] += xt[i] * xt[j];
            }
        }
    }
    let det = xx[0] * xx[3] - xx[1] * xx[2];
    let th = [(xx[3] * xy[0] - xx[1] * xy[1]) / det, (xx[0] * xy[1] - xx[2] * xy[0]) / det];
    // Residual variance of X given W is 1.05 - 0.25/1.05; SE ≈ 1/sqrt(n·0.81).
    let se = 1.0 / ((n as f64) * 0.81).sqrt();
    assert!((th[0] + 0.5).abs() < 4.0 * se && (th[1] - 1.0).abs() < 4.0 * se, "{th:?}");
}

#[test]
fn perturbation_norm_is_recovered() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmOrth, 2);
    let g0 = true_nuisance(&p, &dgp).unwrap();
    let (h, _) = unit_direction(&p, &dgp, MonteCarlo::new(50_000, 1)).unwrap();
    let g = g0.plus_scaled(0.3, &h).unwrap();
    let n = nuisance_norm(&p, &g, &g0, &dgp, MonteCarlo::new(50_000, 99)).unwrap();
    assert!((n.value - 0.3).abs() <= 3.0 * n.se + 1e-12, "{n:?}");
}

#[test]
fn nuisance_norm_is_symmetric_and_triangular() {
    for kind in ProblemKind::ALL {
        let dgp = dgp_for(kind);
        let d = dgp.x_dim();
        let p = GradOracle::new(kind, d);
        let mut rng = Rng::new(4).child_named(kind.as_str());
        let mc = MonteCarlo::new(5000, 6);
        for _ in 0..5 {
            let a = random_nuisance(&mut rng, kind, d, dgp.nuisance_input_dim());
            let b = random_nuisance(&mut rng, kind, d, dgp.nuisance_input_dim());
            let c = random_nuisance(&mut rng, kind, d, dgp.nuisance_input_dim());
            let ab = nuisance_norm(&p, &a, &b, &dgp, mc).unwrap();
            let ba = nuisance_norm(&p, &b, &a, &dgp, mc).unwrap();
            assert_eq!(ab.value, ba.value, "{kind}");
            let bc = nuisance_norm(&p, &b, &c, &dgp, mc).unwrap();
            let ac = nuisance_norm(&p, &a, &c, &dgp, mc).unwrap();
            let slack = 3.0 * (ab.se.powi(2) + bc.se.powi(2) + ac.se.powi(2)).sqrt();
            assert!(ac.value <= ab.value + bc.value + slack, "{kind}");
        }
    }
}

#[test]
fn constant_offset_norm() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g0 = true_nuisance(&p, &dgp).unwrap();
    let g = g0.plus_scaled(1.0, &NuisanceFn::PlmNonorth { g: ScalarFn::Const(0.25) }).unwrap();
    let n = nuisance_norm(&p, &g, &g0, &dgp, MonteCarlo::new(1000, 1)).unwrap();
    assert!((n.value - 0.25).abs() < 1e-12);
}
