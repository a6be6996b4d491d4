mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use nuisance_grad::numkit::stats::median;
use nuisance_grad::numkit::{MonteCarlo, Rng};
use nuisance_grad::nuisance::{
    as_nuisance, fit_nuisance, ridge_fit, rff_fit, ridge_sgd_step, FitConfig, FittedNuisance, Gamma, NuisanceDoc,
    RffMap, RidgeModel, StreamFitState, StreamModel,
};
use nuisance_grad::problems::{nuisance_norm, true_nuisance, GradOracle, NuisanceFn, Predict, ProblemKind, ScalarFn};
use nuisance_grad::Error;

#[test]
fn rff_approximates_gaussian_kernel() {
    let mut rng = Rng::new(1);
    let gamma = 0.3;
    let map: RffMap<f64> = RffMap::new(&mut rng, 2, 2000, gamma).unwrap();
    let mut err = 0.0;
    for _ in 0..100 {
        let a = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
        let b = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
        let k: f64 = map.features(&a).iter().zip(map.features(&b)).map(|(x, y)| x * y).sum();
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        err += (k - (-gamma * d2).exp()).abs() / 100.0;
    }
    assert!(err <= 0.05, "{err}");
}

#[test]
fn feature_dimension_matches_request() {
    let w: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0, 1.0]).collect();
    for k in [20, 50] {
        let m = rff_fit(&mut Rng::new(0), &w, k, Gamma::Median).unwrap();
        assert_eq!(m.features(&w[0]).len(), k);
    }
}

fn nonorth_error(m: usize, seed: u64) -> f64 {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let mut rng = Rng::new(seed).child_named("data");
    let stream: Vec<_> = (0..m).map(|_| dgp.draw(&mut rng)).collect();
    let fit = fit_nuisance(ProblemKind::PlmNonorth, &stream, FitConfig::default(), &mut Rng::new(seed).child_named("rff")).unwrap();
    let g0 = true_nuisance(&p, &dgp).unwrap();
    nuisance_norm(&p, &fit.nuisance().unwrap(), &g0, &dgp, MonteCarlo::new(5000, 3)).unwrap().value
}

#[test]
fn ridge_error_decreases_with_m() {
    let small: Vec<f64> = (0..20).map(|s| nonorth_error(50, s)).collect();
    let large: Vec<f64> = (0..20).map(|s| nonorth_error(500, s)).collect();
    assert!(median(&large) < median(&small), "{} vs {}", median(&large), median(&small));
}

#[test]
fn fits_are_deterministic() {
    assert_eq!(nonorth_error(200, 4), nonorth_error(200, 4));
}

#[test]
fn every_kind_fits_and_roundtrips() {
    for kind in ProblemKind::ALL {
        let dgp = dgp_for(kind);
        let mut rng = Rng::new(6);
        let data: Vec<_> = (0..400).map(|_| dgp.draw(&mut rng)).collect();
        let fit = fit_nuisance(kind, &data, FitConfig::default(), &mut rng).unwrap();
        let json = serde_json::to_string(&NuisanceDoc::from_fitted(&fit)).unwrap();
        let back: FittedNuisance<f64> = serde_json::from_str::<NuisanceDoc>(&json).unwrap().to_fitted().unwrap();
        let (a, b) = (fit.nuisance().unwrap(), back.nuisance().unwrap());
        assert_eq!(a.kind(), kind);
        let z = dgp.draw(&mut rng);
        let p = GradOracle::new(kind, dgp.x_dim());
        let th = vec![0.1; dgp.x_dim()];
        assert_eq!(p.score(&th, &a, &z).unwrap(), p.score(&th, &b, &z).unwrap());
    }
}

fn ridge_on_grid() -> RidgeModel<f64> {
    let w: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 25.0, (i % 7) as f64 / 3.0]).collect();
    let feat = Arc::new(rff_fit(&mut Rng::new(2), &w, 20, Gamma::Median).unwrap());
    let data: Vec<_> = w.iter().map(|v| (v.clone(), v[0].sin())).collect();
    ridge_fit(&feat, &data, 0.01).unwrap()
}

#[test]
fn as_nuisance_wires_models() {
    let m = ridge_on_grid();
    let mut models: BTreeMap<String, ScalarFn<f64>> = BTreeMap::new();
    models.insert("g".into(), ScalarFn::model(m.clone()));
    let NuisanceFn::PlmNonorth { g } = as_nuisance(&models, ProblemKind::PlmNonorth, 2).unwrap() else { panic!() };
    let mut rng = Rng::new(3);
    for _ in 0..100 {
        let w = [rng.uniform_range(0.0, 4.0), rng.uniform_range(0.0, 2.0)];
        assert_eq!(g.eval(&w), m.predict(&w));
    }
    models.insert("g_x0".into(), ScalarFn::Zero);
    models.insert("g_x1".into(), ScalarFn::Zero);
    assert!(matches!(as_nuisance(&models, ProblemKind::PlmOrth, 2), Err(Error::MissingComponent(_))));
}

#[test]
fn repeated_batch_objective_nonincreasing() {
    let m = ridge_on_grid();
    let feat = m.rff.clone();
    let mut rng = Rng::new(5);
    let batch: Vec<(Vec<f64>, f64)> = (0..32)
        .map(|_| {
            let w = vec![rng.uniform_range(0.0, 4.0), rng.uniform_range(0.0, 2.0)];
            let v = w[0].cos();
            (w, v)
        })
        .collect();
    let mut st = StreamFitState::new(StreamModel::Ridge(RidgeModel::zeros(feat, 0.0)), 0.05, 32).unwrap();
    let obj = |s: &StreamFitState<f64>| match &s.model {
        StreamModel::Ridge(r) => r.objective(&batch),
        _ => unreachable!(),
    };
    let mut last = obj(&st);
    for _ in 0..100 {
        st = ridge_sgd_step(st, &batch).unwrap();
        let now = obj(&st);
        assert!(now <= last + 1e-12);
        last = now;
    }
}
