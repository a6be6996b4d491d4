#![allow(dead_code)]

use nuisance_grad::numkit::Rng;
use nuisance_grad::problems::{NuisanceFn, ProblemKind, ScalarFn};
use nuisance_grad::simdata::{CausalConfig, Dgp, PlmConfig};

pub fn plm(lambda: f64) -> Dgp<f64> {
    Dgp::plm(PlmConfig::standard(lambda)).unwrap()
}

pub fn causal() -> Dgp<f64> {
    Dgp::causal(CausalConfig::standard(true)).unwrap()
}

pub fn dgp_for(kind: ProblemKind) -> Dgp<f64> {
    if kind.is_plm() {
        plm(0.5)
    } else {
        causal()
    }
}

/// Smooth random function `a·sin(⟨b, v⟩ + c) + e`.
pub fn random_fn(rng: &mut Rng, dim: usize) -> ScalarFn<f64> {
    let a = rng.uniform_range(-1.0, 1.0);
    let b: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let c = rng.uniform_range(0.0, 6.0);
    let e = rng.uniform_range(-1.0, 1.0);
    ScalarFn::analytic(move |v: &[f64]| a * (v.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + c).sin() + e)
}

/// Random probability-valued function in (0.1, 0.9).
pub fn random_prob(rng: &mut Rng, dim: usize) -> ScalarFn<f64> {
    let f = random_fn(rng, dim);
    ScalarFn::analytic(move |v: &[f64]| 0.5 + 0.4 * f.eval(v).tanh())
}

pub fn random_nuisance(rng: &mut Rng, kind: ProblemKind, d: usize, input_dim: usize) -> NuisanceFn<f64> {
    let mut f = || random_fn(rng, input_dim);
    match kind {
        ProblemKind::PlmOrth => NuisanceFn::PlmOrth { g_y: f(), g_x: (0..d).map(|_| f()).collect() },
        ProblemKind::PlmNonorth => NuisanceFn::PlmNonorth { g: f() },
        ProblemKind::CateUnres => {
            let out = f();
            NuisanceFn::CateUnres { out, prop: random_prob(rng, input_dim) }
        }
        ProblemKind::CateRes => {
            let (g0, g1) = (random_prob(rng, input_dim), random_prob(rng, input_dim));
            NuisanceFn::CateRes { g0, g1, prop: random_prob(rng, input_dim) }
        }
        ProblemKind::Crr => {
            let (g0, g1) = (random_prob(rng, input_dim), random_prob(rng, input_dim));
            NuisanceFn::Crr { g0, g1, prop: random_prob(rng, input_dim) }
        }
    }
}
