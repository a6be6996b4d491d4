mod common;

use common::*;
use nuisance_grad::numkit::stats::median;
use nuisance_grad::numkit::{MonteCarlo, Rng};
use nuisance_grad::nuisance::{StreamConfig, StreamingNuisance, Updater};
use nuisance_grad::optimize::{
    interleaved_run, osgd_run, sgd_run, InterleaveSchedule, OptConfig, RunContext, Trajectory,
};
use nuisance_grad::ortho::{plm_true_operator, NoOracle, OrthoOperator};
use nuisance_grad::problems::{true_nuisance, unit_direction, GradOracle, ProblemKind};
use nuisance_grad::simdata::SampleStream;

const THETA0: [f64; 2] = [0.0, 0.0];

fn stream(seed: u64) -> SampleStream<f64> {
    SampleStream::unbounded(plm(0.5), Rng::new(seed).child_named("target"))
}

fn check_well_formed(t: &Trajectory<f64>) {
    assert!(t.records.windows(2).all(|w| w[0].iter < w[1].iter));
    assert!(t.records.iter().all(|r| r.theta.iter().all(|x| x.is_finite())));
}

#[test]
fn zero_operator_osgd_equals_sgd() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g0 = true_nuisance(&p, &dgp).unwrap();
    let o = NoOracle::new(p.clone(), OrthoOperator::zero(2)).unwrap();
    let cfg = OptConfig::new(0.01, 3000);
    let star = [-0.5, 1.0];
    let a = sgd_run(&p, &g0, &THETA0, &cfg, stream(1), RunContext::with_target(&star)).unwrap();
    let b = osgd_run(&o, &g0, &THETA0, &cfg, stream(1), RunContext::with_target(&star)).unwrap();
    assert_eq!(a, b);
    check_well_formed(&a);
}

#[test]
fn runs_are_deterministic() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmOrth, 2);
    let g0 = true_nuisance(&p, &dgp).unwrap();
    let cfg = OptConfig::new(0.01, 2000);
    let a = sgd_run(&p, &g0, &THETA0, &cfg, stream(9), RunContext::default()).unwrap();
    let b = sgd_run(&p, &g0, &THETA0, &cfg, stream(9), RunContext::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn osgd_beats_sgd_under_biased_nuisance() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g0 = true_nuisance(&p, &dgp).unwrap();
    let (h, _) = unit_direction(&p, &dgp, MonteCarlo::new(20_000, 1)).unwrap();
    let ghat = g0.plus_scaled(0.5, &h).unwrap();
    let o = NoOracle::new(p.clone(), plm_true_operator(&dgp).unwrap()).unwrap();
    let cfg = OptConfig::new(0.01, 20_000);
    let star = [-0.5, 1.0];
    let (mut s, mut os) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let ctx = RunContext::with_target(&star);
        s.push(sgd_run(&p, &ghat, &THETA0, &cfg, stream(seed), ctx).unwrap().final_rel_err().unwrap());
        os.push(osgd_run(&o, &ghat, &THETA0, &cfg, stream(seed), ctx).unwrap().final_rel_err().unwrap());
    }
    assert!(median(&os) < median(&s), "{} vs {}", median(&os), median(&s));
}

#[test]
fn frozen_interleave_equals_sgd_with_initial_fit() {
    let dgp = plm(0.5);
    let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let mut rng = Rng::new(3);
    let warm: Vec<_> = (0..200).map(|_| dgp.draw(&mut rng)).collect();
    let cfg_s = StreamConfig { step: Some(0.0), ..StreamConfig::default() };
    let mut fit = StreamingNuisance::from_warmup(ProblemKind::PlmNonorth, 2, &warm, cfg_s, &mut rng).unwrap();
    let g_init = fit.current();
    let sched = InterleaveSchedule { target_block: 500, nuisance_block: 5, rounds: 4 };
    let cfg = OptConfig::new(0.01, 0);
    let nuis = SampleStream::unbounded(dgp.clone(), Rng::new(4));
    let a = interleaved_run(&p, stream(5), nuis, &sched, &mut fit, None, &THETA0, &cfg, RunContext::default()).unwrap();
    let b = sgd_run(&p, &g_init, &THETA0, &OptConfig::new(0.01, 2000), stream(5), RunContext::default()).unwrap();
    assert_eq!(a.terminal, b.terminal);
    check_well_formed(&a);
}
