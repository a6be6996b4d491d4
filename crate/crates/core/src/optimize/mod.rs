//! Iteration engines: SGD, orthogonalized SGD, Polyak-averaged SGD and the interleaved driver.

mod record;

pub use record::{Monitor, Record, TailStats, Trajectory, TAIL_FRACTION};

use serde::{Deserialize, Serialize};

use crate::nuisance::Updater;
use crate::ortho::{NoOracle, OrthoOperator};
use crate::problems::{GradOracle, GradientOracle, NuisanceFn, Sample};
use crate::{Error, Real, Result};
use record::Recorder;

/// Divergence guard on the iterate norm.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub eta: f64,
    pub n_iters: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_record_every() -> usize {
    100
}

impl OptConfig {
    pub fn new(eta: f64, n_iters: usize) -> Self {
        Self { eta, n_iters, record_every: default_record_every(), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be finite and nonnegative, got {}", self.eta)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optional ground truth and metric hooks for a run.
#[derive(Clone, Copy, Default)]
pub struct RunContext<'a, T> {
    pub theta_star: Option<&'a [T]>,
    pub monitor: Option<&'a dyn Monitor<T>>,
}

impl<'a, T> RunContext<'a, T> {
    pub fn with_target(theta_star: &'a [T]) -> Self {
        Self { theta_star: Some(theta_star), monitor: None }
    }
}

/// One SGD step in place; returns an error on divergence.
#[inline]
fn step<T: Real, O: GradientOracle<T> + ?Sized>(
    oracle: &O,
    theta: &mut [T],
    g: &NuisanceFn<T>,
    z: &Sample<T>,
    eta: T,
    buf: &mut [T],
    iter: usize,
) -> Result<()> {
    oracle.gradient_into(theta, g, z, buf)?;
    let mut sq = T::zero();
    for (t, &s) in theta.iter_mut().zip(buf.iter()) {
        *t -= eta * s;
        sq += *t * *t;
    }
    let norm = sq.sqrt();
    if !(norm.to_f64_lossy() <= DIVERGENCE_NORM) {
        return Err(Error::NonFiniteIterate { iter, norm: norm.to_f64_lossy() });
    }
    Ok(())
}

fn check_start<T: Real>(dim: usize, theta0: &[T], cfg: &OptConfig) -> Result<()> {
    cfg.validate()?;
    if theta0.len() != dim {
        return Err(Error::Dimension(format!("theta0 has length {}, problem dim {}", theta0.len(), dim)));
    }
    Ok(())
}

fn run_generic<T, O, I>(
    oracle: &O,
    ghat: &NuisanceFn<T>,
    theta0: &[T],
    cfg: &OptConfig,
    stream: I,
    ctx: RunContext<'_, T>,
    averaged: bool,
) -> Result<Trajectory<T>>
where
    T: Real,
    O: GradientOracle<T> + ?Sized,
    I: IntoIterator<Item = Sample<T>>,
{
    check_start(oracle.dim(), theta0, cfg)?;
    let eta = T::lit(cfg.eta);
    let mut theta = theta0.to_vec();
    let mut avg = theta0.to_vec();
    let mut buf = vec![T::zero(); theta.len()];
    let mut rec = Recorder::new(cfg.n_iters, cfg.record_every, ctx);
    rec.observe(0, theta0);
    let mut it = stream.into_iter();
    for n in 1..=cfg.n_iters {
        let z = it.next().ok_or(Error::StreamExhausted { stream: "target", consumed: n - 1 })?;
        step(oracle, &mut theta, ghat, &z, eta, &mut buf, n)?;
        if averaged {
            // θ̄ₙ = θ̄ₙ₋₁ + (θₙ − θ̄ₙ₋₁)/(n + 1)
            let w = T::one() / T::from_usize_lossy(n + 1);
            for (a, &t) in avg.iter_mut().zip(&theta) {
                *a += (t - *a) * w;
            }
            rec.observe(n, &avg);
        } else {
            rec.observe(n, &theta);
        }
    }
    Ok(rec.finish(if averaged { avg } else { theta }))
}

/// `θₙ = θₙ₋₁ − η·S(θₙ₋₁, ĝ; Zₙ)` with `ĝ` held fixed.
pub fn sgd_run<T: Real, I: IntoIterator<Item = Sample<T>>>(
    p: &GradOracle<T>,
    ghat: &NuisanceFn<T>,
    theta0: &[T],
    cfg: &OptConfig,
    stream: I,
    ctx: RunContext<'_, T>,
) -> Result<Trajectory<T>> {
    run_generic(p, ghat, theta0, cfg, stream, ctx, false)
}

/// SGD driven by the estimated orthogonalized score.
pub fn osgd_run<T: Real, I: IntoIterator<Item = Sample<T>>>(
    o: &NoOracle<T>,
    ghat: &NuisanceFn<T>,
    theta0: &[T],
    cfg: &OptConfig,
    stream: I,
    ctx: RunContext<'_, T>,
) -> Result<Trajectory<T>> {
    run_generic(o, ghat, theta0, cfg, stream, ctx, false)
}

/// SGD whose reported iterate is the running average `θ̄ₙ = (n+1)⁻¹ Σ_{t≤n} θₜ`.
pub fn averaged_sgd_run<T: Real, O: GradientOracle<T> + ?Sized, I: IntoIterator<Item = Sample<T>>>(
    p: &O,
    ghat: &NuisanceFn<T>,
    theta0: &[T],
    cfg: &OptConfig,
    stream: I,
    ctx: RunContext<'_, T>,
) -> Result<Trajectory<T>> {
    run_generic(p, ghat, theta0, cfg, stream, ctx, true)
}

/// Block sizes of the interleaved driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleaveSchedule {
    pub target_block: usize,
    pub nuisance_block: usize,
    pub rounds: usize,
}

impl InterleaveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.target_block == 0 || self.nuisance_block == 0 {
            return Err(Error::InvalidArgument("interleave blocks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_target_iters(&self) -> usize {
        self.target_block * self.rounds
    }
}

/// Alternates streaming nuisance (and optionally operator) updates with blocks of target steps.
///
/// Each round first applies `nuisance_block` minibatch updates from `stream_nuisance`,
/// then runs `target_block` steps from `stream_target` with the refreshed plug-ins.
/// The iterate carries over between rounds. `cfg.n_iters` is ignored in favour of the schedule.
#[allow(clippy::too_many_arguments)]
pub fn interleaved_run<T, IT, IN>(
    p: &GradOracle<T>,
    stream_target: IT,
    stream_nuisance: IN,
    sched: &InterleaveSchedule,
    fit: &mut dyn Updater<T, Output = NuisanceFn<T>>,
    mut op_fit: Option<&mut dyn Updater<T, Output = OrthoOperator<T>>>,
    theta0: &[T],
    cfg: &OptConfig,
    ctx: RunContext<'_, T>,
) -> Result<Trajectory<T>>
where
    T: Real,
    IT: IntoIterator<Item = Sample<T>>,
    IN: IntoIterator<Item = Sample<T>>,
{
    sched.validate()?;
    check_start(p.dim, theta0, cfg)?;
    let total = sched.total_target_iters();
    let eta = T::lit(cfg.eta);
    let mut theta = theta0.to_vec();
    let mut buf = vec![T::zero(); theta.len()];
    let mut rec = Recorder::new(total, cfg.record_every, ctx);
    rec.observe(0, theta0);
    let mut targets = stream_target.into_iter();
    let mut nuis = stream_nuisance.into_iter();
    let mut consumed_nuis = 0;
    let mut n = 0;
    let mut batch = Vec::new();
    for _ in 0..sched.rounds {
        for _ in 0..sched.nuisance_block {
            let want = match op_fit.as_ref() {
                Some(op) => fit.minibatch().max(op.minibatch()),
                None => fit.minibatch(),
            };
            batch.clear();
            for _ in 0..want {
                let z = nuis.next().ok_or(Error::StreamExhausted { stream: "nuisance", consumed: consumed_nuis })?;
                consumed_nuis += 1;
                batch.push(z);
            }
            fit.update(&batch[..fit.minibatch()])?;
            if let Some(op) = op_fit.as_deref_mut() {
                let k = op.minibatch();
                op.update(&batch[..k])?;
            }
        }
        let ghat = fit.current();
        let no = match op_fit.as_ref() {
            Some(op) => Some(NoOracle::new(p.clone(), op.current())?),
            None => None,
        };
        for _ in 0..sched.target_block {
            n += 1;
            let z = targets.next().ok_or(Error::StreamExhausted { stream: "target", consumed: n - 1 })?;
            match &no {
                Some(o) => step(o, &mut theta, &ghat, &z, eta, &mut buf, n)?,
                None => step(p, &mut theta, &ghat, &z, eta, &mut buf, n)?,
            }
            rec.observe(n, &theta);
        }
    }
    Ok(rec.finish(theta))
}
