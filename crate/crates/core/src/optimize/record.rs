use serde::{Deserialize, Serialize};

use crate::optimize::RunContext;
use crate::scalar::{dist2, norm2};
use crate::Real;

/// Share of final iterations summarized in [`TailStats`].
pub const TAIL_FRACTION: f64 = 0.1;

/// Extra metric evaluated at recorded iterates.
pub trait Monitor<T>: Sync {
    fn excess_risk(&self, theta: &[T]) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Record<T> {
    pub iter: usize,
    pub theta: Vec<T>,
    pub rel_err: Option<f64>,
    pub excess_risk: Option<f64>,
}

/// Averages over the final iterations of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    /// First iteration counted in the tail.
    pub start: usize,
    pub count: usize,
    pub mean_theta: Vec<f64>,
    pub mean_rel_err: Option<f64>,
    /// Mean of `‖θ − θ⋆‖²`.
    pub mean_sq_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub records: Vec<Record<T>>,
    pub terminal: Vec<T>,
    pub tail: TailStats,
}

impl<T: Real> Trajectory<T> {
    pub fn final_rel_err(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rel_err)
    }
}

pub(crate) struct Recorder<'a, T> {
    total: usize,
    every: usize,
    ctx: RunContext<'a, T>,
    star_norm: f64,
    tail_start: usize,
    records: Vec<Record<T>>,
    sum_theta: Vec<f64>,
    sum_rel: f64,
    sum_sq: f64,
    count: usize,
}

impl<'a, T: Real> Recorder<'a, T> {
    pub fn new(total: usize, every: usize, ctx: RunContext<'a, T>) -> Self {
        let tail_len = ((total as f64 * TAIL_FRACTION).ceil() as usize).max(1).min(total.max(1));
        let star_norm = ctx.theta_star.map_or(1.0, |s| norm2(s).to_f64_lossy());
        Self {
            total,
            every,
            ctx,
            star_norm: if star_norm > 0.0 { star_norm } else { 1.0 },
            tail_start: (total + 1).saturating_sub(tail_len),
            records: Vec::with_capacity(total / every + 2),
            sum_theta: Vec::new(),
            sum_rel: 0.0,
            sum_sq: 0.0,
            count: 0,
        }
    }

    pub fn observe(&mut self, iter: usize, theta: &[T]) {
        let err = self.ctx.theta_star.map(|s| dist2(theta, s).to_f64_lossy());
        if iter >= self.tail_start {
            if self.sum_theta.is_empty() {
                self.sum_theta = vec![0.0; theta.len()];
            }
            for (a, t) in self.sum_theta.iter_mut().zip(theta) {
                *a += t.to_f64_lossy();
            }
            if let Some(e) = err {
                self.sum_rel += e / self.star_norm;
                self.sum_sq += e * e;
            }
            self.count += 1;
        }
        if iter.is_multiple_of(self.every) || iter == self.total {
            self.records.push(Record {
                iter,
                theta: theta.to_vec(),
                rel_err: err.map(|e| e / self.star_norm),
                excess_risk: self.ctx.monitor.map(|m| m.excess_risk(theta)),
            });
        }
    }

    pub fn finish(self, terminal: Vec<T>) -> Trajectory<T> {
        let c = self.count.max(1) as f64;
        let has_star = self.ctx.theta_star.is_some();
        Trajectory {
            records: self.records,
            terminal,
            tail: TailStats {
                start: self.tail_start,
                count: self.count,
                mean_theta: self.sum_theta.iter().map(|s| s / c).collect(),
                mean_rel_err: has_star.then(|| self.sum_rel / c),
                mean_sq_err: has_star.then(|| self.sum_sq / c),
            },
        }
    }
}
