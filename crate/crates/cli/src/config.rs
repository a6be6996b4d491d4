//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use nuisance_grad::nuisance::{FitConfig, Gamma, StreamConfig};
use nuisance_grad::optimize::{InterleaveSchedule, OptConfig};
use nuisance_grad::problems::ProblemKind;
use nuisance_grad::simdata::{CausalConfig, Dgp, PlmConfig, TabularSource};
use serde::{Deserialize, Serialize};

/// Invalid configuration, located by a dotted field path.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Simulated partially linear model.
    Plm {
        lambda: f64,
        #[serde(default)]
        theta0: Option<Vec<f64>>,
    },
    /// Simulated binary-treatment model.
    Causal {
        #[serde(default = "yes")]
        binary_outcome: bool,
        #[serde(default)]
        prop_scale: Option<f64>,
    },
    Tabular(TabularSource),
}

fn yes() -> bool {
    true
}

/// How the plugged-in nuisance is obtained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NuisanceSpec {
    #[default]
    True,
    /// `g₀ + r·h` with `h` a unit-norm bump.
    Perturbed { r: f64 },
    /// Batch RFF fit on `m` nuisance-stream samples.
    Batch {
        m: usize,
        #[serde(default)]
        fit: Option<FitConfig>,
    },
    /// Streaming fit, refreshed between target blocks.
    Stream(#[serde(default)] StreamSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSpec {
    pub n_components: usize,
    pub gamma: Gamma,
    pub step: Option<f64>,
    pub minibatch: usize,
    pub reg: f64,
    pub warmup: usize,
}

impl Default for StreamSpec {
    fn default() -> Self {
        let c = StreamConfig::default();
        Self { n_components: c.n_components, gamma: c.gamma, step: c.step, minibatch: c.minibatch, reg: c.reg, warmup: c.warmup }
    }
}

impl StreamSpec {
    pub fn to_config(&self) -> StreamConfig {
        StreamConfig {
            n_components: self.n_components,
            gamma: self.gamma,
            step: self.step,
            minibatch: self.minibatch,
            reg: self.reg,
            warmup: self.warmup,
        }
    }
}

/// Orthogonalizing operator plugged into OSGD.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    #[default]
    None,
    True,
    /// `Γ₀` with a unit bump of size `rho` added to the first representer.
    Perturbed { rho: f64 },
    /// Ridge fit of `E[X | W]` on `k` pairs.
    Estimated {
        k: usize,
        #[serde(default = "op_components")]
        n_components: usize,
        #[serde(default = "op_reg")]
        reg_scale: f64,
    },
    /// Streaming fit co-updated with the nuisance.
    Stream(#[serde(default)] StreamSpec),
}

fn op_components() -> usize {
    50
}
fn op_reg() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Osgd,
    Avg,
    Interleaved,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptSpec {
    pub eta: f64,
    #[serde(default)]
    pub n_iters: usize,
    #[serde(default = "record_every")]
    pub record_every: usize,
}

fn record_every() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub problem: ProblemKind,
    pub data: DataSpec,
    #[serde(default)]
    pub nuisance: NuisanceSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    pub optimizer: OptimizerKind,
    pub opt: OptSpec,
    #[serde(default)]
    pub schedule: Option<InterleaveSchedule>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    /// Replication `i` runs with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theta_init: Option<Vec<f64>>,
    /// Size of the shared evaluation sample used for excess risk (0 disables it).
    #[serde(default = "default_eval")]
    pub eval_mc: usize,
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_reps() -> usize {
    20
}
fn default_eval() -> usize {
    10_000
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn opt_config(&self, seed: u64) -> OptConfig {
        OptConfig { eta: self.opt.eta, n_iters: self.opt.n_iters, record_every: self.opt.record_every, seed }
    }

    /// Simulation model for non-tabular data.
    pub fn sim_dgp(&self) -> Option<Dgp<f64>> {
        match &self.data {
            DataSpec::Plm { lambda, theta0 } => {
                let mut c = PlmConfig::standard(*lambda);
                if let Some(t) = theta0 {
                    c.theta0 = t.clone();
                }
                Dgp::plm(c).ok()
            }
            DataSpec::Causal { binary_outcome, prop_scale } => {
                let mut c = CausalConfig::standard(*binary_outcome);
                if let Some(s) = prop_scale {
                    c.prop_scale = *s;
                }
                Dgp::causal(c).ok()
            }
            DataSpec::Tabular(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |p: &str, m: &str| Err(ConfigError::new(p, m));
        if self.experiment.trim().is_empty() {
            return err("experiment", "must be non-empty");
        }
        if self.replications == 0 {
            return err("replications", "must be >= 1");
        }
        if !(self.opt.eta >= 0.0 && self.opt.eta.is_finite()) {
            return err("opt.eta", "must be finite and >= 0");
        }
        if self.opt.record_every == 0 {
            return err("opt.record_every", "must be >= 1");
        }
        match &self.data {
            DataSpec::Plm { lambda, theta0 } => {
                if !self.problem.is_plm() {
                    return err("problem", "plm data supports plm_orth and plm_nonorth only");
                }
                let mut c = PlmConfig::standard(*lambda);
                if let Some(t) = theta0 {
                    if t.len() != 2 {
                        return err("data.plm.theta0", "must have length 2");
                    }
                    c.theta0 = t.clone();
                }
                if let Err(e) = c.validate() {
                    return err("data.plm.lambda", &e.to_string());
                }
            }
            DataSpec::Causal { prop_scale, .. } => {
                if self.problem.is_plm() {
                    return err("problem", "causal data supports cate_unres, cate_res and crr only");
                }
                if prop_scale.is_some_and(|s| !s.is_finite()) {
                    return err("data.causal.prop_scale", "must be finite");
                }
            }
            DataSpec::Tabular(t) => {
                if !self.problem.is_plm() {
                    return err("problem", "tabular data supports plm_orth and plm_nonorth only");
                }
                if t.w_cols.is_empty() {
                    return err("data.tabular.w_cols", "must name at least one column");
                }
                if matches!(self.nuisance, NuisanceSpec::True | NuisanceSpec::Perturbed { .. }) {
                    return err("nuisance", "tabular data has no closed-form nuisance; use batch or stream");
                }
            }
        }
        let analytic_plm = matches!(self.data, DataSpec::Plm { .. });
        match &self.nuisance {
            NuisanceSpec::Perturbed { r } if !r.is_finite() => return err("nuisance.perturbed.r", "must be finite"),
            NuisanceSpec::Batch { m: 0, .. } => return err("nuisance.batch.m", "must be >= 1"),
            NuisanceSpec::Stream(s) if s.minibatch == 0 => return err("nuisance.stream.minibatch", "must be >= 1"),
            _ => {}
        }
        let has_op = !matches!(self.operator, OperatorSpec::None);
        if has_op && self.problem != ProblemKind::PlmNonorth {
            return err("operator", "orthogonalizing operators are implemented for plm_nonorth only");
        }
        if matches!(self.operator, OperatorSpec::True | OperatorSpec::Perturbed { .. }) && !analytic_plm {
            return err("operator", "the true operator needs simulated plm data");
        }
        if let OperatorSpec::Estimated { k: 0, .. } = self.operator {
            return err("operator.estimated.k", "must be >= 1");
        }
        match self.optimizer {
            OptimizerKind::Interleaved => {
                let Some(s) = self.schedule else {
                    return err("schedule", "required by the interleaved optimizer");
                };
                if s.target_block == 0 || s.nuisance_block == 0 {
                    return err("schedule", "blocks must be >= 1");
                }
                if !matches!(self.nuisance, NuisanceSpec::Stream(_)) {
                    return err("nuisance", "the interleaved optimizer needs a stream nuisance");
                }
            }
            _ => {
                if matches!(self.nuisance, NuisanceSpec::Stream(_)) {
                    return err("nuisance", "stream nuisance requires optimizer `interleaved`");
                }
                if matches!(self.operator, OperatorSpec::Stream(_)) {
                    return err("operator", "stream operator requires optimizer `interleaved`");
                }
                if self.schedule.is_some() {
                    return err("schedule", "only used by the interleaved optimizer");
                }
            }
        }
        if has_op && self.optimizer == OptimizerKind::Sgd {
            return err("operator", "sgd ignores the operator; use osgd");
        }
        if let Some(t) = &self.theta_init {
            let d = match &self.data {
                DataSpec::Causal { .. } => 3,
                _ => 1 + usize::from(!matches!(self.data, DataSpec::Tabular(_))),
            };
            if t.len() != d {
                return err("theta_init", &format!("must have length {d}"));
            }
        }
        Ok(())
    }

    /// Target iterations per replication.
    pub fn total_iters(&self) -> usize {
        match (self.optimizer, self.schedule) {
            (OptimizerKind::Interleaved, Some(s)) => s.total_target_iters(),
            _ => self.opt.n_iters,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Osgd => "osgd",
            OptimizerKind::Avg => "avg",
            OptimizerKind::Interleaved => "interleaved",
        })
    }
}
