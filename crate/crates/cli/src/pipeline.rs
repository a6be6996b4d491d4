//! Replicated experiment runs: data, nuisance, operator, optimizer, metrics, artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nuisance_grad::nuisance::{
    detect_binary_x, fit_nuisance, rff_fit, Gamma, StreamingNuisance, Updater,
};
use nuisance_grad::numkit::{MonteCarlo, Rng};
use nuisance_grad::optimize::{averaged_sgd_run, interleaved_run, osgd_run, sgd_run, RunContext, Trajectory};
use nuisance_grad::ortho::{estimate_operator, operator_bump, plm_true_operator, NoOracle, OrthoOperator, StreamingOperator};
use nuisance_grad::problems::{target, true_nuisance, unit_direction, GradOracle, NuisanceFn, ProblemKind, Sample};
use nuisance_grad::simdata::{ingest_csv, Dgp, SampleStream};
use nuisance_grad::Error;
use rayon::prelude::*;

use crate::config::{ConfigError, DataSpec, NuisanceSpec, OperatorSpec, OptimizerKind, RunConfig};
use crate::metrics::ExcessRisk;
use crate::plot::PlotError;
use crate::report::{read_replications, summarize, summary_plots, write_tails, write_trajectories, Replication, Summary};

/// Sample size used to normalize perturbation directions; fixed so every run shares them.
pub const DIRECTION_MC: MonteCarlo = MonteCarlo { n: 50_000, seed: 0 };

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(Error),
    #[error("replication {run_id} (seed {seed}): {source}")]
    Replication { run_id: usize, seed: u64, source: Error },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plot: {0}")]
    Plot(#[from] PlotError),
    #[error("malformed run directory: {0}")]
    Format(String),
}

impl RunError {
    /// Whether the failure came from the numerics rather than input or I/O.
    pub fn is_numeric(&self) -> bool {
        let e = match self {
            RunError::Setup(e) | RunError::Replication { source: e, .. } => e,
            _ => return false,
        };
        matches!(
            e,
            Error::NotPositiveDefinite { .. }
                | Error::NonFiniteEval { .. }
                | Error::NoConvergence { .. }
                | Error::NonFiniteIterate { .. }
                | Error::Domain(_)
        )
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Artifacts a run or report writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self { csv: true, json: true, svg: false }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
    /// `None` means csv + json, plus svg when the config asks for plots.
    pub formats: Option<Formats>,
}

/// Everything shared by the replications of one config.
pub struct Prepared {
    pub oracle: GradOracle<f64>,
    pub dgp: Dgp<f64>,
    pub theta_star: Option<Vec<f64>>,
    pub g0: Option<NuisanceFn<f64>>,
    pub monitor: Option<ExcessRisk>,
    direction: Option<NuisanceFn<f64>>,
    fixed_operator: Option<OrthoOperator<f64>>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    let dgp = match &cfg.data {
        DataSpec::Tabular(src) => {
            let ing = ingest_csv::<f64>(src, &mut Rng::new(cfg.seed).child_named("ingest")).map_err(RunError::Setup)?;
            Dgp::semi_synthetic(ing.truth).map_err(RunError::Setup)?
        }
        _ => cfg.sim_dgp().ok_or_else(|| ConfigError::new("data", "invalid simulation settings"))?,
    };
    let oracle = GradOracle::new(cfg.problem, dgp.x_dim());
    let theta_star = target(&oracle, &dgp).ok();
    let g0 = true_nuisance(&oracle, &dgp).ok();
    let monitor = match (&g0, &theta_star) {
        (Some(g), Some(t)) if cfg.eval_mc > 0 => Some(
            ExcessRisk::from_dgp(oracle.clone(), g.clone(), t, &dgp, MonteCarlo::new(cfg.eval_mc, cfg.seed))
                .map_err(RunError::Setup)?,
        ),
        _ => None,
    };
    let direction = match cfg.nuisance {
        NuisanceSpec::Perturbed { .. } => Some(unit_direction(&oracle, &dgp, DIRECTION_MC).map_err(RunError::Setup)?.0),
        _ => None,
    };
    let fixed_operator = match cfg.operator {
        OperatorSpec::True => Some(plm_true_operator(&dgp).map_err(RunError::Setup)?),
        OperatorSpec::Perturbed { rho } => {
            let (b, _) = operator_bump(&dgp, DIRECTION_MC).map_err(RunError::Setup)?;
            Some(plm_true_operator(&dgp).and_then(|g| g.plus_scaled(rho, &b)).map_err(RunError::Setup)?)
        }
        _ => None,
    };
    Ok(Prepared { oracle, dgp, theta_star, g0, monitor, direction, fixed_operator })
}

/// Operator that never changes; lets fixed operators ride the interleaved driver.
struct FixedOperator(OrthoOperator<f64>);

impl Updater<f64> for FixedOperator {
    type Output = OrthoOperator<f64>;
    fn minibatch(&self) -> usize {
        1
    }
    fn update(&mut self, _: &[Sample<f64>]) -> nuisance_grad::Result<()> {
        Ok(())
    }
    fn current(&self) -> OrthoOperator<f64> {
        self.0.clone()
    }
}

fn inputs(kind: ProblemKind, s: &[Sample<f64>]) -> Vec<Vec<f64>> {
    s.iter().map(|z| if kind.is_plm() { z.w.clone() } else { z.x.clone() }).collect()
}

/// Seed of replication `run_id`.
pub fn replication_seed(cfg: &RunConfig, run_id: usize) -> u64 {
    cfg.seed.wrapping_add(run_id as u64)
}

/// One replication, fully determined by `(cfg, run_id)`.
pub fn run_replication(cfg: &RunConfig, prep: &Prepared, run_id: usize) -> Result<Replication, RunError> {
    let seed = replication_seed(cfg, run_id);
    let wrap = |source| RunError::Replication { run_id, seed, source };
    replicate(cfg, prep, seed).map(|trajectory| Replication { run_id, seed, trajectory }).map_err(wrap)
}

fn replicate(cfg: &RunConfig, prep: &Prepared, seed: u64) -> nuisance_grad::Result<Trajectory<f64>> {
    let kind = cfg.problem;
    let p = &prep.oracle;
    let d = p.dim;
    let dgp = &prep.dgp;
    let rng = Rng::new(seed);
    let targets = SampleStream::new(dgp.clone(), rng.child_named("target"), Some(cfg.total_iters()));
    let mut nuis = SampleStream::unbounded(dgp.clone(), rng.child_named("nuisance"));
    let theta0 = cfg.theta_init.clone().unwrap_or_else(|| vec![0.0; d]);
    let ctx = RunContext {
        theta_star: prep.theta_star.as_deref(),
        monitor: prep.monitor.as_ref().map(|m| m as &dyn nuisance_grad::optimize::Monitor<f64>),
    };
    let truth = || prep.g0.clone().ok_or_else(|| Error::Unsupported("no closed-form nuisance for this data".into()));

    let operator = |rng: &Rng| -> nuisance_grad::Result<Option<OrthoOperator<f64>>> {
        Ok(match &cfg.operator {
            OperatorSpec::None | OperatorSpec::Stream(_) => None,
            OperatorSpec::True | OperatorSpec::Perturbed { .. } => prep.fixed_operator.clone(),
            OperatorSpec::Estimated { k, n_components, reg_scale } => {
                let pairs: Vec<(Vec<f64>, Vec<f64>)> = SampleStream::new(dgp.clone(), rng.child_named("operator"), Some(*k))
                    .map(|z| (z.x, z.w))
                    .collect();
                let ws: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
                let feat = Arc::new(rff_fit(&mut rng.child_named("operator_rff"), &ws, *n_components, Gamma::Median)?);
                Some(estimate_operator(&feat, &pairs, *reg_scale)?)
            }
        })
    };

    if cfg.optimizer == OptimizerKind::Interleaved {
        let NuisanceSpec::Stream(spec) = &cfg.nuisance else {
            return Err(Error::InvalidArgument("interleaved optimizer needs a stream nuisance".into()));
        };
        let sched = cfg.schedule.ok_or_else(|| Error::InvalidArgument("missing schedule".into()))?;
        let warm: Vec<Sample<f64>> = nuis.by_ref().take(spec.warmup).collect();
        let mut fit = StreamingNuisance::from_warmup(kind, d, &warm, spec.to_config(), &mut rng.child_named("nuisance_rff"))?;
        let mut op_state: Option<Box<dyn Updater<f64, Output = OrthoOperator<f64>>>> = match &cfg.operator {
            OperatorSpec::Stream(os) => {
                let feat = Arc::new(rff_fit(&mut rng.child_named("operator_rff"), &inputs(kind, &warm), os.n_components, os.gamma)?);
                Some(Box::new(StreamingOperator::new(d, feat, os.to_config(), &detect_binary_x(&warm))?))
            }
            _ => operator(&rng)?.map(|o| Box::new(FixedOperator(o)) as Box<_>),
        };
        let op_ref: Option<&mut dyn Updater<f64, Output = OrthoOperator<f64>>> = match op_state.as_mut() {
            Some(b) => Some(b.as_mut()),
            None => None,
        };
        let out = interleaved_run(p, targets, nuis, &sched, &mut fit, op_ref, &theta0, &cfg.opt_config(seed), ctx);
        return out;
    }

    let ghat = match &cfg.nuisance {
        NuisanceSpec::True => truth()?,
        NuisanceSpec::Perturbed { r } => {
            let h = prep.direction.as_ref().ok_or_else(|| Error::MissingComponent("perturbation direction".into()))?;
            truth()?.plus_scaled(*r, h)?
        }
        NuisanceSpec::Batch { m, fit } => {
            let data: Vec<Sample<f64>> = nuis.by_ref().take(*m).collect();
            fit_nuisance(kind, &data, fit.unwrap_or_default(), &mut rng.child_named("nuisance_rff"))?.nuisance()?
        }
        NuisanceSpec::Stream(_) => return Err(Error::InvalidArgument("stream nuisance needs the interleaved optimizer".into())),
    };
    let gamma = operator(&rng)?.unwrap_or_else(|| OrthoOperator::zero(d));
    let opt = cfg.opt_config(seed);
    match cfg.optimizer {
        OptimizerKind::Sgd => sgd_run(p, &ghat, &theta0, &opt, targets, ctx),
        OptimizerKind::Osgd => osgd_run(&NoOracle::new(p.clone(), gamma)?, &ghat, &theta0, &opt, targets, ctx),
        OptimizerKind::Avg => averaged_sgd_run(&NoOracle::new(p.clone(), gamma)?, &ghat, &theta0, &opt, targets, ctx),
        OptimizerKind::Interleaved => unreachable!("handled above"),
    }
}

pub struct Report {
    pub config: RunConfig,
    pub replications: Vec<Replication>,
    pub summary: Summary,
}

/// All replications of `cfg` on a worker pool, merged in replication order.
pub fn run_prepared(cfg: &RunConfig, prep: &Prepared, jobs: Option<usize>) -> Result<Vec<Replication>, RunError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    let pool = b.build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, prep, r)).collect())
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<Report, RunError> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let replications = run_prepared(cfg, &prep, opts.jobs)?;
    let summary = summarize(cfg, prep.theta_star.as_deref(), &replications);
    let report = Report { config: cfg.clone(), replications, summary };
    if let Some(dir) = opts.out_dir.as_ref().or(cfg.output_dir.as_ref()) {
        let formats = opts.formats.unwrap_or(Formats { svg: cfg.plots, ..Formats::default() });
        write_artifacts(dir, &report, formats)?;
    }
    Ok(report)
}

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const TAILS_FILE: &str = "tails.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes the selected artifacts; `config.json` is always written so `report` can rebuild the rest.
pub fn write_artifacts(dir: &Path, report: &Report, formats: Formats) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, report.config.to_json() + "\n").map_err(io(&path))?;
    if formats.csv {
        let path = dir.join(TRAJECTORIES_FILE);
        write_trajectories(fs::File::create(&path).map_err(io(&path))?, &report.replications)?;
        let path = dir.join(TAILS_FILE);
        write_tails(fs::File::create(&path).map_err(io(&path))?, &report.replications)?;
    }
    if formats.json {
        let path = dir.join(SUMMARY_FILE);
        fs::write(&path, serde_json::to_string_pretty(&report.summary)? + "\n").map_err(io(&path))?;
    }
    if formats.svg {
        let plots = dir.join("plots");
        fs::create_dir_all(&plots).map_err(io(&plots))?;
        for (name, svg) in summary_plots(&report.summary)? {
            let path = plots.join(name);
            fs::write(&path, svg).map_err(io(&path))?;
        }
    }
    Ok(())
}

/// Rebuilds a report from a run directory's `config.json`, `trajectories.csv` and `tails.csv`.
pub fn load_report(dir: &Path) -> Result<Report, RunError> {
    let path = dir.join(CONFIG_FILE);
    let config = RunConfig::from_path(&path)?;
    let open = |name: &str| {
        let p = dir.join(name);
        fs::File::open(&p).map_err(|source| RunError::Io { path: p, source })
    };
    let replications = read_replications(open(TRAJECTORIES_FILE)?, open(TAILS_FILE)?).map_err(RunError::Format)?;
    let theta_star = match fs::read_to_string(dir.join(SUMMARY_FILE)) {
        Ok(text) => serde_json::from_str::<Summary>(&text)?.theta_star,
        Err(_) => prepare(&config)?.theta_star,
    };
    let summary = summarize(&config, theta_star.as_deref(), &replications);
    Ok(Report { config, replications, summary })
}
