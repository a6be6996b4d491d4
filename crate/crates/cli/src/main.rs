use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use nuisance_grad::nuisance::{fit_nuisance, rff_fit, Gamma, NuisanceDoc};
use nuisance_grad::numkit::{MonteCarlo, Rng};
use nuisance_grad::ortho::{fit_operator_models, frob_error, plm_true_operator, OperatorDoc, OrthoOperator};
use nuisance_grad::problems::nuisance_norm;
use nuisance_grad::simdata::{write_samples_csv, write_schema_csv, SampleStream};
use nuisance_grad_cli::config::{ConfigError, DataSpec, NuisanceSpec, OperatorSpec, RunConfig};
use nuisance_grad_cli::pipeline::{self, load_report, write_artifacts, Formats, RunError, RunOptions};
use nuisance_grad_cli::verify::{run_criteria, VerifyOptions, CRITERIA};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "nuisance-grad", version, about = "SGD and orthogonalized SGD under estimated nuisances")]
struct Cli {
    /// Worker threads for replications (NUISANCE_GRAD_JOBS takes precedence).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataKind {
    Plm,
    Causal,
    Schema,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write simulated samples, or a schema-compatible tabular file.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "plm")]
        kind: DataKind,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Batch-fit the nuisance of a config and save it as JSON.
    FitNuisance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the orthogonalizing operator of a config and save it as JSON.
    FitOperator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all replications of a config and write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',')]
        format: Vec<Format>,
    },
    /// Re-aggregate a run directory; `csv` prints the median curve to stdout.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Json, Format::Svg])]
        format: Vec<Format>,
    },
    /// Run the acceptance criteria.
    Verify {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for scratch files and `verify.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
    Acceptance(String),
    Other(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            e if e.is_numeric() => Failure::Numeric(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn core(e: nuisance_grad::Error) -> Failure {
    RunError::Setup(e).into()
}

fn other<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Other(e.to_string())
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("NUISANCE_GRAD_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::Config(format!("NUISANCE_GRAD_JOBS={v:?} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

fn formats(list: &[Format]) -> Option<Formats> {
    (!list.is_empty()).then(|| Formats {
        csv: list.contains(&Format::Csv),
        json: list.contains(&Format::Json),
        svg: list.contains(&Format::Svg),
    })
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(other)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v).map_err(other)? + "\n").map_err(other)
}

fn gen_data(config: Option<PathBuf>, kind: DataKind, rows: usize, lambda: f64, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let (dgp, seed) = match config {
        Some(p) => {
            let cfg = load(&p, seed)?;
            let dgp = cfg.sim_dgp().ok_or_else(|| Failure::Config("gen-data needs simulated `data`".into()))?;
            (dgp, cfg.seed)
        }
        None => {
            let seed = seed.unwrap_or(0);
            let mut cfg = RunConfig::from_json(&format!(
                r#"{{"experiment":"gen","problem":"{}","data":{},"optimizer":"sgd","opt":{{"eta":0}}}}"#,
                if matches!(kind, DataKind::Causal) { "cate_res" } else { "plm_nonorth" },
                if matches!(kind, DataKind::Causal) { "{\"causal\":{}}".to_string() } else { format!("{{\"plm\":{{\"lambda\":{lambda}}}}}") }
            ))?;
            cfg.seed = seed;
            if matches!(kind, DataKind::Schema) {
                return write_schema_csv(out, rows, &mut Rng::new(seed).child_named("gen-data")).map_err(core);
            }
            (cfg.sim_dgp().ok_or_else(|| Failure::Config("invalid --lambda".into()))?, seed)
        }
    };
    let samples: Vec<_> = SampleStream::new(dgp, Rng::new(seed).child_named("gen-data"), Some(rows)).collect();
    let f = std::fs::File::create(out).map_err(other)?;
    write_samples_csv(f, &samples).map_err(core)
}

fn fit_nuisance_cmd(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let cfg = load(path, seed)?;
    let NuisanceSpec::Batch { m, fit } = cfg.nuisance else {
        return Err(Failure::Config("config error at `nuisance`: fit-nuisance needs a batch nuisance".into()));
    };
    let prep = pipeline::prepare(&cfg)?;
    let rng = Rng::new(cfg.seed);
    let data: Vec<_> = SampleStream::new(prep.dgp.clone(), rng.child_named("nuisance"), Some(m)).collect();
    let fitted = fit_nuisance(cfg.problem, &data, fit.unwrap_or_default(), &mut rng.child_named("nuisance_rff")).map_err(core)?;
    write_json(out, &NuisanceDoc::from_fitted(&fitted))?;
    if let Some(g0) = &prep.g0 {
        let n = nuisance_norm(&prep.oracle, &fitted.nuisance().map_err(core)?, g0, &prep.dgp, MonteCarlo::new(20_000, cfg.seed))
            .map_err(core)?;
        println!("nuisance error {:.5} (se {:.5})", n.value, n.se);
    }
    Ok(())
}

fn fit_operator_cmd(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let cfg = load(path, seed)?;
    let OperatorSpec::Estimated { k, n_components, reg_scale } = cfg.operator else {
        return Err(Failure::Config("config error at `operator`: fit-operator needs an estimated operator".into()));
    };
    let prep = pipeline::prepare(&cfg)?;
    let rng = Rng::new(cfg.seed);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> =
        SampleStream::new(prep.dgp.clone(), rng.child_named("operator"), Some(k)).map(|z| (z.x, z.w)).collect();
    let ws: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
    let feat = Arc::new(rff_fit(&mut rng.child_named("operator_rff"), &ws, n_components, Gamma::Median).map_err(core)?);
    let models = fit_operator_models(&feat, &pairs, reg_scale).map_err(core)?;
    write_json(out, &OperatorDoc::from_models(&models))?;
    if matches!(cfg.data, DataSpec::Plm { .. }) {
        let est = OrthoOperator::new(models.iter().map(|m| m.to_scalar_fn()).collect());
        let truth = plm_true_operator(&prep.dgp).map_err(core)?;
        let e = frob_error(&est, &truth, &prep.dgp, MonteCarlo::new(20_000, cfg.seed)).map_err(core)?;
        println!("operator error {:.5} (se {:.5})", e.value, e.se);
    }
    Ok(())
}

fn run_cmd(path: &Path, seed: Option<u64>, out: Option<PathBuf>, fmt: &[Format], jobs: Option<usize>) -> Result<(), Failure> {
    let cfg = load(path, seed)?;
    let report = pipeline::run(&cfg, &RunOptions { out_dir: out, jobs, formats: formats(fmt) })?;
    let s = &report.summary;
    println!("{}: {} of {} replications", s.experiment, s.replications_completed, s.replications_requested);
    if let Some(b) = s.terminal.rel_err {
        println!("final relative error median {:.5} [{:.5}, {:.5}]", b.median, b.q25, b.q75);
    }
    if let Some(b) = s.tail.rel_err {
        println!("tail-mean relative error median {:.5}", b.median);
    }
    Ok(())
}

fn report_cmd(dir: &Path, fmt: &[Format]) -> Result<(), Failure> {
    let report = load_report(dir)?;
    let f = formats(fmt).unwrap_or_default();
    write_artifacts(dir, &report, Formats { csv: false, ..f })?;
    if f.csv {
        println!("iter,median_rel_err,q25_rel_err,q75_rel_err");
        for c in &report.summary.curve {
            if let Some(b) = c.rel_err {
                println!("{},{},{},{}", c.iter, b.median, b.q25, b.q75);
            }
        }
    }
    Ok(())
}

fn verify_cmd(only: Vec<u8>, seed: Option<u64>, out: Option<PathBuf>, jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(bad) = only.iter().find(|i| !CRITERIA.iter().any(|c| c.0 == **i)) {
        return Err(Failure::Config(format!("config error at `--only`: no criterion {bad}")));
    }
    let mut opts = VerifyOptions { jobs, work_dir: out.clone(), ..VerifyOptions::default() };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let results = run_criteria(&opts, &only, |r| println!("{}", r.line()));
    if let Some(dir) = out {
        write_json(&dir.join("verify.json"), &results)?;
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = jobs(cli.jobs).and_then(|jobs| match cli.cmd {
        Cmd::GenData { config, kind, rows, lambda, seed, out } => gen_data(config, kind, rows, lambda, seed, &out),
        Cmd::FitNuisance { config, seed, out } => fit_nuisance_cmd(&config, seed, &out),
        Cmd::FitOperator { config, seed, out } => fit_operator_cmd(&config, seed, &out),
        Cmd::Run { config, seed, out, format } => run_cmd(&config, seed, out, &format, jobs),
        Cmd::Report { out, format } => report_cmd(&out, &format),
        Cmd::Verify { only, seed, out } => verify_cmd(only, seed, out, jobs),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, m),
                Failure::Numeric(m) => (EXIT_NUMERIC, m),
                Failure::Acceptance(m) => (EXIT_ACCEPTANCE, m),
                Failure::Other(m) => (EXIT_FAILURE, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
