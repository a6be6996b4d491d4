//! Machine-checked acceptance criteria.
//!
//! Every criterion runs from fixed seeds and reports PASS or FAIL with the measured
//! quantities, so a failing line carries enough detail to diagnose it.

use std::path::PathBuf;
use std::time::Instant;

use nuisance_grad::numkit::stats::median;
use nuisance_grad::numkit::{finite_diff_grad, MonteCarlo, Rng};
use nuisance_grad::ortho::{orthogonality_check, plm_true_operator, NoOracle};
use nuisance_grad::problems::{
    diagnostics, random_directions, target, true_nuisance, GradOracle, NuisanceFn, ProblemKind, ScalarFn,
};
use nuisance_grad::scalar::{dist2, norm2, norm_inf};
use nuisance_grad::simdata::{write_schema_csv, CausalConfig, Dgp, PlmConfig, TabularSource};
use nuisance_grad::optimize::InterleaveSchedule;
use serde::Serialize;

use crate::config::{DataSpec, NuisanceSpec, OperatorSpec, OptSpec, OptimizerKind, RunConfig, StreamSpec};
use crate::metrics::{slope_fit, SlopeFit};
use crate::pipeline::{self, Formats, RunError, RunOptions, TRAJECTORIES_FILE};
use crate::report::Replication;

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "gradient correctness"),
    (2, "unbiased oracle"),
    (3, "orthogonality certificates"),
    (4, "nuisance-sensitive slope"),
    (5, "nuisance-insensitive slope"),
    (6, "OSGD interpolation"),
    (7, "variance floor scales with eta"),
    (8, "averaged SGD rate"),
    (9, "interleaving benefit"),
    (10, "batch nuisance regimes"),
    (11, "tabular pipeline recovers theta"),
    (12, "bitwise determinism"),
];

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Scratch space for criteria that write files; a fresh temp dir when `None`.
    pub work_dir: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 20_240_601, jobs: None, work_dir: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<34} {} ({:.1}s) {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs the selected criteria (all when `only` is empty), in id order.
pub fn run_criteria(opts: &VerifyOptions, only: &[u8], mut on_done: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for (id, name) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let res = match id {
            1 => c01_gradients(opts),
            2 => c02_unbiased(opts),
            3 => c03_orthogonality(opts),
            4 => c04_sensitive(opts),
            5 => c05_insensitive(opts),
            6 => c06_interpolation(opts),
            7 => c07_floor(opts),
            8 => c08_averaged(opts),
            9 => c09_interleaving(opts),
            10 => c10_batch(opts),
            11 => c11_tabular(opts),
            _ => c12_determinism(opts),
        };
        let (pass, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
        let r = CriterionResult { id, name, pass, detail, seconds: t.elapsed().as_secs_f64() };
        on_done(&r);
        out.push(r);
    }
    out
}

fn plm_dgp() -> Dgp<f64> {
    Dgp::plm(PlmConfig::standard(0.5)).expect("standard config is valid")
}

fn rand_fn(rng: &mut Rng, dim: usize) -> ScalarFn<f64> {
    let a = rng.uniform_range(-1.0, 1.0);
    let b: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let (c, e) = (rng.uniform_range(0.0, 6.0), rng.uniform_range(-1.0, 1.0));
    ScalarFn::analytic(move |v: &[f64]| a * (v.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + c).sin() + e)
}

fn rand_prob(rng: &mut Rng, dim: usize) -> ScalarFn<f64> {
    let f = rand_fn(rng, dim);
    ScalarFn::analytic(move |v: &[f64]| 0.5 + 0.4 * f.eval(v).tanh())
}

fn rand_nuisance(rng: &mut Rng, kind: ProblemKind, d: usize, k: usize) -> NuisanceFn<f64> {
    match kind {
        ProblemKind::PlmOrth => NuisanceFn::PlmOrth { g_y: rand_fn(rng, k), g_x: (0..d).map(|_| rand_fn(rng, k)).collect() },
        ProblemKind::PlmNonorth => NuisanceFn::PlmNonorth { g: rand_fn(rng, k) },
        ProblemKind::CateUnres => NuisanceFn::CateUnres { out: rand_fn(rng, k), prop: rand_prob(rng, k) },
        ProblemKind::CateRes => NuisanceFn::CateRes { g0: rand_prob(rng, k), g1: rand_prob(rng, k), prop: rand_prob(rng, k) },
        ProblemKind::Crr => NuisanceFn::Crr { g0: rand_prob(rng, k), g1: rand_prob(rng, k), prop: rand_prob(rng, k) },
    }
}

fn c01_gradients(opts: &VerifyOptions) -> Outcome {
    let mut worst: f64 = 0.0;
    for kind in ProblemKind::ALL {
        let dgp = if kind.is_plm() { plm_dgp() } else { Dgp::causal(CausalConfig::standard(true)).map_err(err)? };
        let d = dgp.x_dim();
        let p = GradOracle::new(kind, d);
        let mut rng = Rng::new(opts.seed).child_named("c01").child_named(kind.as_str());
        for _ in 0..100 {
            let theta: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let g = rand_nuisance(&mut rng, kind, d, dgp.nuisance_input_dim());
            let z = dgp.draw(&mut rng);
            let s = p.score(&theta, &g, &z).map_err(err)?;
            let fd = finite_diff_grad(|t: &[f64]| p.loss(t, &g, &z).unwrap_or(f64::NAN), &theta, 1e-5).map_err(err)?;
            let diff: Vec<f64> = s.iter().zip(&fd).map(|(a, b)| a - b).collect();
            worst = worst.max(norm_inf(&diff) / (1.0 + norm_inf(&s)));
        }
    }
    Ok((worst <= 1e-4, format!("max relative deviation {worst:.2e} over 5 x 100 points (tol 1e-4)")))
}

fn c02_unbiased(opts: &VerifyOptions) -> Outcome {
    let dgp = plm_dgp();
    let mut msg = Vec::new();
    let mut pass = true;
    for kind in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
        let r = diagnostics(&GradOracle::new(kind, 2), &dgp, MonteCarlo::new(100_000, opts.seed)).map_err(err)?;
        let z = r.max_abs_z.ok_or("no analytic population gradient")?;
        pass &= z <= 4.0;
        msg.push(format!("{kind}: max |z| = {z:.2}"));
    }
    Ok((pass, msg.join(", ")))
}

fn c03_orthogonality(opts: &VerifyOptions) -> Outcome {
    let dgp = plm_dgp();
    let mc = MonteCarlo::new(100_000, opts.seed);
    let dir_mc = MonteCarlo::new(20_000, opts.seed ^ 1);
    let root = Rng::new(opts.seed).child_named("c03");
    let po = GradOracle::new(ProblemKind::PlmOrth, 2);
    let dirs = random_directions(&po, &dgp, 10, &root.child(0), dir_mc).map_err(err)?;
    let g0 = true_nuisance(&po, &dgp).map_err(err)?;
    let orth = orthogonality_check(&po, &target(&po, &dgp).map_err(err)?, &g0, &dirs, &dgp, mc).map_err(err)?;

    let pn = GradOracle::new(ProblemKind::PlmNonorth, 2);
    let g0n = true_nuisance(&pn, &dgp).map_err(err)?;
    let star = target(&pn, &dgp).map_err(err)?;
    let no = NoOracle::new(pn.clone(), plm_true_operator(&dgp).map_err(err)?).map_err(err)?;
    let dirs_n = random_directions(&pn, &dgp, 10, &root.child(1), dir_mc).map_err(err)?;
    let no_rep = orthogonality_check(&no, &star, &g0n, &dirs_n, &dgp, mc).map_err(err)?;

    let one = NuisanceFn::PlmNonorth { g: ScalarFn::Const(1.0) };
    let non = orthogonality_check(&pn, &star, &g0n, &[one], &dgp, mc).map_err(err)?;
    let worst = |r: &nuisance_grad::ortho::OrthReport| {
        r.directions.iter().flat_map(|d| d.mean.iter().zip(&d.se).map(|(m, s)| m.abs() / s)).fold(0.0, f64::max)
    };
    Ok((
        orth.pass() && no_rep.pass() && !non.pass(),
        format!(
            "plm_orth worst |mean|/se {:.2}; NO oracle worst {:.2}; plm_nonorth h=1 magnitude {:.3} ({})",
            worst(&orth),
            worst(&no_rep),
            non.directions[0].magnitude,
            if non.pass() { "passed, expected failure" } else { "fails as expected" }
        ),
    ))
}

/// Shared settings of the steady-state bias studies.
const BIAS_ETA: f64 = 1e-3;
const BIAS_ITERS: usize = 100_000;
const BIAS_REPS: usize = 20;
const RADII: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

fn base_config(name: &str, problem: ProblemKind, seed: u64) -> RunConfig {
    RunConfig {
        experiment: name.to_string(),
        problem,
        data: DataSpec::Plm { lambda: 0.5, theta0: None },
        nuisance: NuisanceSpec::True,
        operator: OperatorSpec::None,
        optimizer: OptimizerKind::Sgd,
        opt: OptSpec { eta: BIAS_ETA, n_iters: BIAS_ITERS, record_every: 1000 },
        schedule: None,
        replications: BIAS_REPS,
        seed,
        theta_init: None,
        eval_mc: 0,
        plots: false,
        output_dir: None,
    }
}

/// Config of criterion 4 at radius `r`; criterion 12 reruns it.
pub fn sensitive_config(seed: u64, r: f64) -> RunConfig {
    RunConfig { nuisance: NuisanceSpec::Perturbed { r }, ..base_config("c04_sensitive", ProblemKind::PlmNonorth, seed) }
}

fn replicate(cfg: &RunConfig, opts: &VerifyOptions) -> Result<Vec<Replication>, String> {
    let prep = pipeline::prepare(cfg).map_err(err)?;
    pipeline::run_prepared(cfg, &prep, opts.jobs).map_err(err)
}

/// Replication-averaged tail-mean iterate.
fn mean_tail(reps: &[Replication]) -> Vec<f64> {
    let d = reps[0].trajectory.tail.mean_theta.len();
    (0..d).map(|j| reps.iter().map(|r| r.trajectory.tail.mean_theta[j]).sum::<f64>() / reps.len() as f64).collect()
}

/// Steady-state bias at each radius: distance between the replication-averaged
/// tail means at `r` and at `r = 0`, all runs sharing the same target streams.
fn bias_curve(opts: &VerifyOptions, make: impl Fn(f64) -> RunConfig) -> Result<Vec<(f64, f64)>, String> {
    let base = mean_tail(&replicate(&make(0.0), opts)?);
    RADII
        .iter()
        .map(|&r| Ok((r, dist2(&mean_tail(&replicate(&make(r), opts)?), &base))))
        .collect()
}

fn slope_outcome(curve: &[(f64, f64)], lo: f64, hi: f64) -> Outcome {
    let f = slope_fit(curve).map_err(err)?;
    let pts: Vec<String> = curve.iter().map(|(r, e)| format!("{r}:{e:.2e}")).collect();
    Ok((
        (lo..=hi).contains(&f.slope),
        format!("slope {:.2} (r2 {:.3}, want [{lo}, {hi}]); bias by r {}", f.slope, f.r2, pts.join(" ")),
    ))
}

fn c04_sensitive(opts: &VerifyOptions) -> Outcome {
    let curve = bias_curve(opts, |r| sensitive_config(opts.seed, r))?;
    slope_outcome(&curve, 0.7, 1.3)
}

fn c05_insensitive(opts: &VerifyOptions) -> Outcome {
    let curve = bias_curve(opts, |r| RunConfig {
        nuisance: NuisanceSpec::Perturbed { r },
        ..base_config("c05_insensitive", ProblemKind::PlmOrth, opts.seed)
    })?;
    slope_outcome(&curve, 1.6, 2.4)
}

fn osgd_config(seed: u64, r: f64, rho: f64) -> RunConfig {
    RunConfig {
        nuisance: NuisanceSpec::Perturbed { r },
        operator: if rho == 0.0 { OperatorSpec::True } else { OperatorSpec::Perturbed { rho } },
        optimizer: OptimizerKind::Osgd,
        ..base_config("c06_osgd", ProblemKind::PlmNonorth, seed)
    }
}

/// Least squares for `b² ≈ c₁r⁴ + c₂r²ρ²` with `c₁, c₂ ≥ 0`.
pub fn nnls_two(rows: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let (a, b): (Vec<[f64; 2]>, Vec<f64>) = rows.iter().map(|&(r, rho, y)| ([r.powi(4), r * r * rho * rho], y)).unzip();
    let dot = |i: usize, j: usize| a.iter().map(|x| x[i] * x[j]).sum::<f64>();
    let aty = |i: usize| a.iter().zip(&b).map(|(x, y)| x[i] * y).sum::<f64>();
    let resid = |c: [f64; 2]| {
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (c[0] * x[0] + c[1] * x[1] - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    };
    let (g00, g01, g11) = (dot(0, 0), dot(0, 1), dot(1, 1));
    let det = g00 * g11 - g01 * g01;
    let mut cands = Vec::new();
    if det.abs() > 1e-300 {
        let c = [(g11 * aty(0) - g01 * aty(1)) / det, (g00 * aty(1) - g01 * aty(0)) / det];
        if c[0] >= 0.0 && c[1] >= 0.0 {
            cands.push(c);
        }
    }
    cands.push([(aty(0) / g00).max(0.0), 0.0]);
    cands.push([0.0, (aty(1) / g11).max(0.0)]);
    let best = cands.into_iter().min_by(|x, y| resid(*x).total_cmp(&resid(*y))).expect("candidates");
    (best[0], best[1], resid(best))
}

fn c06_interpolation(opts: &VerifyOptions) -> Outcome {
    let curve = bias_curve(opts, |r| osgd_config(opts.seed, r, 0.0))?;
    let f = slope_fit(&curve).map_err(err)?;
    let slope_ok = (1.6..=2.4).contains(&f.slope);

    let base = mean_tail(&replicate(&osgd_config(opts.seed, 0.0, 0.0), opts)?);
    let mut rows = Vec::new();
    for &r in &[0.4, 0.2, 0.1] {
        for &rho in &[0.0, 0.1, 0.2, 0.4] {
            let b = dist2(&mean_tail(&replicate(&osgd_config(opts.seed, r, rho), opts)?), &base);
            rows.push((r, rho, b * b));
        }
    }
    let (c1, c2, resid) = nnls_two(&rows);
    let fit_ok = resid <= 0.2 && c2 > 0.0;
    Ok((
        slope_ok && fit_ok,
        format!(
            "true-operator slope {:.2} (r2 {:.3}, want [1.6, 2.4]); squared-bias fit c1 {c1:.3e} c2 {c2:.3e} relative residual {:.1}% (want <= 20%)",
            f.slope,
            f.r2,
            100.0 * resid
        ),
    ))
}

fn floor_config(seed: u64, eta: f64) -> RunConfig {
    RunConfig {
        opt: OptSpec { eta, n_iters: 40_000, record_every: 1000 },
        ..base_config("c07_floor", ProblemKind::PlmNonorth, seed)
    }
}

fn c07_floor(opts: &VerifyOptions) -> Outcome {
    let mse = |eta: f64| -> Result<f64, String> {
        let reps = replicate(&floor_config(opts.seed, eta), opts)?;
        let v: Vec<f64> = reps.iter().filter_map(|r| r.trajectory.tail.mean_sq_err).collect();
        Ok(median(&v))
    };
    let (a, b) = (mse(0.01)?, mse(0.005)?);
    let ratio = a / b;
    Ok((
        (0.8..=3.2).contains(&ratio),
        format!("median steady-state MSE {a:.3e} at eta 0.01, {b:.3e} at 0.005; ratio {ratio:.2} (want 2 +/- 60%)"),
    ))
}

/// Target of the default simulated PLM.
const PLM_STAR: [f64; 2] = [-0.5, 1.0];

const AVG_NS: [usize; 5] = [1_000, 3_000, 10_000, 30_000, 100_000];
// Small steps leave a 1/n^2 start-up transient in the average that steepens the slope.
const AVG_ETA: f64 = 0.05;

fn averaged_fit(opts: &VerifyOptions, eta: f64) -> Result<(SlopeFit, Vec<f64>), String> {
    let cfg = RunConfig {
        optimizer: OptimizerKind::Avg,
        opt: OptSpec { eta, n_iters: 100_000, record_every: 1000 },
        ..base_config("c08_averaged", ProblemKind::PlmNonorth, opts.seed)
    };
    let reps = replicate(&cfg, opts)?;
    let mse: Vec<f64> = AVG_NS
        .iter()
        .map(|&n| {
            let sq: Vec<f64> = reps
                .iter()
                .map(|r| {
                    let rec = r.trajectory.records.iter().find(|x| x.iter == n).expect("recorded");
                    dist2(&rec.theta, &PLM_STAR).powi(2)
                })
                .collect();
            sq.iter().sum::<f64>() / sq.len() as f64
        })
        .collect();
    let pairs: Vec<(f64, f64)> = AVG_NS.iter().zip(&mse).map(|(&n, &m)| (n as f64, m)).collect();
    Ok((slope_fit(&pairs).map_err(err)?, mse))
}

fn c08_averaged(opts: &VerifyOptions) -> Outcome {
    let (f, m) = averaged_fit(opts, AVG_ETA)?;
    let mse: Vec<String> = m.iter().map(|x| format!("{x:.2e}")).collect();
    Ok((
        (-1.3..=-0.7).contains(&f.slope),
        format!(
            "eta {AVG_ETA}: slope {:.2} (r2 {:.3}, want [-1.3, -0.7]); MSE at n=1e3..1e5 {}",
            f.slope,
            f.r2,
            mse.join(" ")
        ),
    ))
}

const INTERLEAVE: InterleaveSchedule = InterleaveSchedule { target_block: 2000, nuisance_block: 2000, rounds: 10 };

fn interleave_config(seed: u64, step: Option<f64>, osgd: bool) -> RunConfig {
    let spec = StreamSpec { step, ..StreamSpec::default() };
    RunConfig {
        nuisance: NuisanceSpec::Stream(spec.clone()),
        operator: if osgd { OperatorSpec::Stream(StreamSpec::default()) } else { OperatorSpec::None },
        optimizer: OptimizerKind::Interleaved,
        schedule: Some(INTERLEAVE),
        opt: OptSpec { eta: 0.01, n_iters: 0, record_every: 1000 },
        ..base_config("c09_interleaved", ProblemKind::PlmNonorth, seed)
    }
}

fn final_median(reps: &[Replication]) -> f64 {
    median(&reps.iter().filter_map(|r| r.trajectory.final_rel_err()).collect::<Vec<_>>())
}

fn c09_interleaving(opts: &VerifyOptions) -> Outcome {
    let frozen = final_median(&replicate(&interleave_config(opts.seed, Some(0.0), false), opts)?);
    let sgd = final_median(&replicate(&interleave_config(opts.seed, None, false), opts)?);
    let osgd = final_median(&replicate(&interleave_config(opts.seed, None, true), opts)?);
    Ok((
        sgd < frozen && osgd <= sgd,
        format!("median final relative error: frozen {frozen:.4}, interleaved SGD {sgd:.4}, interleaved OSGD {osgd:.4}"),
    ))
}

const BATCH_ETA: f64 = 1e-3;
const BATCH_ITERS: usize = 50_000;

fn batch_config(seed: u64, problem: ProblemKind, nuisance: NuisanceSpec, operator: OperatorSpec) -> RunConfig {
    RunConfig {
        nuisance,
        optimizer: if operator == OperatorSpec::None { OptimizerKind::Sgd } else { OptimizerKind::Osgd },
        operator,
        opt: OptSpec { eta: BATCH_ETA, n_iters: BATCH_ITERS, record_every: 1000 },
        ..base_config("c10_batch", problem, seed)
    }
}

/// Median over replications of the relative error of the tail-mean iterate.
fn tail_median(reps: &[Replication]) -> f64 {
    let star = norm2(&PLM_STAR);
    median(&reps.iter().map(|r| dist2(&r.trajectory.tail.mean_theta, &PLM_STAR) / star).collect::<Vec<_>>())
}

fn c10_batch(opts: &VerifyOptions) -> Outcome {
    let batch = |m| NuisanceSpec::Batch { m, fit: None };
    let mut parts = Vec::new();
    let mut pass = true;
    for problem in [ProblemKind::PlmNonorth, ProblemKind::PlmOrth] {
        let small = tail_median(&replicate(&batch_config(opts.seed, problem, batch(500), OperatorSpec::None), opts)?);
        let large = tail_median(&replicate(&batch_config(opts.seed, problem, batch(10_000), OperatorSpec::None), opts)?);
        pass &= large < small;
        parts.push(format!("{problem} SGD m=500 {small:.4} vs m=1e4 {large:.4}"));
    }
    let est = OperatorSpec::Estimated { k: 10_000, n_components: 50, reg_scale: 0.01 };
    let osgd_est = tail_median(&replicate(&batch_config(opts.seed, ProblemKind::PlmNonorth, batch(10_000), est), opts)?);
    let osgd_true =
        tail_median(&replicate(&batch_config(opts.seed, ProblemKind::PlmNonorth, NuisanceSpec::True, OperatorSpec::True), opts)?);
    let ratio = osgd_est / osgd_true;
    pass &= ratio <= 1.5;
    parts.push(format!("OSGD estimated {osgd_est:.4} vs true {osgd_true:.4} (ratio {ratio:.2}, want <= 1.5)"));
    Ok((pass, parts.join("; ")))
}

fn scratch(opts: &VerifyOptions, name: &str) -> Result<PathBuf, String> {
    let base = opts.work_dir.clone().unwrap_or_else(|| std::env::temp_dir().join(format!("nuisance-grad-verify-{}", std::process::id())));
    let dir = base.join(name);
    std::fs::create_dir_all(&dir).map_err(err)?;
    Ok(dir)
}

fn c11_tabular(opts: &VerifyOptions) -> Outcome {
    let dir = scratch(opts, "c11")?;
    let path = dir.join("schema.csv");
    write_schema_csv(&path, 10_000, &mut Rng::new(opts.seed).child_named("c11")).map_err(err)?;
    let cfg = RunConfig {
        data: DataSpec::Tabular(TabularSource::with_schema(&path)),
        nuisance: NuisanceSpec::Batch { m: 2000, fit: None },
        opt: OptSpec { eta: 0.01, n_iters: 20_000, record_every: 1000 },
        replications: 5,
        ..base_config("c11_tabular", ProblemKind::PlmOrth, opts.seed)
    };
    let reps = replicate(&cfg, opts)?;
    let est: Vec<f64> = reps.iter().map(|r| r.trajectory.tail.mean_theta[0]).collect();
    let m = median(&est);
    Ok(((m + 1.0).abs() <= 0.1, format!("median tail-mean estimate {m:.4} over {} runs (target -1, tol 0.1)", est.len())))
}

fn c12_determinism(opts: &VerifyOptions) -> Outcome {
    let cfg = sensitive_config(opts.seed, RADII[0]);
    let mut bytes = Vec::new();
    for (i, jobs) in [(0, Some(1)), (1, opts.jobs)] {
        let dir = scratch(opts, &format!("c12_{i}"))?;
        let ro = RunOptions { out_dir: Some(dir.clone()), jobs, formats: Some(Formats { csv: true, json: true, svg: false }) };
        pipeline::run(&cfg, &ro).map_err(|e: RunError| e.to_string())?;
        bytes.push(std::fs::read(dir.join(TRAJECTORIES_FILE)).map_err(err)?);
    }
    Ok((
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!("trajectories.csv {} bytes, single-threaded and pooled runs {}", bytes[0].len(), if bytes[0] == bytes[1] { "identical" } else { "differ" }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_recovers_exact_mixture() {
        let mut rows = Vec::new();
        for r in [0.1f64, 0.2, 0.4] {
            for rho in [0.0, 0.1, 0.3] {
                rows.push((r, rho, 2.0 * r.powi(4) + 5.0 * r * r * rho * rho));
            }
        }
        let (c1, c2, res) = nnls_two(&rows);
        assert!((c1 - 2.0).abs() < 1e-9 && (c2 - 5.0).abs() < 1e-9 && res < 1e-9);
    }

    #[test]
    fn nnls_clamps_negative_coefficient() {
        let rows: Vec<_> = [0.1f64, 0.2, 0.4].iter().flat_map(|&r| [0.1, 0.3].map(|rho| (r, rho, 3.0 * r * r * rho * rho - 0.5 * r.powi(4)))).collect();
        let (c1, c2, _) = nnls_two(&rows);
        assert!(c1 >= 0.0 && c2 > 0.0);
    }

    #[test]
    fn gradient_criterion_passes_quickly() {
        let r = run_criteria(&VerifyOptions::default(), &[1], |_| {});
        assert!(r[0].pass, "{}", r[0].detail);
    }
}
