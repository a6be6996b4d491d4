//! Aggregation across replications and the on-disk artifact formats.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nuisance_grad::numkit::stats::{median, quantile};
use nuisance_grad::optimize::{Record, TailStats, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::metrics::SlopeFit;
use crate::plot::{render_svg, PlotError, PlotSpec, Series};

/// Bumped whenever a field of [`Summary`] changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

/// One finished replication.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub run_id: usize,
    pub seed: u64,
    pub trajectory: Trajectory<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Band {
    pub fn of(xs: &[f64]) -> Option<Self> {
        let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        Some(Self { median: median(&v), q25: quantile(&v, 0.25), q75: quantile(&v, 0.75) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub rel_err: Option<Band>,
    pub excess_risk: Option<Band>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub start: usize,
    pub count: usize,
    pub rel_err: Option<Band>,
    pub sq_err: Option<Band>,
    /// Average over replications of each run's tail-mean iterate.
    pub mean_theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub tool_version: String,
    pub experiment: String,
    pub problem: String,
    pub optimizer: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub replications_requested: usize,
    pub replications_completed: usize,
    pub n_iters: usize,
    pub eta: f64,
    pub eval_mc: usize,
    pub theta_star: Option<Vec<f64>>,
    pub curve: Vec<CurvePoint>,
    pub terminal: CurvePoint,
    pub tail: TailSummary,
    #[serde(default)]
    pub slopes: BTreeMap<String, SlopeFit>,
    pub notes: Vec<String>,
}

fn col<F: Fn(&Record<f64>) -> Option<f64>>(reps: &[Replication], i: usize, f: F) -> Option<Band> {
    let v: Vec<f64> = reps.iter().filter_map(|r| r.trajectory.records.get(i).and_then(&f)).collect();
    Band::of(&v)
}

/// Median/quantile aggregation of finished replications, in replication order.
pub fn summarize(cfg: &RunConfig, theta_star: Option<&[f64]>, reps: &[Replication]) -> Summary {
    let n_rec = reps.iter().map(|r| r.trajectory.records.len()).min().unwrap_or(0);
    let curve: Vec<CurvePoint> = (0..n_rec)
        .map(|i| CurvePoint {
            iter: reps[0].trajectory.records[i].iter,
            rel_err: col(reps, i, |r| r.rel_err),
            excess_risk: col(reps, i, |r| r.excess_risk),
        })
        .collect();
    let terminal = curve.last().cloned().unwrap_or(CurvePoint { iter: 0, rel_err: None, excess_risk: None });
    let tails: Vec<&TailStats> = reps.iter().map(|r| &r.trajectory.tail).collect();
    let d = tails.first().map_or(0, |t| t.mean_theta.len());
    let mean_theta = (0..d)
        .map(|j| tails.iter().map(|t| t.mean_theta[j]).sum::<f64>() / tails.len() as f64)
        .collect();
    let tail = TailSummary {
        start: tails.first().map_or(0, |t| t.start),
        count: tails.first().map_or(0, |t| t.count),
        rel_err: Band::of(&tails.iter().filter_map(|t| t.mean_rel_err).collect::<Vec<_>>()),
        sq_err: Band::of(&tails.iter().filter_map(|t| t.mean_sq_err).collect::<Vec<_>>()),
        mean_theta,
    };
    Summary {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment.clone(),
        problem: cfg.problem.to_string(),
        optimizer: cfg.optimizer.to_string(),
        master_seed: cfg.seed,
        seeds: reps.iter().map(|r| r.seed).collect(),
        replications_requested: cfg.replications,
        replications_completed: reps.len(),
        n_iters: cfg.total_iters(),
        eta: cfg.opt.eta,
        eval_mc: cfg.eval_mc,
        theta_star: theta_star.map(<[f64]>::to_vec),
        curve,
        terminal,
        tail,
        slopes: BTreeMap::new(),
        notes: vec![
            "bands are the median and 25/75 quantiles over completed replications".into(),
            "steady-state error is the mean over the final 10% of iterations of each run".into(),
            "excess risk uses one shared evaluation sample for every iterate and replication".into(),
        ],
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| format!("bad number {s:?}: {e}"))
    }
}

/// Columns `iter, theta_0.., rel_err, excess_risk, run_id, seed`.
pub fn write_trajectories<W: Write>(out: W, reps: &[Replication]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = reps.first().and_then(|r| r.trajectory.records.first()).map_or(0, |r| r.theta.len());
    let mut head = vec!["iter".to_string()];
    head.extend((0..d).map(|j| format!("theta_{j}")));
    head.extend(["rel_err", "excess_risk", "run_id", "seed"].map(String::from));
    w.write_record(&head)?;
    for r in reps {
        for rec in &r.trajectory.records {
            let mut row = vec![rec.iter.to_string()];
            row.extend(rec.theta.iter().map(f64::to_string));
            row.extend([opt(rec.rel_err), opt(rec.excess_risk), r.run_id.to_string(), r.seed.to_string()]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-replication tail statistics, which the recorded points alone cannot reproduce.
pub fn write_tails<W: Write>(out: W, reps: &[Replication]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = reps.first().map_or(0, |r| r.trajectory.tail.mean_theta.len());
    let mut head = vec!["run_id".to_string(), "seed".into(), "start".into(), "count".into()];
    head.extend((0..d).map(|j| format!("mean_theta_{j}")));
    head.extend(["mean_rel_err", "mean_sq_err"].map(String::from));
    w.write_record(&head)?;
    for r in reps {
        let t = &r.trajectory.tail;
        let mut row = vec![r.run_id.to_string(), r.seed.to_string(), t.start.to_string(), t.count.to_string()];
        row.extend(t.mean_theta.iter().map(f64::to_string));
        row.extend([opt(t.mean_rel_err), opt(t.mean_sq_err)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn rows<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut r = csv::Reader::from_reader(input);
    let head: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        out.push(rec.map_err(|e| e.to_string())?.iter().map(String::from).collect());
    }
    Ok((head, out))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| format!("bad value {s:?}: {e}"))
}

/// Inverse of [`write_trajectories`] plus [`write_tails`].
pub fn read_replications<R1: Read, R2: Read>(traj: R1, tails: R2) -> Result<Vec<Replication>, String> {
    let (head, body) = rows(traj)?;
    let d = head.len().checked_sub(5).ok_or("trajectory header too short")?;
    let mut reps: Vec<Replication> = Vec::new();
    for row in body {
        if row.len() != head.len() {
            return Err(format!("row has {} fields, header has {}", row.len(), head.len()));
        }
        let run_id: usize = num(&row[d + 3])?;
        let seed: u64 = num(&row[d + 4])?;
        let rec = Record {
            iter: num(&row[0])?,
            theta: row[1..=d].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
            rel_err: parse_opt(&row[d + 1])?,
            excess_risk: parse_opt(&row[d + 2])?,
        };
        match reps.last_mut() {
            Some(r) if r.run_id == run_id => r.trajectory.records.push(rec),
            _ => reps.push(Replication {
                run_id,
                seed,
                trajectory: Trajectory { records: vec![rec], terminal: Vec::new(), tail: empty_tail() },
            }),
        }
    }
    let (th, tbody) = rows(tails)?;
    let td = th.len().checked_sub(6).ok_or("tails header too short")?;
    for (r, row) in reps.iter_mut().zip(&tbody) {
        if num::<usize>(&row[0])? != r.run_id {
            return Err(format!("tails row for run {} out of order", row[0]));
        }
        r.trajectory.tail = TailStats {
            start: num(&row[2])?,
            count: num(&row[3])?,
            mean_theta: row[4..4 + td].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
            mean_rel_err: parse_opt(&row[4 + td])?,
            mean_sq_err: parse_opt(&row[5 + td])?,
        };
        r.trajectory.terminal = r.trajectory.records.last().map(|x| x.theta.clone()).unwrap_or_default();
    }
    if tbody.len() != reps.len() {
        return Err(format!("{} tail rows for {} replications", tbody.len(), reps.len()));
    }
    Ok(reps)
}

fn empty_tail() -> TailStats {
    TailStats { start: 0, count: 0, mean_theta: Vec::new(), mean_rel_err: None, mean_sq_err: None }
}

fn band_series(label: &str, curve: &[CurvePoint], pick: impl Fn(&CurvePoint) -> Option<Band>) -> Series {
    let pts: Vec<_> = curve.iter().filter_map(|c| pick(c).map(|b| (c.iter as f64, b))).collect();
    Series {
        label: label.to_string(),
        points: pts.iter().map(|(x, b)| (*x, b.median)).collect(),
        band: Some(pts.iter().map(|(x, b)| (*x, b.q25, b.q75)).collect()),
    }
}

/// `(file name, svg)` for every curve the summary carries.
pub fn summary_plots(s: &Summary) -> Result<Vec<(String, String)>, PlotError> {
    let mut out = Vec::new();
    let title = format!("{} ({}, {})", s.experiment, s.problem, s.optimizer);
    // Skip the initial record so log axes stay finite.
    let body: Vec<CurvePoint> = s.curve.iter().filter(|c| c.iter > 0).cloned().collect();
    if body.iter().any(|c| c.rel_err.is_some()) {
        let spec = PlotSpec { title: title.clone(), x_label: "iteration".into(), y_label: "relative error".into(), log_x: true, log_y: true };
        out.push(("rel_err.svg".into(), render_svg(&spec, &[band_series("median", &body, |c| c.rel_err)])?));
    }
    if body.iter().any(|c| c.excess_risk.is_some()) {
        let series = [band_series("median", &body, |c| c.excess_risk)];
        let spec = PlotSpec { title, x_label: "iteration".into(), y_label: "excess risk".into(), log_x: true, log_y: true };
        let svg = match render_svg(&spec, &series) {
            Err(PlotError::EmptySeries(_)) => render_svg(&PlotSpec { log_y: false, ..spec }, &series)?,
            other => other?,
        };
        out.push(("excess_risk.svg".into(), svg));
    }
    Ok(out)
}
