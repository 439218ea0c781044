use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::Serialize;
use son_consensus::exec::map_indexed;
use son_consensus::{run, HullOperator, ProblemInstance, Rotation};

use crate::config::{ExperimentConfig, ProblemKind, SweepParameter, SweepSection};
use crate::experiment::{build_graph, build_problem, fmt_float, model_cloud, sub_seed, termination_name};

pub const SWEEP_SCHEMA: &str = "son-sweep/v1";

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub param: f64,
    pub error: f64,
    pub iterations: usize,
    pub termination: &'static str,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamStats {
    pub param: f64,
    pub error_q1: f64,
    pub error_median: f64,
    pub error_q3: f64,
    pub wall_ms_median: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub name: String,
    pub parameter: String,
    pub trials: usize,
    pub seed: u64,
    pub stats: Vec<ParamStats>,
}

pub struct SweepReport {
    pub rows: Vec<TrialRow>,
    pub summary: SweepSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn reference(problem: &ProblemInstance, hull: &HullOperator) -> anyhow::Result<Rotation> {
    Ok(match &problem.truth {
        Some(t) => t.clone(),
        None => problem.centralized(hull)?.rotation,
    })
}

fn one_trial(
    cfg: &ExperimentConfig,
    sweep: &SweepSection,
    hull: &HullOperator,
    cloud: Option<&son_consensus::PointCloud>,
    trial: usize,
) -> anyhow::Result<Vec<TrialRow>> {
    let seed = sub_seed(cfg.seed, trial as u64 + 1);
    let base = match sweep.parameter {
        SweepParameter::Sigma => None,
        _ => Some(build_problem(cfg, seed, cfg.problem.sigma, cloud)?),
    };
    let mut rows = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let mut pc = cfg.protocol_config();
        let problem = match sweep.parameter {
            SweepParameter::ActiveAgents => base.as_ref().unwrap().subset(value as usize)?,
            SweepParameter::Alpha => {
                pc.alpha = value;
                base.clone().unwrap()
            }
            SweepParameter::Sigma => build_problem(cfg, seed, value, cloud)?,
        };
        let target = reference(&problem, hull)?;
        let start = Instant::now();
        let (estimate, iterations, termination) = if problem.agents() == 1 {
            (problem.centralized(hull)?.rotation, 0, "direct")
        } else {
            let graph = build_graph(cfg, problem.agents())?;
            let out = run(hull, &problem, &graph, &pc)?;
            (out.consensus, out.trace.len(), termination_name(out.termination))
        };
        rows.push(TrialRow {
            trial,
            param: value,
            error: estimate.distance(&target),
            iterations,
            termination,
            wall_time: start.elapsed(),
        });
    }
    Ok(rows)
}

pub fn aggregate(rows: &[TrialRow], values: &[f64]) -> Vec<ParamStats> {
    values
        .iter()
        .map(|&v| {
            let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.param == v).collect();
            let errors: Vec<f64> = sel.iter().map(|r| r.error).collect();
            let walls: Vec<f64> = sel.iter().map(|r| r.wall_time.as_secs_f64() * 1e3).collect();
            ParamStats {
                param: v,
                error_q1: quantile(&errors, 0.25),
                error_median: quantile(&errors, 0.5),
                error_q3: quantile(&errors, 0.75),
                wall_ms_median: quantile(&walls, 0.5),
                converged: sel.iter().filter(|r| matches!(r.termination, "converged" | "direct")).count(),
            }
        })
        .collect()
}

pub fn write_rows(path: &Path, parameter: SweepParameter, rows: &[TrialRow], wall_time: bool) -> anyhow::Result<()> {
    let mut out = format!("# schema: {SWEEP_SCHEMA}\n# parameter: {parameter}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["trial", "param", "error", "iterations", "termination", "wall_ms"])?;
        for r in rows {
            let wall = if wall_time { fmt_float(r.wall_time.as_secs_f64() * 1e3) } else { String::new() };
            w.write_record([
                r.trial.to_string(),
                fmt_float(r.param),
                fmt_float(r.error),
                r.iterations.to_string(),
                r.termination.to_string(),
                wall,
            ])?;
        }
        w.flush()?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Runs every trial at every parameter value. Trials are independent and run
/// on the thread pool; the aggregate file is written once, in trial order.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<SweepReport> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| anyhow!("{}: no [sweep] section", cfg.name()))?;
    let hull = cfg.hull()?;
    let cloud = match cfg.problem.kind {
        ProblemKind::Pose => Some(model_cloud(cfg, cfg.seed)?),
        _ => None,
    };
    let exec = cfg.protocol_config().exec;
    let per_trial = map_indexed(exec, sweep.trials, |t| one_trial(cfg, sweep, &hull, cloud.as_ref(), t));
    let mut rows = Vec::with_capacity(sweep.trials * sweep.values.len());
    for r in per_trial {
        rows.extend(r?);
    }
    let summary = SweepSummary {
        name: cfg.name().to_string(),
        parameter: sweep.parameter.to_string(),
        trials: sweep.trials,
        seed: cfg.seed,
        stats: aggregate(&rows, &sweep.values),
    };

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{}.sweep.csv", cfg.name()));
    let summary_path = out_dir.join(format!("{}.sweep.json", cfg.name()));
    write_rows(&csv_path, sweep.parameter, &rows, cfg.output.record_wall_time)?;
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    Ok(SweepReport { rows, summary, csv_path, summary_path })
}
