use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use son_consensus::problems::{averaging_instance, load_point_cloud, pose_instance, synthetic_cloud};
use son_consensus::{
    run, CommGraph, PointCloud, ProblemInstance, ProtocolConfig, RunOutcome, Termination, TraceRecord,
};

use crate::config::{ExperimentConfig, ProblemKind, TopologyKind};

pub const TRACE_SCHEMA: &str = "son-trace/v1";
pub const OUT_DIR_ENV: &str = "SONC_OUT_DIR";
pub const FALLBACK_OUT_DIR: &str = "sonc-out";

const CLOUD_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_iters: Option<usize>,
    pub alpha: Option<f64>,
    pub record_wall_time: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.max_iters {
            cfg.protocol.max_iters = m;
        }
        if let Some(a) = self.alpha {
            cfg.protocol.alpha = a;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = Some(dir.clone());
        }
        cfg.output.record_wall_time |= self.record_wall_time;
    }
}

/// Output directory: explicit setting, then the environment default, then a
/// fixed fallback.
pub fn output_dir(cfg: &ExperimentConfig, env_default: Option<PathBuf>) -> PathBuf {
    cfg.output.dir.clone().or(env_default).unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

/// Independent deterministic seed for one consumer of randomness.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Evenly spaced subset of `m` points, order preserved.
pub fn downsample(cloud: &PointCloud, m: usize) -> son_consensus::Result<PointCloud> {
    let total = cloud.len();
    if m >= total {
        return Ok(cloud.clone());
    }
    let cols: Vec<usize> = (0..m).map(|k| k * total / m).collect();
    PointCloud::new(cloud.points().select_columns(&cols))
}

pub fn model_cloud(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<PointCloud> {
    let p = &cfg.problem;
    match &p.model {
        Some(rel) => {
            let path = cfg.resolve(rel);
            let cloud =
                load_point_cloud(&path, p.n, true).with_context(|| format!("loading model {}", path.display()))?;
            Ok(match p.points {
                Some(m) => downsample(&cloud, m)?,
                None => cloud,
            })
        }
        None => Ok(synthetic_cloud(p.n, p.points.unwrap_or(0), sub_seed(seed, CLOUD_STREAM))?),
    }
}

/// Builds the problem instance for `seed`; pose problems reuse `cloud` when
/// given so that repeated trials share one model.
pub fn build_problem(
    cfg: &ExperimentConfig,
    seed: u64,
    sigma: f64,
    cloud: Option<&PointCloud>,
) -> anyhow::Result<ProblemInstance> {
    let p = &cfg.problem;
    let data_seed = sub_seed(seed, DATA_STREAM);
    Ok(match p.kind {
        ProblemKind::Averaging => averaging_instance(p.n, p.agents, data_seed)?,
        ProblemKind::Pose => {
            let owned;
            let cloud = match cloud {
                Some(c) => c,
                None => {
                    owned = model_cloud(cfg, seed)?;
                    &owned
                }
            };
            pose_instance(cloud, p.agents, sigma, data_seed)?
        }
        ProblemKind::Custom => {
            let rows = p.data.as_ref().context("custom problem without data")?;
            let data = rows.iter().map(|r| DMatrix::from_row_slice(p.n, p.n, r)).collect();
            ProblemInstance::from_data(p.n, data)?
        }
    })
}

pub fn build_graph(cfg: &ExperimentConfig, agents: usize) -> anyhow::Result<CommGraph> {
    let t = &cfg.topology;
    if agents == 1 {
        return Ok(CommGraph::from_edges(1, [])?);
    }
    Ok(match t.kind {
        TopologyKind::Ring if 2 * t.hops < agents => CommGraph::ring(agents, t.hops)?,
        TopologyKind::Ring | TopologyKind::Complete => CommGraph::complete(agents)?,
        TopologyKind::EdgeList => {
            let rel = t.path.as_ref().context("edge_list topology without path")?;
            if agents != cfg.problem.agents {
                bail!("an edge_list topology cannot be restricted to {agents} agents");
            }
            CommGraph::load_edge_list(&cfg.resolve(rel), Some(agents))?
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WallTimeStats {
    pub total_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl WallTimeStats {
    pub fn from_durations(it: impl IntoIterator<Item = Duration>) -> Self {
        let ms: Vec<f64> = it.into_iter().map(|d| d.as_secs_f64() * 1e3).collect();
        let total: f64 = ms.iter().sum();
        Self {
            total_ms: total,
            mean_ms: if ms.is_empty() { 0.0 } else { total / ms.len() as f64 },
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min).min(total),
            max_ms: ms.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub protocol: String,
    pub seed: u64,
    pub n: usize,
    pub agents: usize,
    pub alpha: f64,
    pub termination: &'static str,
    pub iterations: usize,
    pub final_disagreement: f64,
    pub final_optimality_gap: f64,
    pub final_membership_residual: f64,
    pub relative_objective_gap: f64,
    pub error_vs_truth: Option<f64>,
    pub degenerate_rounds: usize,
    /// Whether agent phases ran on the thread pool or one agent at a time.
    pub phase_execution: &'static str,
    pub wall_time: WallTimeStats,
    pub consensus: Vec<Vec<f64>>,
    pub centralized: Vec<Vec<f64>>,
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIterations => "max_iterations",
        Termination::Diverged => "diverged",
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn relative_objective_gap(problem: &ProblemInstance, outcome: &RunOutcome) -> f64 {
    let best = problem.objective(outcome.optimum.rotation.matrix());
    let got = problem.objective(outcome.consensus.matrix());
    (best - got) / best.abs().max(f64::MIN_POSITIVE)
}

pub fn summarize(
    cfg: &ExperimentConfig,
    pc: &ProtocolConfig,
    problem: &ProblemInstance,
    outcome: &RunOutcome,
) -> RunSummary {
    let last = outcome.trace.last();
    RunSummary {
        name: cfg.name().to_string(),
        protocol: pc.kind.name().to_string(),
        seed: cfg.seed,
        n: problem.n,
        agents: problem.agents(),
        alpha: pc.alpha,
        termination: termination_name(outcome.termination),
        iterations: outcome.trace.len(),
        final_disagreement: last.map_or(f64::NAN, |r| r.disagreement),
        final_optimality_gap: last.map_or(f64::NAN, |r| r.optimality_gap),
        final_membership_residual: last.map_or(f64::NAN, |r| r.membership_residual),
        relative_objective_gap: relative_objective_gap(problem, outcome),
        error_vs_truth: problem.truth.as_ref().map(|t| outcome.consensus.distance(t)),
        degenerate_rounds: outcome.degenerate_rounds,
        phase_execution: if pc.exec.is_parallel() { "parallel" } else { "sequential" },
        wall_time: WallTimeStats::from_durations(outcome.trace.iter().map(|r| r.wall_time)),
        consensus: rows(outcome.consensus.matrix()),
        centralized: rows(outcome.optimum.rotation.matrix()),
    }
}

/// Shortest representation that round-trips, so reruns are byte-identical.
pub fn fmt_float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace(path: &Path, trace: &[TraceRecord], wall_time: bool) -> anyhow::Result<()> {
    let mut out = format!("# schema: {TRACE_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["t", "disagreement", "optimality_gap", "membership_residual", "wall_ms"])?;
        for r in trace {
            let wall = if wall_time { fmt_float(r.wall_time.as_secs_f64() * 1e3) } else { String::new() };
            w.write_record([
                r.iteration.to_string(),
                fmt_float(r.disagreement),
                fmt_float(r.optimality_gap),
                fmt_float(r.membership_residual),
                wall,
            ])?;
        }
        w.flush()?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub struct RunReport {
    pub summary: RunSummary,
    pub outcome: RunOutcome,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Executes one configured run. Nothing is written unless the run completes.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<RunReport> {
    let pc = cfg.protocol_config();
    let problem = build_problem(cfg, cfg.seed, cfg.problem.sigma, None)?;
    let graph = build_graph(cfg, problem.agents())?;
    let hull = cfg.hull()?;
    log::info!("{}: {} on {} agents, alpha {}", cfg.name(), pc.kind, problem.agents(), pc.alpha);
    let outcome = run(&hull, &problem, &graph, &pc).with_context(|| format!("running {}", cfg.name()))?;
    let summary = summarize(cfg, &pc, &problem, &outcome);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let trace_path = out_dir.join(format!("{}.trace.csv", cfg.name()));
    let summary_path = out_dir.join(format!("{}.summary.json", cfg.name()));
    write_trace(&trace_path, &outcome.trace, cfg.output.record_wall_time)?;
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    Ok(RunReport { summary, outcome, trace_path, summary_path })
}
