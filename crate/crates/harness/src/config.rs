use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use son_consensus::protocols::{AlphaSchedule, FusionScaling};
use son_consensus::{ExecMode, ProtocolConfig, ProtocolKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Syntax { path: PathBuf, source: toml::de::Error },
    #[error("{path}: field `{field}`: {msg}")]
    Field { path: PathBuf, field: &'static str, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Averaging,
    Pose,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Largest dimension the hull operator may be built for.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub agents: usize,
    /// Synthetic cloud size for pose problems without a model file.
    pub points: Option<usize>,
    /// CSV or OBJ model, relative to the config file.
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub sigma: f64,
    /// Row-major `n × n` data matrices for custom problems.
    pub data: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Complete,
    EdgeList,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKind,
    #[serde(default = "default_hops")]
    pub hops: usize,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    DualDecomp,
    DistAdmm,
    SemiAdmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Diminishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Derived,
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: Protocol,
    pub alpha: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tolerance")]
    pub stop_tolerance: f64,
    #[serde(default = "default_scaling")]
    pub fusion_scaling: Scaling,
    #[serde(default = "default_true")]
    pub count_self_loop: bool,
    #[serde(default = "default_exec")]
    pub exec: Exec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Per-iteration wall times make traces machine dependent, so they are
    /// only written on request.
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ActiveAgents,
    Alpha,
    Sigma,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ActiveAgents => "active_agents",
            Self::Alpha => "alpha",
            Self::Sigma => "sigma",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSection,
    pub topology: TopologySection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub output: OutputSection,
    pub sweep: Option<SweepSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_n() -> usize {
    3
}
fn default_n_max() -> usize {
    son_consensus::hull::DEFAULT_MAX_N
}
fn default_hops() -> usize {
    1
}
fn default_schedule() -> Schedule {
    Schedule::Constant
}
fn default_max_iters() -> usize {
    500
}
fn default_stop_tolerance() -> f64 {
    1e-6
}
fn default_scaling() -> Scaling {
    Scaling::Derived
}
fn default_true() -> bool {
    true
}
fn default_exec() -> Exec {
    Exec::Parallel
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with(path, |_| {})
    }

    /// Loads `path`, lets `adjust` apply overrides, then validates the result.
    pub fn load_with(path: &Path, adjust: impl FnOnce(&mut Self)) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse_unchecked(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        adjust(&mut cfg);
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::parse_unchecked(text, origin)?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    fn parse_unchecked(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Syntax { path: origin.to_path_buf(), source })
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.base_dir.join(relative)
        }
    }

    pub fn validate(&self, origin: &Path) -> Result<(), ConfigError> {
        let fail =
            |field: &'static str, msg: String| Err(ConfigError::Field { path: origin.to_path_buf(), field, msg });
        let p = &self.problem;
        if !(2..=p.n_max).contains(&p.n) {
            return fail("problem.n", format!("{} outside 2..={}", p.n, p.n_max));
        }
        if p.agents == 0 {
            return fail("problem.agents", "must be at least 1".into());
        }
        if !(p.sigma.is_finite() && p.sigma >= 0.0) {
            return fail("problem.sigma", format!("{} is not a nonnegative number", p.sigma));
        }
        match p.kind {
            ProblemKind::Pose => {
                if p.model.is_none() && p.points.is_none() {
                    return fail("problem.points", "pose problems need `points` or `model`".into());
                }
                if p.points == Some(0) {
                    return fail("problem.points", "must be positive".into());
                }
            }
            ProblemKind::Custom => match &p.data {
                None => return fail("problem.data", "custom problems need `data`".into()),
                Some(rows) => {
                    if rows.len() != p.agents {
                        return fail("problem.data", format!("{} matrices for {} agents", rows.len(), p.agents));
                    }
                    if let Some(bad) = rows.iter().position(|r| r.len() != p.n * p.n) {
                        return fail("problem.data", format!("matrix {bad} does not have {} entries", p.n * p.n));
                    }
                }
            },
            ProblemKind::Averaging => {}
        }
        let t = &self.topology;
        match t.kind {
            TopologyKind::Ring if t.hops == 0 || (p.agents > 1 && 2 * t.hops >= p.agents) => {
                return fail("topology.hops", format!("{} hops do not fit a ring of {}", t.hops, p.agents));
            }
            TopologyKind::EdgeList if t.path.is_none() => {
                return fail("topology.path", "edge_list topology needs `path`".into());
            }
            _ => {}
        }
        let pr = &self.protocol;
        if !(pr.alpha.is_finite() && pr.alpha > 0.0) {
            return fail("protocol.alpha", format!("{} is not a positive number", pr.alpha));
        }
        if pr.max_iters == 0 {
            return fail("protocol.max_iters", "must be at least 1".into());
        }
        if !(pr.stop_tolerance.is_finite() && pr.stop_tolerance >= 0.0) {
            return fail("protocol.stop_tolerance", format!("{} is not a nonnegative number", pr.stop_tolerance));
        }
        if pr.schedule == Schedule::Diminishing && pr.kind != Protocol::DualDecomp {
            return fail("protocol.schedule", "the diminishing schedule applies to dual_decomp only".into());
        }
        if let Some(s) = &self.sweep {
            if s.trials == 0 {
                return fail("sweep.trials", "must be at least 1".into());
            }
            if s.values.is_empty() {
                return fail("sweep.values", "empty".into());
            }
            for &v in &s.values {
                let ok = match s.parameter {
                    SweepParameter::ActiveAgents => v >= 1.0 && v.fract() == 0.0 && v as usize <= p.agents,
                    SweepParameter::Alpha => v.is_finite() && v > 0.0,
                    SweepParameter::Sigma => v.is_finite() && v >= 0.0,
                };
                if !ok {
                    return fail("sweep.values", format!("{v} is not a valid {}", s.parameter));
                }
            }
        }
        Ok(())
    }

    pub fn hull(&self) -> son_consensus::Result<son_consensus::HullOperator> {
        son_consensus::HullOperator::with_max(self.problem.n, self.problem.n_max)
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let pr = &self.protocol;
        let kind = match pr.kind {
            Protocol::DualDecomp => ProtocolKind::DualDecomp,
            Protocol::DistAdmm => ProtocolKind::DistAdmm,
            Protocol::SemiAdmm => ProtocolKind::SemiAdmm,
        };
        let mut c = ProtocolConfig::new(kind, pr.alpha);
        c.schedule = match pr.schedule {
            Schedule::Constant => AlphaSchedule::Constant,
            Schedule::Diminishing => AlphaSchedule::Diminishing,
        };
        c.max_iters = pr.max_iters;
        c.stop_tolerance = pr.stop_tolerance;
        c.fusion_scaling = match pr.fusion_scaling {
            Scaling::Derived => FusionScaling::Derived,
            Scaling::Unnormalized => FusionScaling::Unnormalized,
        };
        c.count_self_loop = pr.count_self_loop;
        c.exec = match pr.exec {
            Exec::Parallel => ExecMode::Parallel,
            Exec::Sequential => ExecMode::Sequential,
        };
        c
    }
}
