//! Synchronous round-based consensus protocols.
//!
//! Every round is a sequence of barrier-separated phases. Within a phase each
//! agent reads only the state committed by the previous phase and writes only
//! its own variables, so agents may be updated in any order or in parallel.

mod dist_admm;
mod dual;
mod engine;
mod semi_admm;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::hull::{HullOperator, SpectraPoint};
use crate::topology::CommGraph;

pub use dist_admm::dist_admm_round;
pub use dual::dual_decomp_round;
pub use engine::{run, RunOutcome, Simulation, Termination, TraceRecord};
pub use semi_admm::semi_admm_round;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    DualDecomp,
    DistAdmm,
    SemiAdmm,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::DualDecomp => "dual_decomp",
            ProtocolKind::DistAdmm => "dist_admm",
            ProtocolKind::SemiAdmm => "semi_admm",
        }
    }

    /// Whether the protocol only uses neighbor-to-neighbor messages.
    pub fn is_fully_distributed(self) -> bool {
        !matches!(self, ProtocolKind::SemiAdmm)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual_decomp" => Ok(ProtocolKind::DualDecomp),
            "dist_admm" => Ok(ProtocolKind::DistAdmm),
            "semi_admm" => Ok(ProtocolKind::SemiAdmm),
            other => Err(Error::InvalidConfig(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Dual step size over time. Only dual decomposition uses a schedule; the
/// ADMM penalty stays constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaSchedule {
    #[default]
    Constant,
    /// `α_t = α / √t`
    Diminishing,
}

impl AlphaSchedule {
    pub fn step(self, alpha: f64, t: usize) -> f64 {
        match self {
            AlphaSchedule::Constant => alpha,
            AlphaSchedule::Diminishing => alpha / (t.max(1) as f64).sqrt(),
        }
    }
}

impl FromStr for AlphaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(AlphaSchedule::Constant),
            "diminishing" => Ok(AlphaSchedule::Diminishing),
            other => Err(Error::InvalidConfig(format!("unknown alpha schedule {other:?}"))),
        }
    }
}

/// How the fusion variable of the semi-distributed protocol is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionScaling {
    /// Project `(1/N) Σ_i [Y^i/α + Z^i]`, the exact minimizer of the augmented Lagrangian.
    #[default]
    Derived,
    /// Project `Σ_i [Y^i/α + Z^i]` without the `1/N` factor.
    Unnormalized,
}

impl FromStr for FusionScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(FusionScaling::Derived),
            "unnormalized" => Ok(FusionScaling::Unnormalized),
            other => Err(Error::InvalidConfig(format!("unknown fusion scaling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub alpha: f64,
    pub schedule: AlphaSchedule,
    pub max_iters: usize,
    /// Stop once the disagreement drops below this.
    pub stop_tolerance: f64,
    pub fusion_scaling: FusionScaling,
    /// Keep the `Z^i = X^i` constraints of the self-loops in distributed ADMM.
    /// Dual decomposition is unaffected: its self-loop constraint is vacuous.
    pub count_self_loop: bool,
    pub exec: ExecMode,
}

impl ProtocolConfig {
    pub fn new(kind: ProtocolKind, alpha: f64) -> Self {
        Self {
            kind,
            alpha,
            schedule: AlphaSchedule::Constant,
            max_iters: 500,
            stop_tolerance: 1e-6,
            fusion_scaling: FusionScaling::Derived,
            count_self_loop: true,
            exec: ExecMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive and finite, got {}", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.stop_tolerance.is_nan() || self.stop_tolerance < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "stop_tolerance must be nonnegative, got {}",
                self.stop_tolerance
            )));
        }
        if self.kind != ProtocolKind::DualDecomp && self.schedule != AlphaSchedule::Constant {
            return Err(Error::InvalidConfig("a diminishing schedule applies to dual decomposition only".into()));
        }
        Ok(())
    }

    pub(crate) fn step(&self, t: usize) -> f64 {
        self.schedule.step(self.alpha, t)
    }
}

/// Per-agent protocol variables.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub z: SpectraPoint,
    /// Auxiliary copy, used by distributed ADMM only.
    pub x: SpectraPoint,
    /// `Y^{ij}` keyed by `j`, sorted by `j`.
    pub duals: Vec<(usize, DMatrix<f64>)>,
    pub data: DMatrix<f64>,
    /// Cached `A†(D^i)`.
    pub adag_data: DMatrix<f64>,
}

impl AgentState {
    pub fn new(h: &HullOperator, data: DMatrix<f64>, dual_keys: impl IntoIterator<Item = usize>) -> Result<Self> {
        let adag_data = h.adjoint(&data)?;
        let d = h.d();
        Ok(Self {
            z: SpectraPoint::barycenter(d),
            x: SpectraPoint::barycenter(d),
            duals: dual_keys.into_iter().map(|j| (j, DMatrix::zeros(d, d))).collect(),
            data,
            adag_data,
        })
    }

    pub fn dual(&self, j: usize) -> Option<&DMatrix<f64>> {
        self.duals.binary_search_by_key(&j, |(k, _)| *k).ok().map(|idx| &self.duals[idx].1)
    }

    fn dual_sum(&self) -> DMatrix<f64> {
        let d = self.adag_data.nrows();
        self.duals.iter().fold(DMatrix::zeros(d, d), |acc, (_, y)| acc + y)
    }
}

/// Fusion-node variables of the semi-distributed protocol.
#[derive(Debug, Clone)]
pub struct FusionState {
    pub z0: SpectraPoint,
    /// `Y^i` indexed by agent.
    pub duals: Vec<DMatrix<f64>>,
}

impl FusionState {
    pub fn new(d: usize, agents: usize) -> Self {
        Self { z0: SpectraPoint::barycenter(d), duals: vec![DMatrix::zeros(d, d); agents] }
    }
}

/// Aggregates formed during the last ADMM round, kept for inspection.
#[derive(Debug, Clone, Default)]
pub struct AdmmWorkspace {
    /// `M^i_t`
    pub m: Vec<DMatrix<f64>>,
    /// `N^j_t`
    pub n: Vec<DMatrix<f64>>,
    /// `Q^i_t` for agents `1..=N`, fusion aggregate `Q^0_t` last.
    pub q: Vec<DMatrix<f64>>,
}

/// Dual variables to allocate for agent `i` under `kind`.
pub fn dual_keys(kind: ProtocolKind, graph: &CommGraph, i: usize, count_self_loop: bool) -> Result<Vec<usize>> {
    let keep_self = kind == ProtocolKind::DistAdmm && count_self_loop;
    Ok(match kind {
        ProtocolKind::SemiAdmm => Vec::new(),
        _ => graph.in_neighbors(i)?.iter().copied().filter(|&j| j != i || keep_self).collect(),
    })
}

/// Outcome of one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundStats {
    /// Agents whose top eigenvalue was repeated this round.
    pub degenerate: usize,
}

fn ensure_finite(m: &DMatrix<f64>, t: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergent { iteration: t })
    }
}
