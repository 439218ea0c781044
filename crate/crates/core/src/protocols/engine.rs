use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::{
    dist_admm_round, dual_decomp_round, dual_keys, semi_admm_round, AdmmWorkspace, AgentState, FusionState,
    ProtocolConfig, ProtocolKind, RoundStats,
};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::hull::{frobenius_dot, HullOperator, Rotation};
use crate::problems::ProblemInstance;
use crate::spectral::{linear_max_over_hull, LinearMax};
use crate::topology::CommGraph;

/// Rounds over which a 10× disagreement growth aborts the run.
pub const DIVERGENCE_WINDOW: usize = 50;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `Σ_{(i,j) ∈ E, i≠j} ‖R^i − R^j‖_F`
    pub disagreement: f64,
    /// `Σ_i ⟨D^i, R̄⟩ − Σ_i ⟨D^i, R^i_t⟩` against the centralized optimum `R̄`.
    pub optimality_gap: f64,
    /// `max_i max(‖(R^i)ᵀR^i − I‖_F, |det R^i − 1|)`
    pub membership_residual: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Disagreement grew by [`DIVERGENCE_FACTOR`] over [`DIVERGENCE_WINDOW`] rounds.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub consensus: Rotation,
    pub termination: Termination,
    /// Centralized solution used for the optimality gap.
    pub optimum: LinearMax,
    /// Rounds in which some agent hit a repeated top eigenvalue.
    pub degenerate_rounds: usize,
}

/// Protocol state plus the fixed problem it is solving.
#[derive(Debug)]
pub struct Simulation<'a> {
    hull: &'a HullOperator,
    problem: &'a ProblemInstance,
    graph: &'a CommGraph,
    config: ProtocolConfig,
    agents: Vec<AgentState>,
    fusion: Option<FusionState>,
    workspace: AdmmWorkspace,
    optimum: LinearMax,
    optimal_value: f64,
    t: usize,
    degenerate_rounds: usize,
}

impl<'a> Simulation<'a> {
    /// Initializes every primal variable at `I/d` and every dual at zero.
    pub fn new(
        hull: &'a HullOperator,
        problem: &'a ProblemInstance,
        graph: &'a CommGraph,
        config: ProtocolConfig,
    ) -> Result<Self> {
        config.validate()?;
        if hull.n() != problem.n {
            return Err(Error::DimensionMismatch {
                expected: format!("hull for n={}", problem.n),
                got: format!("n={}", hull.n()),
            });
        }
        if graph.agent_count() != problem.agents() {
            return Err(Error::DimensionMismatch {
                expected: format!("graph with {} agents", problem.agents()),
                got: format!("{} agents", graph.agent_count()),
            });
        }
        if config.kind.is_fully_distributed() && !graph.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        let agents = problem
            .data
            .iter()
            .enumerate()
            .map(|(i, d)| AgentState::new(hull, d.clone(), dual_keys(config.kind, graph, i, config.count_self_loop)?))
            .collect::<Result<Vec<_>>>()?;
        let fusion = (config.kind == ProtocolKind::SemiAdmm).then(|| FusionState::new(hull.d(), problem.agents()));
        let optimum = problem.centralized(hull)?;
        let optimal_value = problem.objective(optimum.rotation.matrix());
        Ok(Self {
            hull,
            problem,
            graph,
            config,
            agents,
            fusion,
            workspace: AdmmWorkspace::default(),
            optimum,
            optimal_value,
            t: 0,
            degenerate_rounds: 0,
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn fusion(&self) -> Option<&FusionState> {
        self.fusion.as_ref()
    }

    pub fn workspace(&self) -> &AdmmWorkspace {
        &self.workspace
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn optimum(&self) -> &LinearMax {
        &self.optimum
    }

    /// Advances one round and returns its trace record.
    pub fn step(&mut self) -> Result<TraceRecord> {
        self.t += 1;
        let t = self.t;
        let started = Instant::now();
        let stats = if self.agents.len() == 1 {
            // nothing to agree on: solve the local problem directly
            let lm = linear_max_over_hull(self.hull, &self.agents[0].data)?;
            self.agents[0].x = lm.z.clone();
            self.agents[0].z = lm.z;
            RoundStats { degenerate: usize::from(!lm.separated) }
        } else {
            match self.config.kind {
                ProtocolKind::DualDecomp => {
                    dual_decomp_round(self.hull, &mut self.agents, self.graph, &self.config, t)?
                }
                ProtocolKind::DistAdmm => {
                    dist_admm_round(&mut self.agents, self.graph, &self.config, &mut self.workspace, t)?
                }
                ProtocolKind::SemiAdmm => {
                    let fusion = self.fusion.as_mut().expect("fusion state exists for semi_admm");
                    semi_admm_round(&mut self.agents, fusion, &self.config, &mut self.workspace, t)?
                }
            }
        };
        let wall_time = started.elapsed();
        if stats.degenerate > 0 {
            self.degenerate_rounds += 1;
        }
        self.record(wall_time)
    }

    /// Current hull elements `R^i = A(Z^i)`.
    pub fn rotations(&self) -> Result<Vec<Rotation>> {
        self.agents.iter().map(|a| self.hull.apply(&a.z)).collect()
    }

    /// Average of the agents' hull elements, snapped to SO(n) by a linear maximization.
    pub fn consensus(&self) -> Result<Rotation> {
        let rotations = self.rotations()?;
        let n = self.problem.n;
        let mean = rotations.iter().fold(DMatrix::zeros(n, n), |acc, r| acc + r.matrix()) / rotations.len() as f64;
        Ok(linear_max_over_hull(self.hull, &mean)?.rotation)
    }

    fn record(&self, wall_time: Duration) -> Result<TraceRecord> {
        let rotations = self.rotations()?;
        let disagreement: f64 =
            self.graph.edges().filter(|(i, j)| i != j).map(|(i, j)| rotations[i].distance(&rotations[j])).sum();
        let achieved: f64 = self.agents.iter().zip(&rotations).map(|(a, r)| frobenius_dot(&a.data, r.matrix())).sum();
        let membership = map_indexed(self.config.exec, rotations.len(), |i| rotations[i].membership_residual());
        let membership_residual = membership.into_iter().fold(0.0, f64::max);
        let record = TraceRecord {
            iteration: self.t,
            disagreement,
            optimality_gap: self.optimal_value - achieved,
            membership_residual,
            wall_time,
        };
        if !(record.disagreement.is_finite()
            && record.optimality_gap.is_finite()
            && record.membership_residual.is_finite())
        {
            return Err(Error::Divergent { iteration: self.t });
        }
        Ok(record)
    }
}

/// Runs rounds until the disagreement drops below the stop tolerance, the
/// iteration budget is spent, or the run is judged divergent.
pub fn run(
    hull: &HullOperator,
    problem: &ProblemInstance,
    graph: &CommGraph,
    config: &ProtocolConfig,
) -> Result<RunOutcome> {
    let mut sim = Simulation::new(hull, problem, graph, config.clone())?;
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(config.max_iters);
    let mut termination = Termination::MaxIterations;
    while sim.iteration() < config.max_iters {
        let rec = sim.step()?;
        let converged = rec.disagreement < config.stop_tolerance;
        let t = rec.iteration;
        trace.push(rec);
        if converged {
            termination = Termination::Converged;
            break;
        }
        if t > DIVERGENCE_WINDOW {
            let before = trace[t - 1 - DIVERGENCE_WINDOW].disagreement.max(config.stop_tolerance);
            if trace[t - 1].disagreement > DIVERGENCE_FACTOR * before && before > 0.0 {
                log::warn!(
                    "aborting at round {t}: disagreement grew from {before:e} to {:e} over {DIVERGENCE_WINDOW} rounds",
                    trace[t - 1].disagreement
                );
                termination = Termination::Diverged;
                break;
            }
        }
    }
    Ok(RunOutcome {
        trace,
        consensus: sim.consensus()?,
        termination,
        optimum: sim.optimum.clone(),
        degenerate_rounds: sim.degenerate_rounds,
    })
}
