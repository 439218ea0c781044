use nalgebra::DMatrix;

use super::{ensure_finite, AgentState, ProtocolConfig, RoundStats};
use crate::error::Result;
use crate::exec::try_map_indexed;
use crate::hull::HullOperator;
use crate::spectral::linear_max_from_dual;
use crate::topology::CommGraph;

/// One dual-ascent round.
///
/// Phase 1: `Z^i ← argmax ⟨A†(D^i) − Σ_j Y^{ij}, Z⟩` over the spectrahedron,
/// a rank-one top-eigenvector solution.
/// Phase 2: `Y^{ij} ← Y^{ij} − α_t (Z^j − Z^i)` with the fresh `Z`.
pub fn dual_decomp_round(
    h: &HullOperator,
    agents: &mut [AgentState],
    _graph: &CommGraph,
    config: &ProtocolConfig,
    t: usize,
) -> Result<RoundStats> {
    let snapshot: &[AgentState] = agents;
    let primal = try_map_indexed(config.exec, snapshot.len(), |i| {
        let a = &snapshot[i];
        let cost = &a.adag_data - a.dual_sum();
        ensure_finite(&cost, t)?;
        linear_max_from_dual(h, &cost)
    })?;
    let degenerate = primal.iter().filter(|lm| !lm.separated).count();
    if degenerate > 0 {
        log::warn!("round {t}: {degenerate} agent(s) with a repeated top eigenvalue; using deterministic tie-break");
    }
    for (a, lm) in agents.iter_mut().zip(primal) {
        a.z = lm.z;
    }

    let step = config.step(t);
    let snapshot: &[AgentState] = agents;
    let duals = try_map_indexed(config.exec, snapshot.len(), |i| {
        let zi = snapshot[i].z.matrix();
        let updated: Vec<(usize, DMatrix<f64>)> =
            snapshot[i].duals.iter().map(|(j, y)| (*j, y - (snapshot[*j].z.matrix() - zi) * step)).collect();
        updated.iter().try_for_each(|(_, y)| ensure_finite(y, t))?;
        Ok(updated)
    })?;
    for (a, y) in agents.iter_mut().zip(duals) {
        a.duals = y;
    }
    Ok(RoundStats { degenerate })
}
