use nalgebra::DMatrix;

use super::{ensure_finite, AdmmWorkspace, AgentState, ProtocolConfig, RoundStats};
use crate::error::Result;
use crate::exec::try_map_indexed;
use crate::hull::SpectraPoint;
use crate::spectral::{project_spectrahedron, sym_eig};
use crate::topology::CommGraph;

/// One round of fully distributed ADMM over the constraints `Z^i = X^j`, one
/// per dual variable `Y^{ij}` held by agent `i`.
///
/// Phase 1: `Z^i ← Π(M^i / (|N_i| α))`, `M^i = A†(D^i) − Σ_j [Y^{ij} − α X^j]`.
/// Phase 2: `X^j ← Π(N^j / (|N_j| α))`, `N^j = Σ_{i:(i,j)} [Y^{ij} + α Z^i]`.
/// Phase 3: `Y^{ij} ← Y^{ij} − α (X^j − Z^i)`.
///
/// `Π` is the projection onto the free spectrahedron. The aggregates are
/// written to `workspace`.
pub fn dist_admm_round(
    agents: &mut [AgentState],
    graph: &CommGraph,
    config: &ProtocolConfig,
    workspace: &mut AdmmWorkspace,
    t: usize,
) -> Result<RoundStats> {
    let alpha = config.alpha;
    let snapshot: &[AgentState] = agents;
    let phase1 = try_map_indexed(config.exec, snapshot.len(), |i| {
        let a = &snapshot[i];
        let mut m = a.adag_data.clone();
        for (j, y) in &a.duals {
            m -= y - snapshot[*j].x.matrix() * alpha;
        }
        ensure_finite(&m, t)?;
        if a.duals.is_empty() {
            // no constraints touch Z^i: maximize the linear term alone
            let top = sym_eig(&m)?.vectors.column(0).into_owned();
            return Ok((m, SpectraPoint::rank_one(&top)?));
        }
        let z = project_spectrahedron(&(&m / (a.duals.len() as f64 * alpha)))?;
        Ok((m, z))
    })?;
    workspace.m.clear();
    for (a, (m, z)) in agents.iter_mut().zip(phase1) {
        a.z = z;
        workspace.m.push(m);
    }

    let snapshot: &[AgentState] = agents;
    let d = snapshot.first().map_or(0, |a| a.adag_data.nrows());
    let phase2 = try_map_indexed(config.exec, snapshot.len(), |j| {
        let mut agg = DMatrix::zeros(d, d);
        let mut count = 0usize;
        for &i in graph.out_neighbors(j)? {
            if let Some(y) = snapshot[i].dual(j) {
                agg += y + snapshot[i].z.matrix() * alpha;
                count += 1;
            }
        }
        ensure_finite(&agg, t)?;
        let x =
            if count == 0 { snapshot[j].x.clone() } else { project_spectrahedron(&(&agg / (count as f64 * alpha)))? };
        Ok((agg, x))
    })?;
    workspace.n.clear();
    for (a, (agg, x)) in agents.iter_mut().zip(phase2) {
        a.x = x;
        workspace.n.push(agg);
    }

    let snapshot: &[AgentState] = agents;
    let phase3 = try_map_indexed(config.exec, snapshot.len(), |i| {
        let zi = snapshot[i].z.matrix();
        let updated: Vec<(usize, DMatrix<f64>)> =
            snapshot[i].duals.iter().map(|(j, y)| (*j, y - (snapshot[*j].x.matrix() - zi) * alpha)).collect();
        updated.iter().try_for_each(|(_, y)| ensure_finite(y, t))?;
        Ok(updated)
    })?;
    for (a, y) in agents.iter_mut().zip(phase3) {
        a.duals = y;
    }
    Ok(RoundStats::default())
}
