use nalgebra::DMatrix;

use super::{ensure_finite, AdmmWorkspace, AgentState, FusionScaling, FusionState, ProtocolConfig, RoundStats};
use crate::error::Result;
use crate::exec::try_map_indexed;
use crate::spectral::project_spectrahedron;

/// One round of the fusion-center ADMM.
///
/// Phase 1 (agents): `Z^i ← Π((A†(D^i) − Y^i)/α + Z⁰)`.
/// Phase 2 (fusion): `Z⁰ ← Π(s · Σ_i [Y^i/α + Z^i])` with `s = 1/N` for
/// [`FusionScaling::Derived`] and `s = 1` for [`FusionScaling::Unnormalized`].
/// Phase 3 (agents): `Y^i ← Y^i − α (Z⁰ − Z^i)`.
pub fn semi_admm_round(
    agents: &mut [AgentState],
    fusion: &mut FusionState,
    config: &ProtocolConfig,
    workspace: &mut AdmmWorkspace,
    t: usize,
) -> Result<RoundStats> {
    let alpha = config.alpha;
    let z0 = fusion.z0.matrix();
    let duals = &fusion.duals;
    let snapshot: &[AgentState] = agents;
    let phase1 = try_map_indexed(config.exec, snapshot.len(), |i| {
        let q = (&snapshot[i].adag_data - &duals[i]) / alpha + z0;
        ensure_finite(&q, t)?;
        let z = project_spectrahedron(&q)?;
        Ok((q, z))
    })?;
    workspace.q.clear();
    for (a, (q, z)) in agents.iter_mut().zip(phase1) {
        a.z = z;
        workspace.q.push(q);
    }

    let d = z0.nrows();
    // fixed summation order keeps the fusion step bitwise reproducible
    let mut q0 = DMatrix::zeros(d, d);
    for (a, y) in agents.iter().zip(&fusion.duals) {
        q0 += y / alpha + a.z.matrix();
    }
    if config.fusion_scaling == FusionScaling::Derived {
        q0 /= agents.len() as f64;
    }
    ensure_finite(&q0, t)?;
    fusion.z0 = project_spectrahedron(&q0)?;
    workspace.q.push(q0);

    let z0 = fusion.z0.matrix();
    for (a, y) in agents.iter().zip(fusion.duals.iter_mut()) {
        *y -= (z0 - a.z.matrix()) * alpha;
        ensure_finite(y, t)?;
    }
    Ok(RoundStats::default())
}
