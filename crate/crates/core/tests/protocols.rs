use nalgebra::DMatrix;
use son_consensus::hull::MEMBERSHIP_TOL;
use son_consensus::problems::{averaging_instance, pose_instance, random_rotation, synthetic_cloud};
use son_consensus::protocols::{
    dist_admm_round, dual_decomp_round, dual_keys, semi_admm_round, AdmmWorkspace, AgentState, FusionScaling,
    FusionState, Simulation,
};
use son_consensus::spectral::{linear_max_over_hull, sym_eig};
use son_consensus::{
    run, CommGraph, Error, ExecMode, HullOperator, ProblemInstance, ProtocolConfig, ProtocolKind, SpectraPoint,
    Termination,
};

fn config(kind: ProtocolKind, alpha: f64, max_iters: usize) -> ProtocolConfig {
    let mut c = ProtocolConfig::new(kind, alpha);
    c.max_iters = max_iters;
    c
}

fn relative_objective_gap(problem: &ProblemInstance, h: &HullOperator, r: &DMatrix<f64>) -> f64 {
    let best = problem.objective(problem.centralized(h).unwrap().rotation.matrix());
    (best - problem.objective(r)) / best.abs()
}

#[test]
fn dual_identical_data_is_fixed_point() {
    let h = HullOperator::new(3).unwrap();
    let r0 = random_rotation(3, 1).into_matrix();
    let problem = ProblemInstance::from_data(3, vec![r0.clone(), r0]).unwrap();
    let g = CommGraph::complete(2).unwrap();
    let mut sim = Simulation::new(&h, &problem, &g, config(ProtocolKind::DualDecomp, 5.0, 10)).unwrap();
    let rec = sim.step().unwrap();
    assert_eq!(rec.disagreement, 0.0);
    for a in sim.agents() {
        assert!(a.duals.iter().all(|(_, y)| y.iter().all(|v| *v == 0.0)));
    }
    let z = sim.agents()[0].z.clone();
    sim.step().unwrap();
    assert_eq!(sim.agents()[0].z, z);
}

#[test]
fn dual_iterates_stay_in_son() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 8, 3).unwrap();
    let g = CommGraph::ring(8, 1).unwrap();
    let mut sim = Simulation::new(&h, &problem, &g, config(ProtocolKind::DualDecomp, 5.0, 200)).unwrap();
    for _ in 0..200 {
        let rec = sim.step().unwrap();
        assert!(rec.membership_residual <= MEMBERSHIP_TOL);
        for a in sim.agents() {
            let eig = sym_eig(a.z.matrix()).unwrap();
            assert!(eig.values[1].abs() < 1e-12, "Z is not rank one");
        }
    }
}

#[test]
fn dual_small_step_reaches_centralized_average() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 8, 0).unwrap();
    let g = CommGraph::ring(8, 1).unwrap();
    let out = run(&h, &problem, &g, &config(ProtocolKind::DualDecomp, 0.1, 500)).unwrap();
    let first = out.trace[0].disagreement;
    assert!(out.trace.last().unwrap().disagreement < 1e-3 * first);
    assert!(out.consensus.distance(&out.optimum.rotation) < 1e-4);
    assert!(relative_objective_gap(&problem, &h, out.consensus.matrix()) < 1e-4);
}

#[test]
fn dual_diminishing_schedule_runs() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 8, 0).unwrap();
    let g = CommGraph::ring(8, 1).unwrap();
    let mut c = config(ProtocolKind::DualDecomp, 1.0, 500);
    c.schedule = son_consensus::protocols::AlphaSchedule::Diminishing;
    let out = run(&h, &problem, &g, &c).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    assert!(out.consensus.distance(&out.optimum.rotation) < 1e-4);
}

fn optimum_states(
    h: &HullOperator,
    data: &DMatrix<f64>,
    g: &CommGraph,
    kind: ProtocolKind,
) -> (Vec<AgentState>, SpectraPoint) {
    let z_star = linear_max_over_hull(h, data).unwrap().z;
    let agents = (0..g.agent_count())
        .map(|i| {
            let mut a = AgentState::new(h, data.clone(), dual_keys(kind, g, i, true).unwrap()).unwrap();
            a.z = z_star.clone();
            a.x = z_star.clone();
            a
        })
        .collect();
    (agents, z_star)
}

#[test]
fn dist_admm_consensus_is_fixed_point() {
    let h = HullOperator::new(3).unwrap();
    let data = random_rotation(3, 4).into_matrix();
    let g = CommGraph::ring(6, 1).unwrap();
    let (mut agents, z_star) = optimum_states(&h, &data, &g, ProtocolKind::DistAdmm);
    let c = config(ProtocolKind::DistAdmm, 0.2, 10);
    let mut ws = AdmmWorkspace::default();
    for t in 1..=5 {
        dist_admm_round(&mut agents, &g, &c, &mut ws, t).unwrap();
    }
    for a in &agents {
        assert!((a.z.matrix() - z_star.matrix()).amax() < 1e-12);
        assert!((a.x.matrix() - z_star.matrix()).amax() < 1e-12);
        assert!(a.duals.iter().all(|(_, y)| y.amax() < 1e-12));
    }
    assert_eq!(ws.m.len(), 6);
    assert!(ws.m.iter().chain(&ws.n).all(|m| m == &m.transpose()));
}

#[test]
fn semi_admm_consensus_is_fixed_point() {
    let h = HullOperator::new(3).unwrap();
    let data = random_rotation(3, 8).into_matrix();
    let g = CommGraph::complete(4).unwrap();
    let (mut agents, z_star) = optimum_states(&h, &data, &g, ProtocolKind::SemiAdmm);
    let mut fusion = FusionState::new(h.d(), 4);
    fusion.z0 = z_star.clone();
    let c = config(ProtocolKind::SemiAdmm, 2.0, 10);
    let mut ws = AdmmWorkspace::default();
    for t in 1..=5 {
        semi_admm_round(&mut agents, &mut fusion, &c, &mut ws, t).unwrap();
    }
    assert!((fusion.z0.matrix() - z_star.matrix()).amax() < 1e-12);
    for (a, y) in agents.iter().zip(&fusion.duals) {
        assert!((a.z.matrix() - z_star.matrix()).amax() < 1e-12);
        assert!(y.amax() < 1e-12);
    }
    assert_eq!(ws.q.len(), 5);
}

#[test]
fn dual_round_with_identical_data_keeps_zero_duals() {
    let h = HullOperator::new(3).unwrap();
    let data = random_rotation(3, 2).into_matrix();
    let g = CommGraph::ring(5, 1).unwrap();
    let (mut agents, z_star) = optimum_states(&h, &data, &g, ProtocolKind::DualDecomp);
    let c = config(ProtocolKind::DualDecomp, 5.0, 10);
    dual_decomp_round(&h, &mut agents, &g, &c, 1).unwrap();
    for a in &agents {
        assert_eq!(a.duals.len(), 2, "self-loop carries no dual");
        assert!((a.z.matrix() - z_star.matrix()).amax() < 1e-12);
        assert!(a.duals.iter().all(|(_, y)| y.amax() == 0.0));
    }
}

#[test]
fn dist_admm_ring_matches_centralized() {
    let h = HullOperator::new(3).unwrap();
    for (agents, hops) in [(8, 1), (50, 2)] {
        let problem = averaging_instance(3, agents, 0).unwrap();
        let g = CommGraph::ring(agents, hops).unwrap();
        let out = run(&h, &problem, &g, &config(ProtocolKind::DistAdmm, 0.2, 500)).unwrap();
        assert_eq!(out.termination, Termination::Converged, "N={agents}");
        assert!(out.consensus.distance(&out.optimum.rotation) < 1e-4);
        let first = out.trace[0].disagreement;
        assert!(out.trace.last().unwrap().disagreement < 0.01 * first);
    }
}

// On a bipartite ring the Z/X constraint graph splits in two without the
// self-loop constraints Z^i = X^i, and the halves never agree.
#[test]
fn dist_admm_needs_self_loop_constraints_on_bipartite_ring() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 8, 0).unwrap();
    let g = CommGraph::ring(8, 1).unwrap();
    let mut c = config(ProtocolKind::DistAdmm, 0.2, 300);
    c.count_self_loop = false;
    let out = run(&h, &problem, &g, &c).unwrap();
    assert_ne!(out.termination, Termination::Converged);
    assert!(out.trace.last().unwrap().disagreement > 1.0);
}

#[test]
fn admm_iterates_are_feasible() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 10, 5).unwrap();
    let g = CommGraph::ring(10, 2).unwrap();
    for kind in [ProtocolKind::DistAdmm, ProtocolKind::SemiAdmm] {
        let mut sim = Simulation::new(&h, &problem, &g, config(kind, 0.5, 30)).unwrap();
        for _ in 0..30 {
            sim.step().unwrap();
            for a in sim.agents() {
                a.z.check().unwrap();
                a.x.check().unwrap();
                assert!(a.duals.iter().all(|(_, y)| y == &y.transpose()));
            }
            if let Some(f) = sim.fusion() {
                f.z0.check().unwrap();
            }
        }
    }
}

#[test]
fn semi_admm_pose_matches_centralized() {
    let h = HullOperator::new(3).unwrap();
    let cloud = synthetic_cloud(3, 1889, 1).unwrap();
    let problem = pose_instance(&cloud, 10, 0.05, 2).unwrap();
    let g = CommGraph::complete(10).unwrap();
    let out = run(&h, &problem, &g, &config(ProtocolKind::SemiAdmm, 2.0, 500)).unwrap();
    assert!(out.trace.last().unwrap().disagreement < 1e-4);
    assert!(out.consensus.distance(&out.optimum.rotation) < 1e-4);
    assert!(relative_objective_gap(&problem, &h, out.consensus.matrix()) < 1e-4);
}

#[test]
fn semi_admm_unnormalized_fusion_stays_feasible() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 6, 9).unwrap();
    let g = CommGraph::complete(6).unwrap();
    let mut c = config(ProtocolKind::SemiAdmm, 2.0, 50);
    c.fusion_scaling = FusionScaling::Unnormalized;
    let mut sim = Simulation::new(&h, &problem, &g, c).unwrap();
    for _ in 0..50 {
        sim.step().unwrap();
        sim.fusion().unwrap().z0.check().unwrap();
    }
}

#[test]
fn phases_are_order_independent() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 20, 4).unwrap();
    let g = CommGraph::ring(20, 2).unwrap();
    for kind in [ProtocolKind::DualDecomp, ProtocolKind::DistAdmm, ProtocolKind::SemiAdmm] {
        let mut seq = config(kind, 0.3, 40);
        seq.exec = ExecMode::Sequential;
        let mut par = seq.clone();
        par.exec = ExecMode::Parallel;
        let a = run(&h, &problem, &g, &seq).unwrap();
        let b = run(&h, &problem, &g, &par).unwrap();
        let strip = |t: &[son_consensus::TraceRecord]| {
            t.iter()
                .map(|r| {
                    (r.iteration, r.disagreement.to_bits(), r.optimality_gap.to_bits(), r.membership_residual.to_bits())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.trace), strip(&b.trace), "{kind}");
        assert_eq!(a.consensus, b.consensus);
    }
}

#[test]
fn single_agent_solves_in_one_round() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 1, 6).unwrap();
    let g = CommGraph::from_edges(1, []).unwrap();
    for kind in [ProtocolKind::DualDecomp, ProtocolKind::DistAdmm, ProtocolKind::SemiAdmm] {
        let out = run(&h, &problem, &g, &config(kind, 1.0, 100)).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.consensus.distance(&out.optimum.rotation) < 1e-12);
    }
}

#[test]
fn degenerate_data_is_flagged_not_fatal() {
    let h = HullOperator::new(3).unwrap();
    let problem = ProblemInstance::from_data(3, vec![DMatrix::zeros(3, 3); 3]).unwrap();
    let g = CommGraph::complete(3).unwrap();
    let out = run(&h, &problem, &g, &config(ProtocolKind::DualDecomp, 1.0, 5)).unwrap();
    assert!(out.degenerate_rounds >= 1);
    assert!(out.consensus.is_special_orthogonal(MEMBERSHIP_TOL));
}

#[test]
fn rejects_bad_setups() {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 3, 1).unwrap();
    let chain = CommGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let c = config(ProtocolKind::DualDecomp, 1.0, 5);
    assert!(matches!(run(&h, &problem, &chain, &c), Err(Error::NotStronglyConnected)));
    // the fusion protocol routes through the center and ignores connectivity
    assert!(run(&h, &problem, &chain, &config(ProtocolKind::SemiAdmm, 1.0, 5)).is_ok());

    let g4 = CommGraph::complete(4).unwrap();
    assert!(matches!(run(&h, &problem, &g4, &c), Err(Error::DimensionMismatch { .. })));
    let h2 = HullOperator::new(2).unwrap();
    assert!(matches!(run(&h2, &problem, &CommGraph::complete(3).unwrap(), &c), Err(Error::DimensionMismatch { .. })));

    let g = CommGraph::complete(3).unwrap();
    for bad in [
        config(ProtocolKind::DualDecomp, 0.0, 5),
        config(ProtocolKind::DualDecomp, f64::NAN, 5),
        config(ProtocolKind::DualDecomp, 1.0, 0),
        {
            let mut c = config(ProtocolKind::DistAdmm, 1.0, 5);
            c.schedule = son_consensus::protocols::AlphaSchedule::Diminishing;
            c
        },
    ] {
        assert!(matches!(run(&h, &problem, &g, &bad), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn huge_step_from_near_consensus_is_reported_divergent() {
    // nearly identical data: tiny initial disagreement that a huge step blows up
    let h = HullOperator::new(3).unwrap();
    let base = random_rotation(3, 12).into_matrix();
    let data = (0..8)
        .map(|i| {
            let mut d = base.clone();
            d[(0, 1)] += 1e-6 * i as f64;
            d
        })
        .collect();
    let problem = ProblemInstance::from_data(3, data).unwrap();
    let g = CommGraph::ring(8, 1).unwrap();
    let mut c = config(ProtocolKind::DualDecomp, 50.0, 500);
    c.stop_tolerance = 1e-12;
    let out = run(&h, &problem, &g, &c).unwrap();
    assert_eq!(out.termination, Termination::Diverged, "final {:?}", out.trace.last());
}
