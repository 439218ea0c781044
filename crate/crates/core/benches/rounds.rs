use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use son_consensus::exec::map_indexed;
use son_consensus::problems::averaging_instance;
use son_consensus::protocols::Simulation;
use son_consensus::{CommGraph, ExecMode, HullOperator, ProtocolConfig, ProtocolKind, SpectraPoint};

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn admm_rounds(c: &mut Criterion) {
    let h = HullOperator::new(3).unwrap();
    let problem = averaging_instance(3, 100, 0).unwrap();
    let graph = CommGraph::ring(100, 2).unwrap();
    let mut group = c.benchmark_group("dist_admm_n100_10_rounds");
    for mode in MODES {
        let mut config = ProtocolConfig::new(ProtocolKind::DistAdmm, 0.2);
        config.exec = mode;
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter_batched(
                || Simulation::new(&h, &problem, &graph, config.clone()).unwrap(),
                |mut sim| {
                    for _ in 0..10 {
                        sim.step().unwrap();
                    }
                    sim
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn membership_battery(c: &mut Criterion) {
    let h = HullOperator::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<SpectraPoint> = (0..1000)
        .map(|_| {
            let v = DVector::from_fn(h.d(), |_, _| StandardNormal.sample(&mut rng));
            SpectraPoint::rank_one(&v).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("hull_membership_1000");
    for mode in MODES {
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| {
                map_indexed(mode, points.len(), |k| h.apply(&points[k]).unwrap().membership_residual())
                    .into_iter()
                    .fold(0.0, f64::max)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, admm_rounds, membership_battery);
criterion_main!(benches);
