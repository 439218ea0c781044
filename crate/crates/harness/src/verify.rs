use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use son_consensus::hull::{frobenius_dot, FEASIBILITY_TOL, MEMBERSHIP_TOL};
use son_consensus::problems::{averaging_instance, procrustes};
use son_consensus::spectral::{linear_max_over_hull, project_simplex, project_spectrahedron};
use son_consensus::{run, CommGraph, ExecMode, HullOperator, ProtocolConfig, ProtocolKind, SpectraPoint};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub flip_sign: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Negates every A_ij: the hull operator then lands on the wrong
    /// component of O(n) and the membership checks must fail.
    pub flip_sign: bool,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn unit_vector(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
}

fn hull(n: usize, opts: &VerifyOptions) -> son_consensus::Result<HullOperator> {
    let h = HullOperator::new(n)?;
    Ok(if opts.flip_sign { h.negated() } else { h })
}

struct Worst {
    value: f64,
    det: f64,
}

impl Worst {
    fn new() -> Self {
        Self { value: 0.0, det: 1.0 }
    }

    fn see(&mut self, r: &son_consensus::Rotation) {
        let v = r.membership_residual();
        if v > self.value || v.is_nan() {
            self.value = v;
            self.det = r.det();
        }
    }
}

fn timed(name: &str, tolerance: f64, f: impl FnOnce() -> son_consensus::Result<(f64, String)>) -> Check {
    let start = Instant::now();
    let (worst, detail, ok) = match f() {
        Ok((w, d)) => (w, d, w <= tolerance),
        Err(e) => (f64::NAN, format!("error: {e}"), false),
    };
    Check {
        name: name.to_string(),
        passed: ok,
        worst,
        tolerance,
        detail,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Images of random rank-one points. Only for n ≤ 3 is every unit vector's
/// image a rotation; beyond that only the spin-group directions are.
fn rank_one_membership(n: usize, samples: usize, opts: &VerifyOptions) -> Check {
    timed(&format!("hull_rank_one_membership_n{n}"), MEMBERSHIP_TOL, || {
        let h = hull(n, opts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ n as u64);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let z = SpectraPoint::rank_one(&unit_vector(h.d(), &mut rng))?;
            worst.see(&h.apply(&z)?);
        }
        Ok((worst.value, format!("{samples} samples, det at worst {:.6}", worst.det)))
    })
}

/// Maximizers of random linear functionals are extreme points and must be
/// rotations for every n.
fn extreme_point_membership(n: usize, samples: usize, opts: &VerifyOptions) -> Check {
    timed(&format!("hull_extreme_point_membership_n{n}"), MEMBERSHIP_TOL, || {
        let h = hull(n, opts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64) << 8);
        let mut worst = Worst::new();
        for _ in 0..samples {
            worst.see(&linear_max_over_hull(&h, &gaussian(n, n, &mut rng))?.rotation);
        }
        Ok((worst.value, format!("{samples} samples, det at worst {:.6}", worst.det)))
    })
}

fn adjoint_identity(n: usize, samples: usize, opts: &VerifyOptions) -> Check {
    timed(&format!("adjoint_identity_n{n}"), 1e-10, || {
        let h = hull(n, opts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64) << 16);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let g = gaussian(h.d(), h.d(), &mut rng);
            let z = (&g + g.transpose()) * 0.5;
            let y = gaussian(n, n, &mut rng);
            let lhs = frobenius_dot(&h.apply_matrix(&z)?, &y);
            let rhs = frobenius_dot(&z, &h.adjoint(&y)?);
            worst = worst.max((lhs - rhs).abs());
        }
        Ok((worst, format!("{samples} pairs")))
    })
}

fn procrustes_equivalence(samples: usize, opts: &VerifyOptions) -> Check {
    timed("procrustes_equivalence_n3", 1e-6, || {
        let h = hull(3, opts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let d = gaussian(3, 3, &mut rng);
            let lm = linear_max_over_hull(&h, &d)?;
            worst = worst.max(lm.rotation.distance(&procrustes(&d)?));
        }
        Ok((worst, format!("{samples} data matrices")))
    })
}

fn simplex_kkt(samples: usize, opts: &VerifyOptions) -> Check {
    timed("simplex_projection_kkt", 1e-10, || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x51);
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let v: Vec<f64> = (0..1 + k % 16).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let w = project_simplex(&v)?.into_vec();
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            worst = worst.max(-w.iter().copied().fold(0.0, f64::min));
            // v − w is constant (τ) on the support and at most τ off it
            let tau = v.iter().zip(&w).filter(|(_, wi)| **wi > 0.0).map(|(vi, wi)| vi - wi).fold(f64::NAN, f64::max);
            for (vi, wi) in v.iter().zip(&w) {
                let viol = if *wi > 0.0 { (vi - wi - tau).abs() } else { (vi - tau).max(0.0) };
                worst = worst.max(viol);
            }
        }
        Ok((worst, format!("{samples} vectors")))
    })
}

fn spectrahedron_projection(samples: usize, opts: &VerifyOptions) -> Check {
    timed("spectrahedron_projection_feasible_idempotent", FEASIBILITY_TOL, || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5e);
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let d = 2 + k % 8;
            let g = gaussian(d, d, &mut rng);
            let p = project_spectrahedron(&(&g + g.transpose()))?;
            p.check()?;
            let again = project_spectrahedron(p.matrix())?;
            worst = worst.max((again.matrix() - p.matrix()).amax());
        }
        Ok((worst, format!("{samples} matrices")))
    })
}

fn ring_topology() -> Check {
    timed("ring_topology_structure", 0.0, || {
        let mut bad = 0usize;
        for (n, hops) in [(8, 1), (50, 2), (100, 1), (100, 2)] {
            let g = CommGraph::ring(n, hops)?;
            bad += usize::from(!g.is_strongly_connected());
            for i in 0..n {
                bad += usize::from(g.in_neighbors(i)?.len() != 2 * hops + 1);
            }
        }
        Ok((bad as f64, "strong connectivity and neighborhood sizes".into()))
    })
}

fn phase_determinism(opts: &VerifyOptions) -> Check {
    timed("phase_order_independence", 0.0, || {
        let h = HullOperator::new(3)?;
        let problem = averaging_instance(3, 12, opts.seed)?;
        let g = CommGraph::ring(12, 2)?;
        let mut mismatches = 0usize;
        for kind in [ProtocolKind::DualDecomp, ProtocolKind::DistAdmm, ProtocolKind::SemiAdmm] {
            let mut c = ProtocolConfig::new(kind, 0.5);
            c.max_iters = 20;
            c.exec = ExecMode::Sequential;
            let a = run(&h, &problem, &g, &c)?;
            c.exec = ExecMode::Parallel;
            let b = run(&h, &problem, &g, &c)?;
            mismatches += a
                .trace
                .iter()
                .zip(&b.trace)
                .filter(|(x, y)| x.disagreement.to_bits() != y.disagreement.to_bits())
                .count();
            mismatches += usize::from(a.consensus != b.consensus);
        }
        Ok((mismatches as f64, "sequential vs parallel rounds, bitwise".into()))
    })
}

fn hull_timing(opts: &VerifyOptions) -> Check {
    let limit_ms = 10_000.0;
    let start = Instant::now();
    let inner = extreme_point_membership(4, 1000, opts);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Check {
        name: "hull_n4_timing".into(),
        passed: ms <= limit_ms,
        worst: ms,
        tolerance: limit_ms,
        detail: format!("build + 1000 membership checks, ms; membership passed: {}", inner.passed),
        elapsed_ms: ms,
    }
}

pub fn verify_suite(opts: VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    for n in [2, 3] {
        checks.push(rank_one_membership(n, 1000, &opts));
    }
    for n in 2..=6 {
        checks.push(extreme_point_membership(n, 200, &opts));
    }
    for n in [2, 3, 4] {
        checks.push(adjoint_identity(n, 1000, &opts));
    }
    checks.push(procrustes_equivalence(200, &opts));
    checks.push(simplex_kkt(500, &opts));
    checks.push(spectrahedron_projection(200, &opts));
    checks.push(ring_topology());
    checks.push(phase_determinism(&opts));
    checks.push(hull_timing(&opts));
    VerifyReport { passed: checks.iter().all(|c| c.passed), flip_sign: opts.flip_sign, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batteries_pass() {
        let opts = VerifyOptions::default();
        assert!(rank_one_membership(3, 50, &opts).passed);
        assert!(extreme_point_membership(4, 20, &opts).passed);
        assert!(adjoint_identity(3, 50, &opts).passed);
        assert!(procrustes_equivalence(20, &opts).passed);
        assert!(simplex_kkt(50, &opts).passed);
        assert!(spectrahedron_projection(20, &opts).passed);
        assert!(ring_topology().passed);
    }

    #[test]
    fn flipped_sign_fails_with_negative_determinant() {
        let opts = VerifyOptions { seed: 0, flip_sign: true };
        let c = rank_one_membership(3, 50, &opts);
        assert!(!c.passed);
        assert!(c.detail.contains("det at worst -1.0000"), "{}", c.detail);
        assert!(!extreme_point_membership(3, 20, &opts).passed);
        assert!(!procrustes_equivalence(20, &opts).passed);
        // the adjoint pair stays consistent under a global sign
        assert!(adjoint_identity(3, 50, &opts).passed);
    }
}
