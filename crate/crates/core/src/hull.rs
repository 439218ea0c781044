//! Spectrahedral representation of the convex hull of SO(n).
//!
//! The hull is the image of the free spectrahedron `{Z ⪰ 0, tr Z = 1}`
//! (symmetric `d × d` with `d = 2^{n-1}`) under the linear map
//! `A(Z)_ij = ⟨A_ij, Z⟩`, where `A_ij = -Pᵀ λ_i ρ_j P` and `P` selects the
//! even-parity coordinates of `R^{2^n}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest rotation dimension accepted by [`HullOperator::new`].
pub const DEFAULT_MAX_N: usize = 8;

/// Orthogonality and determinant tolerance for SO(n) membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// PSD and trace tolerance for spectrahedron points.
pub const FEASIBILITY_TOL: f64 = 1e-10;

fn sign_diag() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

fn skew() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

fn kron_all(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    factors.iter().fold(DMatrix::from_element(1, 1, 1.0), |acc, f| acc.kronecker(f))
}

fn check_index(n: usize, i: usize) -> Result<()> {
    if n == 0 || i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    Ok(())
}

/// `diag(1,-1)^{⊗(i-1)} ⊗ J ⊗ I^{⊗(n-i)}` with `J = [[0,-1],[1,0]]`.
pub fn build_lambda(n: usize, i: usize) -> Result<DMatrix<f64>> {
    check_index(n, i)?;
    let mut factors = vec![sign_diag(); i - 1];
    factors.push(skew());
    factors.extend(std::iter::repeat_n(DMatrix::identity(2, 2), n - i));
    Ok(kron_all(&factors))
}

/// `I^{⊗(j-1)} ⊗ J ⊗ diag(1,-1)^{⊗(n-j)}`.
pub fn build_rho(n: usize, j: usize) -> Result<DMatrix<f64>> {
    check_index(n, j)?;
    let mut factors = vec![DMatrix::identity(2, 2); j - 1];
    factors.push(skew());
    factors.extend(std::iter::repeat_n(sign_diag(), n - j));
    Ok(kron_all(&factors))
}

/// Columns are the standard basis vectors of `R^{2^n}` whose index has even
/// popcount, in ascending index order.
pub fn build_p_even(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::IndexOutOfRange { index: 0, n: 0 });
    }
    let rows = 1usize << n;
    let cols = rows / 2;
    let mut p = DMatrix::zeros(rows, cols);
    for (col, k) in (0..rows).filter(|k| k.count_ones() % 2 == 0).enumerate() {
        p[(k, col)] = 1.0;
    }
    Ok(p)
}

/// Frobenius inner product `⟨A, B⟩ = tr(AᵀB)`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// A point of the free spectrahedron: symmetric, PSD, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraPoint(DMatrix<f64>);

impl SpectraPoint {
    /// Validates feasibility within [`FEASIBILITY_TOL`].
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        feasibility_violation(&z)?;
        Ok(Self(z))
    }

    pub(crate) fn from_trusted(z: DMatrix<f64>) -> Self {
        Self(z)
    }

    /// `I / d`, the barycenter of the free spectrahedron.
    pub fn barycenter(d: usize) -> Self {
        Self(DMatrix::identity(d, d) / d as f64)
    }

    /// `μμᵀ / ‖μ‖²`.
    pub fn rank_one(mu: &DVector<f64>) -> Result<Self> {
        let norm2 = mu.norm_squared();
        if !norm2.is_finite() || norm2 == 0.0 {
            return Err(Error::Infeasible("zero or non-finite generator".into()));
        }
        Ok(Self(mu * mu.transpose() / norm2))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Re-checks the PSD and trace invariants.
    pub fn check(&self) -> Result<()> {
        feasibility_violation(&self.0)
    }
}

fn feasibility_violation(z: &DMatrix<f64>) -> Result<()> {
    if !z.is_square() {
        return Err(Error::Infeasible(format!("{}x{} is not square", z.nrows(), z.ncols())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let asym = (z - z.transpose()).amax();
    if asym > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!("asymmetry {asym:e}")));
    }
    let tr = z.trace();
    if (tr - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!("trace {tr}")));
    }
    let min_eig = z.clone().symmetric_eigenvalues().min();
    if min_eig < -FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!("min eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// An `n × n` matrix, either in SO(n) or in its convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `‖RᵀR − I‖_F`
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.dim();
        (self.0.transpose() * &self.0 - DMatrix::<f64>::identity(n, n)).norm()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// `max(‖RᵀR − I‖_F, |det R − 1|)`
    pub fn membership_residual(&self) -> f64 {
        self.orthogonality_residual().max((self.det() - 1.0).abs())
    }

    pub fn is_special_orthogonal(&self, tol: f64) -> bool {
        self.orthogonality_residual() <= tol && (self.det() - 1.0).abs() <= tol
    }

    /// `‖self − other‖_F`
    pub fn distance(&self, other: &Rotation) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// The affine map `Z ↦ [⟨A_ij, Z⟩]` and its adjoint for a fixed `n`.
///
/// Immutable after construction and shared freely across agents.
#[derive(Debug, Clone)]
pub struct HullOperator {
    n: usize,
    d: usize,
    // row-major n×n table of symmetric d×d matrices
    basis: Vec<DMatrix<f64>>,
}

impl HullOperator {
    /// Builds the operator for `2 ≤ n ≤ DEFAULT_MAX_N`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_max(n, DEFAULT_MAX_N)
    }

    pub fn with_max(n: usize, max_n: usize) -> Result<Self> {
        if n < 2 || n > max_n || n >= usize::BITS as usize - 1 {
            return Err(Error::DimensionOutOfRange { n, max: max_n });
        }
        // λ_i ρ_j = ⊗_k (L_k R_k) by the mixed-product rule, and Pᵀ(·)P keeps
        // the rows and columns at even-parity indices.
        let even: Vec<usize> = (0..1usize << n).filter(|k| k.count_ones() % 2 == 0).collect();
        let mut basis = Vec::with_capacity(n * n);
        for i in 1..=n {
            for j in 1..=n {
                let factors: Vec<DMatrix<f64>> = (1..=n)
                    .map(|k| {
                        let l = match k.cmp(&i) {
                            std::cmp::Ordering::Less => sign_diag(),
                            std::cmp::Ordering::Equal => skew(),
                            std::cmp::Ordering::Greater => DMatrix::identity(2, 2),
                        };
                        let r = match k.cmp(&j) {
                            std::cmp::Ordering::Less => DMatrix::identity(2, 2),
                            std::cmp::Ordering::Equal => skew(),
                            std::cmp::Ordering::Greater => sign_diag(),
                        };
                        l * r
                    })
                    .collect();
                let entry = |row: usize, col: usize| -> f64 {
                    // factor k acts on bit (n - k) of the Kronecker index
                    -factors
                        .iter()
                        .enumerate()
                        .map(|(k, f)| {
                            let shift = n - 1 - k;
                            f[((row >> shift) & 1, (col >> shift) & 1)]
                        })
                        .product::<f64>()
                };
                let d = even.len();
                basis.push(DMatrix::from_fn(d, d, |a, b| entry(even[a], even[b])));
            }
        }
        Ok(Self { n, d: 1 << (n - 1), basis })
    }

    /// The same operator with every `A_ij` negated. Maps extreme points to
    /// `-SO(n)`, which for odd `n` is the `det = -1` component. Used to check
    /// that the membership battery actually detects a broken sign convention.
    pub fn negated(&self) -> Self {
        Self { n: self.n, d: self.d, basis: self.basis.iter().map(|a| -a).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `A_ij`, zero-based.
    pub fn basis(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.basis[i * self.n + j]
    }

    /// `R_ij = ⟨A_ij, Z⟩` for a feasible `Z`.
    pub fn apply(&self, z: &SpectraPoint) -> Result<Rotation> {
        self.apply_matrix(z.matrix()).map(Rotation)
    }

    /// The linear map on an arbitrary symmetric `d × d` matrix.
    pub fn apply_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.d || z.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", self.d),
                got: format!("{}x{}", z.nrows(), z.ncols()),
            });
        }
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| frobenius_dot(self.basis(i, j), z)))
    }

    /// `A†(Y) = Σ_ij A_ij Y_ij`.
    pub fn adjoint(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.n || y.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", self.n),
                got: format!("{}x{}", y.nrows(), y.ncols()),
            });
        }
        let mut out = DMatrix::zeros(self.d, self.d);
        for i in 0..self.n {
            for j in 0..self.n {
                let w = y[(i, j)];
                if w != 0.0 {
                    out += self.basis(i, j) * w;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        v.normalize()
    }

    #[test]
    fn lambda_rho_single_factor() {
        assert_eq!(build_lambda(1, 1).unwrap(), skew());
        assert_eq!(build_rho(1, 1).unwrap(), skew());
    }

    #[test]
    fn lambda_rho_n2_layout() {
        assert_eq!(build_lambda(2, 1).unwrap(), skew().kronecker(&DMatrix::identity(2, 2)));
        assert_eq!(build_rho(2, 2).unwrap(), DMatrix::identity(2, 2).kronecker(&skew()));
        assert_eq!(build_lambda(2, 2).unwrap(), sign_diag().kronecker(&skew()));
        assert_eq!(build_rho(2, 1).unwrap(), skew().kronecker(&sign_diag()));
    }

    #[test]
    fn lambda_rho_orthogonal_skew() {
        for n in 1..=6 {
            let dim = 1 << n;
            for k in 1..=n {
                for m in [build_lambda(n, k).unwrap(), build_rho(n, k).unwrap()] {
                    assert_eq!(m.nrows(), dim);
                    assert_relative_eq!(m.transpose() * &m, DMatrix::identity(dim, dim));
                    assert_relative_eq!(m.transpose(), -&m);
                }
            }
        }
    }

    #[test]
    fn index_out_of_range() {
        assert!(matches!(build_lambda(3, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(build_rho(3, 4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn p_even_n1_selects_first_coordinate() {
        assert_eq!(build_p_even(1).unwrap(), DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn p_even_projector_identity() {
        for n in 1..=6 {
            let p = build_p_even(n).unwrap();
            let half = 1 << (n - 1);
            assert_eq!(p.transpose() * &p, DMatrix::identity(half, half));
            let dsign = kron_all(&vec![sign_diag(); n]);
            let full = 1 << n;
            let proj = (DMatrix::identity(full, full) + dsign) * 0.5;
            assert_eq!(&p * p.transpose(), proj);
        }
    }

    #[test]
    fn build_hull_range() {
        assert!(matches!(HullOperator::new(1), Err(Error::DimensionOutOfRange { .. })));
        assert!(matches!(HullOperator::new(9), Err(Error::DimensionOutOfRange { .. })));
        assert!(HullOperator::with_max(9, 9).is_ok());
    }

    #[test]
    fn basis_matches_explicit_product() {
        for n in 2..=5 {
            let h = HullOperator::new(n).unwrap();
            let p = build_p_even(n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let a = h.basis(i, j);
                    assert_eq!(a.shape(), (h.d(), h.d()));
                    let explicit =
                        -(p.transpose() * build_lambda(n, i + 1).unwrap() * build_rho(n, j + 1).unwrap() * &p);
                    assert_eq!(a, &explicit);
                    assert_eq!(a, &a.transpose());
                }
            }
        }
    }

    #[test]
    fn n2_image_is_scaled_rotation_disc() {
        let h = HullOperator::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            // random feasible Z = convex mix of two rank-one points
            let t: f64 = rng.random();
            let z = (SpectraPoint::rank_one(&random_unit(2, &mut rng)).unwrap().into_matrix() * t)
                + SpectraPoint::rank_one(&random_unit(2, &mut rng)).unwrap().into_matrix() * (1.0 - t);
            let r = h.apply_matrix(&z).unwrap();
            assert_relative_eq!(r[(0, 0)], r[(1, 1)], epsilon = 1e-12);
            assert_relative_eq!(r[(0, 1)], -r[(1, 0)], epsilon = 1e-12);
            assert!(r[(0, 0)].powi(2) + r[(1, 0)].powi(2) <= 1.0 + 1e-12);
        }
        // every angle is reachable
        for k in 0..16 {
            let theta = k as f64 * std::f64::consts::PI / 8.0;
            let mu = DVector::from_vec(vec![(theta / 2.0).cos(), (theta / 2.0).sin()]);
            let r = h.apply(&SpectraPoint::rank_one(&mu).unwrap()).unwrap().into_matrix();
            let angle = r[(1, 0)].atan2(r[(0, 0)]);
            let diff = (angle - theta).rem_euclid(2.0 * std::f64::consts::PI);
            assert!(diff < 1e-12 || (2.0 * std::f64::consts::PI - diff) < 1e-12);
        }
    }

    #[test]
    fn rank_one_images_in_so3() {
        let h = HullOperator::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r = h.apply(&SpectraPoint::rank_one(&random_unit(4, &mut rng)).unwrap()).unwrap();
            assert!(r.is_special_orthogonal(MEMBERSHIP_TOL), "residual {}", r.membership_residual());
        }
    }

    #[test]
    fn apply_is_linear() {
        let h = HullOperator::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z1 = SpectraPoint::rank_one(&random_unit(4, &mut rng)).unwrap();
        let z2 = SpectraPoint::rank_one(&random_unit(4, &mut rng)).unwrap();
        let mid = SpectraPoint::new((z1.matrix() + z2.matrix()) * 0.5).unwrap();
        let lhs = h.apply(&mid).unwrap().into_matrix();
        let rhs = (h.apply(&z1).unwrap().into_matrix() + h.apply(&z2).unwrap().into_matrix()) * 0.5;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn adjoint_zero_and_symmetric() {
        let h = HullOperator::new(4).unwrap();
        assert_eq!(h.adjoint(&DMatrix::zeros(4, 4)).unwrap(), DMatrix::zeros(8, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = h.adjoint(&y).unwrap();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn adjoint_identity_n3() {
        let h = HullOperator::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = &g + g.transpose();
            let y = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lhs = frobenius_dot(&h.apply_matrix(&z).unwrap(), &y);
            let rhs = frobenius_dot(&z, &h.adjoint(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let h = HullOperator::new(3).unwrap();
        assert!(matches!(h.apply_matrix(&DMatrix::zeros(3, 3)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(h.adjoint(&DMatrix::zeros(4, 4)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spectra_point_validation() {
        assert!(SpectraPoint::new(DMatrix::identity(3, 3) / 3.0).is_ok());
        assert!(SpectraPoint::new(DMatrix::identity(3, 3)).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, -0.5]);
        assert!(SpectraPoint::new(indefinite).is_err());
        assert!(SpectraPoint::rank_one(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn negated_operator_flips_det_for_odd_n() {
        let h = HullOperator::new(3).unwrap().negated();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = h.apply(&SpectraPoint::rank_one(&random_unit(4, &mut rng)).unwrap()).unwrap();
        assert!(r.orthogonality_residual() < 1e-12);
        assert_relative_eq!(r.det(), -1.0, epsilon = 1e-12);
    }
}
