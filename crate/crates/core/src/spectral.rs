//! Dense symmetric eigensolver, simplex and spectrahedron projections, and the
//! closed-form linear maximization over the hull.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hull::{HullOperator, Rotation, SpectraPoint};

/// Top eigenvalues closer than this are treated as a repeated eigenvalue.
pub const EIGEN_GAP_TOL: f64 = 1e-9;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Each eigenvector's largest-magnitude entry is positive (first such entry on
/// ties), so the decomposition is a deterministic function of its input.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    /// `ν₁ − ν₂`, or `+∞` for a 1×1 input.
    pub fn top_gap(&self) -> f64 {
        if self.values.len() < 2 {
            f64::INFINITY
        } else {
            self.values[0] - self.values[1]
        }
    }
}

pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(Ordering::Equal));
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    Ok(EigDecomposition { values, vectors })
}

/// Entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by sorting and thresholding.
pub fn project_simplex(v: &[f64]) -> Result<SimplexVector> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    // absorb rounding so the sum is one to machine precision
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    Ok(SimplexVector(out))
}

/// Projection onto the free spectrahedron: eigendecompose, project the
/// eigenvalues onto the simplex, reassemble.
pub fn project_spectrahedron(t: &DMatrix<f64>) -> Result<SpectraPoint> {
    let eig = sym_eig(t)?;
    let weights = project_simplex(eig.values.as_slice())?;
    let mut z = DMatrix::zeros(t.nrows(), t.nrows());
    for (k, &w) in weights.as_slice().iter().enumerate() {
        if w > 0.0 {
            let u = eig.vectors.column(k);
            z += (u * u.transpose()) * w;
        }
    }
    let z = (&z + z.transpose()) * 0.5;
    Ok(SpectraPoint::from_trusted(z))
}

/// Maximizer of `⟨D, R⟩` over the hull.
#[derive(Debug, Clone)]
pub struct LinearMax {
    pub rotation: Rotation,
    pub z: SpectraPoint,
    /// Top eigenvalue of `A†(D)`, equal to the optimal objective.
    pub value: f64,
    pub gap: f64,
    /// `false` when the top eigenvalue is repeated and the maximizer is not unique.
    pub separated: bool,
}

/// `R* = A(μμᵀ)` with `μ` the top eigenvector of `A†(D)`.
///
/// On a repeated top eigenvalue the lexicographically smallest top eigenvector
/// (after sign normalization) is used and `separated` is cleared.
pub fn linear_max_over_hull(h: &HullOperator, data: &DMatrix<f64>) -> Result<LinearMax> {
    linear_max_from_dual(h, &h.adjoint(data)?)
}

/// Same as [`linear_max_over_hull`] given `A†(D)` (or any symmetric `d × d` cost) directly.
pub fn linear_max_from_dual(h: &HullOperator, cost: &DMatrix<f64>) -> Result<LinearMax> {
    let eig = sym_eig(cost)?;
    let gap = eig.top_gap();
    let separated = gap > EIGEN_GAP_TOL;
    let col = if separated {
        0
    } else {
        let top = eig.values[0];
        (0..eig.values.len())
            .take_while(|&k| top - eig.values[k] <= EIGEN_GAP_TOL)
            .min_by(|&a, &b| lex_cmp(eig.vectors.column(a).as_slice(), eig.vectors.column(b).as_slice()))
            .unwrap_or(0)
    };
    let mu = eig.vectors.column(col).into_owned();
    let z = SpectraPoint::rank_one(&mu)?;
    let rotation = h.apply(&z)?;
    Ok(LinearMax { rotation, z, value: eig.values[col], gap, separated })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}
