//! Problem instances: per-agent data matrices `D^i = C^i (B^i)ᵀ` for rotation
//! averaging and multi-view pose estimation, plus point-cloud ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::hull::{HullOperator, Rotation};
use crate::spectral::{linear_max_over_hull, LinearMax};

/// Raw correspondences held by one agent: model points `B` and observations `C`.
#[derive(Debug, Clone)]
pub struct PointPair {
    pub model: DMatrix<f64>,
    pub observed: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub data: Vec<DMatrix<f64>>,
    pub truth: Option<Rotation>,
    pub points: Option<Vec<PointPair>>,
}

impl ProblemInstance {
    pub fn from_data(n: usize, data: Vec<DMatrix<f64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidProblem("no agent data".into()));
        }
        for (i, d) in data.iter().enumerate() {
            if d.shape() != (n, n) {
                return Err(Error::InvalidProblem(format!(
                    "agent {i}: data is {}x{}, expected {n}x{n}",
                    d.nrows(),
                    d.ncols()
                )));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!("agent {i}: non-finite data")));
            }
        }
        Ok(Self { n, data, truth: None, points: None })
    }

    pub fn agents(&self) -> usize {
        self.data.len()
    }

    /// `Σ_i D^i`
    pub fn total_data(&self) -> DMatrix<f64> {
        self.data.iter().fold(DMatrix::zeros(self.n, self.n), |acc, d| acc + d)
    }

    /// `Σ_i ⟨D^i, R⟩`
    pub fn objective(&self, r: &DMatrix<f64>) -> f64 {
        crate::hull::frobenius_dot(&self.total_data(), r)
    }

    /// The generalized average, solved centrally.
    pub fn centralized(&self, h: &HullOperator) -> Result<LinearMax> {
        linear_max_over_hull(h, &self.total_data())
    }

    /// The first `k` agents only.
    pub fn subset(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.agents() {
            return Err(Error::InvalidProblem(format!("cannot take {k} of {} agents", self.agents())));
        }
        Ok(Self {
            n: self.n,
            data: self.data[..k].to_vec(),
            truth: self.truth.clone(),
            points: self.points.as_ref().map(|p| p[..k].to_vec()),
        })
    }
}

/// Haar-distributed element of SO(n): QR of a Gaussian matrix with the sign
/// ambiguity removed, then one column flipped if the determinant is negative.
pub fn sample_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Rotation {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Rotation::new(q).expect("square by construction")
}

pub fn random_rotation(n: usize, seed: u64) -> Rotation {
    sample_rotation(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `D^i = R^i_0` for `agents` independent random rotations.
pub fn averaging_instance(n: usize, agents: usize, seed: u64) -> Result<ProblemInstance> {
    if agents == 0 {
        return Err(Error::InvalidProblem("need at least one agent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..agents).map(|_| sample_rotation(n, &mut rng).into_matrix()).collect();
    ProblemInstance::from_data(n, data)
}

/// Coordinates stored column-wise, `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    centroid: DVector<f64>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.ncols() == 0 || points.nrows() == 0 {
            return Err(Error::InvalidProblem("empty point cloud".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite point coordinates".into()));
        }
        let centroid = points.column_mean();
        Ok(Self { points, centroid })
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn centroid(&self) -> &DVector<f64> {
        &self.centroid
    }

    /// Scaled so the largest bounding-box extent is one.
    pub fn normalized(&self) -> Self {
        let extent = self.points.row_iter().map(|row| row.max() - row.min()).fold(0.0f64, f64::max);
        if extent == 0.0 {
            return self.clone();
        }
        let points = &self.points / extent;
        let centroid = &self.centroid / extent;
        Self { points, centroid }
    }

    pub fn centered(&self) -> DMatrix<f64> {
        let mut p = self.points.clone();
        for mut col in p.column_iter_mut() {
            col -= &self.centroid;
        }
        p
    }
}

/// `m` points uniform in the unit cube of `R^n`.
pub fn synthetic_cloud(n: usize, m: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(DMatrix::from_fn(n, m, |_, _| rng.random::<f64>()))
}

/// Reads a CSV (one point per line) or the `v` lines of an OBJ file.
pub fn load_point_cloud(path: &Path, dim: usize, normalize: bool) -> Result<PointCloud> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let is_obj = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    let rows = if is_obj { parse_obj(&text, dim, &origin)? } else { parse_csv(&text, dim, &origin)? };
    if rows.is_empty() {
        return Err(Error::Parse { path: origin, line: 0, msg: "no points found".into() });
    }
    let m = rows.len();
    let cloud = PointCloud::new(DMatrix::from_fn(dim, m, |r, c| rows[c][r]))?;
    Ok(if normalize { cloud.normalized() } else { cloud })
}

fn parse_csv(text: &str, dim: usize, origin: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(parse_coords(record.iter(), dim, origin, line)?);
    }
    Ok(rows)
}

fn parse_obj(text: &str, dim: usize, origin: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        if fields.next() != Some("v") {
            continue;
        }
        let coords: Vec<&str> = fields.collect();
        // OBJ allows an optional homogeneous w; ignore it
        let take = if coords.len() == dim + 1 { dim } else { coords.len() };
        rows.push(parse_coords(coords[..take].iter().copied(), dim, origin, lineno + 1)?);
    }
    Ok(rows)
}

fn parse_coords<'a>(fields: impl Iterator<Item = &'a str>, dim: usize, origin: &str, line: usize) -> Result<Vec<f64>> {
    let err = |msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let coords = fields
        .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad coordinate {f:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if coords.len() != dim {
        return Err(err(format!("expected {dim} coordinates, found {}", coords.len())));
    }
    Ok(coords)
}

/// Rotates `model` by a random ground truth, adds i.i.d. Gaussian noise,
/// centers model and observations by their global centroids, and splits the
/// points into `agents` contiguous, near-equal blocks.
pub fn pose_instance(model: &PointCloud, agents: usize, sigma: f64, seed: u64) -> Result<ProblemInstance> {
    let (n, m) = (model.dim(), model.len());
    if agents == 0 || agents > m {
        return Err(Error::InvalidProblem(format!("cannot split {m} points across {agents} agents")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidProblem(format!("noise level must be finite and nonnegative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sample_rotation(n, &mut rng);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidProblem(e.to_string()))?;
    let mut observed = truth.matrix() * model.points();
    if sigma > 0.0 {
        observed.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let observed = PointCloud::new(observed)?.centered();
    let model = model.centered();

    let base = m / agents;
    let extra = m % agents;
    let mut start = 0;
    let mut data = Vec::with_capacity(agents);
    let mut pairs = Vec::with_capacity(agents);
    for i in 0..agents {
        let len = base + usize::from(i < extra);
        let b = model.columns(start, len).into_owned();
        let c = observed.columns(start, len).into_owned();
        data.push(&c * b.transpose());
        pairs.push(PointPair { model: b, observed: c });
        start += len;
    }
    let mut inst = ProblemInstance::from_data(n, data)?;
    inst.truth = Some(truth);
    inst.points = Some(pairs);
    Ok(inst)
}

/// Closed-form orthogonal Procrustes: `argmax_{R ∈ SO(n)} ⟨D, R⟩ = U diag(1,…,1,det(UVᵀ)) Vᵀ`.
pub fn procrustes(data: &DMatrix<f64>) -> Result<Rotation> {
    if !data.is_square() {
        return Err(Error::DimensionMismatch {
            expected: "square".into(),
            got: format!("{}x{}", data.nrows(), data.ncols()),
        });
    }
    let svd = data.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NonFinite),
    };
    let n = data.nrows();
    // nalgebra does not sort singular values; the sign fix goes on the smallest
    let smallest = svd.singular_values.imin();
    let mut s = DVector::from_element(n, 1.0);
    s[smallest] = (&u * &v_t).determinant().signum();
    Rotation::new(&u * DMatrix::from_diagonal(&s) * v_t)
}
