//! Embedding vectors, centroids and the per-sample distances used inside the
//! similarity weight: cosine, Mahalanobis and the Gaussian RBF kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the latent space. Components are always finite and `d >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    /// Zero vector of dimension `d`.
    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Multiplies every component by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(squared_euclidean(&a.0, &b.0).sqrt())
}

pub(crate) fn check_same_dim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Checks that a collection is non-empty and uniformly dimensioned,
/// returning the shared dimension.
pub fn common_dim(vectors: &[EmbeddingVector]) -> Result<usize> {
    let first = vectors.first().ok_or(Error::EmptyCollection)?;
    let d = first.dim();
    for v in &vectors[1..] {
        if v.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.dim(),
            });
        }
    }
    Ok(d)
}

/// Component-wise arithmetic mean.
pub fn centroid(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let d = common_dim(vectors)?;
    let mut sum = vec![0.0; d];
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(&v.0) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect())
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_same_dim(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    let similarity = (dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - similarity)
}

/// Gaussian RBF kernel `exp(-|a-b|^2 / (2 h^2))`.
pub fn rbf_kernel(a: &EmbeddingVector, b: &EmbeddingVector, bandwidth: f64) -> Result<f64> {
    check_same_dim(a, b)?;
    check_bandwidth(bandwidth)?;
    Ok(rbf_from_sq(squared_euclidean(&a.0, &b.0), bandwidth))
}

pub(crate) fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("bandwidth", format!("must be > 0, got {bandwidth}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn rbf_from_sq(sq_dist: f64, bandwidth: f64) -> f64 {
    (-sq_dist / (2.0 * bandwidth * bandwidth)).exp()
}

/// Sample mean and shrunk sample covariance of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub mean: EmbeddingVector,
    pub covariance: DMatrix<f64>,
    pub shrinkage: f64,
    pub n_fit: usize,
}

/// Default shrinkage toward the scaled identity.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Unbiased (`n - 1`) covariance shrunk toward `(tr(S)/d) I`:
/// `(1 - shrinkage) S + shrinkage (tr(S)/d) I`.
pub fn fit_covariance(samples: &[EmbeddingVector], shrinkage: f64) -> Result<CovarianceModel> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::invalid("shrinkage", format!("must lie in [0, 1], got {shrinkage}")));
    }
    let mean = centroid(samples)?;
    let d = mean.dim();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for s in samples {
        for (c, (x, m)) in centered.iter_mut().zip(s.0.iter().zip(&mean.0)) {
            *c = x - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (samples.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let target = cov.trace() / d as f64;
    let mut shrunk = cov * (1.0 - shrinkage);
    for i in 0..d {
        shrunk[(i, i)] += shrinkage * target;
    }
    Ok(CovarianceModel {
        mean,
        covariance: shrunk,
        shrinkage,
        n_fit: samples.len(),
    })
}

impl CovarianceModel {
    /// Builds a model around an explicit covariance matrix.
    pub fn from_matrix(mean: EmbeddingVector, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.dim() || covariance.ncols() != mean.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.dim(),
                found: covariance.nrows(),
            });
        }
        Ok(Self {
            mean,
            covariance,
            shrinkage: 0.0,
            n_fit: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Factorizes the covariance once so repeated distance queries only pay
    /// for a triangular solve.
    pub fn whitener(&self) -> Result<Whitener> {
        let d = self.dim();
        let max_diag = (0..d)
            .map(|i| self.covariance[(i, i)])
            .fold(0.0_f64, f64::max);
        if !(max_diag > 0.0) {
            return Err(Error::SingularCovariance);
        }
        let chol = Cholesky::new(self.covariance.clone()).ok_or(Error::SingularCovariance)?;
        let floor = f64::EPSILON * max_diag * d as f64;
        let l = chol.l_dirty();
        for i in 0..d {
            let pivot = l[(i, i)];
            if !(pivot.is_finite() && pivot * pivot > floor) {
                return Err(Error::SingularCovariance);
            }
        }
        Ok(Whitener { chol })
    }
}

/// Cholesky factor of a positive definite covariance.
#[derive(Debug, Clone)]
pub struct Whitener {
    chol: Cholesky<f64, Dyn>,
}

impl Whitener {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `sqrt((a-b)^T S^-1 (a-b))` via a forward substitution `L z = a - b`.
    pub fn distance(&self, a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
        check_same_dim(a, b)?;
        if a.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: a.dim(),
            });
        }
        let diff = DVector::from_iterator(a.dim(), a.0.iter().zip(&b.0).map(|(x, y)| x - y));
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .ok_or(Error::SingularCovariance)?;
        Ok(z.norm())
    }
}

pub fn mahalanobis_distance(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    cov: &CovarianceModel,
) -> Result<f64> {
    cov.whitener()?.distance(a, b)
}
