//! Affine PCA model of the clean-data manifold, orthogonal residual
//! distances to it, and the `mean + 2 std` outlier gate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{centroid, common_dim, dot, EmbeddingVector};
use crate::weights::clean_weight;

pub const MANIFOLD_FORMAT_VERSION: u32 = 1;

/// How many principal directions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentSelector {
    Components(usize),
    /// Smallest `k` whose cumulative eigenvalue share reaches this fraction.
    TargetVariance(f64),
}

impl Default for ComponentSelector {
    fn default() -> Self {
        ComponentSelector::TargetVariance(0.9)
    }
}

/// Affine subspace `mean + span(basis)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    mean: Vec<f64>,
    /// `k` orthonormal columns of length `d`.
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    variance_explained: f64,
    n_fit: usize,
}

pub fn fit_pca(samples: &[EmbeddingVector], selector: ComponentSelector) -> Result<ManifoldModel> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let d = common_dim(samples)?;
    let max_k = d.min(samples.len() - 1);
    match selector {
        ComponentSelector::Components(k) if k == 0 || k > max_k => {
            return Err(Error::invalid("k", format!("must lie in [1, {max_k}], got {k}")));
        }
        ComponentSelector::TargetVariance(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(Error::invalid("target_variance", format!("must lie in (0, 1], got {t}")));
        }
        _ => {}
    }

    let mean = centroid(samples)?.into_inner();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    for s in samples {
        for (ci, (x, m)) in c.iter_mut().zip(s.as_slice().iter().zip(&mean)) {
            *ci = x - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
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

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();

    let k = match selector {
        ComponentSelector::Components(k) => k,
        ComponentSelector::TargetVariance(target) => {
            if total > 0.0 {
                let mut cum = 0.0;
                let mut k = max_k;
                for (i, ev) in spectrum.iter().enumerate().take(max_k) {
                    cum += ev;
                    if cum / total >= target - 1e-12 {
                        k = i + 1;
                        break;
                    }
                }
                k
            } else {
                1
            }
        }
    };

    let basis: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = dot(&col, &col).sqrt();
            // sign convention: largest-magnitude component positive
            let pivot = col
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            let s = if pivot < 0.0 { -1.0 } else { 1.0 } / norm;
            col.iter_mut().for_each(|x| *x *= s);
            col
        })
        .collect();
    let kept: f64 = spectrum[..k].iter().sum();
    let variance_explained = if total > 0.0 { (kept / total).min(1.0) } else { 1.0 };

    Ok(ManifoldModel {
        mean,
        basis,
        eigenvalues: spectrum[..k].to_vec(),
        variance_explained,
        n_fit: samples.len(),
    })
}

impl ManifoldModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Intrinsic dimension `k`.
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn variance_explained(&self) -> f64 {
        self.variance_explained
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    fn centered(&self, v: &EmbeddingVector) -> Result<Vec<f64>> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.dim(),
            });
        }
        Ok(v.as_slice().iter().zip(&self.mean).map(|(x, m)| x - m).collect())
    }

    /// Coordinates of `v - mean` along each basis direction.
    pub fn coordinates(&self, v: &EmbeddingVector) -> Result<Vec<f64>> {
        let c = self.centered(v)?;
        Ok(self.basis.iter().map(|b| dot(b, &c)).collect())
    }

    fn residual(&self, v: &EmbeddingVector) -> Result<Vec<f64>> {
        let mut r = self.centered(v)?;
        for b in &self.basis {
            let coef = dot(b, &r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= coef * bi;
            }
        }
        Ok(r)
    }

    /// Orthogonal projection of `v` onto the affine subspace.
    pub fn project(&self, v: &EmbeddingVector) -> Result<EmbeddingVector> {
        let r = self.residual(v)?;
        EmbeddingVector::new(v.as_slice().iter().zip(&r).map(|(x, ri)| x - ri).collect())
    }

    pub fn distance(&self, v: &EmbeddingVector) -> Result<f64> {
        let r = self.residual(v)?;
        Ok(dot(&r, &r).sqrt())
    }

    pub fn to_document(&self) -> ManifoldDocument {
        ManifoldDocument {
            version: MANIFOLD_FORMAT_VERSION,
            d: self.dim(),
            k: self.k(),
            mean: self.mean.clone(),
            basis: self.basis.iter().flatten().copied().collect(),
            eigenvalues: self.eigenvalues.clone(),
            variance_explained: self.variance_explained,
            n_fit: self.n_fit,
        }
    }

    pub fn from_document(doc: ManifoldDocument) -> Result<Self> {
        if doc.version != MANIFOLD_FORMAT_VERSION {
            return Err(Error::Version(doc.version));
        }
        if doc.mean.len() != doc.d || doc.basis.len() != doc.d * doc.k || doc.eigenvalues.len() != doc.k {
            return Err(Error::Parse {
                location: "manifold document".into(),
                message: "array lengths disagree with d and k".into(),
            });
        }
        if doc.k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        let basis = doc.basis.chunks(doc.d).map(<[f64]>::to_vec).collect();
        Ok(Self {
            mean: doc.mean,
            basis,
            eigenvalues: doc.eigenvalues,
            variance_explained: doc.variance_explained,
            n_fit: doc.n_fit,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// Versioned on-disk form. `basis` is column-major, `d * k` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDocument {
    pub version: u32,
    pub d: usize,
    pub k: usize,
    pub mean: Vec<f64>,
    pub basis: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub variance_explained: f64,
    pub n_fit: usize,
}

pub fn distance_to_manifold(v: &EmbeddingVector, model: &ManifoldModel) -> Result<f64> {
    model.distance(v)
}

/// `mean + 2 * std` with the `n - 1` standard deviation.
pub fn outlier_threshold(distances: &[f64]) -> Result<f64> {
    if distances.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: distances.len(),
        });
    }
    let n = distances.len() as f64;
    // shifted by the first value so constant inputs reproduce it exactly
    let shift = distances[0];
    let mean = shift + distances.iter().map(|d| d - shift).sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok(mean + 2.0 * var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    Reject,
    Downweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateAction {
    Keep,
    Downweight,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    /// Position of the row in the gated batch.
    pub index: usize,
    pub distance: f64,
    pub threshold: f64,
    pub action: GateAction,
    pub omega_clean: f64,
}

impl GateDecision {
    pub fn is_kept(&self) -> bool {
        self.action != GateAction::Reject
    }
}

/// Flags rows with `distance > threshold`. Reject mode drops them; downweight
/// mode keeps them. Every decision carries `exp(-beta * distance)`.
pub fn gate(distances: &[f64], threshold: f64, mode: GateMode, beta: f64) -> Result<Vec<GateDecision>> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold", format!("must be >= 0, got {threshold}")));
    }
    distances
        .iter()
        .enumerate()
        .map(|(index, &distance)| {
            let omega_clean = clean_weight(distance, beta)?;
            let action = match (distance > threshold, mode) {
                (false, _) => GateAction::Keep,
                (true, GateMode::Reject) => GateAction::Reject,
                (true, GateMode::Downweight) => GateAction::Downweight,
            };
            Ok(GateDecision {
                index,
                distance,
                threshold,
                action,
                omega_clean,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn collinear_points_recover_the_line() {
        let u = 1.0 / 3f64.sqrt();
        let pts: Vec<_> = (0..10).map(|i| v(&[i as f64 * u, i as f64 * u, i as f64 * u])).collect();
        let m = fit_pca(&pts, ComponentSelector::Components(1)).unwrap();
        for b in &m.basis()[0] {
            assert!((b - u).abs() < 1e-12);
        }
        assert!((m.variance_explained() - 1.0).abs() < 1e-12);
        for p in &pts {
            assert!(m.distance(p).unwrap() < 1e-10);
        }
    }

    #[test]
    fn isotropic_gaussian_splits_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let pts: Vec<_> = (0..5000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                v(&[a, b])
            })
            .collect();
        let m = fit_pca(&pts, ComponentSelector::Components(1)).unwrap();
        assert!((0.45..=0.55).contains(&m.variance_explained()));
    }

    #[test]
    fn target_variance_picks_rank_of_planar_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = [1.0, 2.0, 0.0, -1.0, 0.5];
        let b = [0.0, 1.0, 1.0, 1.0, -2.0];
        let pts: Vec<_> = (0..40)
            .map(|_| {
                let s: f64 = StandardNormal.sample(&mut rng);
                let t: f64 = StandardNormal.sample(&mut rng);
                v(&(0..5).map(|i| 3.0 + s * a[i] + t * b[i]).collect::<Vec<_>>())
            })
            .collect();
        let m = fit_pca(&pts, ComponentSelector::TargetVariance(0.99)).unwrap();
        assert_eq!(m.k(), 2);
    }

    #[test]
    fn xy_plane_residual_is_z() {
        let pts = [v(&[1.0, 0.0, 0.0]), v(&[-1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, -1.0, 0.0])];
        let m = fit_pca(&pts, ComponentSelector::Components(2)).unwrap();
        assert!((m.distance(&v(&[7.0, -2.0, 3.0])).unwrap() - 3.0).abs() < 1e-12);
        assert!(m.distance(&v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn selector_validation() {
        let pts = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert!(fit_pca(&pts[..1], ComponentSelector::Components(1)).is_err());
        assert!(fit_pca(&pts, ComponentSelector::Components(2)).is_err());
        assert!(fit_pca(&pts, ComponentSelector::TargetVariance(0.0)).is_err());
        assert!(fit_pca(&pts, ComponentSelector::TargetVariance(1.2)).is_err());
    }

    #[test]
    fn identical_points_give_zero_distance() {
        let pts = vec![v(&[2.0, 3.0, 4.0]); 5];
        let m = fit_pca(&pts, ComponentSelector::TargetVariance(0.9)).unwrap();
        assert_eq!(m.k(), 1);
        assert_eq!(m.variance_explained(), 1.0);
        assert_eq!(m.distance(&pts[0]).unwrap(), 0.0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(outlier_threshold(&[1.0, 1.0, 1.0, 5.0]).unwrap(), 6.0);
        assert_eq!(outlier_threshold(&[0.7, 0.7, 0.7]).unwrap(), 0.7);
        assert!(outlier_threshold(&[1.0]).is_err());
    }

    #[test]
    fn gate_examples() {
        let d = gate(&[1.0, 1.0, 1.0, 5.0], 6.0, GateMode::Reject, 1.0).unwrap();
        assert!(d.iter().all(GateDecision::is_kept));
        let d = gate(&[6.0], 6.0, GateMode::Reject, 1.0).unwrap();
        assert_eq!(d[0].action, GateAction::Keep);
        let d = gate(&[0.0, 10.0], 6.0, GateMode::Reject, 1.0).unwrap();
        assert_eq!(d[1].action, GateAction::Reject);
        let d = gate(&[0.0, 10.0], 6.0, GateMode::Downweight, 0.5).unwrap();
        assert_eq!(d[1].action, GateAction::Downweight);
        assert!((d[1].omega_clean - (-5.0_f64).exp()).abs() < 1e-15);
        assert!(gate(&[1.0], -1.0, GateMode::Reject, 1.0).is_err());
    }

    #[test]
    fn document_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<_> = (0..30)
            .map(|_| v(&(0..4).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>()))
            .collect();
        let m = fit_pca(&pts, ComponentSelector::Components(2)).unwrap();
        let back = ManifoldModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
