//! Set-level divergence between source and target embeddings: Gaussian-kernel
//! MMD estimators, the median bandwidth heuristic, a permutation two-sample
//! test, and the per-sample kernel distance `sqrt(MMD²({x}, T))`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{check_bandwidth, common_dim, rbf_from_sq, squared_euclidean, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    BiasedV,
    UnbiasedU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub estimator: Estimator,
    pub bandwidth: f64,
    pub p_value: Option<f64>,
    pub n_source: usize,
    pub n_target: usize,
}

fn check_pair(x: &[EmbeddingVector], y: &[EmbeddingVector], min: usize) -> Result<()> {
    for set in [x, y] {
        if set.len() < min {
            return Err(if set.is_empty() {
                Error::EmptyCollection
            } else {
                Error::TooFewSamples {
                    needed: min,
                    got: set.len(),
                }
            });
        }
    }
    let dx = common_dim(x)?;
    let dy = common_dim(y)?;
    if dx != dy {
        return Err(Error::DimensionMismatch {
            expected: dx,
            found: dy,
        });
    }
    Ok(())
}

/// Sum of `k(a_i, b_j)` over all pairs, diagonal included.
fn cross_sum(a: &[EmbeddingVector], b: &[EmbeddingVector], h: f64) -> f64 {
    a.iter()
        .map(|u| {
            b.iter()
                .map(|v| rbf_from_sq(squared_euclidean(u.as_slice(), v.as_slice()), h))
                .sum::<f64>()
        })
        .sum()
}

/// Sum of `k(a_i, a_j)` over `i != j`.
fn within_sum_offdiag(a: &[EmbeddingVector], h: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            s += rbf_from_sq(squared_euclidean(a[i].as_slice(), a[j].as_slice()), h);
        }
    }
    2.0 * s
}

/// V-statistic estimate of MMD², clamped at zero.
pub fn mmd2_biased(x: &[EmbeddingVector], y: &[EmbeddingVector], bandwidth: f64) -> Result<f64> {
    check_pair(x, y, 1)?;
    check_bandwidth(bandwidth)?;
    let (m, n) = (x.len() as f64, y.len() as f64);
    // k(x, x) = 1 on the diagonal
    let xx = (within_sum_offdiag(x, bandwidth) + m) / (m * m);
    let yy = (within_sum_offdiag(y, bandwidth) + n) / (n * n);
    let xy = cross_sum(x, y, bandwidth) / (m * n);
    Ok((xx + yy - 2.0 * xy).max(0.0))
}

/// U-statistic estimate of MMD² with diagonal terms excluded. May be negative.
pub fn mmd2_unbiased(x: &[EmbeddingVector], y: &[EmbeddingVector], bandwidth: f64) -> Result<f64> {
    check_pair(x, y, 2)?;
    check_bandwidth(bandwidth)?;
    let (m, n) = (x.len() as f64, y.len() as f64);
    let xx = within_sum_offdiag(x, bandwidth) / (m * (m - 1.0));
    let yy = within_sum_offdiag(y, bandwidth) / (n * (n - 1.0));
    let xy = cross_sum(x, y, bandwidth) / (m * n);
    Ok(xx + yy - 2.0 * xy)
}

/// Median of all pairwise Euclidean distances. For an even number of pairs
/// the two middle values are averaged.
pub fn median_heuristic_bandwidth(points: &[EmbeddingVector]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    common_dim(points)?;
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            dists.push(squared_euclidean(points[i].as_slice(), points[j].as_slice()).sqrt());
        }
    }
    let len = dists.len();
    let mid = len / 2;
    let (_, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if len % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    };
    if !(median > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// Median heuristic over the union of two sets.
pub fn pooled_bandwidth(x: &[EmbeddingVector], y: &[EmbeddingVector]) -> Result<f64> {
    let pooled: Vec<EmbeddingVector> = x.iter().chain(y).cloned().collect();
    median_heuristic_bandwidth(&pooled)
}

/// Kernel matrix of a pooled sample, used to evaluate the U-statistic under
/// many relabelings without recomputing kernels.
struct PooledKernel {
    k: Vec<f64>,
    n: usize,
    offdiag_total: f64,
}

impl PooledKernel {
    fn new(points: &[&EmbeddingVector], h: f64) -> Self {
        let n = points.len();
        let mut k = vec![1.0; n * n];
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rbf_from_sq(squared_euclidean(points[i].as_slice(), points[j].as_slice()), h);
                k[i * n + j] = v;
                k[j * n + i] = v;
                total += 2.0 * v;
            }
        }
        Self {
            k,
            n,
            offdiag_total: total,
        }
    }

    fn block_offdiag(&self, idx: &[usize]) -> f64 {
        let mut s = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            let row = &self.k[i * self.n..(i + 1) * self.n];
            for &j in &idx[a + 1..] {
                s += row[j];
            }
        }
        2.0 * s
    }

    /// Unbiased MMD² with the first `m` entries of `order` as the X sample.
    fn mmd2_unbiased(&self, order: &[usize], m: usize) -> f64 {
        let (xs, ys) = order.split_at(m);
        let (mf, nf) = (m as f64, ys.len() as f64);
        let xx = self.block_offdiag(xs);
        let yy = self.block_offdiag(ys);
        let xy = (self.offdiag_total - xx - yy) / 2.0;
        xx / (mf * (mf - 1.0)) + yy / (nf * (nf - 1.0)) - 2.0 * xy / (mf * nf)
    }
}

pub const MIN_PERMUTATIONS: usize = 100;

/// Permutation p-value for `H0: p_X = p_Y` with the unbiased statistic,
/// `(1 + #{T_perm >= T_obs}) / (1 + n_permutations)`.
pub fn permutation_test(
    x: &[EmbeddingVector],
    y: &[EmbeddingVector],
    bandwidth: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(x, y, 2)?;
    check_bandwidth(bandwidth)?;
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::invalid(
            "n_permutations",
            format!("need at least {MIN_PERMUTATIONS}, got {n_permutations}"),
        ));
    }
    let pooled: Vec<&EmbeddingVector> = x.iter().chain(y).collect();
    let kernel = PooledKernel::new(&pooled, bandwidth);
    let m = x.len();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    let observed = kernel.mmd2_unbiased(&order, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        if kernel.mmd2_unbiased(&order, m) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (1 + n_permutations) as f64)
}

/// Per-sample kernel distance: `sqrt(mmd2_biased({x}, target))`.
pub fn kernel_distance_to_set(
    x: &EmbeddingVector,
    target: &[EmbeddingVector],
    bandwidth: f64,
) -> Result<f64> {
    Ok(mmd2_biased(std::slice::from_ref(x), target, bandwidth)?.sqrt())
}

/// Kernel distance to a fixed target set with the target self-similarity
/// term computed once.
#[derive(Debug, Clone)]
pub struct KernelSetDistance {
    target: Vec<EmbeddingVector>,
    bandwidth: f64,
    target_mean_kernel: f64,
}

impl KernelSetDistance {
    pub fn new(target: &[EmbeddingVector], bandwidth: f64) -> Result<Self> {
        common_dim(target)?;
        check_bandwidth(bandwidth)?;
        let n = target.len() as f64;
        let target_mean_kernel = (within_sum_offdiag(target, bandwidth) + n) / (n * n);
        Ok(Self {
            target: target.to_vec(),
            bandwidth,
            target_mean_kernel,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn distance(&self, x: &EmbeddingVector) -> Result<f64> {
        let d = self.target[0].dim();
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.dim(),
            });
        }
        let n = self.target.len() as f64;
        let xy = cross_sum(std::slice::from_ref(x), &self.target, self.bandwidth) / n;
        Ok((1.0 + self.target_mean_kernel - 2.0 * xy).max(0.0).sqrt())
    }
}

/// Estimates `D(p_T || p_S)` with the chosen estimator, the median heuristic
/// when no bandwidth is given, and an optional permutation p-value.
pub fn estimate_divergence(
    source: &[EmbeddingVector],
    target: &[EmbeddingVector],
    estimator: Estimator,
    bandwidth: Option<f64>,
    permutations: Option<(usize, u64)>,
) -> Result<DivergenceEstimate> {
    let bandwidth = match bandwidth {
        Some(h) => h,
        None => pooled_bandwidth(source, target)?,
    };
    let value = match estimator {
        Estimator::BiasedV => mmd2_biased(source, target, bandwidth)?,
        Estimator::UnbiasedU => mmd2_unbiased(source, target, bandwidth)?,
    };
    let p_value = match permutations {
        Some((n, seed)) => Some(permutation_test(source, target, bandwidth, n, seed)?),
        None => None,
    };
    Ok(DivergenceEstimate {
        value,
        estimator,
        bandwidth,
        p_value,
        n_source: source.len(),
        n_target: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<EmbeddingVector> {
        xs.iter().map(|&x| EmbeddingVector::new(vec![x]).unwrap()).collect()
    }

    #[test]
    fn biased_hand_examples() {
        let x = pts(&[0.0]);
        let y = pts(&[1.0]);
        let expected = 2.0 - 2.0 * (-0.5_f64).exp();
        assert!((mmd2_biased(&x, &y, 1.0).unwrap() - expected).abs() < 1e-15);
        let z = pts(&[0.0, 1.5, -2.0]);
        assert!(mmd2_biased(&z, &z, 0.8).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unbiased_two_point_masses() {
        for g in [0.3, 1.0, 2.5] {
            let x = pts(&[0.0, 0.0]);
            let y = pts(&[g, g]);
            let expected = 2.0 - 2.0 * (-g * g / 2.0).exp();
            assert!((mmd2_unbiased(&x, &y, 1.0).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn estimator_preconditions() {
        assert!(matches!(mmd2_biased(&[], &pts(&[1.0]), 1.0), Err(Error::EmptyCollection)));
        assert!(mmd2_unbiased(&pts(&[1.0]), &pts(&[1.0, 2.0]), 1.0).is_err());
        assert!(mmd2_biased(&pts(&[1.0]), &pts(&[2.0]), 0.0).is_err());
    }

    #[test]
    fn median_heuristic_examples() {
        assert_eq!(median_heuristic_bandwidth(&pts(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(median_heuristic_bandwidth(&pts(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        // pairs 1, 2, 3, 1, 2, 1 -> sorted 1 1 1 2 2 3 -> (1 + 2) / 2
        assert_eq!(median_heuristic_bandwidth(&pts(&[0.0, 1.0, 2.0, 3.0])).unwrap(), 1.5);
        assert!(matches!(
            median_heuristic_bandwidth(&pts(&[2.0, 2.0, 2.0])),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn kernel_distance_examples() {
        let x = EmbeddingVector::new(vec![0.4, -0.1]).unwrap();
        assert_eq!(kernel_distance_to_set(&x, std::slice::from_ref(&x), 1.0).unwrap(), 0.0);
        let g: f64 = 1.7;
        let d = kernel_distance_to_set(&pts(&[0.0])[0], &pts(&[g]), 1.0).unwrap();
        assert!((d - (2.0 - 2.0 * (-g * g / 2.0).exp()).sqrt()).abs() < 1e-15);
        assert!(kernel_distance_to_set(&x, &[], 1.0).is_err());
    }

    #[test]
    fn permutation_rejects_small_budgets() {
        let x = pts(&[0.0, 1.0, 2.0]);
        assert!(permutation_test(&x, &x, 1.0, 99, 0).is_err());
    }

    #[test]
    fn estimate_divergence_attaches_p_value() {
        let x = pts(&[0.0, 0.1, 0.2, 0.3, 0.4]);
        let y = pts(&[5.0, 5.1, 5.2, 5.3, 5.4]);
        let est = estimate_divergence(&x, &y, Estimator::UnbiasedU, None, Some((100, 1))).unwrap();
        assert!(est.value > 0.0);
        let p = est.p_value.unwrap();
        assert!(p > 0.0 && p <= 1.0);
        assert_eq!((est.n_source, est.n_target), (5, 5));
    }
}
