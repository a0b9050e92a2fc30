//! One seeded run of each synthetic benchmark, weighted against unweighted.

use serde::{Deserialize, Serialize};

use crate::divergence::pooled_bandwidth;
use crate::error::Result;
use crate::manifold::{fit_pca, ComponentSelector};
use crate::weights::{clean_weight, similarity_weight, Metric, SimilarityScorer, TargetReference};

use super::bound::{bound_decomposition, BoundDecomposition};
use super::data::{generate_noise_benchmark, generate_shift_benchmark, NoiseBenchmarkConfig, ShiftBenchmarkConfig, Tag};
use super::eval::{evaluate, DEFAULT_BINS};
use super::optim::TrainConfig;
use super::train::{mean_loss, train, weighted_set_loss};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTrial {
    pub seed: u64,
    pub baseline_val_loss: f64,
    pub weighted_val_loss: f64,
    pub baseline_accuracy: f64,
    pub weighted_accuracy: f64,
    pub median_weight_on_target: f64,
    pub median_weight_distractor: f64,
    pub decomposition: BoundDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrial {
    pub seed: u64,
    pub sigma: f64,
    pub uniform_accuracy: f64,
    pub weighted_accuracy: f64,
    /// `L_S^ω(θ_ω)` minus the mean loss of `θ_ω` on clean training rows.
    pub loss_gap: f64,
    pub mean_noisy_distance: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Similarity weights from `metric` against the labeled target sample, then
/// θ₀ and θ_ω compared on the held-out target split.
pub fn run_shift_trial(
    bench_config: &ShiftBenchmarkConfig,
    alpha: f64,
    metric: Metric,
    train_config: &TrainConfig,
) -> Result<ShiftTrial> {
    let bench = generate_shift_benchmark(bench_config)?;
    let h = pooled_bandwidth(&bench.source.x, &bench.target.x)?;
    let scorer = SimilarityScorer::new(metric, &bench.source.x, &TargetReference::Samples(bench.target.x.clone()), h)?;
    let weights = bench
        .source
        .x
        .iter()
        .map(|x| similarity_weight(scorer.distance(x)?, alpha))
        .collect::<Result<Vec<_>>>()?;
    let out = train(&bench.source, &weights, Some(&bench.target_val), 2, train_config)?;
    let base = evaluate(&out.theta0, &bench.target_val, DEFAULT_BINS)?;
    let weighted = evaluate(&out.theta_w, &bench.target_val, DEFAULT_BINS)?;
    let decomposition = bound_decomposition(
        &out.theta0,
        &out.theta_w,
        &bench.source,
        &weights,
        &bench.target_val,
        train_config.loss_normalization,
        None,
    )?;
    let by_tag = |tag: Tag| {
        median(
            weights
                .iter()
                .zip(&bench.source.tags)
                .filter(|(_, t)| **t == tag)
                .map(|(w, _)| *w)
                .collect(),
        )
    };
    Ok(ShiftTrial {
        seed: bench_config.seed,
        baseline_val_loss: base.loss,
        weighted_val_loss: weighted.loss,
        baseline_accuracy: base.accuracy,
        weighted_accuracy: weighted.accuracy,
        median_weight_on_target: by_tag(Tag::OnTarget),
        median_weight_distractor: by_tag(Tag::Distractor),
        decomposition,
    })
}

/// Clean weights from a `k`-component fit on the noisy training set, then
/// uniform and weighted training compared on clean test points.
pub fn run_noise_trial(bench_config: &NoiseBenchmarkConfig, beta: f64, train_config: &TrainConfig) -> Result<NoiseTrial> {
    let bench = generate_noise_benchmark(bench_config)?;
    let manifold = fit_pca(&bench.train.x, ComponentSelector::Components(bench_config.k))?;
    let distances = bench
        .train
        .x
        .iter()
        .map(|x| manifold.distance(x))
        .collect::<Result<Vec<_>>>()?;
    let weights = distances
        .iter()
        .map(|&d| clean_weight(d, beta))
        .collect::<Result<Vec<_>>>()?;
    let out = train(&bench.train, &weights, None, 2, train_config)?;
    let clean = bench.train.filter(|t| t == Tag::Clean);
    let noisy: Vec<f64> = distances
        .iter()
        .zip(&bench.train.tags)
        .filter(|(_, t)| **t == Tag::Noisy)
        .map(|(d, _)| *d)
        .collect();
    let mean_noisy_distance = if noisy.is_empty() {
        f64::NAN
    } else {
        noisy.iter().sum::<f64>() / noisy.len() as f64
    };
    Ok(NoiseTrial {
        seed: bench_config.seed,
        sigma: bench_config.sigma,
        uniform_accuracy: evaluate(&out.theta0, &bench.test, DEFAULT_BINS)?.accuracy,
        weighted_accuracy: evaluate(&out.theta_w, &bench.test, DEFAULT_BINS)?.accuracy,
        loss_gap: weighted_set_loss(&out.theta_w, &bench.train, &weights, train_config.loss_normalization)?
            - mean_loss(&out.theta_w, &clean)?,
        mean_noisy_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_shift_trial_runs() {
        let cfg = ShiftBenchmarkConfig {
            n_s: 200,
            n_t: 40,
            n_val: 100,
            ..ShiftBenchmarkConfig::default()
        };
        let tc = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let t = run_shift_trial(&cfg, 1.0, Metric::Kernel, &tc).unwrap();
        assert!(t.median_weight_on_target > t.median_weight_distractor);
        assert!(t.decomposition.telescoping_residual() <= 1e-9);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
