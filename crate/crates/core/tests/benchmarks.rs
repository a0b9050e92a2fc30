use hysim_core::divergence::{mmd2_unbiased, pooled_bandwidth};
use hysim_core::manifold::{fit_pca, ComponentSelector};
use hysim_core::trainer::{
    generate_noise_benchmark, generate_shift_benchmark, NoiseBenchmarkConfig, ShiftBenchmarkConfig, Tag,
};
use hysim_core::weights::{similarity_weight, Metric, SimilarityScorer, TargetReference};
use statrs::function::gamma::ln_gamma;

/// `E[chi_m] = sqrt(2) Γ((m+1)/2) / Γ(m/2)`.
fn chi_mean(m: usize) -> f64 {
    let m = m as f64;
    2f64.sqrt() * (ln_gamma((m + 1.0) / 2.0) - ln_gamma(m / 2.0)).exp()
}

fn manifold_distances(cfg: &NoiseBenchmarkConfig) -> (Vec<f64>, Vec<Tag>) {
    let b = generate_noise_benchmark(cfg).unwrap();
    let m = fit_pca(&b.train.x, ComponentSelector::Components(cfg.k)).unwrap();
    (b.train.x.iter().map(|x| m.distance(x).unwrap()).collect(), b.train.tags)
}

#[test]
fn clean_data_lies_on_the_fitted_subspace() {
    let cfg = NoiseBenchmarkConfig {
        noise_fraction: 0.0,
        n: 500,
        ..NoiseBenchmarkConfig::default()
    };
    let (d, tags) = manifold_distances(&cfg);
    assert!(tags.iter().all(|t| *t == Tag::Clean));
    assert!(d.iter().all(|&v| v < 1e-9), "max {}", d.iter().cloned().fold(0.0, f64::max));

    let (d0, _) = manifold_distances(&NoiseBenchmarkConfig {
        sigma: 0.0,
        n: 500,
        ..NoiseBenchmarkConfig::default()
    });
    assert!(d0.iter().all(|&v| v < 1e-9));
}

#[test]
fn noisy_distance_follows_chi_mean() {
    for sigma in [0.5, 1.0, 2.0] {
        let cfg = NoiseBenchmarkConfig {
            sigma,
            seed: 5,
            ..NoiseBenchmarkConfig::default()
        };
        let (d, tags) = manifold_distances(&cfg);
        let noisy: Vec<f64> = d.iter().zip(&tags).filter(|(_, t)| **t == Tag::Noisy).map(|(v, _)| *v).collect();
        assert_eq!(noisy.len(), 400);
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        let want = sigma * chi_mean(cfg.d - cfg.k);
        assert!((mean / want - 1.0).abs() < 0.1, "sigma {sigma}: {mean} vs {want}");
    }
    // chi mean of 20 dof is close to, but below, sqrt(20)
    assert!((chi_mean(20) - 4.4159).abs() < 1e-3);
}

#[test]
fn null_shift_has_near_zero_mmd() {
    let mut acc = Vec::new();
    for seed in 0..8 {
        let b = generate_shift_benchmark(&ShiftBenchmarkConfig {
            distractor_fraction: 0.0,
            n_s: 150,
            n_t: 150,
            n_val: 0,
            seed,
            ..ShiftBenchmarkConfig::default()
        })
        .unwrap();
        let h = pooled_bandwidth(&b.source.x, &b.target.x).unwrap();
        acc.push(mmd2_unbiased(&b.source.x, &b.target.x, h).unwrap());
    }
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    let sd = (acc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (acc.len() - 1) as f64).sqrt();
    assert!(mean.abs() < 3.0 * sd / (acc.len() as f64).sqrt() + 1e-4, "{mean} ± {sd}");
}

/// Distances are bounded: cosine by 2, the per-sample kernel distance by
/// √2. With α = 1 no weight can fall below e^−2 or e^−√2, so the
/// distractors can only be ordered below the on-target cluster.
#[test]
fn distractors_get_lower_similarity_weight() {
    let b = generate_shift_benchmark(&ShiftBenchmarkConfig {
        n_s: 600,
        ..ShiftBenchmarkConfig::default()
    })
    .unwrap();
    let h = pooled_bandwidth(&b.source.x, &b.target.x).unwrap();
    for (metric, floor) in [(Metric::Cosine, (-2f64).exp()), (Metric::Kernel, (-(2f64.sqrt())).exp())] {
        let scorer = SimilarityScorer::new(metric, &b.source.x, &TargetReference::Samples(b.target.x.clone()), h).unwrap();
        let w: Vec<f64> = b.source.x.iter().map(|x| similarity_weight(scorer.distance(x).unwrap(), 1.0).unwrap()).collect();
        let median = |tag: Tag| {
            let mut v: Vec<f64> = w.iter().zip(&b.source.tags).filter(|(_, t)| **t == tag).map(|(w, _)| *w).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(Tag::Distractor) < median(Tag::OnTarget), "{metric:?}");
        assert!(w.iter().all(|&v| v >= floor - 1e-12));
    }
}

#[test]
fn generators_match_configured_counts() {
    let s = ShiftBenchmarkConfig::default();
    let b = generate_shift_benchmark(&s).unwrap();
    assert_eq!((b.source.len(), b.target.len(), b.target_val.len()), (2000, 200, 1000));
    assert_eq!(b.source.tags.iter().filter(|t| **t == Tag::Distractor).count(), 600);
    let n = NoiseBenchmarkConfig::default();
    let nb = generate_noise_benchmark(&n).unwrap();
    assert_eq!((nb.train.len(), nb.test.len()), (2000, 2000));
    assert_eq!(nb.train.tags.iter().filter(|t| **t == Tag::Noisy).count(), 400);
}
