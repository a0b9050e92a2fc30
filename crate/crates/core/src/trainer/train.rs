use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{weighted_loss, LossNormalization};

use super::data::LabeledSet;
use super::model::{weighted_ce_grad, ModelParams, Sample};
use super::optim::{adamw_step, AdamState, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Unweighted training producing θ₀.
    Pretrain,
    /// Weighted training from θ₀.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub weighted_loss: f64,
    pub target_val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta0: ModelParams,
    pub theta_w: ModelParams,
    pub log: Vec<EpochRecord>,
}

/// Per-sample cross-entropy of `params` on every row of `set`.
pub fn sample_losses(params: &ModelParams, set: &LabeledSet) -> Result<Vec<f64>> {
    set.x
        .iter()
        .zip(&set.y)
        .map(|(x, &y)| params.sample_loss(x.as_slice(), y))
        .collect()
}

/// Unweighted mean cross-entropy.
pub fn mean_loss(params: &ModelParams, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyCollection);
    }
    Ok(sample_losses(params, set)?.iter().sum::<f64>() / set.len() as f64)
}

/// Weighted empirical loss `L_S^ω`.
pub fn weighted_set_loss(
    params: &ModelParams,
    set: &LabeledSet,
    weights: &[f64],
    normalization: LossNormalization,
) -> Result<f64> {
    weighted_loss(&sample_losses(params, set)?, weights, normalization)
}

/// Runs `config.epochs` epochs of AdamW from `init`, shuffling with the
/// config seed. A batch size at least the set size means full-batch steps
/// in fixed order.
pub fn fit(
    init: ModelParams,
    set: &LabeledSet,
    weights: &[f64],
    validation: Option<&LabeledSet>,
    config: &TrainConfig,
    phase: Phase,
    log: &mut Vec<EpochRecord>,
) -> Result<ModelParams> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let samples = set.samples(weights)?;
    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let full_batch = config.batch_size >= samples.len();
    let mut step = 0usize;
    let mut batch: Vec<Sample> = Vec::with_capacity(config.batch_size.min(samples.len()));

    for epoch in 1..=config.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            step += 1;
            let (loss, grads) = weighted_ce_grad(&params, &batch, config.loss_normalization)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    lr: config.effective_lr(step),
                });
            }
            adamw_step(&mut params, &grads, step, config, &mut state);
        }
        let epoch_loss = weighted_set_loss(&params, set, weights, config.loss_normalization)?;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                lr: config.effective_lr(step),
            });
        }
        log.push(EpochRecord {
            phase,
            epoch,
            weighted_loss: epoch_loss,
            target_val_loss: validation.map(|v| mean_loss(&params, v)).transpose()?,
            lr: config.effective_lr(step),
        });
    }
    Ok(params)
}

/// θ₀ from unweighted training on the source, then θ_ω by weighted
/// training started at θ₀. Both phases use the same config.
pub fn train(
    source: &LabeledSet,
    weights: &[f64],
    target_val: Option<&LabeledSet>,
    n_classes: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let d = source.dim().ok_or(Error::EmptyCollection)?;
    if let Some(&bad) = source.y.iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: n_classes,
        });
    }
    let mut log = Vec::new();
    let ones = vec![1.0; source.len()];
    let theta0 = fit(
        ModelParams::zeros(n_classes, d)?,
        source,
        &ones,
        target_val,
        config,
        Phase::Pretrain,
        &mut log,
    )?;
    let theta_w = fit(theta0.clone(), source, weights, target_val, config, Phase::Weighted, &mut log)?;
    Ok(TrainOutcome { theta0, theta_w, log })
}

/// One JSON object per epoch.
pub fn write_training_log<W: Write>(mut out: W, log: &[EpochRecord]) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<training log>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EmbeddingVector;
    use crate::trainer::data::Tag;

    fn separable() -> LabeledSet {
        let mut s = LabeledSet::default();
        for i in 0..40 {
            let t = i as f64 / 10.0;
            let y = i % 2;
            let x = if y == 1 { vec![1.0 + t, 0.5] } else { vec![-1.0 - t, -0.5] };
            s.push(format!("{i}"), EmbeddingVector::new(x).unwrap(), y, Tag::Unknown);
        }
        s
    }

    #[test]
    fn separable_reaches_low_loss() {
        let s = separable();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train(&s, &vec![1.0; s.len()], None, 2, &cfg).unwrap();
        assert!(mean_loss(&out.theta0, &s).unwrap() < 0.1);
        assert_eq!(out.log.len(), 400);
    }

    #[test]
    fn deterministic_and_unit_weights_continue_unweighted() {
        let s = separable();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let ones = vec![1.0; s.len()];
        let a = train(&s, &ones, Some(&s), 2, &cfg).unwrap();
        let b = train(&s, &ones, Some(&s), 2, &cfg).unwrap();
        assert_eq!(a, b);
        let mut log = Vec::new();
        let cont = fit(a.theta0.clone(), &s, &ones, None, &cfg, Phase::Pretrain, &mut log).unwrap();
        assert_eq!(cont, a.theta_w);
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = separable();
        s.x[0] = EmbeddingVector::new(vec![1e300, 1e300]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            warmup_steps: 0,
            epochs: 5,
            ..TrainConfig::default()
        };
        match train(&s, &vec![1.0; s.len()], None, 2, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_is_json_lines() {
        let s = separable();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(&s, &vec![1.0; s.len()], Some(&s), 2, &cfg).unwrap();
        let mut buf = Vec::new();
        write_training_log(&mut buf, &out.log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["epoch", "weighted_loss", "target_val_loss", "lr"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }
}
