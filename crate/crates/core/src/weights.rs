//! Similarity weights `exp(-alpha * dist)`, clean weights
//! `exp(-beta * d_M)`, their combination, and the weighted source loss.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::divergence::KernelSetDistance;
use crate::error::{Error, Result};
use crate::manifold::ManifoldModel;
use crate::metrics::{centroid, cosine_distance, fit_covariance, EmbeddingVector, Whitener, DEFAULT_SHRINKAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Mahalanobis,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridMode {
    #[default]
    #[serde(alias = "mult")]
    Multiplicative,
    #[serde(alias = "add")]
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// `(1/n) sum w_i l_i`
    #[default]
    PaperMean,
    /// `sum w_i l_i / sum w_i`
    SelfNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub alpha: f64,
    pub beta: f64,
    pub metric: Metric,
    pub hybrid_mode: HybridMode,
    pub loss_normalization: LossNormalization,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            metric: Metric::Cosine,
            hybrid_mode: HybridMode::Multiplicative,
            loss_normalization: LossNormalization::PaperMean,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        check_coefficient("alpha", self.alpha)?;
        check_coefficient("beta", self.beta)
    }
}

fn check_coefficient(name: &'static str, c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid(name, format!("must be finite and >= 0, got {c}")));
    }
    Ok(())
}

fn exp_weight(dist: f64, coef: f64, name: &'static str) -> Result<f64> {
    if !(dist >= 0.0 && dist.is_finite()) {
        return Err(Error::invalid("dist", format!("must be finite and >= 0, got {dist}")));
    }
    check_coefficient(name, coef)?;
    // keep the weight strictly positive when exp underflows
    Ok((-coef * dist).exp().max(f64::MIN_POSITIVE))
}

pub fn similarity_weight(dist: f64, alpha: f64) -> Result<f64> {
    exp_weight(dist, alpha, "alpha")
}

pub fn clean_weight(d_m: f64, beta: f64) -> Result<f64> {
    exp_weight(d_m, beta, "beta")
}

fn check_unit_weight(name: &'static str, w: f64) -> Result<()> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::invalid(name, format!("must lie in (0, 1], got {w}")));
    }
    Ok(())
}

pub fn hybrid_weight(omega_sim: f64, omega_clean: f64, mode: HybridMode) -> Result<f64> {
    check_unit_weight("omega_sim", omega_sim)?;
    check_unit_weight("omega_clean", omega_clean)?;
    Ok(match mode {
        HybridMode::Multiplicative => (omega_sim * omega_clean).max(f64::MIN_POSITIVE),
        HybridMode::Additive => (omega_sim + omega_clean) / 2.0,
    })
}

pub fn weighted_loss(losses: &[f64], weights: &[f64], normalization: LossNormalization) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if losses.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            found: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("weights", format!("must be finite and >= 0, got {w}")));
    }
    let total: f64 = losses.iter().zip(weights).map(|(l, w)| l * w).sum();
    Ok(match normalization {
        LossNormalization::PaperMean => total / losses.len() as f64,
        LossNormalization::SelfNormalized => {
            let mass: f64 = weights.iter().sum();
            if mass <= 0.0 {
                return Err(Error::invalid("weights", "sum must be > 0"));
            }
            total / mass
        }
    })
}

/// Outcome of the alpha grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub validation_loss: f64,
    /// Every candidate with its validation loss, `None` when training failed.
    pub trials: Vec<(f64, Option<f64>)>,
}

/// Picks the candidate whose trained model has the lowest validation loss.
/// `train_and_validate` trains with a given alpha and returns the unweighted
/// target validation loss. Ties go to the smaller alpha.
pub fn select_alpha<F>(candidates: &[f64], mut train_and_validate: F) -> Result<AlphaSelection>
where
    F: FnMut(f64) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut trials = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in candidates {
        check_coefficient("alpha", alpha)?;
        match train_and_validate(alpha) {
            Ok(loss) if loss.is_finite() => {
                trials.push((alpha, Some(loss)));
                let better = match best {
                    None => true,
                    Some((a, l)) => loss < l || (loss == l && alpha < a),
                };
                if better {
                    best = Some((alpha, loss));
                }
            }
            Ok(loss) => {
                warn!("alpha {alpha} skipped: non-finite validation loss {loss}");
                trials.push((alpha, None));
            }
            Err(e) => {
                warn!("alpha {alpha} skipped: {e}");
                trials.push((alpha, None));
            }
        }
    }
    let (alpha, validation_loss) = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(AlphaSelection {
        alpha,
        validation_loss,
        trials,
    })
}

/// One source example with both distances and all three weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub sample_id: String,
    pub dist_sim: f64,
    pub dist_manifold: f64,
    pub omega_sim: f64,
    pub omega_clean: f64,
    pub omega_hybrid: f64,
}

impl WeightedSample {
    pub fn new(sample_id: impl Into<String>, dist_sim: f64, dist_manifold: f64, config: &WeightConfig) -> Result<Self> {
        let omega_sim = similarity_weight(dist_sim, config.alpha)?;
        let omega_clean = clean_weight(dist_manifold, config.beta)?;
        Ok(Self {
            sample_id: sample_id.into(),
            dist_sim,
            dist_manifold,
            omega_sim,
            omega_clean,
            omega_hybrid: hybrid_weight(omega_sim, omega_clean, config.hybrid_mode)?,
        })
    }
}

/// Reference point(s) describing the target domain.
#[derive(Debug, Clone)]
pub enum TargetReference {
    Samples(Vec<EmbeddingVector>),
    Centroid(EmbeddingVector),
}

impl TargetReference {
    pub fn centroid(&self) -> Result<EmbeddingVector> {
        match self {
            TargetReference::Samples(s) => centroid(s),
            TargetReference::Centroid(c) => Ok(c.clone()),
        }
    }

    fn samples(&self) -> Vec<EmbeddingVector> {
        match self {
            TargetReference::Samples(s) => s.clone(),
            TargetReference::Centroid(c) => vec![c.clone()],
        }
    }
}

/// Computes `dist(mu(x_i), mu_T)` under the configured metric.
pub enum SimilarityScorer {
    Cosine { centroid: EmbeddingVector },
    Mahalanobis { centroid: EmbeddingVector, whitener: Whitener },
    Kernel(KernelSetDistance),
}

impl SimilarityScorer {
    /// Mahalanobis fits its covariance on `source`; kernel uses the given
    /// bandwidth against the target samples.
    pub fn new(metric: Metric, source: &[EmbeddingVector], target: &TargetReference, bandwidth: f64) -> Result<Self> {
        Ok(match metric {
            Metric::Cosine => SimilarityScorer::Cosine {
                centroid: target.centroid()?,
            },
            Metric::Mahalanobis => SimilarityScorer::Mahalanobis {
                centroid: target.centroid()?,
                whitener: fit_covariance(source, DEFAULT_SHRINKAGE)?.whitener()?,
            },
            Metric::Kernel => SimilarityScorer::Kernel(KernelSetDistance::new(&target.samples(), bandwidth)?),
        })
    }

    pub fn distance(&self, x: &EmbeddingVector) -> Result<f64> {
        match self {
            SimilarityScorer::Cosine { centroid } => cosine_distance(x, centroid),
            SimilarityScorer::Mahalanobis { centroid, whitener } => whitener.distance(x, centroid),
            SimilarityScorer::Kernel(k) => k.distance(x),
        }
    }
}

/// Distances and weights for every source sample.
pub fn weigh_samples(
    ids: &[String],
    source: &[EmbeddingVector],
    scorer: &SimilarityScorer,
    manifold: &ManifoldModel,
    config: &WeightConfig,
) -> Result<Vec<WeightedSample>> {
    config.validate()?;
    if ids.len() != source.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            found: ids.len(),
        });
    }
    ids.iter()
        .zip(source)
        .map(|(id, x)| WeightedSample::new(id.clone(), scorer.distance(x)?, manifold.distance(x)?, config))
        .collect()
}

pub const WEIGHT_TABLE_HEADER: [&str; 6] = [
    "sample_id",
    "dist_sim",
    "dist_manifold",
    "omega_sim",
    "omega_clean",
    "omega_hybrid",
];

pub fn write_weight_table<W: Write>(out: W, samples: &[WeightedSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WEIGHT_TABLE_HEADER)?;
    for s in samples {
        w.write_record([
            s.sample_id.clone(),
            s.dist_sim.to_string(),
            s.dist_manifold.to_string(),
            s.omega_sim.to_string(),
            s.omega_clean.to_string(),
            s.omega_hybrid.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("weight table", e))?;
    Ok(())
}

pub fn read_weight_table<R: Read>(input: R) -> Result<Vec<WeightedSample>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(WEIGHT_TABLE_HEADER) {
        return Err(Error::Parse {
            location: "weight table header".into(),
            message: format!("expected {}", WEIGHT_TABLE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|e| Error::Parse {
                location: format!("weight table line {}", i + 2),
                message: format!("{}: {e}", WEIGHT_TABLE_HEADER[j]),
            })
        };
        out.push(WeightedSample {
            sample_id: rec[0].to_string(),
            dist_sim: num(1)?,
            dist_manifold: num(2)?,
            omega_sim: num(3)?,
            omega_clean: num(4)?,
            omega_hybrid: num(5)?,
        });
    }
    Ok(out)
}
