use serde::{Deserialize, Serialize};

use crate::divergence::{estimate_divergence, DivergenceEstimate, Estimator};
use crate::error::{Error, Result};
use crate::weights::LossNormalization;

use super::data::LabeledSet;
use super::model::ModelParams;
use super::train::{mean_loss, weighted_set_loss};

const TELESCOPE_TOL: f64 = 1e-9;

/// Empirical split of `L_T(θ_ω) − L_T(θ₀)` into three measurable terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDecomposition {
    pub shift_error: f64,
    pub optimization_gain: f64,
    pub reweighting_bias: f64,
    pub total: f64,
    pub target_loss_theta0: f64,
    pub target_loss_theta_w: f64,
    /// Unbiased MMD² between source and target; an estimate only.
    pub mmd_estimate: DivergenceEstimate,
}

impl BoundDecomposition {
    pub fn telescoping_residual(&self) -> f64 {
        (self.total - (self.target_loss_theta_w - self.target_loss_theta0)).abs()
    }
}

/// `bandwidth = None` uses the pooled median heuristic.
pub fn bound_decomposition(
    theta0: &ModelParams,
    theta_w: &ModelParams,
    source: &LabeledSet,
    weights: &[f64],
    target: &LabeledSet,
    normalization: LossNormalization,
    bandwidth: Option<f64>,
) -> Result<BoundDecomposition> {
    if theta0.n_classes() != theta_w.n_classes() || theta0.dim() != theta_w.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta0.n_classes() * theta0.dim(),
            found: theta_w.n_classes() * theta_w.dim(),
        });
    }
    let lt0 = mean_loss(theta0, target)?;
    let ltw = mean_loss(theta_w, target)?;
    let ls0 = weighted_set_loss(theta0, source, weights, normalization)?;
    let lsw = weighted_set_loss(theta_w, source, weights, normalization)?;

    let shift_error = ltw - lsw;
    let optimization_gain = lsw - ls0;
    let reweighting_bias = ls0 - lt0;
    let report = BoundDecomposition {
        shift_error,
        optimization_gain,
        reweighting_bias,
        total: shift_error + optimization_gain + reweighting_bias,
        target_loss_theta0: lt0,
        target_loss_theta_w: ltw,
        mmd_estimate: estimate_divergence(&source.x, &target.x, Estimator::UnbiasedU, bandwidth, None)?,
    };
    let residual = report.telescoping_residual();
    if !(residual <= TELESCOPE_TOL) {
        return Err(Error::invalid(
            "bound_decomposition",
            format!("telescoping identity off by {residual:e}"),
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EmbeddingVector;
    use crate::trainer::data::Tag;

    fn set(offset: f64) -> LabeledSet {
        let mut s = LabeledSet::default();
        for i in 0..12 {
            let y = i % 2;
            let x = vec![offset + i as f64 * 0.1 - if y == 0 { 1.0 } else { 0.0 }, 0.2 * i as f64];
            s.push(i.to_string(), EmbeddingVector::new(x).unwrap(), y, Tag::Unknown);
        }
        s
    }

    #[test]
    fn identical_params_give_zero() {
        let p = ModelParams::from_parts(2, 2, vec![0.3, -0.1, 0.2, 0.4], vec![0.0, 0.1]).unwrap();
        let (s, t) = (set(0.0), set(0.5));
        let w: Vec<f64> = (0..s.len()).map(|i| 0.2 + 0.05 * i as f64).collect();
        let r = bound_decomposition(&p, &p, &s, &w, &t, LossNormalization::PaperMean, None).unwrap();
        assert_eq!(r.optimization_gain, 0.0);
        assert!(r.total.abs() < 1e-12);
        assert!(r.telescoping_residual() <= 1e-12);
        assert_eq!(r.mmd_estimate.estimator, Estimator::UnbiasedU);
    }

    #[test]
    fn mismatched_params_rejected() {
        let a = ModelParams::zeros(2, 2).unwrap();
        let b = ModelParams::zeros(3, 2).unwrap();
        let s = set(0.0);
        assert!(bound_decomposition(&a, &b, &s, &vec![1.0; s.len()], &s, LossNormalization::PaperMean, None).is_err());
    }
}
