use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::LossNormalization;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Multinomial logistic regression: `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    k: usize,
    d: usize,
    /// `k × d`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub y: usize,
    pub weight: f64,
}

impl ModelParams {
    pub fn zeros(k: usize, d: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k", "need at least two classes"));
        }
        if d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        Ok(Self {
            k,
            d,
            w: vec![0.0; k * d],
            b: vec![0.0; k],
        })
    }

    pub fn from_parts(k: usize, d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(k, d)?;
        if w.len() != k * d {
            return Err(Error::DimensionMismatch {
                expected: k * d,
                found: w.len(),
            });
        }
        if b.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: b.len(),
            });
        }
        if let Some(index) = w.iter().chain(&b).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        p.w = w;
        p.b = b;
        Ok(p)
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.w, &mut self.b)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.w[c * self.d..(c + 1) * self.d];
            *o = self.b[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Class probabilities; the max logit is subtracted before exponentiating.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut z = vec![0.0; self.k];
        self.logits_into(x, &mut z);
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Cross-entropy `-log p_y`, computed as `logsumexp(z) - z_y`.
    pub fn sample_loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_input(x)?;
        self.check_label(y)?;
        let mut z = vec![0.0; self.k];
        self.logits_into(x, &mut z);
        Ok(log_sum_exp(&z) - z[y])
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.k {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.k,
            });
        }
        Ok(())
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Weighted cross-entropy and its exact gradient.
///
/// `paper_mean` divides by the batch size, `self_normalized` by the weight
/// sum; the gradient is taken of the same expression.
pub fn weighted_ce_grad(
    params: &ModelParams,
    batch: &[Sample<'_>],
    normalization: LossNormalization,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let denom = match normalization {
        LossNormalization::PaperMean => batch.len() as f64,
        LossNormalization::SelfNormalized => batch.iter().map(|s| s.weight).sum(),
    };
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::invalid("weights", "sum must be positive"));
    }
    let (k, d) = (params.k, params.d);
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut total = 0.0;
    for s in batch {
        params.check_input(s.x)?;
        params.check_label(s.y)?;
        if !(s.weight.is_finite() && s.weight >= 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        params.logits_into(s.x, &mut z);
        total += s.weight * (log_sum_exp(&z) - z[s.y]);
        softmax_in_place(&mut z);
        let c0 = s.weight / denom;
        for c in 0..k {
            let coef = c0 * (z[c] - if c == s.y { 1.0 } else { 0.0 });
            gb[c] += coef;
            for (g, xj) in gw[c * d..(c + 1) * d].iter_mut().zip(s.x) {
                *g += coef * xj;
            }
        }
    }
    Ok((total / denom, Gradients { w: gw, b: gb }))
}

/// Versioned parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config_hash: impl Into<String>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            k: params.k,
            d: params.d,
            w: params.w.clone(),
            b: params.b.clone(),
            config_hash: config_hash.into(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version(self.version));
        }
        ModelParams::from_parts(self.k, self.d, self.w.clone(), self.b.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
