use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::data::LabeledSet;
use super::model::ModelParams;

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub count: usize,
    /// 0 for empty bins.
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ece: f64,
    pub n_bins: usize,
    pub per_bin: Vec<BinStat>,
    /// Mean cross-entropy.
    pub loss: f64,
}

/// Expected calibration error over `n_bins` equal-width bins of confidence
/// in [0, 1]; a confidence of exactly 1 falls in the last bin.
pub fn calibration(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<(f64, Vec<BinStat>)> {
    if confidence.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if confidence.len() != correct.len() {
        return Err(Error::DimensionMismatch {
            expected: confidence.len(),
            found: correct.len(),
        });
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins", "must be at least 1"));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&c, &ok) in confidence.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid("confidence", format!("{c} outside [0, 1]")));
        }
        let b = ((c * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidence.len() as f64;
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            if count[b] == 0 {
                return BinStat {
                    count: 0,
                    mean_confidence: 0.0,
                    accuracy: 0.0,
                };
            }
            let m = count[b] as f64;
            let stat = BinStat {
                count: count[b],
                mean_confidence: conf_sum[b] / m,
                accuracy: hits[b] as f64 / m,
            };
            ece += m / n * (stat.accuracy - stat.mean_confidence).abs();
            stat
        })
        .collect();
    Ok((ece, bins))
}

/// Mean per-class F1. A class with no true positives but some false
/// positives or negatives scores 0; classes absent from both predictions
/// and labels are left out of the average.
pub fn macro_f1(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fneg = vec![0usize; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        for &c in &[p, t] {
            if c >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    classes: n_classes,
                });
            }
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let scores: Vec<f64> = (0..n_classes)
        .filter(|&c| tp[c] + fp[c] + fneg[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64)
        .collect();
    if scores.is_empty() {
        return Err(Error::EmptyCollection);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Accuracy, macro-F1, ECE and mean loss. Ties in the arg-max go to the
/// lower class index.
pub fn evaluate(params: &ModelParams, data: &LabeledSet, n_bins: usize) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let k = params.n_classes();
    let mut predicted = Vec::with_capacity(data.len());
    let mut confidence = Vec::with_capacity(data.len());
    let mut loss = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let p = params.forward(x.as_slice())?;
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, classes: k });
        }
        let (arg, &conf) = p
            .iter()
            .enumerate()
            .fold((0, &p[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
        predicted.push(arg);
        confidence.push(conf);
        loss += params.sample_loss(x.as_slice(), y)?;
    }
    let correct: Vec<bool> = predicted.iter().zip(&data.y).map(|(p, t)| p == t).collect();
    let n = data.len();
    let accuracy = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let (ece, per_bin) = calibration(&confidence, &correct, n_bins)?;
    Ok(EvalReport {
        n,
        accuracy,
        macro_f1: macro_f1(&predicted, &data.y, k)?,
        ece,
        n_bins,
        per_bin,
        loss: loss / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_hand_example() {
        let (ece, bins) = calibration(&[0.8, 0.8], &[true, false], 15).unwrap();
        assert!((ece - 0.3).abs() < 1e-15);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 2);
    }

    #[test]
    fn perfect_confident_predictions() {
        let (ece, _) = calibration(&[1.0; 5], &[true; 5], 15).unwrap();
        assert_eq!(ece, 0.0);
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn uniform_confidence_gives_accuracy_gap() {
        let correct = [true, false, false, true, false, false];
        let (ece, _) = calibration(&[1.0 / 3.0; 6], &correct, 15).unwrap();
        assert!((ece - (2.0 / 6.0 - 1.0 / 3.0f64).abs()).abs() < 1e-15);
    }

    #[test]
    fn f1_conventions() {
        // class 2 never appears: excluded; class 1 has TP = 0: scores 0
        let f1 = macro_f1(&[0, 0, 0], &[0, 0, 1], 3).unwrap();
        let f1_class0 = 2.0 * 2.0 / (4.0 + 1.0);
        assert!((f1 - (f1_class0 + 0.0) / 2.0).abs() < 1e-15);
        assert!(macro_f1(&[0], &[3], 2).is_err());
    }

    #[test]
    fn evaluate_uniform_model() {
        let params = ModelParams::zeros(2, 1).unwrap();
        let mut data = LabeledSet::default();
        for i in 0..4 {
            data.push(
                i.to_string(),
                crate::EmbeddingVector::new(vec![i as f64]).unwrap(),
                i % 2,
                super::super::data::Tag::Unknown,
            );
        }
        let r = evaluate(&params, &data, DEFAULT_BINS).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.ece - 0.0).abs() < 1e-15);
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
        assert!(evaluate(&params, &LabeledSet::default(), 15).is_err());
    }
}
