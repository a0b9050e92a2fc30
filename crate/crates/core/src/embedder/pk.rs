use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::NormalizedPKRow;
use crate::metrics::EmbeddingVector;

/// Per-slot mean and sample standard deviation over unmasked entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: [f64; 5],
    pub std: [f64; 5],
    pub count: [usize; 5],
}

impl ColumnStats {
    pub fn fit(rows: &[NormalizedPKRow]) -> Self {
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        let mut count = [0usize; 5];
        for slot in 0..5 {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.value(slot)).collect();
            count[slot] = vals.len();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            mean[slot] = m;
            if vals.len() >= 2 {
                std[slot] = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
            }
            if std[slot] == 0.0 {
                warn!("slot {slot} has zero spread over {} values; standardized to 0", vals.len());
            }
        }
        Self { mean, std, count }
    }
}

/// Standardized `[Cmax, AUC, t½, CL, Vd]`; masked slots and zero-spread
/// columns map to 0.
pub fn embed_pk_row(row: &NormalizedPKRow, stats: &ColumnStats) -> Result<EmbeddingVector> {
    let v = (0..5)
        .map(|s| match row.value(s) {
            Some(x) if stats.std[s] > 0.0 => (x - stats.mean[s]) / stats.std[s],
            _ => 0.0,
        })
        .collect();
    EmbeddingVector::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: [Option<f64>; 5]) -> NormalizedPKRow {
        NormalizedPKRow {
            row_id: String::new(),
            values: values.map(|v| v.unwrap_or(f64::NAN)),
            missing_mask: values.map(|v| v.is_none()),
            provenance: Default::default(),
            table_id: "t".into(),
            subject: String::new(),
            source_row: 0,
        }
    }

    #[test]
    fn mean_row_is_origin() {
        let rows = vec![
            row([Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)]),
            row([Some(3.0), Some(4.0), None, Some(6.0), Some(9.0)]),
        ];
        let stats = ColumnStats::fit(&rows);
        let at_mean = row([Some(2.0), Some(3.0), None, Some(5.0), Some(7.0)]);
        assert_eq!(embed_pk_row(&at_mean, &stats).unwrap().as_slice(), &[0.0; 5]);
        assert_eq!(stats.count, [2, 2, 0, 2, 2]);
    }

    #[test]
    fn one_std_above_in_first_slot() {
        let rows = vec![row([Some(1.0), None, None, None, None]), row([Some(3.0), None, None, None, None])];
        let stats = ColumnStats::fit(&rows);
        let std = 2f64.sqrt();
        let x = row([Some(2.0 + std), None, None, None, None]);
        let e = embed_pk_row(&x, &stats).unwrap();
        assert!((e.as_slice()[0] - 1.0).abs() < 1e-15);
        assert_eq!(&e.as_slice()[1..], &[0.0; 4]);
    }

    #[test]
    fn order_invariant_and_zero_spread() {
        let mut rows = vec![
            row([Some(1.0), Some(7.0), None, None, None]),
            row([Some(2.0), Some(7.0), None, None, None]),
            row([Some(4.5), Some(7.0), None, None, None]),
        ];
        let a = ColumnStats::fit(&rows);
        rows.reverse();
        let b = ColumnStats::fit(&rows);
        assert_eq!(a.mean[0], b.mean[0]);
        assert!((a.std[0] - b.std[0]).abs() < 1e-15);
        assert_eq!(a.std[1], 0.0);
        assert_eq!(embed_pk_row(&rows[0], &a).unwrap().as_slice()[1], 0.0);
    }
}
