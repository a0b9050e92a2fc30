use log::warn;
use serde::{Deserialize, Serialize};

use crate::embedder::{embed_pk_row, ColumnStats};
use crate::error::{Error, Result};
use crate::manifold::{fit_pca, gate, outlier_threshold, ComponentSelector, GateDecision, GateMode, ManifoldModel};
use crate::metrics::EmbeddingVector;
use crate::weights::clean_weight;

use super::extract::{extract_records, QuarantineEntry};
use super::schema::AliasDictionary;
use super::table::RawTable;
use super::vectorize::{vectorize_rows, NormalizedPKRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    pub selector: ComponentSelector,
    pub beta: f64,
    pub gate_mode: GateMode,
    /// Refit the manifold on kept rows before computing final weights.
    pub refit: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            selector: ComponentSelector::default(),
            beta: 1.0,
            gate_mode: GateMode::Reject,
            refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanedRow {
    pub row: NormalizedPKRow,
    pub embedding: EmbeddingVector,
    pub distance: f64,
    pub omega_clean: f64,
    pub decision: GateDecision,
}

#[derive(Debug, Clone)]
pub struct CleanReport {
    pub kept: Vec<CleanedRow>,
    pub rejected: Vec<CleanedRow>,
    /// Slots masked in every row and left out of the embedding.
    pub dropped_slots: Vec<usize>,
    pub stats: ColumnStats,
    pub threshold: f64,
    pub manifold: ManifoldModel,
}

/// Standardizes rows, fits the manifold, gates at mean + 2·std of the
/// fitting distances and attaches clean weights.
pub fn clean_rows(rows: Vec<NormalizedPKRow>, config: &CleanConfig) -> Result<CleanReport> {
    if !(config.beta.is_finite() && config.beta >= 0.0) {
        return Err(Error::invalid("beta", "must be finite and non-negative"));
    }
    if rows.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: rows.len(),
        });
    }
    let stats = ColumnStats::fit(&rows);
    let kept_slots: Vec<usize> = (0..5).filter(|&s| stats.count[s] > 0).collect();
    let dropped_slots: Vec<usize> = (0..5).filter(|&s| stats.count[s] == 0).collect();
    for s in &dropped_slots {
        warn!("slot {s} is masked in every row; dropped from the embedding");
    }
    if kept_slots.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let embeddings = rows
        .iter()
        .map(|r| {
            let full = embed_pk_row(r, &stats)?;
            EmbeddingVector::new(kept_slots.iter().map(|&s| full.as_slice()[s]).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut manifold = fit_pca(&embeddings, config.selector)?;
    let distances = embeddings
        .iter()
        .map(|e| manifold.distance(e))
        .collect::<Result<Vec<_>>>()?;
    let threshold = outlier_threshold(&distances)?;
    let decisions = gate(&distances, threshold, config.gate_mode, config.beta)?;

    let mut final_distances = distances;
    if config.refit {
        let kept: Vec<EmbeddingVector> = decisions
            .iter()
            .filter(|d| d.is_kept())
            .map(|d| embeddings[d.index].clone())
            .collect();
        if kept.len() >= 2 && kept.len() < embeddings.len() {
            manifold = fit_pca(&kept, config.selector)?;
            final_distances = embeddings
                .iter()
                .map(|e| manifold.distance(e))
                .collect::<Result<Vec<_>>>()?;
        }
    }

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for ((row, embedding), (decision, distance)) in rows
        .into_iter()
        .zip(embeddings)
        .zip(decisions.into_iter().zip(final_distances))
    {
        let cleaned = CleanedRow {
            row,
            embedding,
            distance,
            omega_clean: clean_weight(distance, config.beta)?,
            decision,
        };
        if cleaned.decision.is_kept() {
            kept.push(cleaned);
        } else {
            rejected.push(cleaned);
        }
    }
    Ok(CleanReport {
        kept,
        rejected,
        dropped_slots,
        stats,
        threshold,
        manifold,
    })
}

/// End-to-end table normalization result.
#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub report: CleanReport,
    pub quarantine: Vec<QuarantineEntry>,
}

impl IngestOutput {
    /// Kept rows paired with their clean weights, ready for writing.
    pub fn weighted_rows(&self) -> Vec<(NormalizedPKRow, f64)> {
        self.report.kept.iter().map(|c| (c.row.clone(), c.omega_clean)).collect()
    }
}

/// Extracts, vectorizes and cleans a set of tables. Rows rejected by the
/// gate are appended to the quarantine.
pub fn clean_tables(tables: &[RawTable], aliases: &AliasDictionary, config: &CleanConfig) -> Result<IngestOutput> {
    let mut records = Vec::new();
    let mut quarantine = Vec::new();
    for t in tables {
        let ex = extract_records(t, aliases);
        records.extend(ex.records);
        quarantine.extend(ex.quarantine);
    }
    let rows = vectorize_rows(&records);
    let report = clean_rows(rows, config)?;
    for r in &report.rejected {
        quarantine.push(QuarantineEntry {
            table_id: r.row.table_id.clone(),
            row: Some(r.row.source_row),
            col: None,
            raw: r.row.row_id.clone(),
            reason: format!("manifold outlier: distance {} > threshold {}", r.distance, report.threshold),
        });
    }
    Ok(IngestOutput { report, quarantine })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, values: [f64; 5]) -> NormalizedPKRow {
        NormalizedPKRow {
            row_id: format!("t:{i}"),
            values,
            missing_mask: [false; 5],
            provenance: Default::default(),
            table_id: "t".into(),
            subject: format!("r{i}"),
            source_row: i,
        }
    }

    #[test]
    fn identical_rows_all_kept() {
        let rows = (0..4).map(|i| row(i, [1.0, 2.0, 3.0, 4.0, 5.0])).collect();
        let rep = clean_rows(rows, &CleanConfig::default()).unwrap();
        assert_eq!(rep.kept.len(), 4);
        assert!(rep.kept.iter().all(|c| c.distance == 0.0 && c.omega_clean == 1.0));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            clean_rows(vec![row(0, [1.0; 5])], &CleanConfig::default()),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(clean_rows(Vec::new(), &CleanConfig::default()).is_err());
    }

    #[test]
    fn fully_masked_slot_dropped() {
        let mut rows: Vec<NormalizedPKRow> = (0..5).map(|i| row(i, [i as f64, 2.0 * i as f64, 1.0, 1.0, 0.0])).collect();
        for r in &mut rows {
            r.missing_mask[4] = true;
            r.values[4] = f64::NAN;
        }
        let rep = clean_rows(rows, &CleanConfig::default()).unwrap();
        assert_eq!(rep.dropped_slots, vec![4]);
        assert_eq!(rep.kept[0].embedding.dim(), 4);
    }

    #[test]
    fn downweight_mode_keeps_everything() {
        let mut rows: Vec<NormalizedPKRow> = (0..10)
            .map(|i| {
                let t = i as f64;
                row(i, [1.0 + t, 2.0 + 2.0 * t, 3.0 + 0.5 * t, 4.0 - 0.1 * t, 5.0 + t])
            })
            .collect();
        rows[3].values[0] *= 1000.0;
        let cfg = CleanConfig {
            selector: ComponentSelector::Components(1),
            gate_mode: GateMode::Downweight,
            ..CleanConfig::default()
        };
        let rep = clean_rows(rows, &cfg).unwrap();
        assert_eq!(rep.kept.len(), 10);
        let worst = rep.kept.iter().min_by(|a, b| a.omega_clean.total_cmp(&b.omega_clean)).unwrap();
        assert_eq!(worst.row.row_id, "t:3");
    }
}
