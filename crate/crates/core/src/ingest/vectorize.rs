use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::extract::{PKRecord, Provenance};
use super::schema::ParameterKind;

pub const SLOT_KINDS: [ParameterKind; 5] = [
    ParameterKind::Cmax,
    ParameterKind::Auc,
    ParameterKind::HalfLife,
    ParameterKind::Cl,
    ParameterKind::Vd,
];

pub const NORMALIZED_HEADER: [&str; 10] = [
    "row_id",
    "cmax_mg_per_l",
    "auc_mg_h_per_l",
    "thalf_h",
    "cl_l_per_h_per_kg",
    "vd_l_per_kg",
    "mask",
    "omega_clean",
    "table_id",
    "source_row",
];

pub const QUARANTINE_HEADER: [&str; 5] = ["table_id", "row", "col", "raw", "reason"];

pub fn slot_of(kind: &ParameterKind) -> Option<usize> {
    SLOT_KINDS.iter().position(|k| k == kind)
}

/// `[Cmax, AUC, t½, CL, Vd]` for one subject. Masked slots hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPKRow {
    pub row_id: String,
    pub values: [f64; 5],
    /// `true` marks a missing slot.
    pub missing_mask: [bool; 5],
    pub provenance: [Option<Provenance>; 5],
    pub table_id: String,
    pub subject: String,
    /// Smallest grid row contributing a value.
    pub source_row: usize,
}

impl NormalizedPKRow {
    pub fn value(&self, slot: usize) -> Option<f64> {
        (!self.missing_mask[slot]).then_some(self.values[slot])
    }

    pub fn mask_string(&self) -> String {
        self.missing_mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
    }
}

/// Groups records by `(table_id, subject)` and lays the five tracked kinds
/// into fixed slots. Within a slot the record with the lowest `(row, col)`
/// wins. Groups without any tracked kind are skipped. Output is ordered by
/// table, then by each group's first cell.
pub fn vectorize_rows(records: &[PKRecord]) -> Vec<NormalizedPKRow> {
    let mut groups: BTreeMap<(&str, &str), [Option<&PKRecord>; 5]> = BTreeMap::new();
    for rec in records {
        let Some(slot) = slot_of(&rec.parameter_kind) else {
            continue;
        };
        let entry = groups
            .entry((rec.provenance.table_id.as_str(), rec.subject.as_str()))
            .or_insert([None; 5]);
        match entry[slot] {
            None => entry[slot] = Some(rec),
            Some(prev) => {
                let (keep, drop) = if (rec.provenance.row, rec.provenance.col) < (prev.provenance.row, prev.provenance.col) {
                    (rec, prev)
                } else {
                    (prev, rec)
                };
                warn!(
                    "duplicate {} for {} in {}: keeping row {} col {}, ignoring row {} col {}",
                    rec.parameter_kind,
                    rec.subject,
                    rec.provenance.table_id,
                    keep.provenance.row,
                    keep.provenance.col,
                    drop.provenance.row,
                    drop.provenance.col
                );
                entry[slot] = Some(keep);
            }
        }
    }

    let mut rows: Vec<(usize, usize, NormalizedPKRow)> = groups
        .into_iter()
        .map(|((table_id, subject), slots)| {
            let mut values = [f64::NAN; 5];
            let mut missing_mask = [true; 5];
            let mut provenance: [Option<Provenance>; 5] = Default::default();
            let mut first = (usize::MAX, usize::MAX);
            for (i, rec) in slots.iter().enumerate() {
                if let Some(rec) = rec {
                    values[i] = rec.value;
                    missing_mask[i] = false;
                    provenance[i] = Some(rec.provenance.clone());
                    first = first.min((rec.provenance.row, rec.provenance.col));
                }
            }
            let row = NormalizedPKRow {
                row_id: String::new(),
                values,
                missing_mask,
                provenance,
                table_id: table_id.to_string(),
                subject: subject.to_string(),
                source_row: first.0,
            };
            (first.0, first.1, row)
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.2.table_id.as_str(), a.0, a.1, a.2.subject.as_str()).cmp(&(b.2.table_id.as_str(), b.0, b.1, b.2.subject.as_str()))
    });

    let mut counter: BTreeMap<String, usize> = BTreeMap::new();
    rows.into_iter()
        .map(|(_, _, mut row)| {
            let n = counter.entry(row.table_id.clone()).or_default();
            *n += 1;
            row.row_id = format!("{}:{}", row.table_id, n);
            row
        })
        .collect()
}

/// Writes normalized rows with their clean weights. Masked cells are left
/// empty.
pub fn write_normalized_rows<W: Write>(out: W, rows: &[(NormalizedPKRow, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NORMALIZED_HEADER)?;
    for (row, omega) in rows {
        let mut rec: Vec<String> = Vec::with_capacity(10);
        rec.push(row.row_id.clone());
        for slot in 0..5 {
            rec.push(row.value(slot).map(|v| v.to_string()).unwrap_or_default());
        }
        rec.push(row.mask_string());
        rec.push(omega.to_string());
        rec.push(row.table_id.clone());
        rec.push(row.source_row.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<normalized rows>", e))?;
    Ok(())
}

/// One row as read back from a normalized CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub row_id: String,
    pub values: [Option<f64>; 5],
    pub omega_clean: f64,
    pub table_id: String,
    pub source_row: usize,
}

impl From<NormalizedRecord> for NormalizedPKRow {
    /// Cell provenance is not stored in the CSV and comes back empty.
    fn from(r: NormalizedRecord) -> Self {
        NormalizedPKRow {
            row_id: r.row_id,
            values: r.values.map(|v| v.unwrap_or(f64::NAN)),
            missing_mask: r.values.map(|v| v.is_none()),
            provenance: Default::default(),
            table_id: r.table_id,
            subject: String::new(),
            source_row: r.source_row,
        }
    }
}

pub fn read_normalized_rows<R: Read>(input: R) -> Result<Vec<NormalizedRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(NORMALIZED_HEADER) {
        return Err(Error::Parse {
            location: "header".into(),
            message: format!("expected {}", NORMALIZED_HEADER.join(",")),
        });
    }
    let bad = |line: usize, what: &str| Error::Parse {
        location: format!("line {line}"),
        message: format!("bad {what}"),
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mask: Vec<char> = rec[6].chars().collect();
        if mask.len() != 5 || mask.iter().any(|c| !matches!(c, '0' | '1')) {
            return Err(bad(line, "mask"));
        }
        let mut values = [None; 5];
        for (slot, v) in values.iter_mut().enumerate() {
            let cell = &rec[1 + slot];
            match (mask[slot], cell.is_empty()) {
                ('1', true) => {}
                ('0', false) => *v = Some(cell.parse::<f64>().map_err(|_| bad(line, "value"))?),
                _ => return Err(bad(line, "mask/value agreement")),
            }
        }
        out.push(NormalizedRecord {
            row_id: rec[0].to_string(),
            values,
            omega_clean: rec[7].parse().map_err(|_| bad(line, "omega_clean"))?,
            table_id: rec[8].to_string(),
            source_row: rec[9].parse().map_err(|_| bad(line, "source_row"))?,
        });
    }
    Ok(out)
}

pub fn write_quarantine<W: Write>(out: W, entries: &[super::extract::QuarantineEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(QUARANTINE_HEADER)?;
    for q in entries {
        w.write_record([
            q.table_id.clone(),
            q.row.map(|r| r.to_string()).unwrap_or_default(),
            q.col.map(|c| c.to_string()).unwrap_or_default(),
            q.raw.clone(),
            q.reason.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<quarantine>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::units::UnitExpression;
    use crate::ingest::values::Qualifier;

    fn rec(subject: &str, kind: ParameterKind, value: f64, row: usize, col: usize) -> PKRecord {
        PKRecord {
            drug_name: String::new(),
            species_tag: String::new(),
            parameter_kind: kind,
            value,
            error_sd: None,
            unit: UnitExpression::dimensionless(),
            source_unit: String::new(),
            qualifier: Qualifier::Exact,
            subject: subject.into(),
            provenance: Provenance {
                table_id: "t".into(),
                row,
                col,
            },
        }
    }

    #[test]
    fn full_and_partial_rows() {
        let mut recs: Vec<PKRecord> = SLOT_KINDS
            .iter()
            .enumerate()
            .map(|(i, k)| rec("a", k.clone(), i as f64 + 1.0, 1, i))
            .collect();
        recs.push(rec("b", ParameterKind::Cmax, 1.0, 2, 0));
        let rows = vectorize_rows(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].values, [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(rows[0].missing_mask, [false; 5]);
        assert_eq!(rows[1].values[0], 1.0);
        assert_eq!(rows[1].missing_mask, [false, true, true, true, true]);
        assert_eq!(rows[1].mask_string(), "01111");
        assert_eq!((rows[0].row_id.as_str(), rows[1].row_id.as_str()), ("t:1", "t:2"));
    }

    #[test]
    fn duplicates_keep_lowest_cell_regardless_of_order() {
        let a = rec("s", ParameterKind::Cmax, 1.0, 3, 1);
        let b = rec("s", ParameterKind::Cmax, 2.0, 4, 1);
        let fwd = vectorize_rows(&[a.clone(), b.clone()]);
        let rev = vectorize_rows(&[b, a]);
        assert_eq!(fwd[0].values[0], 1.0);
        assert_eq!(fwd[0].values[0].to_bits(), rev[0].values[0].to_bits());
        assert_eq!(fwd[0].provenance, rev[0].provenance);
    }

    #[test]
    fn untracked_kinds_ignored() {
        let rows = vectorize_rows(&[rec("s", ParameterKind::Tmax, 1.0, 1, 1)]);
        assert!(rows.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vectorize_rows(&[rec("s", ParameterKind::Cmax, 0.1 + 0.2, 1, 1), rec("s", ParameterKind::Vd, 3.0, 2, 1)]);
        let mut buf = Vec::new();
        write_normalized_rows(&mut buf, &[(rows[0].clone(), 0.5)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "t:1,0.30000000000000004,,,,3,01110,0.5,t,1");
        let back = read_normalized_rows(buf.as_slice()).unwrap();
        assert_eq!(back[0].values[0], Some(0.1 + 0.2));
        assert_eq!(back[0].values[1], None);
        assert_eq!(back[0].omega_clean, 0.5);
    }
}
