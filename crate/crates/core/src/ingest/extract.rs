//! Table grid to SI-normalized [`PKRecord`]s, with every rejected cell sent
//! to quarantine.
//!
//! Two layouts are recognized. Parameter-major tables have a column whose
//! body cells mostly name parameter kinds; every other numeric column is
//! then one subject (usually a dose group or species). Subject-major tables
//! have one subject per row and parameter kinds in the header.

use log::debug;
use serde::{Deserialize, Serialize};

use super::schema::{header_unit, normalize_label, to_si, AliasDictionary, ParameterKind, Role};
use super::table::{is_block_label_row, RawTable};
use super::units::{parse_unit, UnitExpression};
use super::values::{parse_value, Qualifier};

/// Grid coordinates of one cell; rows count header rows too.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PKRecord {
    pub drug_name: String,
    pub species_tag: String,
    pub parameter_kind: ParameterKind,
    /// In the canonical unit of `parameter_kind`.
    pub value: f64,
    pub error_sd: Option<f64>,
    /// Canonical unit the value is expressed in.
    pub unit: UnitExpression,
    /// Unit text as printed in the table.
    pub source_unit: String,
    pub qualifier: Qualifier,
    /// Row-group key within the table.
    pub subject: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub table_id: String,
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub records: Vec<PKRecord>,
    pub quarantine: Vec<QuarantineEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SubjectMajor,
    ParameterMajor { parameter_col: usize },
}

struct ColumnInfo {
    role: Role,
    label: String,
    kind: Option<ParameterKind>,
    unit: Option<UnitExpression>,
    unit_text: String,
    is_sd: bool,
}

fn column_info(table: &RawTable, aliases: &AliasDictionary) -> Vec<ColumnInfo> {
    (0..table.n_cols())
        .map(|c| {
            let cells: Vec<&str> = table
                .header_rows()
                .iter()
                .map(|r| r[c].trim())
                .filter(|s| !s.is_empty())
                .collect();
            let role = cells
                .iter()
                .rev()
                .map(|s| aliases.role(s))
                .find(|r| *r != Role::Other)
                .unwrap_or(Role::Other);
            let kind = cells.iter().rev().find_map(|s| aliases.parameter_kind(s));
            let unit_cell = cells.iter().rev().find(|s| header_unit(s).is_some());
            let mut label: Vec<&str> = Vec::new();
            for s in &cells {
                if label.last() != Some(s) {
                    label.push(s);
                }
            }
            let is_sd = cells.last().is_some_and(|s| normalize_label(s).starts_with("sd"));
            ColumnInfo {
                role,
                label: label.join(" "),
                kind,
                unit: unit_cell.and_then(|s| header_unit(s)),
                unit_text: unit_cell.map(|s| s.to_string()).unwrap_or_default(),
                is_sd,
            }
        })
        .collect()
}

/// Chooses the layout. A column is a parameter column when at least half of
/// its non-empty body cells (block labels excluded) name a parameter kind.
pub fn detect_layout(table: &RawTable, aliases: &AliasDictionary) -> Layout {
    for c in 0..table.n_cols() {
        let mut named = 0usize;
        let mut total = 0usize;
        for row in table.body_rows() {
            if is_block_label_row(row) && c == 0 && aliases.parameter_kind(&row[0]).is_none() {
                continue;
            }
            let cell = row[c].trim();
            if cell.is_empty() {
                continue;
            }
            total += 1;
            if aliases.parameter_kind(cell).is_some() {
                named += 1;
            }
        }
        if named > 0 && 2 * named >= total {
            return Layout::ParameterMajor { parameter_col: c };
        }
    }
    Layout::SubjectMajor
}

struct Context<'a> {
    table: &'a RawTable,
    out: Extraction,
}

impl Context<'_> {
    fn quarantine(&mut self, row: usize, col: usize, raw: &str, reason: String) {
        self.out.quarantine.push(QuarantineEntry {
            table_id: self.table.table_id.clone(),
            row: Some(row),
            col: Some(col),
            raw: raw.to_string(),
            reason,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        row: usize,
        col: usize,
        kind: ParameterKind,
        unit: Option<(&UnitExpression, &str)>,
        sd_cell: Option<&str>,
        subject: String,
        drug: String,
        species: String,
    ) {
        let raw = self.table.grid[row][col].clone();
        let parsed = match parse_value(&raw) {
            Ok(p) => p,
            Err(e) => return self.quarantine(row, col, &raw, e.to_string()),
        };
        let Some(value) = parsed.value else {
            return;
        };
        let tracked = kind.canonical_dimensions().is_some();
        let dimensionless = UnitExpression::dimensionless();
        let (unit, source_unit) = match unit {
            Some((u, text)) => (u, text.to_string()),
            None if tracked => return self.quarantine(row, col, &raw, format!("missing unit for {kind}")),
            None => (&dimensionless, String::new()),
        };
        let (si, canonical) = match to_si(value, unit, &kind) {
            Ok(x) => x,
            Err(e) => return self.quarantine(row, col, &raw, e.to_string()),
        };
        let mut error_sd = parsed.error_sd;
        if error_sd.is_none() {
            if let Some(cell) = sd_cell {
                match parse_value(cell) {
                    Ok(p) => error_sd = p.value.filter(|v| *v >= 0.0),
                    Err(e) => debug!("ignoring sd cell in {}: {e}", self.table.table_id),
                }
            }
        }
        self.out.records.push(PKRecord {
            drug_name: drug,
            species_tag: species,
            parameter_kind: kind,
            value: si,
            error_sd: error_sd.map(|s| unit.convert(s)),
            unit: canonical,
            source_unit,
            qualifier: parsed.qualifier,
            subject,
            provenance: Provenance {
                table_id: self.table.table_id.clone(),
                row,
                col,
            },
        });
    }
}

fn cell_for_role(row: &[String], cols: &[ColumnInfo], role: Role) -> Option<String> {
    cols.iter()
        .position(|c| c.role == role)
        .map(|i| row[i].trim().to_string())
        .filter(|s| !s.is_empty())
}

/// The SD column directly right of `col`, if any.
fn sd_column(cols: &[ColumnInfo], col: usize) -> Option<usize> {
    let next = col + 1;
    (next < cols.len() && cols[next].is_sd && cols[next].role == Role::Statistic).then_some(next)
}

/// Extracts and SI-normalizes every measurement in a table.
pub fn extract_records(table: &RawTable, aliases: &AliasDictionary) -> Extraction {
    let cols = column_info(table, aliases);
    let mut ctx = Context {
        table,
        out: Extraction::default(),
    };
    let h = table.n_header_rows;
    let mut block: Option<String> = None;

    match detect_layout(table, aliases) {
        Layout::ParameterMajor { parameter_col: p } => {
            let unit_col = (0..cols.len()).find(|&c| c != p && cols[c].role == Role::Unit);
            let value_cols: Vec<usize> = (0..cols.len())
                .filter(|&c| {
                    c != p
                        && Some(c) != unit_col
                        && !matches!(cols[c].role, Role::Drug | Role::Species | Role::Statistic)
                        && table.body_rows().iter().any(|r| {
                            matches!(parse_value(&r[c]), Ok(v) if v.value.is_some())
                        })
                })
                .collect();
            for (i, row) in table.body_rows().iter().enumerate() {
                let r = h + i;
                if is_block_label_row(row) && aliases.parameter_kind(&row[0]).is_none() {
                    block = Some(row[0].trim().to_string());
                    continue;
                }
                let label = row[p].trim();
                if label.is_empty() {
                    continue;
                }
                let kind = aliases
                    .parameter_kind(label)
                    .unwrap_or_else(|| ParameterKind::Other(normalize_label(label)));
                let unit_text = unit_col
                    .map(|u| row[u].trim().to_string())
                    .filter(|s| !s.is_empty());
                let unit = match &unit_text {
                    Some(text) => match parse_unit(text) {
                        Ok(u) => Some((u, text.clone())),
                        Err(e) if kind.canonical_dimensions().is_some() => {
                            for &c in &value_cols {
                                if !row[c].trim().is_empty() {
                                    let raw = row[c].clone();
                                    ctx.quarantine(r, c, &raw, e.to_string());
                                }
                            }
                            continue;
                        }
                        Err(_) => None,
                    },
                    None => header_unit(label).map(|u| (u, label.to_string())),
                };
                let drug = cell_for_role(row, &cols, Role::Drug)
                    .or_else(|| table.drug.clone())
                    .unwrap_or_default();
                let species = cell_for_role(row, &cols, Role::Species)
                    .or_else(|| block.clone())
                    .or_else(|| table.species.clone())
                    .unwrap_or_default();
                for &c in &value_cols {
                    let header = if cols[c].label.is_empty() {
                        format!("col{c}")
                    } else {
                        cols[c].label.clone()
                    };
                    let subject = match &block {
                        Some(b) => format!("{b} | {header}"),
                        None => header,
                    };
                    let sd = sd_column(&cols, c).map(|s| row[s].as_str());
                    ctx.emit(
                        r,
                        c,
                        kind.clone(),
                        unit.as_ref().map(|(u, t)| (u, t.as_str())),
                        sd,
                        subject,
                        drug.clone(),
                        species.clone(),
                    );
                }
            }
        }
        Layout::SubjectMajor => {
            let param_cols: Vec<usize> = (0..cols.len()).filter(|&c| cols[c].kind.is_some()).collect();
            for (i, row) in table.body_rows().iter().enumerate() {
                let r = h + i;
                if is_block_label_row(row) && !row[0].trim().is_empty() && param_cols.first() != Some(&0) {
                    block = Some(row[0].trim().to_string());
                    continue;
                }
                let drug = cell_for_role(row, &cols, Role::Drug)
                    .or_else(|| table.drug.clone())
                    .unwrap_or_default();
                let species = cell_for_role(row, &cols, Role::Species)
                    .or_else(|| block.clone())
                    .or_else(|| table.species.clone())
                    .unwrap_or_default();
                let subject = format!("r{r}");
                for &c in &param_cols {
                    let info = &cols[c];
                    let kind = info.kind.clone().expect("parameter column");
                    let sd = sd_column(&cols, c).map(|s| row[s].as_str());
                    ctx.emit(
                        r,
                        c,
                        kind,
                        info.unit.as_ref().map(|u| (u, info.unit_text.as_str())),
                        sd,
                        subject.clone(),
                        drug.clone(),
                        species.clone(),
                    );
                }
            }
        }
    }
    ctx.out
}
