//! Pharmacokinetic table normalization: raw CSV/XML tables to canonical
//! `[Cmax, AUC, t½, CL, Vd]` rows with clean weights and a quarantine of
//! everything that could not be used.

mod clean;
mod extract;
mod schema;
mod table;
mod units;
mod values;
mod vectorize;

pub use clean::{clean_rows, clean_tables, CleanConfig, CleanReport, CleanedRow, IngestOutput};
pub use extract::{detect_layout, extract_records, Extraction, Layout, PKRecord, Provenance, QuarantineEntry};
pub use schema::{
    header_unit, map_schema, map_schema_with_assist, normalize_label, to_si, AliasDictionary, AliasFile, ParameterKind,
    Role, SchemaAssist,
};
pub use table::{detect_header_rows, parse_table, parse_tables, Padding, RawTable, TableFormat};
pub use units::{parse_unit, BaseDimension, BaseUnit, UnitExpression, UnitFactor};
pub use values::{is_numeric_cell, parse_number, parse_value, ParsedValue, Qualifier};
pub use vectorize::{
    read_normalized_rows, slot_of, vectorize_rows, write_normalized_rows, write_quarantine, NormalizedPKRow,
    NormalizedRecord, NORMALIZED_HEADER, QUARANTINE_HEADER, SLOT_KINDS,
};
