//! Fixture tables for each structure type (single header, multi-row header,
//! block-structured) against checked-in normalized CSVs.
//!
//! Set `HYSIM_BLESS=1` to rewrite the golden files after an intended change.

use std::fs;
use std::path::PathBuf;

use hysim_core::ingest::{
    clean_tables, parse_tables, parse_unit, read_normalized_rows, to_si, write_normalized_rows, write_quarantine,
    AliasDictionary, CleanConfig, IngestOutput, ParameterKind, TableFormat,
};
use hysim_core::manifold::ComponentSelector;

fn dir(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(sub)
}

fn run(file: &str, config: &CleanConfig) -> IngestOutput {
    let path = dir("fixtures").join(file);
    let ext = path.extension().unwrap().to_str().unwrap();
    let bytes = fs::read(&path).unwrap();
    let tables = parse_tables(&bytes, TableFormat::from_extension(ext).unwrap(), file).unwrap();
    clean_tables(&tables, &AliasDictionary::default(), config).unwrap()
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = dir("golden").join(name);
    if std::env::var_os("HYSIM_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden:\n--- expected\n{}\n--- actual\n{}",
        String::from_utf8_lossy(&expected),
        String::from_utf8_lossy(actual)
    );
}

fn outputs(out: &IngestOutput) -> (Vec<u8>, Vec<u8>) {
    let mut rows = Vec::new();
    write_normalized_rows(&mut rows, &out.weighted_rows()).unwrap();
    let mut q = Vec::new();
    write_quarantine(&mut q, &out.quarantine).unwrap();
    (rows, q)
}

fn single_config() -> CleanConfig {
    // the clean rows vary along one dose-like direction
    CleanConfig {
        selector: ComponentSelector::Components(1),
        ..CleanConfig::default()
    }
}

#[test]
fn single_header_table() {
    let out = run("single.csv", &single_config());
    let (rows, q) = outputs(&out);
    check_golden("single.normalized.csv", &rows);
    check_golden("single.quarantine.csv", &q);

    // S10's half-life sits far off the line the other rows follow
    assert_eq!(out.report.rejected.len(), 1);
    assert_eq!(out.report.rejected[0].row.subject, "r10");
    assert_eq!(out.report.kept.len(), 9);
    let reasons: Vec<&str> = out.quarantine.iter().map(|e| e.reason.as_str()).collect();
    assert_eq!(reasons.len(), 2, "{reasons:?}");
    assert!(reasons[1].starts_with("manifold outlier"));

    let recs = read_normalized_rows(rows.as_slice()).unwrap();
    let s01 = &recs[0];
    // 66 min, 2.50 mL/min/kg
    assert_eq!(s01.values[2], Some(1.1));
    assert!((s01.values[3].unwrap() - 0.15).abs() < 1e-15);
    // decimal comma: 2,22 mL/min/kg
    assert!((recs[3].values[3].unwrap() - 0.1332).abs() < 1e-15);
}

#[test]
fn multi_row_header_table() {
    let out = run("multi_header.csv", &CleanConfig::default());
    let (rows, q) = outputs(&out);
    check_golden("multi_header.normalized.csv", &rows);
    check_golden("multi_header.quarantine.csv", &q);
    assert!(out.quarantine.is_empty());

    let recs = read_normalized_rows(rows.as_slice()).unwrap();
    assert_eq!(recs.len(), 2);
    // oral column: CL/F fills the clearance slot, no volume reported
    assert_eq!(recs[0].values[4], None);
    assert!((recs[0].values[3].unwrap() - 0.804).abs() < 1e-12);
    assert_eq!(recs[0].values[2], Some(2.5));
    assert!((recs[1].values[2].unwrap() - 2.3).abs() < 1e-15);
}

#[test]
fn block_structured_xml_table() {
    let out = run("block.xml", &CleanConfig::default());
    let (rows, q) = outputs(&out);
    check_golden("block.normalized.csv", &rows);
    check_golden("block.quarantine.csv", &q);

    let recs = read_normalized_rows(rows.as_slice()).unwrap();
    assert_eq!(recs.len(), 6);
    let rat_low = &recs[0];
    assert!((rat_low.values[0].unwrap() - 0.21).abs() < 1e-15);
    // 2.1–2.5 h: range midpoint
    assert!((rat_low.values[2].unwrap() - 2.3).abs() < 1e-15);
    // monkey 1 mg/kg: only the below-LOQ Cmax survives
    let monkey_low = recs.iter().find(|r| r.values[1].is_none() && r.values[0] == Some(0.005)).unwrap();
    assert_eq!(monkey_low.values[2..], [None, None, None]);
}

#[test]
fn documented_conversions_are_exact() {
    let cases = [
        ("µg/mL", ParameterKind::Cmax, 1.0, 1.0),
        ("min", ParameterKind::HalfLife, 30.0, 0.5),
        ("mL/min/kg", ParameterKind::Cl, 2.0, 0.12),
    ];
    for (unit, kind, v, want) in cases {
        let (si, _) = to_si(v, &parse_unit(unit).unwrap(), &kind).unwrap();
        assert!((si - want).abs() < 1e-12, "{unit}: {si}");
    }
}

#[test]
fn outputs_are_reproducible() {
    for (file, cfg) in [
        ("single.csv", single_config()),
        ("multi_header.csv", CleanConfig::default()),
        ("block.xml", CleanConfig::default()),
    ] {
        assert_eq!(outputs(&run(file, &cfg)), outputs(&run(file, &cfg)), "{file}");
    }
}

#[test]
fn header_rows_per_structure_type() {
    for (file, want) in [("single.csv", 1), ("multi_header.csv", 2), ("block.xml", 1)] {
        let path = dir("fixtures").join(file);
        let ext = path.extension().unwrap().to_str().unwrap();
        let tables = parse_tables(&fs::read(&path).unwrap(), TableFormat::from_extension(ext).unwrap(), file).unwrap();
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0].n_header_rows, want, "{file}");
    }
    let xml = fs::read(dir("fixtures").join("block.xml")).unwrap();
    let t = &parse_tables(&xml, TableFormat::XmlTable, "block.xml").unwrap()[0];
    assert_eq!(t.grid[2][2], "210 ± 35");
    assert!(t.caption.contains("mean ± SD"));
    assert_eq!(t.footnotes.len(), 1);
    assert_eq!(t.drug.as_deref(), Some("Compound X"));
}
