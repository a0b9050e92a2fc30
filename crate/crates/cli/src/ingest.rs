use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use hysim_core::ingest::{
    clean_tables, parse_tables, write_normalized_rows, write_quarantine, AliasDictionary, CleanConfig,
    QuarantineEntry, RawTable, TableFormat,
};
use serde::Serialize;

use crate::{read, Outputs, PipelineConfig, Status};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Table files or directories; defaults to `paths.inputs` from the config.
    pub inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct IngestReport {
    config_hash: String,
    files: Vec<String>,
    failed_files: Vec<String>,
    tables: usize,
    rows_kept: usize,
    rows_rejected: usize,
    quarantined: usize,
    threshold: f64,
    manifold_k: usize,
    dropped_slots: Vec<usize>,
}

/// Input files in a stable order: explicit files as given, directory
/// entries sorted by name.
fn collect_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.sort();
            files.extend(entries.into_iter().filter(|f| f.is_file() && format_of(f).is_some()));
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("input {} does not exist", p.display());
        }
    }
    Ok(files)
}

fn format_of(path: &Path) -> Option<TableFormat> {
    path.extension().and_then(|e| e.to_str()).and_then(TableFormat::from_extension)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn parse_file(path: &Path) -> Result<Vec<RawTable>> {
    let format = format_of(path).with_context(|| format!("{}: unsupported file type", path.display()))?;
    Ok(parse_tables(&read(path)?, format, &file_name(path))?)
}

pub fn run(args: &IngestArgs, config: &PipelineConfig) -> Result<Status> {
    let inputs = if args.inputs.is_empty() {
        &config.paths.inputs
    } else {
        &args.inputs
    };
    let files = collect_files(inputs)?;
    if files.is_empty() {
        bail!("no input tables found");
    }
    let aliases = match &config.paths.aliases {
        Some(p) => AliasDictionary::load(p)?,
        None => AliasDictionary::default(),
    };

    // one thread per file; results are joined back in input order
    let parsed: Vec<Result<Vec<RawTable>>> = std::thread::scope(|s| {
        let handles: Vec<_> = files.iter().map(|f| s.spawn(move || parse_file(f))).collect();
        handles.into_iter().map(|h| h.join().expect("parser thread panicked")).collect()
    });

    let mut tables = Vec::new();
    let mut file_quarantine = Vec::new();
    let mut failed_files = Vec::new();
    for (path, result) in files.iter().zip(parsed) {
        match result {
            Ok(t) => tables.extend(t),
            Err(e) => {
                log::warn!("{}: {e:#}", path.display());
                failed_files.push(file_name(path));
                file_quarantine.push(QuarantineEntry {
                    table_id: file_name(path),
                    row: None,
                    col: None,
                    raw: String::new(),
                    reason: format!("unparseable file: {e:#}"),
                });
            }
        }
    }
    if tables.is_empty() {
        bail!("none of the {} input files could be parsed", files.len());
    }

    let clean = CleanConfig {
        selector: config.manifold,
        beta: config.weights.beta,
        gate_mode: config.ingest.gate_mode,
        refit: config.ingest.refit,
    };
    let out = clean_tables(&tables, &aliases, &clean)?;
    let mut quarantine = file_quarantine;
    quarantine.extend(out.quarantine.iter().cloned());

    let mut rows = Vec::new();
    write_normalized_rows(&mut rows, &out.weighted_rows())?;
    let mut q = Vec::new();
    write_quarantine(&mut q, &quarantine)?;
    let report = IngestReport {
        config_hash: config.hash(),
        files: files.iter().map(|f| file_name(f)).collect(),
        failed_files,
        tables: tables.len(),
        rows_kept: out.report.kept.len(),
        rows_rejected: out.report.rejected.len(),
        quarantined: quarantine.len(),
        threshold: out.report.threshold,
        manifold_k: out.report.manifold.k(),
        dropped_slots: out.report.dropped_slots.clone(),
    };

    let mut outputs = Outputs::default();
    outputs.add("normalized.csv", rows);
    outputs.add("quarantine.csv", q);
    outputs.add_json("ingest_report.json", &report)?;
    outputs.write(&config.paths.out_dir)?;
    if quarantine.is_empty() {
        Ok(Status::Success)
    } else {
        log::warn!("{} entries quarantined", quarantine.len());
        Ok(Status::Partial)
    }
}
