use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use hysim_core::divergence::{
    estimate_divergence, median_heuristic_bandwidth, mmd2_biased, pooled_bandwidth, DivergenceEstimate, Estimator,
};
use hysim_core::embedder::{embed_pk_row, hash_embed_text, ColumnStats, EmbeddingCache, EmbeddingClient, UreqTransport};
use hysim_core::ingest::{read_normalized_rows, NormalizedPKRow, NORMALIZED_HEADER};
use hysim_core::manifold::fit_pca;
use hysim_core::trainer::LabeledSet;
use hysim_core::weights::{weigh_samples, write_weight_table, Metric, SimilarityScorer, TargetReference};
use hysim_core::EmbeddingVector;
use serde::Serialize;

use crate::{read, Outputs, PipelineConfig, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// Decide from the file header.
    Auto,
    /// `id,label,tag,x0,...`; the features are the embeddings.
    Labeled,
    /// Normalized PK rows; embedded as standardized 5-vectors.
    Pk,
    /// One text per line.
    Text,
}

#[derive(Debug, Args)]
pub struct WeighArgs {
    #[arg(long)]
    pub source: PathBuf,
    /// Target samples, same kind as the source.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Precomputed target centroid as a JSON array.
    #[arg(long, conflicts_with = "target")]
    pub centroid: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub kind: InputKind,
}

#[derive(Serialize)]
struct WeighReport {
    config_hash: String,
    metric: Metric,
    bandwidth: f64,
    n_source: usize,
    n_target: Option<usize>,
    manifold_k: usize,
    variance_explained: f64,
    mmd2_biased: Option<f64>,
    /// Unbiased MMD² between the source and target embeddings; an estimate of
    /// the divergence term, not the term itself.
    mmd: Option<DivergenceEstimate>,
}

fn detect(bytes: &[u8]) -> InputKind {
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let first = String::from_utf8_lossy(first);
    let first = first.trim_end_matches('\r');
    if first.starts_with("id,label,tag,") {
        InputKind::Labeled
    } else if first == NORMALIZED_HEADER.join(",") {
        InputKind::Pk
    } else {
        InputKind::Text
    }
}

struct Embedded {
    ids: Vec<String>,
    x: Vec<EmbeddingVector>,
}

/// Source and target embeddings under the same embedder. PK standardization
/// is fitted on the source rows only.
fn embed_pair(kind: InputKind, source: &[u8], target: Option<&[u8]>, config: &PipelineConfig) -> Result<(Embedded, Option<Embedded>)> {
    match kind {
        InputKind::Labeled => {
            let load = |b: &[u8]| -> Result<Embedded> {
                let s = LabeledSet::read_csv(b)?;
                Ok(Embedded { ids: s.ids, x: s.x })
            };
            Ok((load(source)?, target.map(load).transpose()?))
        }
        InputKind::Pk => {
            let rows = |b: &[u8]| -> Result<Vec<NormalizedPKRow>> {
                Ok(read_normalized_rows(b)?.into_iter().map(NormalizedPKRow::from).collect())
            };
            let src = rows(source)?;
            let stats = ColumnStats::fit(&src);
            let embed = |rows: Vec<NormalizedPKRow>| -> Result<Embedded> {
                Ok(Embedded {
                    x: rows.iter().map(|r| embed_pk_row(r, &stats)).collect::<Result<_, _>>()?,
                    ids: rows.into_iter().map(|r| r.row_id).collect(),
                })
            };
            let tgt = target.map(rows).transpose()?;
            Ok((embed(src)?, tgt.map(embed).transpose()?))
        }
        InputKind::Text => {
            let lines = |b: &[u8]| -> Result<(Vec<String>, Vec<String>)> {
                let text = std::str::from_utf8(b).context("text input is not UTF-8")?;
                Ok(text
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                    .map(|(i, l)| (format!("line{}", i + 1), l.to_string()))
                    .unzip())
            };
            let (sid, stext) = lines(source)?;
            let tgt = target.map(lines).transpose()?;
            let embed_all = |texts: &[String]| -> Result<Vec<EmbeddingVector>> {
                if config.embedder.offline {
                    Ok(texts
                        .iter()
                        .map(|t| hash_embed_text(t, config.embedder.hash_dim))
                        .collect::<Result<_, _>>()?)
                } else {
                    let cache = EmbeddingCache::open(config.paths.cache_dir.join("embeddings.jsonl"))?;
                    let client = EmbeddingClient::new(
                        config.embedder.service.clone(),
                        Arc::new(UreqTransport::default()),
                        Arc::new(cache),
                    )?;
                    Ok(client.embed_text(texts)?)
                }
            };
            let src = Embedded {
                x: embed_all(&stext)?,
                ids: sid,
            };
            let tgt = match tgt {
                Some((ids, texts)) => Some(Embedded {
                    x: embed_all(&texts)?,
                    ids,
                }),
                None => None,
            };
            Ok((src, tgt))
        }
        InputKind::Auto => unreachable!("resolved by the caller"),
    }
}

fn load_centroid(path: &Path) -> Result<EmbeddingVector> {
    let v: Vec<f64> = serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(EmbeddingVector::new(v)?)
}

pub fn run(args: &WeighArgs, config: &PipelineConfig) -> Result<Status> {
    let source_bytes = read(&args.source)?;
    let target_bytes = args.target.as_deref().map(read).transpose()?;
    let centroid = args.centroid.as_deref().map(load_centroid).transpose()?;
    if target_bytes.is_none() && centroid.is_none() {
        bail!("either --target or --centroid is required");
    }
    let kind = match args.kind {
        InputKind::Auto => detect(&source_bytes),
        k => k,
    };
    let (source, target) = embed_pair(kind, &source_bytes, target_bytes.as_deref(), config)?;
    if source.x.is_empty() {
        bail!("{} holds no samples", args.source.display());
    }

    let reference = match (&target, centroid) {
        (Some(t), _) => TargetReference::Samples(t.x.clone()),
        (None, Some(c)) => TargetReference::Centroid(c),
        (None, None) => unreachable!(),
    };
    let bandwidth = match &target {
        Some(t) => pooled_bandwidth(&source.x, &t.x)?,
        None => median_heuristic_bandwidth(&source.x)?,
    };
    let scorer = SimilarityScorer::new(config.weights.metric, &source.x, &reference, bandwidth)?;
    let manifold = fit_pca(&source.x, config.manifold)?;
    let samples = weigh_samples(&source.ids, &source.x, &scorer, &manifold, &config.weights)?;

    let (mmd2_biased, mmd) = match &target {
        Some(t) => {
            let biased = mmd2_biased(&source.x, &t.x, bandwidth)?;
            let perms = (config.permutations > 0).then_some((config.permutations, config.seed));
            let est = if source.x.len() >= 2 && t.x.len() >= 2 {
                Some(estimate_divergence(&source.x, &t.x, Estimator::UnbiasedU, Some(bandwidth), perms)?)
            } else {
                None
            };
            log::info!(
                "MMD² source vs target: biased {biased}, unbiased {:?}, bandwidth {bandwidth}",
                est.as_ref().map(|e| e.value)
            );
            (Some(biased), est)
        }
        None => {
            log::info!("no target samples; MMD not estimated");
            (None, None)
        }
    };

    let mut table = Vec::new();
    write_weight_table(&mut table, &samples)?;
    let report = WeighReport {
        config_hash: config.hash(),
        metric: config.weights.metric,
        bandwidth,
        n_source: source.x.len(),
        n_target: target.as_ref().map(|t| t.x.len()),
        manifold_k: manifold.k(),
        variance_explained: manifold.variance_explained(),
        mmd2_biased,
        mmd,
    };
    let mut outputs = Outputs::default();
    outputs.add("weights.csv", table);
    outputs.add("manifold.json", (manifold.to_json()? + "\n").into_bytes());
    outputs.add_json("weigh_report.json", &report)?;
    outputs.write(&config.paths.out_dir)?;
    Ok(Status::Success)
}
