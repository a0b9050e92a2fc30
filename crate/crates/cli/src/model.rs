use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use hysim_core::trainer::{
    bound_decomposition, evaluate, train as fit_both, write_training_log, BoundDecomposition, Checkpoint, EvalReport,
    LabeledSet, ModelParams,
};
use hysim_core::weights::{read_weight_table, WeightedSample};
use serde::Serialize;

use crate::{read, Outputs, PipelineConfig, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightColumn {
    Sim,
    Clean,
    Hybrid,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled source set.
    #[arg(long)]
    pub source: PathBuf,
    /// Weight table from `weigh`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Labeled target validation set, logged per epoch.
    #[arg(long)]
    pub target_val: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "hybrid")]
    pub weight_column: WeightColumn,
    /// Number of classes; defaults to the largest label seen plus one.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "eval.json")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub theta0: PathBuf,
    #[arg(long)]
    pub theta_w: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Labeled target set the losses L_T are measured on.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "hybrid")]
    pub weight_column: WeightColumn,
    /// Kernel bandwidth for the MMD estimate; pooled median heuristic if absent.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

fn load_set(path: &Path) -> Result<LabeledSet> {
    LabeledSet::read_csv(read(path)?.as_slice()).with_context(|| format!("reading {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok(Checkpoint::from_json(&text)
        .and_then(|c| c.params())
        .with_context(|| format!("loading checkpoint {}", path.display()))?)
}

/// Weights aligned to the source rows by sample id.
fn aligned_weights(path: &Path, source: &LabeledSet, column: WeightColumn) -> Result<Vec<f64>> {
    let table = read_weight_table(read(path)?.as_slice()).with_context(|| format!("reading {}", path.display()))?;
    let pick = |s: &WeightedSample| match column {
        WeightColumn::Sim => s.omega_sim,
        WeightColumn::Clean => s.omega_clean,
        WeightColumn::Hybrid => s.omega_hybrid,
    };
    let by_id: HashMap<&str, f64> = table.iter().map(|s| (s.sample_id.as_str(), pick(s))).collect();
    if by_id.len() != table.len() {
        bail!("{}: duplicate sample ids", path.display());
    }
    if table.len() != source.len() {
        bail!("weight table has {} rows, source has {}", table.len(), source.len());
    }
    source
        .ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().with_context(|| format!("no weight for sample `{id}`")))
        .collect()
}

fn check_dim(params: &ModelParams, set: &LabeledSet, what: &str) -> Result<()> {
    if let Some(d) = set.dim() {
        if d != params.dim() {
            bail!("dimension mismatch: checkpoint d = {}, {what} d = {d}", params.dim());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Provenanced<'a, T> {
    config_hash: String,
    #[serde(flatten)]
    body: &'a T,
}

pub fn train(args: &TrainArgs, config: &PipelineConfig) -> Result<Status> {
    let source = load_set(&args.source)?;
    if source.is_empty() {
        bail!("{} holds no samples", args.source.display());
    }
    let weights = aligned_weights(&args.weights, &source, args.weight_column)?;
    let val = args.target_val.as_deref().map(load_set).transpose()?;
    let k = args
        .classes
        .unwrap_or_else(|| source.n_classes().max(val.as_ref().map_or(0, LabeledSet::n_classes)));
    let out = fit_both(&source, &weights, val.as_ref(), k, &config.train)?;

    let hash = config.hash();
    let mut log = Vec::new();
    write_training_log(&mut log, &out.log)?;
    let mut outputs = Outputs::default();
    outputs.add("theta0.json", (Checkpoint::new(&out.theta0, &hash).to_json()? + "\n").into_bytes());
    outputs.add("theta_w.json", (Checkpoint::new(&out.theta_w, &hash).to_json()? + "\n").into_bytes());
    outputs.add("train_log.jsonl", log);
    outputs.write(&config.paths.out_dir)?;
    Ok(Status::Success)
}

pub fn eval(args: &EvalArgs, config: &PipelineConfig) -> Result<Status> {
    let params = load_checkpoint(&args.checkpoint)?;
    let data = load_set(&args.data)?;
    check_dim(&params, &data, "data")?;
    let report: EvalReport = evaluate(&params, &data, config.n_bins)?;
    let mut outputs = Outputs::default();
    outputs.add_json(
        &args.name,
        &Provenanced {
            config_hash: config.hash(),
            body: &report,
        },
    )?;
    outputs.write(&config.paths.out_dir)?;
    Ok(Status::Success)
}

pub fn report(args: &ReportArgs, config: &PipelineConfig) -> Result<Status> {
    let theta0 = load_checkpoint(&args.theta0)?;
    let theta_w = load_checkpoint(&args.theta_w)?;
    let source = load_set(&args.source)?;
    let target = load_set(&args.target)?;
    check_dim(&theta0, &source, "source")?;
    check_dim(&theta0, &target, "target")?;
    let weights = aligned_weights(&args.weights, &source, args.weight_column)?;
    let d: BoundDecomposition = bound_decomposition(
        &theta0,
        &theta_w,
        &source,
        &weights,
        &target,
        config.weights.loss_normalization,
        args.bandwidth,
    )?;
    let mut outputs = Outputs::default();
    outputs.add_json(
        "bound.json",
        &Provenanced {
            config_hash: config.hash(),
            body: &d,
        },
    )?;
    outputs.write(&config.paths.out_dir)?;
    Ok(Status::Success)
}
