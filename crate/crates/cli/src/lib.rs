//! `hysim` subcommands. Every command resolves and validates its config
//! before touching the output directory, computes all results in memory,
//! then writes them.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hysim_core::weights::{HybridMode, Metric};
use serde::Serialize;

pub mod config;
mod ingest;
mod model;
mod synth;
mod weigh;

pub use config::{Overrides, PipelineConfig};

/// Process outcome; errors map to exit code 1 in `main`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Finished, but some inputs went to quarantine.
    Partial,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Partial => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hysim", version, about = "Similarity and manifold weighting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Mahalanobis,
    Kernel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HybridArg {
    Mult,
    Add,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, global = true, value_enum)]
    pub hybrid: Option<HybridArg>,
    /// Keep this many principal components.
    #[arg(long, global = true, conflicts_with = "pca_var")]
    pub pca_k: Option<usize>,
    /// Keep the fewest components reaching this variance fraction.
    #[arg(long, global = true)]
    pub pca_var: Option<f64>,
    /// Embedding service URL for text inputs.
    #[arg(long, global = true, conflicts_with = "offline_embedder")]
    pub endpoint: Option<String>,
    /// Embed text with the local hashing embedder.
    #[arg(long, global = true)]
    pub offline_embedder: bool,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize PK tables (CSV or XML files, or directories of them).
    Ingest(ingest::IngestArgs),
    /// Compute similarity, clean and hybrid weights for source samples.
    Weigh(weigh::WeighArgs),
    /// Pretrain θ₀ unweighted, then fit θ_ω with the weight table.
    Train(model::TrainArgs),
    /// Accuracy, macro-F1 and ECE of a checkpoint on a labeled set.
    Eval(model::EvalArgs),
    /// Shift / optimization / reweighting decomposition of the target loss change.
    Report(model::ReportArgs),
    /// Write a synthetic benchmark dataset.
    Synth(synth::SynthArgs),
}

impl Cli {
    pub fn log_level(&self) -> log::LevelFilter {
        match self.global.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    }

    pub fn overrides(&self) -> Overrides {
        let g = &self.global;
        Overrides {
            seed: g.seed,
            alpha: g.alpha,
            beta: g.beta,
            metric: g.metric.map(|m| match m {
                MetricArg::Cosine => Metric::Cosine,
                MetricArg::Mahalanobis => Metric::Mahalanobis,
                MetricArg::Kernel => Metric::Kernel,
            }),
            hybrid: g.hybrid.map(|h| match h {
                HybridArg::Mult => HybridMode::Multiplicative,
                HybridArg::Add => HybridMode::Additive,
            }),
            pca_k: g.pca_k,
            pca_var: g.pca_var,
            endpoint: g.endpoint.clone(),
            offline_embedder: g.offline_embedder,
            out_dir: g.out_dir.clone(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let config = PipelineConfig::resolve(cli.global.config.as_deref(), &cli.overrides())?;
    config.validate()?;
    match &cli.command {
        Command::Ingest(a) => ingest::run(a, &config),
        Command::Weigh(a) => weigh::run(a, &config),
        Command::Train(a) => model::train(a, &config),
        Command::Eval(a) => model::eval(a, &config),
        Command::Report(a) => model::report(a, &config),
        Command::Synth(a) => synth::run(a, &config),
    }
}

/// Output files collected in memory and written together.
#[derive(Default)]
pub(crate) struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.0.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn write(self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, bytes) in self.0 {
            let path = dir.join(&name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}
