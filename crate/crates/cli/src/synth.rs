use anyhow::Result;
use clap::{Args, ValueEnum};
use hysim_core::trainer::{generate_noise_benchmark, generate_shift_benchmark, LabeledSet};
use serde_json::json;

use crate::{Outputs, PipelineConfig, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Benchmark {
    /// Source with a distractor cluster, target and target validation sets.
    Shift,
    /// Subspace data with off-manifold noisy points, train and test sets.
    Noise,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub benchmark: Benchmark,
}

fn csv(set: &LabeledSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    set.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn run(args: &SynthArgs, config: &PipelineConfig) -> Result<Status> {
    let mut outputs = Outputs::default();
    match args.benchmark {
        Benchmark::Shift => {
            let b = generate_shift_benchmark(&config.shift)?;
            outputs.add("source.csv", csv(&b.source)?);
            outputs.add("target.csv", csv(&b.target)?);
            outputs.add("target_val.csv", csv(&b.target_val)?);
            outputs.add_json("synth.json", &json!({"config_hash": config.hash(), "shift": config.shift}))?;
        }
        Benchmark::Noise => {
            let b = generate_noise_benchmark(&config.noise)?;
            outputs.add("train.csv", csv(&b.train)?);
            outputs.add("test.csv", csv(&b.test)?);
            outputs.add_json("synth.json", &json!({"config_hash": config.hash(), "noise": config.noise}))?;
        }
    }
    outputs.write(&config.paths.out_dir)?;
    Ok(Status::Success)
}
