//! Pipeline configuration: a JSON file overlaid by command-line flags.
//! Flags always win over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hysim_core::embedder::EmbedderConfig;
use hysim_core::manifold::{ComponentSelector, GateMode};
use hysim_core::trainer::{NoiseBenchmarkConfig, ShiftBenchmarkConfig, TrainConfig, DEFAULT_BINS};
use hysim_core::weights::{HybridMode, Metric, WeightConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Tables for `ingest` when none are given on the command line.
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub aliases: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            out_dir: PathBuf::from("out"),
            cache_dir: PathBuf::from(".hysim-cache"),
            aliases: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSettings {
    /// Use the hashing embedder for text instead of the HTTP service.
    pub offline: bool,
    pub hash_dim: usize,
    pub service: EmbedderConfig,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        Self {
            offline: true,
            hash_dim: 256,
            service: EmbedderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub gate_mode: GateMode,
    pub refit: bool,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            gate_mode: GateMode::Reject,
            refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub weights: WeightConfig,
    pub manifold: ComponentSelector,
    pub embedder: EmbedderSettings,
    pub ingest: IngestSettings,
    pub train: TrainConfig,
    pub n_bins: usize,
    /// Permutations for the p-value logged by `weigh`; 0 skips the test.
    pub permutations: usize,
    pub shift: ShiftBenchmarkConfig,
    pub noise: NoiseBenchmarkConfig,
    /// Copied into every seeded stage.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            weights: WeightConfig::default(),
            manifold: ComponentSelector::default(),
            embedder: EmbedderSettings::default(),
            ingest: IngestSettings::default(),
            train: TrainConfig::default(),
            n_bins: DEFAULT_BINS,
            permutations: 0,
            shift: ShiftBenchmarkConfig::default(),
            noise: NoiseBenchmarkConfig::default(),
            seed: 0,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub metric: Option<Metric>,
    pub hybrid: Option<HybridMode>,
    pub pca_k: Option<usize>,
    pub pca_var: Option<f64>,
    pub endpoint: Option<String>,
    pub offline_embedder: bool,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File (or defaults), then flags, then the seed fan-out.
    pub fn resolve(file: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut c = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(a) = o.alpha {
            c.weights.alpha = a;
        }
        if let Some(b) = o.beta {
            c.weights.beta = b;
        }
        if let Some(m) = o.metric {
            c.weights.metric = m;
        }
        if let Some(h) = o.hybrid {
            c.weights.hybrid_mode = h;
        }
        if let Some(k) = o.pca_k {
            c.manifold = ComponentSelector::Components(k);
        }
        if let Some(v) = o.pca_var {
            c.manifold = ComponentSelector::TargetVariance(v);
        }
        if let Some(e) = &o.endpoint {
            c.embedder.service.endpoint = e.clone();
            c.embedder.offline = false;
        }
        if o.offline_embedder {
            c.embedder.offline = true;
        }
        if let Some(d) = &o.out_dir {
            c.paths.out_dir = d.clone();
        }
        c.train.seed = c.seed;
        c.shift.seed = c.seed;
        c.noise.seed = c.seed;
        c.train.loss_normalization = c.weights.loss_normalization;
        Ok(c)
    }

    /// Checks everything that does not depend on the subcommand's inputs.
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.train.validate()?;
        match self.manifold {
            ComponentSelector::Components(0) => bail!("invalid parameter `pca_k`: must be at least 1"),
            ComponentSelector::TargetVariance(v) if !(v > 0.0 && v <= 1.0) => {
                bail!("invalid parameter `pca_var`: must lie in (0, 1], got {v}")
            }
            _ => {}
        }
        if self.n_bins == 0 {
            bail!("invalid parameter `n_bins`: must be at least 1");
        }
        if self.embedder.hash_dim == 0 {
            bail!("invalid parameter `hash_dim`: must be at least 1");
        }
        if !self.embedder.offline {
            self.embedder.service.validate()?;
        }
        if let Some(a) = &self.paths.aliases {
            if !a.is_file() {
                bail!("alias file {} not found", a.display());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of everything except `paths`, so the
    /// same settings hash alike wherever the outputs go.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("paths");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
