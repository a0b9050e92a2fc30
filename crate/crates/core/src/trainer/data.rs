use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EmbeddingVector;

use super::model::Sample;

/// Ground-truth provenance of a synthetic sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Clean,
    Noisy,
    OnTarget,
    Distractor,
    Target,
    Unknown,
}

impl Tag {
    fn as_str(self) -> &'static str {
        match self {
            Tag::Clean => "clean",
            Tag::Noisy => "noisy",
            Tag::OnTarget => "on_target",
            Tag::Distractor => "distractor",
            Tag::Target => "target",
            Tag::Unknown => "",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "clean" => Tag::Clean,
            "noisy" => Tag::Noisy,
            "on_target" => Tag::OnTarget,
            "distractor" => Tag::Distractor,
            "target" => Tag::Target,
            "" => Tag::Unknown,
            other => return Err(Error::invalid("tag", format!("unknown tag `{other}`"))),
        })
    }
}

/// Labeled feature vectors with tags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub x: Vec<EmbeddingVector>,
    pub y: Vec<usize>,
    pub tags: Vec<Tag>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.x.first().map(EmbeddingVector::dim)
    }

    pub fn push(&mut self, id: String, x: EmbeddingVector, y: usize, tag: Tag) {
        self.ids.push(id);
        self.x.push(x);
        self.y.push(y);
        self.tags.push(tag);
    }

    pub fn n_classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows whose tag satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(Tag) -> bool) -> LabeledSet {
        let mut out = LabeledSet::default();
        for i in 0..self.len() {
            if keep(self.tags[i]) {
                out.push(self.ids[i].clone(), self.x[i].clone(), self.y[i], self.tags[i]);
            }
        }
        out
    }

    pub fn samples<'a>(&'a self, weights: &'a [f64]) -> Result<Vec<Sample<'a>>> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        Ok(self
            .x
            .iter()
            .zip(&self.y)
            .zip(weights)
            .map(|((x, &y), &weight)| Sample {
                x: x.as_slice(),
                y,
                weight,
            })
            .collect())
    }

    /// CSV `id,label,tag,x0,...`. Floats use shortest round-trip text.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim().unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "label".into(), "tag".into()];
        header.extend((0..d).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), self.y[i].to_string(), self.tags[i].to_string()];
            rec.extend(self.x[i].as_slice().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<labeled set>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let ok = header.len() >= 4
            && &header[0] == "id"
            && &header[1] == "label"
            && &header[2] == "tag"
            && header.iter().skip(3).enumerate().all(|(j, h)| h == format!("x{j}"));
        if !ok {
            return Err(Error::Parse {
                location: "header".into(),
                message: "expected id,label,tag,x0,...".into(),
            });
        }
        let mut set = LabeledSet::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |what: &str| Error::Parse {
                location: format!("line {line}"),
                message: format!("bad {what}"),
            };
            let y: usize = rec[1].parse().map_err(|_| bad("label"))?;
            let tag: Tag = rec[2].parse().map_err(|_| bad("tag"))?;
            let x = rec
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| bad("feature")))
                .collect::<Result<Vec<_>>>()?;
            set.push(rec[0].to_string(), EmbeddingVector::new(x)?, y, tag);
        }
        Ok(set)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftBenchmarkConfig {
    pub d: usize,
    pub n_s: usize,
    pub n_t: usize,
    /// Held-out target points for validation.
    pub n_val: usize,
    /// Added to every target point; empty means zero.
    pub shift_vector: Vec<f64>,
    pub distractor_fraction: f64,
    pub distractor_offset: f64,
    pub label_flip_rate: f64,
    pub seed: u64,
}

impl Default for ShiftBenchmarkConfig {
    fn default() -> Self {
        Self {
            d: 8,
            n_s: 2000,
            n_t: 200,
            n_val: 1000,
            shift_vector: Vec::new(),
            distractor_fraction: 0.3,
            distractor_offset: 10.0,
            label_flip_rate: 0.4,
            seed: 0,
        }
    }
}

impl ShiftBenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::invalid("d", "need at least 2 dimensions"));
        }
        if self.n_s == 0 || self.n_t == 0 {
            return Err(Error::invalid("n_s/n_t", "must be positive"));
        }
        if !self.shift_vector.is_empty() && self.shift_vector.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: self.shift_vector.len(),
            });
        }
        for (name, p) in [
            ("distractor_fraction", self.distractor_fraction),
            ("label_flip_rate", self.label_flip_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        if !self.distractor_offset.is_finite() || self.shift_vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("offset", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftBenchmark {
    /// On-target rows first, then distractors.
    pub source: LabeledSet,
    pub target: LabeledSet,
    pub target_val: LabeledSet,
}

/// Two-class Gaussian pair with means ±e₁ and unit covariance. The source
/// mixes it with a copy displaced by `distractor_offset·e₂` whose labels are
/// flipped with probability `label_flip_rate`.
pub fn generate_shift_benchmark(config: &ShiftBenchmarkConfig) -> Result<ShiftBenchmark> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d;
    let n_dist = (config.distractor_fraction * config.n_s as f64).round() as usize;
    let n_on = config.n_s - n_dist;

    let pair = |rng: &mut ChaCha8Rng| {
        let y = usize::from(rng.random_bool(0.5));
        let mut x = normal_vec(rng, d);
        x[0] += if y == 1 { 1.0 } else { -1.0 };
        (x, y)
    };

    let mut source = LabeledSet::default();
    for i in 0..n_on {
        let (x, y) = pair(&mut rng);
        source.push(format!("s{i}"), EmbeddingVector::new(x)?, y, Tag::OnTarget);
    }
    for i in n_on..config.n_s {
        let (mut x, mut y) = pair(&mut rng);
        x[1] += config.distractor_offset;
        if rng.random_bool(config.label_flip_rate) {
            y = 1 - y;
        }
        source.push(format!("s{i}"), EmbeddingVector::new(x)?, y, Tag::Distractor);
    }

    let draw_target = |n: usize, prefix: &str, rng: &mut ChaCha8Rng| -> Result<LabeledSet> {
        let mut set = LabeledSet::default();
        for i in 0..n {
            let (mut x, y) = pair(rng);
            for (xj, s) in x.iter_mut().zip(&config.shift_vector) {
                *xj += s;
            }
            set.push(format!("{prefix}{i}"), EmbeddingVector::new(x)?, y, Tag::Target);
        }
        Ok(set)
    };
    let target = draw_target(config.n_t, "t", &mut rng)?;
    let target_val = draw_target(config.n_val, "v", &mut rng)?;
    Ok(ShiftBenchmark {
        source,
        target,
        target_val,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseBenchmarkConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    /// Clean test points drawn from the same subspace.
    pub n_test: usize,
    pub noise_fraction: f64,
    pub sigma: f64,
    /// Spread of the latent coordinates on the subspace.
    pub latent_scale: f64,
    pub seed: u64,
}

impl Default for NoiseBenchmarkConfig {
    fn default() -> Self {
        Self {
            d: 24,
            k: 4,
            n: 2000,
            n_test: 2000,
            noise_fraction: 0.2,
            sigma: 1.0,
            latent_scale: 3.0,
            seed: 0,
        }
    }
}

impl NoiseBenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.d {
            return Err(Error::invalid("k", "need 1 <= k < d"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::invalid("noise_fraction", "must lie in [0, 1]"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", "must be non-negative"));
        }
        if !(self.latent_scale.is_finite() && self.latent_scale > 0.0) {
            return Err(Error::invalid("latent_scale", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBenchmark {
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub offset: Vec<f64>,
    /// Orthonormal columns spanning the clean subspace, `d × k`.
    pub basis: DMatrix<f64>,
}

/// Clean points `m + B z` with `z ~ scale·N(0, I_k)` and label `1[z₀ > 0]`.
/// Exactly `round(ρ n)` training points get `P·N(0, σ² I_{d−k})` added in
/// the orthogonal complement and their label flipped.
pub fn generate_noise_benchmark(config: &NoiseBenchmarkConfig) -> Result<NoiseBenchmark> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, k) = (config.d, config.k);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let basis = q.columns(0, k).into_owned();
    let complement = q.columns(k, d - k).into_owned();
    let offset: Vec<f64> = normal_vec(&mut rng, d).into_iter().map(|v| 2.0 * v).collect();

    let n_noisy = (config.noise_fraction * config.n as f64).round() as usize;
    let mut noisy = vec![false; config.n];
    for i in sample(&mut rng, config.n, n_noisy) {
        noisy[i] = true;
    }

    let clean_point = |rng: &mut ChaCha8Rng| {
        let z: Vec<f64> = normal_vec(rng, k).into_iter().map(|v| v * config.latent_scale).collect();
        let y = usize::from(z[0] > 0.0);
        let mut x = offset.clone();
        for (j, zj) in z.iter().enumerate() {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += basis[(i, j)] * zj;
            }
        }
        (x, y)
    };

    let mut train = LabeledSet::default();
    for (i, &is_noisy) in noisy.iter().enumerate() {
        let (mut x, mut y) = clean_point(&mut rng);
        let tag = if is_noisy {
            let e = normal_vec(&mut rng, d - k);
            for (j, ej) in e.iter().enumerate() {
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr += complement[(r, j)] * config.sigma * ej;
                }
            }
            y = 1 - y;
            Tag::Noisy
        } else {
            Tag::Clean
        };
        train.push(format!("n{i}"), EmbeddingVector::new(x)?, y, tag);
    }
    let mut test = LabeledSet::default();
    for i in 0..config.n_test {
        let (x, y) = clean_point(&mut rng);
        test.push(format!("c{i}"), EmbeddingVector::new(x)?, y, Tag::Clean);
    }
    Ok(NoiseBenchmark {
        train,
        test,
        offset,
        basis,
    })
}
