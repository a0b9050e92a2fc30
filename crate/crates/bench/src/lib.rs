//! Seeded inputs shared by the benchmarks.

use hysim_core::trainer::{LabeledSet, Tag};
use hysim_core::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n` standard normal points in `d` dimensions.
pub fn gaussian(n: usize, d: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| EmbeddingVector::new((0..d).map(|_| rng.sample(StandardNormal)).collect()).unwrap())
        .collect()
}

/// Two-class set labeled by the sign of the first coordinate.
pub fn labeled(n: usize, d: usize, seed: u64) -> LabeledSet {
    let mut set = LabeledSet::default();
    for (i, x) in gaussian(n, d, seed).into_iter().enumerate() {
        let y = usize::from(x.as_slice()[0] > 0.0);
        set.push(format!("s{i}"), x, y, Tag::Unknown);
    }
    set
}

/// Short pseudo-sentences for the hashing embedder.
pub fn sentences(n: usize, seed: u64) -> Vec<String> {
    const WORDS: &[&str] = &[
        "clearance", "half-life", "plasma", "oral", "dose", "rat", "dog", "µg/mL", "hepatic", "renal", "volume",
        "steady", "state", "bioavailability", "AUC",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..12)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
