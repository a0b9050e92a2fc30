//! Embedding-similarity and manifold-distance sample weighting for domain
//! adaptation, pharmacokinetic table normalization, and a weighted softmax
//! classifier used to check both weighting schemes end to end.

pub mod divergence;
pub mod embedder;
pub mod error;
pub mod ingest;
pub mod manifold;
pub mod metrics;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
pub use metrics::EmbeddingVector;
