//! Embedding functions μ(x): standardized PK rows, a feature-hashing text
//! embedder, and a cached HTTP client for an external embedding service.

mod cache;
mod client;
mod hash;
mod pk;

pub use cache::{cache_key, EmbeddingCache};
pub use client::{EmbedderConfig, EmbeddingClient, Transport, TransportError, UreqTransport, API_KEY_ENV, MAX_BATCH};
pub use hash::hash_embed_text;
pub use pk::{embed_pk_row, ColumnStats};
