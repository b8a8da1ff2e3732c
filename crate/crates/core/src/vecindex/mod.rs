//! Embedding similarity search over the industry, company, account, ratio
//! and few-shot namespaces.

pub mod embed;
pub mod index;
mod persist;

pub use embed::{cosine, EmbedError, Embedder, HashingEmbedder, RemoteEmbedder};
pub use index::{Candidate, EmbeddedEntry, IndexError, Namespace, VectorIndex};

/// Default retrieval depth per entity term.
pub const DEFAULT_K: usize = 5;
