//! ADE grouping: embed mentions, cluster similar ones, and assemble the
//! per-drug, per-severity grid.

mod cluster;
mod embedding;
mod grid;

use thiserror::Error;

use crate::http::TransportError;

pub use cluster::{cosine_distance, hierarchical_cluster, Linkage, DEFAULT_THRESHOLD};
pub use embedding::{
    embed_texts, hashing_embed, EmbeddingProvider, EmbeddingVector, HashingProvider,
    HttpEmbeddingProvider,
};
pub use grid::{build_grid, AdeCluster, ClusterMember, DrugGroupGrid, SeverityBuckets};

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("embedding provider failure: {0}")]
    Transport(#[from] TransportError),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid vector {index}: {reason}")]
    InvalidVector { index: usize, reason: String },

    #[error("distance threshold {0} outside [0, 2]")]
    InvalidThreshold(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GroupingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GroupingError::Transport(e) if e.retryable)
    }
}

pub type Result<T> = std::result::Result<T, GroupingError>;
