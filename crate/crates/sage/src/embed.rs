//! Shared interface for turning texts into embedding vectors.
//!
//! Both the remote embedding endpoint and the on-disk sidecar store
//! implement [`TextEmbedder`], so scoring code does not care where vectors
//! come from.

use thiserror::Error;

use crate::metric::{EmbeddingVector, MetricError};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no embedding stored for text with digest {digest}")]
    Missing { digest: String },
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error(transparent)]
    Invalid(#[from] MetricError),
}

/// Maps texts to embedding vectors, one per input, order preserved.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}
