//! Text embeddings, cosine similarity and tag clustering.

mod cluster;
pub(crate) mod http;
mod mock;

pub use cluster::{cluster_tags, ClusterParams, InterestCluster, Polarity};
pub use http::HttpEmbedder;
pub use mock::{normalize_text, MockEmbedder};

use thiserror::Error;

use crate::domain::Embedding;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("nothing to cluster")]
    EmptyInput,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Maps texts to fixed-dimension vectors. Identical text must always map to
/// an identical vector, and implementations must tolerate concurrent calls.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ProviderError>;

    fn embed_one(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.embed(&[text])?
            .pop()
            .ok_or_else(|| ProviderError::BadResponse("empty embedding batch".into()))
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ProviderError> {
        (**self).embed(texts)
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, SemanticError> {
    cosine_slices(a.values(), b.values())
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, SemanticError> {
    if a.len() != b.len() {
        return Err(SemanticError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SemanticError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of a movie's tag embeddings, or `None` when it has no tags.
pub fn movie_embedding(
    tags: &[crate::domain::Tag],
    provider: &dyn EmbeddingProvider,
) -> Result<Option<Embedding>, ProviderError> {
    if tags.is_empty() {
        return Ok(None);
    }
    let texts: Vec<&str> = tags.iter().map(|t| t.text.as_str()).collect();
    let vecs = provider.embed(&texts)?;
    Ok(Embedding::mean(&vecs))
}
