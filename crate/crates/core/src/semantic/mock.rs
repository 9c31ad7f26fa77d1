use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, ProviderError};
use crate::domain::Embedding;

/// Lowercases and collapses runs of whitespace.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic offline embedder.
///
/// Each lowercase alphanumeric token hashes (with the seed) to a random
/// Gaussian direction; a text's embedding is the normalized sum of its token
/// directions. Texts that normalize identically collide, texts with no tokens
/// in common are close to orthogonal, and partial overlap gives a graded
/// similarity so edit classes other than retained/pruned are reachable.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dimension: usize,
    seed: u64,
}

impl MockEmbedder {
    /// # Panics
    /// If `dimension < 2`.
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension >= 2, "mock embedder needs dimension >= 2");
        MockEmbedder { dimension, seed }
    }

    fn token_direction(&self, token: &str, acc: &mut [f64]) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let draws: Vec<f64> = (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, d) in acc.iter_mut().zip(draws) {
            *a += d / norm;
        }
    }

    fn embed_text(&self, text: &str) -> Embedding {
        let normalized = normalize_text(text);
        let mut acc = vec![0.0; self.dimension];
        let mut any = false;
        for token in normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            self.token_direction(token, &mut acc);
            any = true;
        }
        if !any {
            // Punctuation-only or empty text still gets a stable direction.
            self.token_direction(&format!("\u{0}{normalized}"), &mut acc);
        }
        let mut norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            acc[0] = 1.0;
            norm = 1.0;
        }
        acc.iter_mut().for_each(|v| *v /= norm);
        Embedding::new(acc).expect("finite unit vector")
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
