use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProviderInfo, TokenEncoder};
use crate::error::ProviderError;

pub const HASHED_DIMENSION: usize = 256;

/// Offline encoder: each token id owns a fixed pseudo-random vector drawn
/// from a ChaCha stream seeded by the id. Texts sharing words or character
/// trigrams share vector mass, which is all the retrieval tests rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedTokenEncoder {
    pub dimension: usize,
    pub seed: u64,
    pub max_tokens: usize,
}

impl Default for HashedTokenEncoder {
    fn default() -> Self {
        Self { dimension: HASHED_DIMENSION, seed: 0x1075_e5ee_d000_0001, max_tokens: 512 }
    }
}

impl HashedTokenEncoder {
    pub fn with_max_tokens(max_tokens: usize) -> Self {
        Self { max_tokens, ..Self::default() }
    }

    pub fn token_vector(&self, id: u32) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..self.dimension).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl TokenEncoder for HashedTokenEncoder {
    fn info(&self) -> ProviderInfo {
        ProviderInfo { name: format!("hashed-ngram-{}", self.dimension), dimension: self.dimension, deterministic: true }
    }

    fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    fn encode(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if ids.len() > self.max_tokens {
            return Err(ProviderError::InvalidRequest(format!("{} tokens exceed limit {}", ids.len(), self.max_tokens)));
        }
        Ok(ids.iter().map(|&id| self.token_vector(id)).collect())
    }
}
