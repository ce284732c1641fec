//! Text to unit vector: sentence split, tokenize, encode tokens, masked mean
//! pool, L2 normalize. Descriptions and queries go through the same path.
//!
//! Multi-sentence text is pooled per sentence; the sentence vectors are then
//! averaged and renormalized. Sentences longer than the encoder's token limit
//! are encoded in chunks and pooled over the concatenation, so chunking never
//! changes the result.

mod cache;
mod hashed;
mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ProviderError;

pub use cache::{CachedEmbedder, EmbeddingCache};
pub use hashed::{HashedTokenEncoder, HASHED_DIMENSION};
pub use remote::{parse_embedding_response, RemoteEmbedder};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("attention mask has no ones")]
    AllMasked,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub dimension: usize,
    pub deterministic: bool,
}

/// Token ids and attention mask, one row per sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBatch {
    pub token_ids: Vec<Vec<u32>>,
    pub attention_mask: Vec<Vec<u8>>,
}

impl TokenBatch {
    pub fn sentences(&self) -> usize {
        self.token_ids.len()
    }

    pub fn token_count(&self) -> usize {
        self.attention_mask.iter().flatten().map(|&m| m as usize).sum()
    }

    /// Right-pads every row to the longest with id 0 and mask 0.
    pub fn padded(&self) -> TokenBatch {
        let width = self.token_ids.iter().map(Vec::len).max().unwrap_or(0);
        let pad = |row: &Vec<u32>| {
            let mut r = row.clone();
            r.resize(width, 0);
            r
        };
        let pad_mask = |row: &Vec<u8>| {
            let mut r = row.clone();
            r.resize(width, 0);
            r
        };
        TokenBatch {
            token_ids: self.token_ids.iter().map(pad).collect(),
            attention_mask: self.attention_mask.iter().map(pad_mask).collect(),
        }
    }

    /// Unmasked ids of one row split into pieces of at most `max_len`.
    pub fn chunks(&self, row: usize, max_len: usize) -> Vec<Vec<u32>> {
        let ids: Vec<u32> = self.token_ids[row]
            .iter()
            .zip(&self.attention_mask[row])
            .filter(|(_, &m)| m == 1)
            .map(|(&id, _)| id)
            .collect();
        ids.chunks(max_len.max(1)).map(<[u32]>::to_vec).collect()
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().map_or(true, |(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lowercased alphanumeric words.
pub fn words(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Function words dropped before hashing; they are shared by most
/// descriptions and would pull every embedding toward one direction.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "the", "of", "to", "in", "on", "for", "with", "or", "at", "by", "from", "is",
    "are", "be", "as", "that", "this", "it", "its", "your", "you", "i", "me", "my", "we", "our",
    "near", "where", "can", "do", "what", "which", "who", "how", "there", "any", "some", "need",
    "want", "looking", "find", "get", "am", "so", "if", "into", "than", "then", "their", "them",
    "they", "will", "would", "should", "could", "about",
];

/// Words of `sentence` minus stopwords; all of them if nothing else is left.
pub fn content_words(sentence: &str) -> Vec<String> {
    let all = words(sentence);
    let content: Vec<String> = all.iter().filter(|w| !STOPWORDS.contains(&w.as_str())).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Hashing tokenizer: each content word yields a whole-word token plus the character
/// trigrams of `<word>`, so a word of `n` characters gives `n + 1` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub vocab_size: u32,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self { vocab_size: 1 << 20 }
    }
}

impl Tokenizer {
    pub fn word_tokens(&self, word: &str) -> Vec<u32> {
        let id = |tag: &[u8], s: &[u8]| (fnv1a(&[tag, s]) % self.vocab_size as u64) as u32;
        let mut out = vec![id(b"w:", word.as_bytes())];
        let marked: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
        for w in marked.windows(3) {
            let g: String = w.iter().collect();
            out.push(id(b"g:", g.as_bytes()));
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenBatch, EmbedError> {
        let mut token_ids = Vec::new();
        for sentence in split_sentences(text) {
            let ids: Vec<u32> = content_words(sentence).iter().flat_map(|w| self.word_tokens(w)).collect();
            if !ids.is_empty() {
                token_ids.push(ids);
            }
        }
        if token_ids.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let attention_mask = token_ids.iter().map(|r| vec![1u8; r.len()]).collect();
        Ok(TokenBatch { token_ids, attention_mask })
    }
}

/// `out_j = Σ_i mask_i · v_ij / Σ_i mask_i`
pub fn mean_pool(vectors: &[Vec<f64>], mask: &[u8]) -> Result<Vec<f64>, EmbedError> {
    if vectors.len() != mask.len() {
        return Err(EmbedError::Shape(format!("{} vectors, {} mask entries", vectors.len(), mask.len())));
    }
    let d = vectors.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; d];
    let mut weight = 0.0;
    for (v, &m) in vectors.iter().zip(mask) {
        if v.len() != d {
            return Err(EmbedError::Shape(format!("ragged token vectors ({} vs {d})", v.len())));
        }
        if m == 0 {
            continue;
        }
        weight += m as f64;
        for (s, x) in sum.iter_mut().zip(v) {
            *s += m as f64 * x;
        }
    }
    if weight == 0.0 {
        return Err(EmbedError::AllMasked);
    }
    Ok(sum.into_iter().map(|s| s / weight).collect())
}

/// Scales to unit L2 norm. Rescales by the largest magnitude first so tiny
/// and huge inputs normalize identically.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    let scaled: Vec<f64> = v.iter().map(|x| x / peak).collect();
    let norm = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(scaled.into_iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything that turns text into a unit vector.
pub trait Embedder: Send + Sync {
    fn info(&self) -> ProviderInfo;

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

/// Maps token ids to per-token vectors.
pub trait TokenEncoder: Send + Sync {
    fn info(&self) -> ProviderInfo;
    fn max_tokens(&self) -> usize;
    fn encode(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Every intermediate of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub tokens: TokenBatch,
    pub token_vectors: Vec<Vec<Vec<f64>>>,
    pub sentence_vectors: Vec<Vec<f64>>,
    pub embedding: Vec<f64>,
}

pub struct Pipeline<T> {
    tokenizer: Tokenizer,
    encoder: T,
}

impl<T: TokenEncoder> Pipeline<T> {
    pub fn new(tokenizer: Tokenizer, encoder: T) -> Self {
        Self { tokenizer, encoder }
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn encoder(&self) -> &T {
        &self.encoder
    }

    pub fn run(&self, text: &str) -> Result<PipelineTrace, EmbedError> {
        let tokens = self.tokenizer.tokenize(text)?;
        let mut token_vectors = Vec::with_capacity(tokens.sentences());
        let mut sentence_vectors = Vec::with_capacity(tokens.sentences());
        for row in 0..tokens.sentences() {
            let mut vecs = Vec::with_capacity(tokens.token_ids[row].len());
            for chunk in tokens.chunks(row, self.encoder.max_tokens()) {
                vecs.extend(self.encoder.encode(&chunk)?);
            }
            let mask = vec![1u8; vecs.len()];
            sentence_vectors.push(normalize(&mean_pool(&vecs, &mask)?)?);
            token_vectors.push(vecs);
        }
        let embedding = combine_sentences(&sentence_vectors)?;
        Ok(PipelineTrace { tokens, token_vectors, sentence_vectors, embedding })
    }
}

/// Average of unit sentence vectors, renormalized.
pub fn combine_sentences(sentence_vectors: &[Vec<f64>]) -> Result<Vec<f64>, EmbedError> {
    let mask = vec![1u8; sentence_vectors.len()];
    normalize(&mean_pool(sentence_vectors, &mask)?)
}

impl<T: TokenEncoder> Embedder for Pipeline<T> {
    fn info(&self) -> ProviderInfo {
        self.encoder.info()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        self.run(text).map(|t| t.embedding)
    }
}

/// The offline default: hashed n-gram pipeline at [`HASHED_DIMENSION`].
pub fn hashed_embedder() -> Pipeline<HashedTokenEncoder> {
    Pipeline::new(Tokenizer::default(), HashedTokenEncoder::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    /// `hashed` or `remote`.
    pub provider: String,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub dimension: Option<usize>,
    pub cache_path: Option<std::path::PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { provider: "hashed".into(), base_url: None, model: None, dimension: None, cache_path: None }
    }
}

/// Builds the configured embedder, wrapped in a file cache when a path is set.
pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Arc<dyn Embedder>, EmbedError> {
    let inner: Arc<dyn Embedder> = match cfg.provider.as_str() {
        "hashed" => Arc::new(hashed_embedder()),
        "remote" => Arc::new(RemoteEmbedder::from_env(cfg)?),
        other => {
            return Err(EmbedError::Provider(ProviderError::InvalidRequest(format!("unknown embedder `{other}`"))))
        }
    };
    match &cfg.cache_path {
        Some(path) => Ok(Arc::new(CachedEmbedder::new(inner, EmbeddingCache::open(path)?))),
        None => Ok(inner),
    }
}
