//! Token vocabulary, CBOW embeddings and fixed-length input encoding.

mod cbow;
mod encode;
mod io;

use std::collections::HashMap;

pub use cbow::{cbow_loss_and_gradients, train_cbow, CbowGradients, CbowParams, EmbeddingMatrix, Subsampling};
pub use encode::{encode_sample, EncodedDataset, EncodedSample, EncodedSequence, DEFAULT_SEQ_LEN};
pub use io::{read_embedding, read_vocabulary, write_embedding, write_vocabulary};

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub index_to_token: Vec<String>,
    pub frequencies: Vec<u64>,
    pub total_tokens: u64,
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, frequency)` pairs in index order.
    pub fn from_counts(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut token_to_index = HashMap::with_capacity(entries.len());
        for (i, (token, _)) in entries.iter().enumerate() {
            if token_to_index.insert(token.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token `{token}`")));
            }
        }
        let (index_to_token, frequencies): (Vec<String>, Vec<u64>) = entries.into_iter().unzip();
        Ok(Vocabulary {
            total_tokens: frequencies.iter().sum(),
            index_to_token,
            frequencies,
            token_to_index,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn frequency(&self, token: &str) -> Option<u64> {
        self.index(token).map(|i| self.frequencies[i])
    }

    pub fn token(&self, index: usize) -> &str {
        &self.index_to_token[index]
    }
}

/// Counts every distinct token (min-count 1), indexed by first occurrence.
pub fn build_vocabulary<'a, S>(corpus: impl IntoIterator<Item = S>) -> Result<Vocabulary>
where
    S: IntoIterator<Item = &'a String>,
{
    let mut index: HashMap<&'a str, usize> = HashMap::new();
    let mut entries: Vec<(String, u64)> = Vec::new();
    for stream in corpus {
        for token in stream {
            let i = *index.entry(token.as_str()).or_insert_with(|| {
                entries.push((token.clone(), 0));
                entries.len() - 1
            });
            entries[i].1 += 1;
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    Vocabulary::from_counts(entries)
}

/// Probability of keeping one occurrence of a token with relative frequency
/// `token_freq / total`: `min(1, sqrt(rate / f))`.
pub fn subsample_keep_probability(token_freq: u64, total: u64, rate: f64) -> f64 {
    Subsampling::Sqrt.keep_probability(token_freq, total, rate)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
