use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, Array3};

use super::{EmbeddingMatrix, Vocabulary};
use crate::binio;
use crate::error::{Error, Result};

pub const DEFAULT_SEQ_LEN: usize = 1000;
const OOV: u32 = u32::MAX;
const MAGIC: &[u8; 4] = b"IRVE";
pub const ENCODED_VERSION: u32 = 1;

/// A pre-padded `seq_len × D` input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub matrix: Array2<f64>,
    pub label: usize,
    /// Number of content rows at the bottom of `matrix`.
    pub true_length: usize,
}

/// Embeds the final `seq_len` tokens right-aligned; leading rows and
/// out-of-vocabulary tokens are zero vectors.
pub fn encode_sample(tokens: &[String], vocab: &Vocabulary, emb: &EmbeddingMatrix, seq_len: usize, label: usize) -> EncodedSample {
    let mut matrix = Array2::zeros((seq_len, emb.dimension()));
    let tail = &tokens[tokens.len().saturating_sub(seq_len)..];
    let offset = seq_len - tail.len();
    for (row, token) in tail.iter().enumerate() {
        if let Some(i) = vocab.index(token) {
            matrix.row_mut(offset + row).assign(&emb.row(i));
        }
    }
    EncodedSample {
        matrix,
        label,
        true_length: tail.len(),
    }
}

/// Compact form of an encoded sample: vocabulary indices of the kept tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub id: String,
    /// `None` marks an out-of-vocabulary token.
    pub indices: Vec<Option<u32>>,
    pub label: usize,
}

/// Encoded samples sharing one embedding table. Matrices are materialized on
/// demand, which keeps a `1000 × 100` corpus affordable on disk and in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub seq_len: usize,
    pub num_classes: usize,
    pub embedding: Array2<f64>,
    pub samples: Vec<EncodedSequence>,
}

impl EncodedDataset {
    pub fn new(seq_len: usize, num_classes: usize, vocab: &Vocabulary, emb: &EmbeddingMatrix) -> Self {
        assert_eq!(vocab.len(), emb.vectors.nrows(), "vocabulary and embedding disagree");
        EncodedDataset {
            seq_len,
            num_classes,
            embedding: emb.vectors.clone(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, id: &str, tokens: &[String], vocab: &Vocabulary, label: usize) {
        let tail = &tokens[tokens.len().saturating_sub(self.seq_len)..];
        self.samples.push(EncodedSequence {
            id: id.to_string(),
            indices: tail.iter().map(|t| vocab.index(t).map(|i| i as u32)).collect(),
            label,
        });
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn sample(&self, i: usize) -> EncodedSample {
        let seq = &self.samples[i];
        let mut matrix = Array2::zeros((self.seq_len, self.dim()));
        let offset = self.seq_len - seq.indices.len();
        for (row, idx) in seq.indices.iter().enumerate() {
            if let Some(idx) = idx {
                matrix.row_mut(offset + row).assign(&self.embedding.row(*idx as usize));
            }
        }
        EncodedSample {
            matrix,
            label: seq.label,
            true_length: seq.indices.len(),
        }
    }

    /// Time-major `[seq_len, batch, dim]` inputs for the given sample indices.
    pub fn batch_inputs(&self, indices: &[usize]) -> Array3<f64> {
        let mut out = Array3::zeros((self.seq_len, indices.len(), self.dim()));
        for (b, &i) in indices.iter().enumerate() {
            let seq = &self.samples[i];
            let offset = self.seq_len - seq.indices.len();
            for (row, idx) in seq.indices.iter().enumerate() {
                if let Some(idx) = idx {
                    out.slice_mut(s![offset + row, b, ..]).assign(&self.embedding.row(*idx as usize));
                }
            }
        }
        out
    }

    pub fn write_to(&self, out: &mut impl Write, config_hash: &str) -> Result<()> {
        out.write_all(MAGIC)?;
        binio::write_u32(out, ENCODED_VERSION)?;
        binio::write_str(out, config_hash)?;
        binio::write_u32(out, self.seq_len as u32)?;
        binio::write_u32(out, self.num_classes as u32)?;
        binio::write_u32(out, self.embedding.nrows() as u32)?;
        binio::write_u32(out, self.dim() as u32)?;
        binio::write_f64s(out, self.embedding.iter().copied())?;
        binio::write_u32(out, self.samples.len() as u32)?;
        for s in &self.samples {
            binio::write_str(out, &s.id)?;
            binio::write_u32(out, s.label as u32)?;
            binio::write_u32(out, s.indices.len() as u32)?;
            for idx in &s.indices {
                binio::write_u32(out, idx.unwrap_or(OOV))?;
            }
        }
        Ok(())
    }

    /// Returns the dataset and the config hash stored with it.
    pub fn read_from(input: &mut impl Read, path: &Path) -> Result<(String, Self)> {
        let wrap = |e: std::io::Error| Error::format(path, e.to_string());
        binio::expect_magic(input, MAGIC).map_err(wrap)?;
        let version = binio::read_u32(input).map_err(wrap)?;
        if version != ENCODED_VERSION {
            return Err(Error::format(
                path,
                format!("encoded dataset has version {version}, this build reads version {ENCODED_VERSION}"),
            ));
        }
        let hash = binio::read_str(input).map_err(wrap)?;
        let seq_len = binio::read_u32(input).map_err(wrap)? as usize;
        let num_classes = binio::read_u32(input).map_err(wrap)? as usize;
        let rows = binio::read_u32(input).map_err(wrap)? as usize;
        let dim = binio::read_u32(input).map_err(wrap)? as usize;
        let values = binio::read_f64s(input, rows * dim).map_err(wrap)?;
        let embedding = Array2::from_shape_vec((rows, dim), values).map_err(|e| Error::format(path, e.to_string()))?;
        let n = binio::read_u32(input).map_err(wrap)? as usize;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let id = binio::read_str(input).map_err(wrap)?;
            let label = binio::read_u32(input).map_err(wrap)? as usize;
            let len = binio::read_u32(input).map_err(wrap)? as usize;
            let mut indices = Vec::with_capacity(len);
            for _ in 0..len {
                let idx = binio::read_u32(input).map_err(wrap)?;
                if idx != OOV && idx as usize >= rows {
                    return Err(Error::format(path, format!("token index {idx} out of range")));
                }
                indices.push((idx != OOV).then_some(idx));
            }
            samples.push(EncodedSequence { id, indices, label });
        }
        Ok((hash, EncodedDataset { seq_len, num_classes, embedding, samples }))
    }
}
