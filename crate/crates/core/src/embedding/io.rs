//! Text formats for the vocabulary and the embedding table.
//!
//! Both start with a JSON artifact header. Tokens are written with `\\`,
//! `\s`, `\t` and `\n` escapes so every entry stays on one line.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;

use super::{CbowParams, EmbeddingMatrix, Vocabulary};
use crate::artifact::ArtifactHeader;
use crate::error::{Error, Result};

pub const VOCAB_SCHEMA: &str = "irvuln.vocab";
pub const EMBEDDING_SCHEMA: &str = "irvuln.embedding";
pub const VERSION: u32 = 1;

fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            's' => ' ',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

pub fn write_vocabulary(out: &mut impl Write, vocab: &Vocabulary, config_hash: &str) -> Result<()> {
    ArtifactHeader::new(VOCAB_SCHEMA, VERSION, config_hash).write_to(out)?;
    for (i, (token, freq)) in vocab.index_to_token.iter().zip(&vocab.frequencies).enumerate() {
        writeln!(out, "{} {i} {freq}", escape(token))?;
    }
    Ok(())
}

pub fn read_vocabulary(input: &mut impl BufRead, path: &Path) -> Result<(ArtifactHeader, Vocabulary)> {
    let header = ArtifactHeader::read_from(input, path, VOCAB_SCHEMA, VERSION)?;
    let mut entries = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let bad = || Error::format(path, format!("malformed vocabulary line {}: `{line}`", n + 2));
        let mut parts = line.split(' ');
        let (Some(token), Some(index), Some(freq), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let token = unescape(token).ok_or_else(bad)?;
        let index: usize = index.parse().map_err(|_| bad())?;
        let freq: u64 = freq.parse().map_err(|_| bad())?;
        if index != entries.len() {
            return Err(bad());
        }
        entries.push((token, freq));
    }
    Ok((header, Vocabulary::from_counts(entries).map_err(|e| Error::format(path, e.to_string()))?))
}

/// Header line, then `V D` and one `token v1 … vD` line per vocabulary index.
/// Values are printed in shortest round-trip form, so reading is exact.
pub fn write_embedding(out: &mut impl Write, vocab: &Vocabulary, emb: &EmbeddingMatrix, config_hash: &str) -> Result<()> {
    if vocab.len() != emb.vectors.nrows() {
        return Err(Error::Shape(format!(
            "vocabulary has {} tokens, embedding has {} rows",
            vocab.len(),
            emb.vectors.nrows()
        )));
    }
    ArtifactHeader::new(EMBEDDING_SCHEMA, VERSION, config_hash).write_to(out)?;
    writeln!(out, "{}", serde_json::to_string(&emb.params)?)?;
    writeln!(out, "{} {}", emb.vectors.nrows(), emb.vectors.ncols())?;
    for (token, row) in vocab.index_to_token.iter().zip(emb.vectors.rows()) {
        write!(out, "{}", escape(token))?;
        for v in row {
            write!(out, " {v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads an embedding file; row order must match `vocab`.
pub fn read_embedding(input: &mut impl BufRead, path: &Path, vocab: &Vocabulary) -> Result<(ArtifactHeader, EmbeddingMatrix)> {
    let header = ArtifactHeader::read_from(input, path, EMBEDDING_SCHEMA, VERSION)?;
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format(path, format!("truncated embedding file: missing {what}")))
    };
    let params: CbowParams = serde_json::from_str(&next("parameters")?)?;
    let dims = next("dimensions")?;
    let (v, d) = dims
        .split_once(' ')
        .and_then(|(v, d)| Some((v.parse::<usize>().ok()?, d.parse::<usize>().ok()?)))
        .ok_or_else(|| Error::format(path, format!("bad dimension line `{dims}`")))?;
    if v != vocab.len() {
        return Err(Error::format(path, format!("{v} vectors for a vocabulary of {}", vocab.len())));
    }
    let mut vectors = Array2::zeros((v, d));
    for i in 0..v {
        let line = next("vectors")?;
        let mut parts = line.split(' ');
        let token = parts.next().and_then(unescape);
        if token.as_deref() != Some(vocab.token(i)) {
            return Err(Error::format(path, format!("row {i} does not belong to token `{}`", vocab.token(i))));
        }
        let values: Vec<f64> = parts
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {i}: {e}")))?;
        if values.len() != d {
            return Err(Error::format(path, format!("row {i} has {} values, expected {d}", values.len())));
        }
        vectors.row_mut(i).assign(&ndarray::Array1::from(values));
    }
    Ok((header, EmbeddingMatrix { vectors, params }))
}
