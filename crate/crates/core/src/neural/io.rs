//! Weights container and training-history records.
//!
//! Weights: `IRVW`, format version (u32), config hash, model config as JSON,
//! tensor count, then per tensor its name, rank, dimensions (u64) and
//! row-major little-endian `f64` values.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{EpochRecord, Model, ModelConfig, ModelParams, TrainingHistory};
use crate::artifact::{read_jsonl, write_jsonl, ArtifactHeader};
use crate::binio;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IRVW";
pub const WEIGHTS_VERSION: u32 = 1;
pub const HISTORY_SCHEMA: &str = "irvuln.history";
const HISTORY_VERSION: u32 = 1;

pub fn write_weights(out: &mut impl Write, model: &Model, config_hash: &str) -> Result<()> {
    out.write_all(MAGIC)?;
    binio::write_u32(out, WEIGHTS_VERSION)?;
    binio::write_str(out, config_hash)?;
    binio::write_str(out, &serde_json::to_string(&model.config)?)?;
    let names = model.params.names();
    let tensors = model.params.tensors();
    binio::write_u32(out, tensors.len() as u32)?;
    for (name, t) in names.iter().zip(&tensors) {
        binio::write_str(out, name)?;
        binio::write_u32(out, t.ndim() as u32)?;
        for &d in t.shape() {
            binio::write_u64(out, d as u64)?;
        }
        binio::write_f64s(out, t.iter().copied())?;
    }
    Ok(())
}

/// Returns the stored config hash and the model.
pub fn read_weights(input: &mut impl Read, path: &Path) -> Result<(String, Model)> {
    let wrap = |e: std::io::Error| Error::format(path, e.to_string());
    binio::expect_magic(input, MAGIC).map_err(wrap)?;
    let version = binio::read_u32(input).map_err(wrap)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(
            path,
            format!("weights file has format version {version}, this build reads version {WEIGHTS_VERSION}"),
        ));
    }
    let hash = binio::read_str(input).map_err(wrap)?;
    let config: ModelConfig = serde_json::from_str(&binio::read_str(input).map_err(wrap)?)?;
    config.validate().map_err(|e| Error::format(path, e.to_string()))?;
    let mut params = ModelParams::zeros(&config);
    let names = params.names();
    let count = binio::read_u32(input).map_err(wrap)? as usize;
    if count != names.len() {
        return Err(Error::format(path, format!("{count} tensors, config needs {}", names.len())));
    }
    for (expected, mut target) in names.iter().zip(params.tensors_mut()) {
        let name = binio::read_str(input).map_err(wrap)?;
        if &name != expected {
            return Err(Error::format(path, format!("tensor `{name}` where `{expected}` was expected")));
        }
        let rank = binio::read_u32(input).map_err(wrap)? as usize;
        let shape = (0..rank)
            .map(|_| binio::read_u64(input).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(wrap)?;
        if shape != target.shape() {
            return Err(Error::format(path, format!("tensor `{name}` has shape {shape:?}, expected {:?}", target.shape())));
        }
        let values = binio::read_f64s(input, shape.iter().product()).map_err(wrap)?;
        let tensor = ArrayD::from_shape_vec(shape, values).map_err(|e| Error::format(path, e.to_string()))?;
        target.assign(&tensor);
    }
    Ok((hash, Model::from_params(config, params)?))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HistoryLine {
    Epoch(EpochRecord),
    Summary { best_epoch: usize, stopped_early: bool },
}

/// One JSON record per epoch followed by a summary record.
pub fn write_history(out: &mut impl Write, history: &TrainingHistory, config_hash: &str) -> Result<()> {
    let mut lines: Vec<HistoryLine> = history.epochs.iter().cloned().map(HistoryLine::Epoch).collect();
    lines.push(HistoryLine::Summary { best_epoch: history.best_epoch, stopped_early: history.stopped_early });
    write_jsonl(out, &ArtifactHeader::new(HISTORY_SCHEMA, HISTORY_VERSION, config_hash), &lines)
}

pub fn read_history(input: &mut impl BufRead, path: &Path) -> Result<(ArtifactHeader, TrainingHistory)> {
    let (header, lines) = read_jsonl::<HistoryLine>(input, path, HISTORY_SCHEMA, HISTORY_VERSION)?;
    let mut epochs = Vec::new();
    let mut summary = None;
    for line in lines {
        match line {
            HistoryLine::Epoch(e) if summary.is_none() => epochs.push(e),
            HistoryLine::Summary { best_epoch, stopped_early } if summary.is_none() => summary = Some((best_epoch, stopped_early)),
            _ => return Err(Error::format(path, "records after the summary line")),
        }
    }
    let (best_epoch, stopped_early) = summary.ok_or_else(|| Error::format(path, "missing summary line"))?;
    Ok((header, TrainingHistory { epochs, best_epoch, stopped_early }))
}
