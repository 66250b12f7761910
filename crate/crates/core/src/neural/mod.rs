//! Recurrent classifiers written out by hand: SRNN, GRU and LSTM cells,
//! uni- and bidirectional stacks, a linear dense head with softmax,
//! backpropagation through time, Adam and the plateau/early-stop schedule.
//!
//! All tensors are `f64`. Sequences are handled time-major, `[L, B, D]`.

mod adam;
mod cell;
mod init;
mod io;
mod layer;
mod loss;
mod model;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use cell::{gru_cell, lstm_cell, srnn_cell};
pub use io::{read_history, read_weights, write_history, write_weights, HISTORY_SCHEMA, WEIGHTS_VERSION};
pub use layer::{run_layer, Direction};
pub use loss::{softmax, weighted_cross_entropy, PROB_FLOOR};
pub use model::{BatchGradients, Model};
pub(crate) use model::argmax;
pub use params::{CellParams, DenseParams, ModelParams, RnnLayerParams};
pub use train::{
    evaluate_indices, fit, fit_until, predict_indices, run_schedule, run_schedule_until, EpochDecision, EpochRecord, EpochRunner, PlateauState, TrainingHistory, TrainingSchedule,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Srnn,
    Gru,
    Lstm,
}

impl CellKind {
    /// Number of `units`-wide blocks in the kernels: 1, 3 (`z r n`) or 4 (`i f g o`).
    pub fn gates(self) -> usize {
        match self {
            CellKind::Srnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Srnn => "srnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srnn" | "rnn" | "simple" => Ok(CellKind::Srnn),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            _ => Err(Error::InvalidArgument(format!("unknown cell type `{s}` (expected srnn, gru or lstm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub bidirectional: bool,
    pub rnn_layers: usize,
    /// Linear layers after the recurrent stack; all but the last have `units` outputs.
    pub dense_layers: usize,
    pub units: usize,
    pub input_dim: usize,
    pub seq_len: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// A model with `layers` recurrent and `layers` dense layers.
    pub fn new(cell: CellKind, bidirectional: bool, layers: usize, units: usize, input_dim: usize, seq_len: usize, num_classes: usize) -> Self {
        ModelConfig {
            cell,
            bidirectional,
            rnn_layers: layers,
            dense_layers: layers,
            units,
            input_dim,
            seq_len,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=3).contains(&self.rnn_layers) {
            return bad(format!("rnn_layers must be in 1..=3, got {}", self.rnn_layers));
        }
        if self.dense_layers != self.rnn_layers {
            return bad(format!(
                "dense_layers ({}) must equal rnn_layers ({})",
                self.dense_layers, self.rnn_layers
            ));
        }
        if self.units == 0 || self.input_dim == 0 || self.seq_len == 0 {
            return bad("units, input_dim and seq_len must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of every recurrent layer's output sequence.
    pub fn rnn_output_width(&self) -> usize {
        self.units * self.directions()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let c = ModelConfig::new(CellKind::Srnn, false, 1, 64, 100, 1000, 2);
        c.validate().unwrap();
        assert!(ModelConfig { dense_layers: 2, ..c.clone() }.validate().is_err());
        assert!(ModelConfig::new(CellKind::Gru, true, 4, 64, 100, 1000, 2).validate().is_err());
        assert!(ModelConfig { num_classes: 1, ..c.clone() }.validate().is_err());
        assert!(ModelConfig { units: 0, ..c }.validate().is_err());
    }

    #[test]
    fn cell_kind_parsing() {
        for k in [CellKind::Srnn, CellKind::Gru, CellKind::Lstm] {
            assert_eq!(k.to_string().parse::<CellKind>().unwrap(), k);
        }
        assert!("tcn".parse::<CellKind>().is_err());
    }
}
