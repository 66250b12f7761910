use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::UserError;
use crate::corpus::{LabelMode, SelectionConfig, DEFAULT_BAD_FUNCTION_PATTERN, DEFAULT_GOOD_FUNCTION_PATTERN};
use crate::embedding::{CbowParams, Subsampling, DEFAULT_SEQ_LEN, EMBEDDING_DIM};
use crate::neural::{CellKind, ModelConfig, TrainingSchedule};

/// Flat key/value pipeline configuration. Every key is optional except
/// `max_epochs`, which training refuses to guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: Option<PathBuf>,
    pub workspace: PathBuf,
    pub seed: u64,
    pub mode: LabelMode,

    /// Tab-separated `<file>\t<cwe>\t<good|bad>` lines overriding file-name metadata.
    pub metadata_file: Option<PathBuf>,
    pub min_class_count: usize,
    pub min_tokens: usize,
    pub excluded_cwes: Vec<u32>,
    pub bad_function_pattern: String,
    pub good_function_pattern: String,
    /// `<class id> <cwe id>` lines fixing the multiclass indices.
    pub class_map_file: Option<PathBuf>,

    pub embedding_dim: usize,
    pub window: usize,
    pub downsample: f64,
    pub subsampling: Subsampling,
    pub negatives: usize,
    pub cbow_epochs: usize,
    pub alpha: f64,
    pub min_alpha: f64,
    pub cbow_workers: usize,

    pub seq_len: usize,

    pub cell: CellKind,
    pub bidirectional: bool,
    pub layers: usize,
    pub units: usize,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cbow = CbowParams::default();
        PipelineConfig {
            input_dir: None,
            workspace: PathBuf::from("workspace"),
            seed: 1,
            mode: LabelMode::Binary,
            metadata_file: None,
            min_class_count: 500,
            min_tokens: 300,
            excluded_cwes: Vec::new(),
            bad_function_pattern: DEFAULT_BAD_FUNCTION_PATTERN.to_string(),
            good_function_pattern: DEFAULT_GOOD_FUNCTION_PATTERN.to_string(),
            class_map_file: None,
            embedding_dim: EMBEDDING_DIM,
            window: cbow.window,
            downsample: cbow.downsample,
            subsampling: cbow.subsampling,
            negatives: cbow.negatives,
            cbow_epochs: cbow.epochs,
            alpha: cbow.alpha,
            min_alpha: cbow.min_alpha,
            cbow_workers: cbow.workers,
            seq_len: DEFAULT_SEQ_LEN,
            cell: CellKind::Srnn,
            bidirectional: false,
            layers: 1,
            units: 64,
            batch_size: 64,
            learning_rate: 1e-4,
            plateau_patience: 5,
            plateau_factor: 0.5,
            early_stop_patience: 15,
            max_epochs: None,
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Normalize,
    Select,
    Embed,
    Encode,
    Train,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Normalize => "normalize",
            Stage::Select => "select",
            Stage::Embed => "embed",
            Stage::Encode => "encode",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }

    fn previous(self) -> Option<Stage> {
        match self {
            Stage::Normalize => None,
            Stage::Select => Some(Stage::Normalize),
            Stage::Embed => Some(Stage::Select),
            Stage::Encode => Some(Stage::Embed),
            Stage::Train => Some(Stage::Encode),
            Stage::Evaluate => Some(Stage::Train),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, UserError> {
        let text = std::fs::read_to_string(path).map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UserError(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), UserError> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(UserError(msg.to_string())) };
        check(self.embedding_dim > 0, "embedding_dim must be positive")?;
        check(self.window > 0, "window must be positive")?;
        check(self.cbow_epochs > 0, "cbow_epochs must be positive")?;
        check(self.cbow_workers > 0, "cbow_workers must be positive")?;
        check(self.alpha > 0.0 && self.min_alpha >= 0.0 && self.min_alpha <= self.alpha, "need 0 <= min_alpha <= alpha")?;
        check(self.seq_len > 0, "seq_len must be positive")?;
        check((1..=3).contains(&self.layers), "layers must be 1, 2 or 3")?;
        check(self.units > 0, "units must be positive")?;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(self.learning_rate > 0.0, "learning_rate must be positive")?;
        check(self.plateau_factor > 0.0 && self.plateau_factor < 1.0, "plateau_factor must be in (0, 1)")?;
        check(self.max_epochs != Some(0), "max_epochs must be positive")?;
        self.selection()?;
        Ok(())
    }

    pub fn selection(&self) -> Result<SelectionConfig, UserError> {
        let re = |key: &str, pattern: &str| Regex::new(pattern).map_err(|e| UserError(format!("{key}: {e}")));
        Ok(SelectionConfig {
            min_class_count: self.min_class_count,
            min_tokens: self.min_tokens,
            excluded_cwes: self.excluded_cwes.iter().copied().collect::<BTreeSet<_>>(),
            bad_function_pattern: re("bad_function_pattern", &self.bad_function_pattern)?,
            good_function_pattern: re("good_function_pattern", &self.good_function_pattern)?,
        })
    }

    pub fn cbow(&self) -> CbowParams {
        CbowParams {
            dim: self.embedding_dim,
            window: self.window,
            downsample: self.downsample,
            subsampling: self.subsampling,
            negatives: self.negatives,
            epochs: self.cbow_epochs,
            alpha: self.alpha,
            min_alpha: self.min_alpha,
            seed: self.stage_seed(Stage::Embed),
            workers: self.cbow_workers,
        }
    }

    pub fn model(&self, num_classes: usize) -> ModelConfig {
        ModelConfig::new(self.cell, self.bidirectional, self.layers, self.units, self.embedding_dim, self.seq_len, num_classes)
    }

    pub fn max_epochs(&self) -> Result<usize, UserError> {
        self.max_epochs
            .ok_or_else(|| UserError("max_epochs must be set in the config (or with --max-epochs)".into()))
    }

    pub fn schedule(&self, weights: crate::corpus::ClassWeights) -> Result<TrainingSchedule, UserError> {
        let max_epochs = self.max_epochs()?;
        Ok(TrainingSchedule {
            batch_size: self.batch_size,
            initial_lr: self.learning_rate,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            early_stop_patience: self.early_stop_patience,
            max_epochs,
            class_weights: weights,
            seed: self.stage_seed(Stage::Train),
        })
    }

    /// Seed of one stage, derived from the top-level seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let digest = Sha256::digest(format!("{}:{}", self.seed, stage.name()));
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// The keys a stage depends on directly, as JSON.
    fn stage_keys(&self, stage: Stage) -> serde_json::Value {
        use serde_json::json;
        match stage {
            // The input location is left out so a moved corpus keeps its hashes.
            Stage::Normalize => json!({ "metadata_file": self.metadata_file }),
            Stage::Select => json!({
                "seed": self.stage_seed(Stage::Select),
                "mode": self.mode,
                "min_class_count": self.min_class_count,
                "min_tokens": self.min_tokens,
                "excluded_cwes": self.excluded_cwes,
                "bad_function_pattern": self.bad_function_pattern,
                "good_function_pattern": self.good_function_pattern,
                "class_map_file": self.class_map_file,
            }),
            Stage::Embed => serde_json::to_value(self.cbow()).expect("serializable"),
            Stage::Encode => json!({ "seq_len": self.seq_len }),
            Stage::Train => json!({
                "cell": self.cell,
                "bidirectional": self.bidirectional,
                "layers": self.layers,
                "units": self.units,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "plateau_patience": self.plateau_patience,
                "plateau_factor": self.plateau_factor,
                "early_stop_patience": self.early_stop_patience,
                "max_epochs": self.max_epochs,
                "seed": self.stage_seed(Stage::Train),
            }),
            Stage::Evaluate => json!({}),
        }
    }

    /// Hash of a stage's own keys chained with the hash of the stage before it,
    /// so a change anywhere upstream changes every downstream hash.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let mut h = Sha256::new();
        if let Some(prev) = stage.previous() {
            h.update(self.stage_hash(prev));
        }
        h.update(stage.name());
        h.update(self.stage_keys(stage).to_string());
        hex(&h.finalize()[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.cbow().window, 3);
        assert_eq!(c.seq_len, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("windw = 4").is_err());
        let c: PipelineConfig = toml::from_str("mode = \"multiclass\"\ncell = \"lstm\"\nexcluded_cwes = [506]\nmax_epochs = 3").unwrap();
        assert_eq!(c.mode, LabelMode::Multiclass);
        assert_eq!(c.cell, CellKind::Lstm);
        assert_eq!(c.max_epochs, Some(3));
    }

    #[test]
    fn hashes_chain_downstream() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { window: 5, ..a.clone() };
        assert_eq!(a.stage_hash(Stage::Select), b.stage_hash(Stage::Select));
        assert_ne!(a.stage_hash(Stage::Embed), b.stage_hash(Stage::Embed));
        assert_ne!(a.stage_hash(Stage::Evaluate), b.stage_hash(Stage::Evaluate));
        let c = PipelineConfig { units: 128, ..a.clone() };
        assert_eq!(a.stage_hash(Stage::Encode), c.stage_hash(Stage::Encode));
        assert_ne!(a.stage_hash(Stage::Train), c.stage_hash(Stage::Train));
    }

    #[test]
    fn stage_seeds_differ_and_follow_the_seed() {
        let a = PipelineConfig::default();
        assert_ne!(a.stage_seed(Stage::Select), a.stage_seed(Stage::Train));
        assert_eq!(a.stage_seed(Stage::Train), PipelineConfig::default().stage_seed(Stage::Train));
        assert_ne!(a.stage_seed(Stage::Train), PipelineConfig { seed: 2, ..a.clone() }.stage_seed(Stage::Train));
    }

    #[test]
    fn missing_max_epochs_is_a_user_error() {
        let c = PipelineConfig::default();
        assert!(c.schedule(crate::corpus::ClassWeights::uniform(2)).is_err());
    }
}
