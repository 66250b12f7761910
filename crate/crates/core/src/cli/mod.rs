//! Command-line front end: one subcommand per pipeline stage plus `run-all`.
//!
//! Exit codes: 0 success, 1 user error (arguments, config, missing stage),
//! 2 data error (malformed or mismatched artifacts, empty corpus, ...).

pub mod config;
pub mod stages;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{PipelineConfig, Stage};
pub use stages::{predict_records, Prediction, Workspace, PREDICTIONS_SCHEMA};

use crate::corpus::{FixtureConfig, LabelMode};

/// An error caused by how the tool was invoked rather than by the data.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub const EXIT_USER: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    let user = err.chain().any(|e| {
        e.is::<UserError>() || matches!(e.downcast_ref::<crate::Error>(), Some(crate::Error::InvalidArgument(_)))
    });
    if user {
        EXIT_USER
    } else {
        EXIT_DATA
    }
}

#[derive(Debug, Parser)]
#[command(name = "irvuln", version, about = "Find CWE weaknesses in decompiled LLVM IR with token embeddings and recurrent networks")]
pub struct Cli {
    /// TOML file of pipeline settings; every key has a default except max_epochs.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding the stage artifacts.
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,
    /// binary or multiclass
    #[arg(long, global = true)]
    pub mode: Option<LabelMode>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and standardize every .ll file under a directory into token records.
    Normalize {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Select test cases, assign labels and split train/test/validation.
    Select,
    /// Build the vocabulary and train CBOW token embeddings.
    Embed,
    /// Pad or truncate every sample to seq_len embedding rows.
    Encode,
    /// Train the recurrent classifier.
    Train,
    /// Score the trained model on the held-out validation split.
    Evaluate,
    /// Class probabilities for every function of raw IR files or directories.
    Predict {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run normalize, select, embed, encode, train and evaluate in order.
    RunAll {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write a synthetic IR corpus with one planted motif per flawed class.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        motif_strength: f64,
    },
}

impl Cli {
    /// Config file, then command-line overrides.
    pub fn pipeline_config(&self) -> Result<PipelineConfig, UserError> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(ws) = &self.workspace {
            c.workspace = ws.clone();
        }
        if let Some(mode) = self.mode {
            c.mode = mode;
        }
        if let Some(m) = self.max_epochs {
            c.max_epochs = Some(m);
        }
        if let Command::Normalize { input: Some(i) } | Command::RunAll { input: Some(i) } = &self.command {
            c.input_dir = Some(i.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs one parsed command and returns its summary.
pub fn run(cli: &Cli) -> anyhow::Result<String> {
    let config = cli.pipeline_config()?;
    let ws = Workspace::new(&config.workspace);
    match &cli.command {
        Command::Normalize { .. } => stages::normalize(&config, &ws),
        Command::Select => stages::select(&config, &ws),
        Command::Embed => stages::embed(&config, &ws),
        Command::Encode => stages::encode(&config, &ws),
        Command::Train => stages::train(&config, &ws),
        Command::Evaluate => stages::evaluate(&config, &ws),
        Command::Predict { inputs, output } => stages::predict(&config, &ws, inputs, output.as_deref()),
        Command::RunAll { .. } => stages::run_all(&config, &ws),
        Command::Fixture { out, classes, per_class, motif_strength } => {
            let fixture = FixtureConfig::new(config.seed, *classes, *per_class, *motif_strength);
            stages::write_fixture(&fixture, out)
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let user: anyhow::Error = UserError("x".into()).into();
        assert_eq!(exit_code(&user), EXIT_USER);
        assert_eq!(exit_code(&user.context("while doing y")), EXIT_USER);
        let data: anyhow::Error = crate::Error::EmptyCorpus.into();
        assert_eq!(exit_code(&data), EXIT_DATA);
        let arg: anyhow::Error = crate::Error::InvalidArgument("bad".into()).into();
        assert_eq!(exit_code(&arg), EXIT_USER);
    }

    #[test]
    fn overrides_apply_after_the_config_file() {
        let cli = Cli::try_parse_from(["irvuln", "--seed", "9", "run-all", "--max-epochs", "4", "--input", "d", "--mode", "multiclass"]).unwrap();
        let c = cli.pipeline_config().unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.max_epochs, Some(4));
        assert_eq!(c.mode, LabelMode::Multiclass);
        assert_eq!(c.input_dir, Some(PathBuf::from("d")));
    }

    #[test]
    fn bad_arguments_exit_with_user_error() {
        assert_eq!(main_with_args(["irvuln", "frobnicate"]), EXIT_USER);
        assert_eq!(main_with_args(["irvuln", "--help"]), 0);
    }
}
