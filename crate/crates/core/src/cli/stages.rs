//! One function per pipeline stage. Each reads its upstream artifacts from
//! the workspace, checks their config hashes, writes its own artifacts and
//! returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::config::{PipelineConfig, Stage};
use super::UserError;
use crate::artifact::{read_jsonl, write_jsonl, ArtifactHeader};
use crate::corpus::reference::{FULL_CORPUS_SAMPLES, FULL_CORPUS_TOKENS, FULL_CORPUS_VOCABULARY, TRAINING_SAMPLES};
use crate::corpus::{
    assign_labels, compute_class_weights, generate_fixture, render_selection_log, select_samples, split_dataset, ClassMap,
    CorpusManifest, DatasetSplit, FixtureConfig, LabelMode, SampleRecord, DEFAULT_RATIOS,
};
use crate::embedding::{
    build_vocabulary, encode_sample, read_embedding, read_vocabulary, train_cbow, write_embedding, write_vocabulary,
    EmbeddingMatrix, EncodedDataset, Vocabulary,
};
use crate::evaluation::{baseline_accuracy, confusion, report};
use crate::ir::{normalize_text, MetadataOverrides, TokenRecord, TOKENS_SCHEMA, TOKENS_VERSION};
use crate::neural::{fit, predict_indices, read_weights, write_history, write_weights, Model};

type Result<T> = anyhow::Result<T>;

pub const PREDICTIONS_SCHEMA: &str = "irvuln.predictions";
const PREDICTIONS_VERSION: u32 = 1;

/// File layout of a pipeline workspace.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn tokens(&self) -> PathBuf {
        self.path("tokens.jsonl")
    }
    pub fn manifest(&self) -> PathBuf {
        self.path("manifest.jsonl")
    }
    pub fn split(&self) -> PathBuf {
        self.path("split.txt")
    }
    pub fn vocab(&self) -> PathBuf {
        self.path("vocab.txt")
    }
    pub fn embedding(&self) -> PathBuf {
        self.path("embedding.txt")
    }
    pub fn encoded(&self) -> PathBuf {
        self.path("encoded.bin")
    }
    pub fn weights(&self) -> PathBuf {
        self.path("weights.bin")
    }
    pub fn history(&self) -> PathBuf {
        self.path("history.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.txt")
    }
}

fn open(path: &Path, producer: Stage) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(UserError(format!(
            "{} is missing; run `irvuln {}` first",
            path.display(),
            producer.name()
        ))
        .into()),
        Err(e) => Err(anyhow::Error::new(e).context(format!("cannot open {}", path.display()))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

fn check_hash(path: &Path, found: &str, config: &PipelineConfig, producer: Stage) -> Result<()> {
    let expected = config.stage_hash(producer);
    if found != expected {
        bail!(
            "{} was produced under a different configuration (hash {found}, current config gives {expected}); re-run `irvuln {}`",
            path.display(),
            producer.name()
        );
    }
    Ok(())
}

fn load_tokens(ws: &Workspace, config: &PipelineConfig) -> Result<Vec<TokenRecord>> {
    let path = ws.tokens();
    let (header, records) = read_jsonl::<TokenRecord>(&mut open(&path, Stage::Normalize)?, &path, TOKENS_SCHEMA, TOKENS_VERSION)?;
    check_hash(&path, &header.config_hash, config, Stage::Normalize)?;
    Ok(records)
}

fn load_manifest(ws: &Workspace, config: &PipelineConfig) -> Result<CorpusManifest> {
    let path = ws.manifest();
    let (header, manifest) = CorpusManifest::read_from(&mut open(&path, Stage::Select)?, &path)?;
    check_hash(&path, &header.config_hash, config, Stage::Select)?;
    Ok(manifest)
}

fn load_split(ws: &Workspace, config: &PipelineConfig) -> Result<DatasetSplit> {
    let path = ws.split();
    let (header, split) = DatasetSplit::read_from(&mut open(&path, Stage::Select)?, &path)?;
    check_hash(&path, &header.config_hash, config, Stage::Select)?;
    Ok(split)
}

fn load_embedding(ws: &Workspace, config: &PipelineConfig) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let path = ws.vocab();
    let (header, vocab) = read_vocabulary(&mut open(&path, Stage::Embed)?, &path)?;
    check_hash(&path, &header.config_hash, config, Stage::Embed)?;
    let path = ws.embedding();
    let (header, emb) = read_embedding(&mut open(&path, Stage::Embed)?, &path, &vocab)?;
    check_hash(&path, &header.config_hash, config, Stage::Embed)?;
    Ok((vocab, emb))
}

fn load_encoded(ws: &Workspace, config: &PipelineConfig) -> Result<EncodedDataset> {
    let path = ws.encoded();
    let (hash, data) = EncodedDataset::read_from(&mut open(&path, Stage::Encode)?, &path)?;
    check_hash(&path, &hash, config, Stage::Encode)?;
    Ok(data)
}

fn load_model(ws: &Workspace, config: &PipelineConfig) -> Result<Model> {
    let path = ws.weights();
    let (hash, model) = read_weights(&mut open(&path, Stage::Train)?, &path)?;
    check_hash(&path, &hash, config, Stage::Train)?;
    Ok(model)
}

/// `.ll` files under `dir`, sorted by path.
fn ir_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(UserError(format!("{} is not a directory", dir.display())).into());
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("reading {}", dir.display()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "ll") {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn load_overrides(config: &PipelineConfig) -> Result<MetadataOverrides> {
    match &config.metadata_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| UserError(format!("cannot read {}: {e}", path.display())))?;
            Ok(MetadataOverrides::parse(&text, path)?)
        }
        None => Ok(MetadataOverrides::default()),
    }
}

/// Normalizes each file; the `Err` side carries the file's error message.
fn normalize_files(files: &[PathBuf], root: &Path, overrides: &MetadataOverrides) -> Vec<(String, std::result::Result<Vec<TokenRecord>, String>)> {
    files
        .par_iter()
        .map(|path| {
            let shown = path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned();
            let result = std::fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|text| normalize_text(&text, &shown, overrides).map_err(|e| e.to_string()));
            (shown, result)
        })
        .collect()
}

pub fn normalize(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    let input = config
        .input_dir
        .as_ref()
        .ok_or_else(|| UserError("no input directory: set `input_dir` in the config or pass --input".into()))?;
    let files = ir_files(input)?;
    let overrides = load_overrides(config)?;
    let mut records = Vec::new();
    let mut errors = String::new();
    for (file, result) in normalize_files(&files, input, &overrides) {
        match result {
            Ok(r) => records.extend(r),
            Err(e) => {
                log::warn!("{file}: {e}");
                let _ = writeln!(errors, "{file}: {e}");
            }
        }
    }
    let failed = errors.lines().count();
    std::fs::create_dir_all(&ws.root).with_context(|| format!("cannot create {}", ws.root.display()))?;
    std::fs::write(ws.path("normalize_errors.txt"), &errors)?;
    if records.is_empty() {
        bail!("no function records produced from {} IR files in {} ({failed} failed)", files.len(), input.display());
    }
    let header = ArtifactHeader::new(TOKENS_SCHEMA, TOKENS_VERSION, &config.stage_hash(Stage::Normalize));
    write_file(&ws.tokens(), |out| write_jsonl(out, &header, &records))?;
    Ok(format!(
        "normalize: {} files ({failed} failed), {} function records -> {}",
        files.len(),
        records.len(),
        ws.tokens().display()
    ))
}

fn corpus_statistics(manifest: &CorpusManifest) -> String {
    let mut unique = std::collections::HashSet::new();
    for s in &manifest.samples {
        unique.extend(s.tokens.iter().map(String::as_str));
    }
    let mut s = manifest.cwe_table();
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<14} {:>12}   {:>12}", "", "this corpus", "published");
    let _ = writeln!(s, "{:<14} {:>12}   {:>12}", "samples", manifest.samples.len(), FULL_CORPUS_SAMPLES);
    let _ = writeln!(s, "{:<14} {:>12}   {:>12}", "trained on", manifest.samples.len(), TRAINING_SAMPLES);
    let _ = writeln!(s, "{:<14} {:>12}   {:>12}", "tokens", manifest.total_tokens(), FULL_CORPUS_TOKENS);
    let _ = writeln!(s, "{:<14} {:>12}   {:>12}", "unique tokens", unique.len(), FULL_CORPUS_VOCABULARY);
    s
}

pub fn select(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    let selection = config.selection()?;
    let class_map = match &config.class_map_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| UserError(format!("cannot read {}: {e}", path.display())))?;
            Some(ClassMap::parse(&text, path)?)
        }
        None => None,
    };
    let tokens = load_tokens(ws, config)?;
    let total = tokens.len();
    let records: Vec<SampleRecord> = tokens.into_iter().filter_map(SampleRecord::from_token_record).collect();
    let unlabelled = total - records.len();
    let manifest = assign_labels(select_samples(records, &selection)?, config.mode, class_map.as_ref())?;
    let split = split_dataset(&manifest.labels(), DEFAULT_RATIOS, config.stage_seed(Stage::Select))?;

    let hash = config.stage_hash(Stage::Select);
    write_file(&ws.manifest(), |out| manifest.write_to(out, &hash))?;
    write_file(&ws.split(), |out| split.write_to(out, &hash))?;
    let mut text = format!("records without CWE/label metadata: {unlabelled}\n\n");
    text += &render_selection_log(&manifest.selection_log);
    text += "\n";
    text += &corpus_statistics(&manifest);
    std::fs::write(ws.path("selection.txt"), &text)?;

    let counts: Vec<String> = manifest.class_counts.iter().map(|(c, n)| format!("{c}:{n}")).collect();
    Ok(format!(
        "select: {} of {total} records kept, {} classes ({}), split {}/{}/{}\n{}",
        manifest.samples.len(),
        manifest.num_classes(),
        counts.join(" "),
        split.train.len(),
        split.test.len(),
        split.validation.len(),
        render_selection_log(&manifest.selection_log).trim_end()
    ))
}

pub fn embed(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    let manifest = load_manifest(ws, config)?;
    let streams = || manifest.samples.iter().map(|s| &s.tokens);
    let vocab = build_vocabulary(streams())?;
    let emb = train_cbow(streams(), &vocab, &config.cbow())?;
    let hash = config.stage_hash(Stage::Embed);
    write_file(&ws.vocab(), |out| write_vocabulary(out, &vocab, &hash))?;
    write_file(&ws.embedding(), |out| write_embedding(out, &vocab, &emb, &hash))?;
    Ok(format!(
        "embed: {} tokens, vocabulary {}, dimension {} -> {}",
        manifest.total_tokens(),
        vocab.len(),
        emb.dimension(),
        ws.embedding().display()
    ))
}

pub fn encode(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    let manifest = load_manifest(ws, config)?;
    let (vocab, emb) = load_embedding(ws, config)?;
    let mut data = EncodedDataset::new(config.seq_len, manifest.num_classes(), &vocab, &emb);
    for s in &manifest.samples {
        data.push(&s.id, &s.tokens, &vocab, s.label(manifest.mode));
    }
    let truncated = manifest.samples.iter().filter(|s| s.tokens.len() > config.seq_len).count();
    write_file(&ws.encoded(), |out| data.write_to(out, &config.stage_hash(Stage::Encode)))?;
    Ok(format!(
        "encode: {} samples as {}x{} ({truncated} truncated) -> {}",
        data.len(),
        config.seq_len,
        data.dim(),
        ws.encoded().display()
    ))
}

pub fn train(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    config.max_epochs()?;
    let data = load_encoded(ws, config)?;
    let split = load_split(ws, config)?;
    if split.train.len() + split.test.len() + split.validation.len() != data.len() {
        bail!("{} does not match {}; re-run `irvuln select`", ws.split().display(), ws.encoded().display());
    }
    let labels = data.labels();
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let weights = compute_class_weights(&train_labels, data.num_classes)?;
    let schedule = config.schedule(weights)?;
    let mut model = Model::new(config.model(data.num_classes), config.stage_seed(Stage::Train))?;
    let history = fit(&mut model, &data, &split.train, &split.test, &schedule)?;

    let hash = config.stage_hash(Stage::Train);
    write_file(&ws.weights(), |out| write_weights(out, &model, &hash))?;
    write_file(&ws.history(), |out| write_history(out, &history, &hash))?;
    let best = &history.epochs[history.best_epoch - 1];
    Ok(format!(
        "train: {} parameters, {} epochs{}, best epoch {} (test loss {:.4}, test accuracy {:.4}) -> {}",
        model.num_parameters(),
        history.epochs.len(),
        if history.stopped_early { " (stopped early)" } else { "" },
        history.best_epoch,
        best.test_loss,
        best.test_accuracy,
        ws.weights().display()
    ))
}

fn class_names(manifest: &CorpusManifest) -> Vec<String> {
    match manifest.mode {
        LabelMode::Binary => vec!["0".into(), "1".into()],
        LabelMode::Multiclass => std::iter::once("0".to_string())
            .chain(manifest.class_map.cwes.iter().enumerate().map(|(i, cwe)| format!("{}:CWE-{cwe}", i + 1)))
            .collect(),
    }
}

/// Scores the model on the validation split only.
pub fn evaluate(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    let manifest = load_manifest(ws, config)?;
    let data = load_encoded(ws, config)?;
    let split = load_split(ws, config)?;
    let model = load_model(ws, config)?;
    let labels = data.labels();
    let truth: Vec<usize> = split.validation.iter().map(|&i| labels[i]).collect();
    let (predicted, _) = predict_indices(&model, &data, &split.validation, config.batch_size)?;
    let cm = confusion(&truth, &predicted, data.num_classes)?;
    let rep = report(&cm, &class_names(&manifest))?;
    let supports: Vec<u64> = (0..data.num_classes).map(|c| cm.support(c)).collect();
    let baseline = baseline_accuracy(&supports)?;

    let text = format!("{}\nmajority-class baseline {:.4}\n", rep.render(), baseline);
    let hash = config.stage_hash(Stage::Evaluate);
    std::fs::write(ws.report(), &text)?;
    write_file(&ws.path("report.json"), |out| rep.write_json(out, &hash))?;
    write_file(&ws.path("confusion.csv"), |out| rep.write_normalized_grid(out))?;
    Ok(format!("evaluate: {} validation samples\n{text}", truth.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub function_name: String,
    pub source_path: String,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
}

/// Normalizes raw IR files (or directories of them) and scores every defined function.
pub fn predict(config: &PipelineConfig, ws: &Workspace, inputs: &[PathBuf], output: Option<&Path>) -> Result<String> {
    let (predictions, files) = predict_records(config, ws, inputs)?;
    let path = output.map_or_else(|| ws.path("predictions.jsonl"), Path::to_path_buf);
    let header = ArtifactHeader::new(PREDICTIONS_SCHEMA, PREDICTIONS_VERSION, &config.stage_hash(Stage::Train));
    write_file(&path, |out| write_jsonl(out, &header, &predictions))?;
    Ok(format!("predict: {} functions from {files} files -> {}", predictions.len(), path.display()))
}

/// Predictions for every function of the given files and directories, plus
/// the number of files read.
pub fn predict_records(config: &PipelineConfig, ws: &Workspace, inputs: &[PathBuf]) -> Result<(Vec<Prediction>, usize)> {
    let (vocab, emb) = load_embedding(ws, config)?;
    let model = load_model(ws, config)?;
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            files.extend(ir_files(input)?.into_iter().map(|f| (f, input.clone())));
        } else if input.is_file() {
            files.push((input.clone(), input.parent().map(Path::to_path_buf).unwrap_or_default()));
        } else {
            return Err(UserError(format!("{} does not exist", input.display())).into());
        }
    }
    let overrides = load_overrides(config)?;
    let mut predictions = Vec::new();
    for (file, root) in &files {
        let shown = file.strip_prefix(root).unwrap_or(file).to_string_lossy().into_owned();
        let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
        let records = normalize_text(&text, &shown, &overrides).with_context(|| file.display().to_string())?;
        for r in records {
            let sample = encode_sample(&r.tokens, &vocab, &emb, model.config.seq_len, 0);
            let probs = model.forward(&sample)?;
            predictions.push(Prediction {
                id: r.id,
                function_name: r.function_name,
                source_path: r.source_path,
                predicted: crate::neural::argmax(probs.iter().copied()),
                probabilities: probs.to_vec(),
            });
        }
    }
    Ok((predictions, files.len()))
}

pub fn run_all(config: &PipelineConfig, ws: &Workspace) -> Result<String> {
    config.max_epochs()?;
    let stages: [fn(&PipelineConfig, &Workspace) -> Result<String>; 6] = [normalize, select, embed, encode, train, evaluate];
    let mut summary = Vec::new();
    for stage in stages {
        let s = stage(config, ws)?;
        log::info!("{}", s.lines().next().unwrap_or_default());
        summary.push(s);
    }
    Ok(summary.join("\n"))
}

pub fn write_fixture(fixture: &FixtureConfig, out: &Path) -> Result<String> {
    if fixture.classes < 2 || fixture.per_class == 0 {
        return Err(UserError("a fixture needs at least 2 classes and 1 sample per class".into()).into());
    }
    if !(0.0..=1.0).contains(&fixture.motif_strength) {
        return Err(UserError("motif strength must be in [0, 1]".into()).into());
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let files = generate_fixture(fixture);
    for f in &files {
        std::fs::write(out.join(&f.file_name), &f.text)?;
    }
    Ok(format!(
        "fixture: {} IR files ({} classes x {}) -> {}",
        files.len(),
        fixture.classes,
        fixture.per_class,
        out.display()
    ))
}
