//! Test-case selection, labelling, stratified splits, class weights and
//! synthetic desk-scale fixtures.

pub mod fixture;
pub mod reference;
mod select;
mod split;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use fixture::{fixture_manifest, generate_fixture, FixtureConfig, FixtureFile};
pub use select::{
    render_selection_log, select_samples, SelectionConfig, SelectionStep, DEFAULT_BAD_FUNCTION_PATTERN,
    DEFAULT_GOOD_FUNCTION_PATTERN,
};
pub use split::{split_dataset, DatasetSplit, DEFAULT_RATIOS};

use crate::artifact::ArtifactHeader;
use crate::error::{Error, Result};
use crate::ir::{FlawLabel, TokenRecord};

pub const MANIFEST_SCHEMA: &str = "irvuln.manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Binary,
    Multiclass,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(LabelMode::Binary),
            "multiclass" => Ok(LabelMode::Multiclass),
            other => Err(Error::InvalidArgument(format!("unknown label mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub function_name: String,
    pub cwe_id: u32,
    pub flaw_label: FlawLabel,
    pub source_path: String,
    pub tokens: Vec<String>,
    pub binary_label: usize,
    /// 0 for non-flawed samples, otherwise the class index of the CWE.
    pub multiclass_label: usize,
}

impl SampleRecord {
    /// Converts a normalizer record; `None` when CWE or flaw label is unknown.
    pub fn from_token_record(record: TokenRecord) -> Option<Self> {
        let flaw_label = record.flaw_label?;
        Some(SampleRecord {
            id: record.id,
            function_name: record.function_name,
            cwe_id: record.cwe_id?,
            flaw_label,
            source_path: record.source_path,
            tokens: record.tokens,
            binary_label: usize::from(flaw_label == FlawLabel::Bad),
            multiclass_label: 0,
        })
    }

    pub fn label(&self, mode: LabelMode) -> usize {
        match mode {
            LabelMode::Binary => self.binary_label,
            LabelMode::Multiclass => self.multiclass_label,
        }
    }
}

/// Mapping from multiclass index (1-based; 0 is "non-flawed") to CWE id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub cwes: Vec<u32>,
}

impl ClassMap {
    /// Orders flawed CWEs by descending flawed-sample count, ties by ascending CWE id.
    pub fn by_frequency(samples: &[SampleRecord]) -> Self {
        let mut bad: BTreeMap<u32, usize> = BTreeMap::new();
        for s in samples.iter().filter(|s| s.flaw_label == FlawLabel::Bad) {
            *bad.entry(s.cwe_id).or_insert(0) += 1;
        }
        let mut order: Vec<(u32, usize)> = bad.into_iter().collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ClassMap {
            cwes: order.into_iter().map(|(cwe, _)| cwe).collect(),
        }
    }

    /// Parses `<class id> <cwe id>` lines; ids must be exactly 1..=K.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace().map(str::parse::<u32>);
            match (fields.next(), fields.next(), fields.next()) {
                (Some(Ok(class)), Some(Ok(cwe)), None) if class >= 1 => {
                    if pairs.insert(class, cwe).is_some() {
                        return Err(Error::format(path, format!("line {}: class {class} repeated", i + 1)));
                    }
                }
                _ => return Err(Error::format(path, format!("line {}: expected `<class id> <cwe id>`", i + 1))),
            }
        }
        if pairs.keys().copied().ne(1..=pairs.len() as u32) {
            return Err(Error::format(path, "class ids must be dense from 1"));
        }
        Ok(ClassMap {
            cwes: pairs.into_values().collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.cwes.len() + 1
    }

    pub fn class_of(&self, cwe_id: u32) -> Option<usize> {
        self.cwes.iter().position(|&c| c == cwe_id).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub samples: Vec<SampleRecord>,
    pub mode: LabelMode,
    pub class_map: ClassMap,
    /// Sample count per label under `mode`.
    pub class_counts: BTreeMap<usize, usize>,
    pub selection_log: Vec<SelectionStep>,
}

impl CorpusManifest {
    /// Builds a manifest with labels assigned in `mode` using the frequency class order.
    pub fn new(samples: Vec<SampleRecord>, mode: LabelMode) -> Self {
        let manifest = CorpusManifest {
            samples,
            mode,
            class_map: ClassMap::default(),
            class_counts: BTreeMap::new(),
            selection_log: Vec::new(),
        };
        assign_labels(manifest, mode, None).expect("frequency class map covers every CWE")
    }

    pub fn num_classes(&self) -> usize {
        match self.mode {
            LabelMode::Binary => 2,
            LabelMode::Multiclass => self.class_map.num_classes(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label(self.mode)).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.samples.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn write_to(&self, out: &mut impl Write, config_hash: &str) -> Result<()> {
        ArtifactHeader::new(MANIFEST_SCHEMA, MANIFEST_VERSION, config_hash).write_to(out)?;
        let meta = ManifestMeta {
            mode: self.mode,
            class_map: self.class_map.clone(),
            selection_log: self.selection_log.clone(),
        };
        serde_json::to_writer(&mut *out, &meta)?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut *out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead, path: &Path) -> Result<(ArtifactHeader, Self)> {
        let header = ArtifactHeader::read_from(input, path, MANIFEST_SCHEMA, MANIFEST_VERSION)?;
        let mut lines = input.lines();
        let meta: ManifestMeta = match lines.next() {
            Some(line) => serde_json::from_str(&line?).map_err(|e| Error::format(path, e.to_string()))?,
            None => return Err(Error::format(path, "missing manifest metadata line")),
        };
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            if !line.is_empty() {
                samples.push(serde_json::from_str(&line).map_err(|e| Error::format(path, e.to_string()))?);
            }
        }
        let mut manifest = CorpusManifest {
            samples,
            mode: meta.mode,
            class_map: meta.class_map,
            class_counts: BTreeMap::new(),
            selection_log: meta.selection_log,
        };
        manifest.recount();
        Ok((header, manifest))
    }

    fn recount(&mut self) {
        self.class_counts.clear();
        for s in &self.samples {
            *self.class_counts.entry(s.label(self.mode)).or_insert(0) += 1;
        }
    }

    /// Per-CWE bad/good/total table in descending total order.
    pub fn cwe_table(&self) -> String {
        let mut rows: HashMap<u32, (usize, usize)> = HashMap::new();
        for s in &self.samples {
            let row = rows.entry(s.cwe_id).or_default();
            match s.flaw_label {
                FlawLabel::Bad => row.0 += 1,
                FlawLabel::Good => row.1 += 1,
            }
        }
        let mut rows: Vec<(u32, usize, usize)> = rows.into_iter().map(|(c, (b, g))| (c, b, g)).collect();
        rows.sort_by(|a, b| (b.1 + b.2).cmp(&(a.1 + a.2)).then(a.0.cmp(&b.0)));
        let total = self.samples.len().max(1) as f64;
        let names: Vec<String> = rows
            .iter()
            .map(|(c, ..)| reference::cwe_name(*c).map_or_else(|| format!("CWE-{c}"), str::to_string))
            .collect();
        let width = names.iter().map(String::len).max().unwrap_or(4).max(4);
        let mut out = format!(
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>10}\n",
            "Name", "CWE ID", "# bad", "# good", "# total", "% of total"
        );
        for (name, (cwe, bad, good)) in names.iter().zip(&rows) {
            let _ = writeln!(
                out,
                "{name:<width$}  {cwe:>6}  {bad:>6}  {good:>6}  {:>7}  {:>9.2}%",
                bad + good,
                100.0 * (bad + good) as f64 / total
            );
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestMeta {
    mode: LabelMode,
    class_map: ClassMap,
    selection_log: Vec<SelectionStep>,
}

/// Assigns binary labels and multiclass indices, then makes `mode` the active labelling.
///
/// Without an explicit `class_map`, flawed CWEs are indexed 1..K by
/// descending flawed-sample count (ties by ascending CWE id).
pub fn assign_labels(mut manifest: CorpusManifest, mode: LabelMode, class_map: Option<&ClassMap>) -> Result<CorpusManifest> {
    let map = class_map
        .cloned()
        .unwrap_or_else(|| ClassMap::by_frequency(&manifest.samples));
    for s in &mut manifest.samples {
        s.binary_label = usize::from(s.flaw_label == FlawLabel::Bad);
        s.multiclass_label = match s.flaw_label {
            FlawLabel::Good => 0,
            FlawLabel::Bad => map.class_of(s.cwe_id).ok_or_else(|| {
                Error::InvalidArgument(format!("class map has no entry for CWE {}", s.cwe_id))
            })?,
        };
    }
    manifest.class_map = map;
    manifest.mode = mode;
    manifest.recount();
    Ok(manifest)
}

/// Balanced inverse-frequency weights `N / (K · n_c)`, indexed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        ClassWeights {
            weights: vec![1.0; num_classes],
        }
    }

    pub fn get(&self, label: usize) -> f64 {
        self.weights[label]
    }
}

/// Every class in `0..num_classes` must occur at least once.
pub fn compute_class_weights(labels: &[usize], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or(Error::LabelOutOfRange { label: l, classes: num_classes })? += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    let n = labels.len() as f64;
    let k = num_classes as f64;
    Ok(ClassWeights {
        weights: counts.iter().map(|&c| n / (k * c as f64)).collect(),
    })
}
