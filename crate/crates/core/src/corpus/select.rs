use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CorpusManifest, LabelMode, SampleRecord};
use crate::error::{Error, Result};
use crate::ir::FlawLabel;

pub const DEFAULT_BAD_FUNCTION_PATTERN: &str = r"_bad$";
pub const DEFAULT_GOOD_FUNCTION_PATTERN: &str = r"(^good|_good)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub filter: String,
    pub removed: usize,
}

/// Selection parameters; the defaults reproduce the published selection.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub min_class_count: usize,
    pub min_tokens: usize,
    pub excluded_cwes: BTreeSet<u32>,
    /// Functions of flawed samples must match this to count as weakness-related.
    pub bad_function_pattern: Regex,
    pub good_function_pattern: Regex,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_class_count: 500,
            min_tokens: 300,
            excluded_cwes: BTreeSet::new(),
            bad_function_pattern: Regex::new(DEFAULT_BAD_FUNCTION_PATTERN).expect("valid"),
            good_function_pattern: Regex::new(DEFAULT_GOOD_FUNCTION_PATTERN).expect("valid"),
        }
    }
}

fn apply(samples: &mut Vec<SampleRecord>, log: &mut Vec<SelectionStep>, filter: &str, keep: impl Fn(&SampleRecord) -> bool) {
    let before = samples.len();
    samples.retain(|s| keep(s));
    log.push(SelectionStep {
        filter: filter.to_string(),
        removed: before - samples.len(),
    });
}

fn per_cwe_counts(samples: &[SampleRecord]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.cwe_id).or_insert(0) += 1;
    }
    counts
}

/// Applies the test-case selection filters in their fixed order:
///
/// 1. drop excluded (platform-specific) CWEs,
/// 2. keep only functions related to the weakness (name patterns),
/// 3. drop CWEs with fewer than `min_class_count` samples,
/// 4. drop samples shorter than `min_tokens`,
/// 5. drop CWEs left without any flawed sample.
///
/// Step 4 runs after step 3, so a CWE can end up below `min_class_count`.
pub fn select_samples(records: Vec<SampleRecord>, config: &SelectionConfig) -> Result<CorpusManifest> {
    let mut samples = records;
    let mut log = Vec::new();

    apply(&mut samples, &mut log, "excluded CWEs", |s| !config.excluded_cwes.contains(&s.cwe_id));
    apply(&mut samples, &mut log, "unrelated functions", |s| match s.flaw_label {
        FlawLabel::Bad => config.bad_function_pattern.is_match(&s.function_name),
        FlawLabel::Good => config.good_function_pattern.is_match(&s.function_name),
    });
    let counts = per_cwe_counts(&samples);
    apply(&mut samples, &mut log, "CWEs below minimum test cases", |s| {
        counts[&s.cwe_id] >= config.min_class_count
    });
    apply(&mut samples, &mut log, "samples below minimum tokens", |s| s.tokens.len() >= config.min_tokens);
    let flawed: BTreeSet<u32> = samples
        .iter()
        .filter(|s| s.flaw_label == FlawLabel::Bad)
        .map(|s| s.cwe_id)
        .collect();
    apply(&mut samples, &mut log, "CWEs without flawed samples", |s| flawed.contains(&s.cwe_id));

    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut manifest = CorpusManifest::new(samples, LabelMode::Binary);
    manifest.selection_log = log;
    Ok(manifest)
}

pub fn render_selection_log(log: &[SelectionStep]) -> String {
    let width = log.iter().map(|s| s.filter.len()).max().unwrap_or(0).max("Filter".len());
    let mut out = format!("{:<width$}  {:>8}\n", "Filter", "Removed");
    for step in log {
        let _ = writeln!(out, "{:<width$}  {:>8}", step.filter, step.removed);
    }
    out
}
