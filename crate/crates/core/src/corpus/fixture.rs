//! Synthetic decompiler-style IR corpora for desk-scale runs.
//!
//! Every sample is a small IR module whose target function mixes
//! class-independent background lines with, for flawed classes, one motif
//! line: a characteristic external call carrying a class-specific constant.
//! Samples go through the real normalizer, so their token streams obey every
//! stream invariant.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reference::SELECTED_CWES, select_samples, CorpusManifest, LabelMode, SampleRecord, SelectionConfig};
use crate::error::Result;
use crate::ir::{normalize_text, MetadataOverrides};

const MOTIF_CALLS: [&str; 8] = ["memcpy", "strncpy", "malloc", "free", "fgets", "atoi", "memmove", "snprintf"];
const BACKGROUND_CALLS: [&str; 3] = ["printLine", "printIntLine", "rand"];
const HELPERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    /// Total classes including the non-flawed class 0.
    pub classes: usize,
    pub per_class: usize,
    /// Probability that a flawed sample carries its class motif.
    pub motif_strength: f64,
    /// Inclusive range of background lines before the motif position.
    pub background_lines: (usize, usize),
}

impl FixtureConfig {
    pub fn new(seed: u64, classes: usize, per_class: usize, motif_strength: f64) -> Self {
        FixtureConfig {
            seed,
            classes,
            per_class,
            motif_strength,
            background_lines: (3, 6),
        }
    }

    /// CWE id used for flawed class `class` (≥ 1).
    pub fn cwe_for_class(&self, class: usize) -> u32 {
        let mut cwes: Vec<u32> = SELECTED_CWES.iter().map(|c| c.cwe_id).collect();
        cwes.sort_unstable();
        cwes.get(class - 1).copied().unwrap_or(1000 + class as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFile {
    pub file_name: String,
    pub text: String,
    pub class: usize,
}

struct FunctionWriter<'r> {
    rng: &'r mut ChaCha8Rng,
    body: String,
    vars: usize,
}

impl FunctionWriter<'_> {
    fn fresh(&mut self) -> String {
        self.vars += 1;
        format!("%v{}", self.vars)
    }

    fn existing(&mut self) -> String {
        format!("%v{}", self.rng.random_range(1..=self.vars))
    }

    fn line(&mut self, line: &str) {
        let _ = writeln!(self.body, "  {line}");
    }

    fn background(&mut self) {
        let small: u32 = self.rng.random_range(0..64);
        match self.rng.random_range(0..9) {
            0 => {
                let (a, v) = (self.existing(), self.fresh());
                self.line(&format!("{v} = load i32, i32* {a}, align 4"));
            }
            1 => {
                let (a, v) = (self.existing(), self.fresh());
                self.line(&format!("{v} = add nsw i32 {a}, {small}"));
            }
            2 => {
                let (a, b) = (self.existing(), self.existing());
                self.line(&format!("store i32 {a}, i32* {b}, align 4"));
            }
            3 => {
                let (a, v) = (self.existing(), self.fresh());
                self.line(&format!("{v} = icmp slt i32 {a}, {small}"));
            }
            4 => {
                let (a, v) = (self.existing(), self.fresh());
                let h = self.rng.random_range(0..HELPERS);
                self.line(&format!("{v} = call i32 @fixture_helper_{h}(i32 {a})"));
            }
            5 => {
                let callee = BACKGROUND_CALLS[self.rng.random_range(0..BACKGROUND_CALLS.len())];
                let g = self.rng.random_range(0x4000..0x4100);
                self.line(&format!(
                    "call void @{callee}(i8* getelementptr inbounds ([{small} x i8], [{small} x i8]* @global_var_{g:x}, i64 0, i64 0))"
                ));
            }
            6 => {
                let v = self.fresh();
                self.line(&format!("{v} = alloca [{small} x i8], align 1"));
            }
            7 => {
                let pc = self.rng.random_range(0x1000..0x2000);
                self.line(&format!("br label %dec_label_pc_{pc:x}"));
                let _ = writeln!(self.body, "dec_label_pc_{pc:x}:");
            }
            _ => {
                let (a, b, v) = (self.existing(), self.existing(), self.fresh());
                self.line(&format!("{v} = mul i32 {a}, {b}"));
            }
        }
    }

    fn motif(&mut self, class: usize) {
        let callee = MOTIF_CALLS[class % MOTIF_CALLS.len()];
        let constant = 100 + 37 * class;
        let (a, b, v) = (self.existing(), self.existing(), self.fresh());
        self.line(&format!("{v} = call i8* @{callee}(i8* {a}, i8* {b}, i64 {constant})"));
    }
}

fn write_sample(rng: &mut ChaCha8Rng, config: &FixtureConfig, class: usize, index: usize) -> FixtureFile {
    let with_motif = class > 0 && rng.random_bool(config.motif_strength.clamp(0.0, 1.0));
    let (lo, hi) = config.background_lines;
    let n_before = rng.random_range(lo..=hi.max(lo));
    let n_after = rng.random_range(0..=1);
    // Non-flawed samples belong to the test cases of the flawed CWEs, round robin.
    let cwe = if class == 0 {
        config.cwe_for_class(1 + index % (config.classes - 1))
    } else {
        config.cwe_for_class(class)
    };
    let label = if class == 0 { "good" } else { "bad" };
    let testcase = format!("CWE{cwe}_fixture_c{class:02}_{index:04}");

    let mut w = FunctionWriter { rng, body: String::new(), vars: 2 };
    let _ = writeln!(w.body, "dec_label_pc_1000:");
    w.line("%v1 = alloca i32, align 4");
    w.line("%v2 = load i32, i32* %v1, align 4");
    for _ in 0..n_before {
        w.background();
    }
    if with_motif {
        w.motif(class);
    } else {
        w.background();
    }
    for _ in 0..n_after {
        w.background();
    }
    let ret = w.existing();
    w.line(&format!("ret i32 {ret}"));

    let mut text = format!("; fixture class {class}\n@global_var_4010 = global i32 0\n\n");
    let _ = writeln!(text, "define i32 @{testcase}_{label}(i32 %arg1, i8* %arg2) local_unnamed_addr {{");
    text.push_str(&w.body);
    text.push_str("}\n\n");
    for h in 0..HELPERS {
        let _ = writeln!(
            text,
            "define i32 @fixture_helper_{h}(i32 %arg1) local_unnamed_addr {{\ndec_label_pc_2000:\n  %v1 = add i32 %arg1, {h}\n  ret i32 %v1\n}}\n"
        );
    }
    for callee in MOTIF_CALLS.iter().chain(&BACKGROUND_CALLS) {
        let _ = writeln!(text, "declare i8* @{callee}(...) local_unnamed_addr");
    }
    FixtureFile {
        file_name: format!("CWE{cwe}__{testcase}__{label}.ll"),
        text,
        class,
    }
}

/// Generates `classes × per_class` IR files, deterministically per seed.
///
/// # Panics
///
/// If `classes < 2` or `per_class == 0`.
pub fn generate_fixture(config: &FixtureConfig) -> Vec<FixtureFile> {
    assert!(config.classes >= 2, "a fixture needs at least two classes");
    assert!(config.per_class >= 1, "a fixture needs at least one sample per class");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.classes)
        .flat_map(|class| (0..config.per_class).map(move |i| (class, i)))
        .map(|(class, i)| write_sample(&mut rng, config, class, i))
        .collect()
}

/// Normalizes a generated fixture and labels it (binary for two classes,
/// multiclass otherwise); class index `c` of the fixture becomes label `c`.
pub fn fixture_manifest(config: &FixtureConfig) -> Result<CorpusManifest> {
    let overrides = MetadataOverrides::default();
    let mut samples = Vec::new();
    for file in generate_fixture(config) {
        for record in normalize_text(&file.text, &file.file_name, &overrides)? {
            samples.extend(SampleRecord::from_token_record(record));
        }
    }
    let selection = SelectionConfig {
        min_class_count: 0,
        min_tokens: 0,
        ..Default::default()
    };
    let selected = select_samples(samples, &selection)?;
    let mode = if config.classes == 2 { LabelMode::Binary } else { LabelMode::Multiclass };
    Ok(CorpusManifest::new(selected.samples, mode))
}
