//! Decompiled LLVM IR → standardized per-function token streams.

mod lexer;
mod parse;
mod standardize;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lexer::{is_numeric_literal, lex_line, strip_comment, Lexeme};
pub use parse::{classify_callee, parse_module, CalleeKind, IrFunction, IrModule};
pub use standardize::{
    is_placeholder, split_numeric_literal, standardize_function, standardize_module, FlawLabel,
    SymbolTable, TokenStream, EOL, GLOBAL_PREFIX, LABEL_PREFIX, LOCAL_FUNCTION, VAR_PREFIX,
};

use crate::error::{Error, Result};

pub const TOKENS_SCHEMA: &str = "irvuln.tokens";
pub const TOKENS_VERSION: u32 = 1;

/// One line of the token-record file. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: String,
    pub function_name: String,
    pub cwe_id: Option<u32>,
    pub flaw_label: Option<FlawLabel>,
    pub source_path: String,
    pub tokens: Vec<String>,
}

impl TokenRecord {
    pub fn from_stream(stream: TokenStream) -> Self {
        let stem = Path::new(&stream.source_path)
            .file_stem()
            .map_or_else(|| stream.source_path.clone(), |s| s.to_string_lossy().into_owned());
        TokenRecord {
            id: format!("{stem}::{}", stream.function_name),
            function_name: stream.function_name,
            cwe_id: stream.cwe_id,
            flaw_label: stream.flaw_label,
            source_path: stream.source_path,
            tokens: stream.tokens,
        }
    }
}

/// Extracts `(cwe_id, flaw_label)` from `<CWE>__<testcase>__<good|bad>.ll`.
///
/// The CWE part may be written `CWE121`, `CWE-121`, `CWE_121` or `121`.
pub fn file_name_metadata(file_name: &str) -> Option<(u32, FlawLabel)> {
    let stem = file_name.strip_suffix(".ll").unwrap_or(file_name);
    // Juliet test-case names contain `__` themselves, so only the ends are fixed.
    let (cwe, rest) = stem.split_once("__")?;
    let (testcase, label) = rest.rsplit_once("__")?;
    if testcase.is_empty() {
        return None;
    }
    let digits = cwe
        .trim_start_matches(|c: char| c.is_ascii_alphabetic())
        .trim_start_matches(['-', '_']);
    Some((digits.parse().ok()?, FlawLabel::parse(label)?))
}

/// Per-file metadata that takes precedence over the file-name convention.
///
/// Text format, one entry per line: `<file name>\t<cwe id>\t<good|bad>`;
/// blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default)]
pub struct MetadataOverrides {
    entries: HashMap<String, (u32, FlawLabel)>,
}

impl MetadataOverrides {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed = match fields.as_slice() {
                [name, cwe, label] => cwe
                    .trim()
                    .parse()
                    .ok()
                    .zip(FlawLabel::parse(label.trim()))
                    .map(|meta| (name.trim().to_string(), meta)),
                _ => None,
            };
            let (name, meta) = parsed.ok_or_else(|| {
                Error::format(path, format!("line {}: expected `<file>\\t<cwe>\\t<good|bad>`", i + 1))
            })?;
            entries.insert(name, meta);
        }
        Ok(MetadataOverrides { entries })
    }

    pub fn lookup(&self, file_name: &str) -> Option<(u32, FlawLabel)> {
        self.entries
            .get(file_name)
            .copied()
            .or_else(|| file_name_metadata(file_name))
    }
}

/// Parses and standardizes one IR file's text, attaching file-level metadata.
pub fn normalize_text(text: &str, source_path: &str, overrides: &MetadataOverrides) -> Result<Vec<TokenRecord>> {
    let module = parse_module(text, source_path)?;
    let file_name = Path::new(source_path)
        .file_name()
        .map_or_else(|| source_path.to_string(), |s| s.to_string_lossy().into_owned());
    let meta = overrides.lookup(&file_name);
    Ok(standardize_module(&module)
        .into_iter()
        .map(|mut stream| {
            stream.cwe_id = meta.map(|m| m.0);
            stream.flaw_label = meta.map(|m| m.1);
            TokenRecord::from_stream(stream)
        })
        .collect())
}
