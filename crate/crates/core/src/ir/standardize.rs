use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::lexer::{is_numeric_literal, lex_line, Lexeme};
use super::parse::{classify_callee, CalleeKind, IrFunction, IrModule};

pub const EOL: &str = "EOL";
pub const LOCAL_FUNCTION: &str = "FUN";
pub const VAR_PREFIX: &str = "VAR_";
pub const GLOBAL_PREFIX: &str = "GVAR_";
pub const LABEL_PREFIX: &str = "LBL_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlawLabel {
    Good,
    Bad,
}

impl FlawLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FlawLabel::Good => "good",
            FlawLabel::Bad => "bad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "good" => Some(FlawLabel::Good),
            "bad" => Some(FlawLabel::Bad),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub function_name: String,
    pub cwe_id: Option<u32>,
    pub flaw_label: Option<FlawLabel>,
    pub source_path: String,
}

/// Per-function renaming state. Counters start at 1 in first-occurrence order.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    pub local_vars: IndexMap<String, usize>,
    pub globals: IndexMap<String, usize>,
    pub labels: IndexMap<String, usize>,
    pub defined_functions: HashSet<String>,
}

fn placeholder(map: &mut IndexMap<String, usize>, prefix: &str, name: &str) -> String {
    let next = map.len() + 1;
    let n = *map.entry(name.to_string()).or_insert(next);
    format!("{prefix}{n}")
}

impl SymbolTable {
    pub fn new(module: &IrModule) -> Self {
        SymbolTable {
            defined_functions: module.definitions().map(|f| f.name.clone()).collect(),
            ..Default::default()
        }
    }

    pub fn local(&mut self, name: &str) -> String {
        placeholder(&mut self.local_vars, VAR_PREFIX, name)
    }

    pub fn global(&mut self, name: &str) -> String {
        placeholder(&mut self.globals, GLOBAL_PREFIX, name)
    }

    pub fn label(&mut self, name: &str) -> String {
        placeholder(&mut self.labels, LABEL_PREFIX, name)
    }
}

/// Splits a numeric literal into one token per character.
///
/// # Panics
///
/// If `lexeme` is not a numeric literal; callers must only pass literals.
pub fn split_numeric_literal(lexeme: &str) -> Vec<String> {
    assert!(is_numeric_literal(lexeme), "not a numeric literal: {lexeme:?}");
    lexeme.chars().map(String::from).collect()
}

/// Name defined as a label on this line (`name:` at the start), if any.
fn label_definition<'a>(lexemes: &[Lexeme<'a>]) -> Option<&'a str> {
    match lexemes {
        [Lexeme::Word(name) | Lexeme::Number(name), Lexeme::Punct(':'), ..] => Some(name),
        _ => None,
    }
}

fn collect_labels<'a>(lines: &[Vec<Lexeme<'a>>]) -> HashSet<&'a str> {
    let mut labels = HashSet::new();
    for lexemes in lines {
        labels.extend(label_definition(lexemes));
        for pair in lexemes.windows(2) {
            if let [Lexeme::Word("label"), Lexeme::Local(name)] = pair {
                labels.insert(*name);
            }
        }
    }
    labels
}

/// Standardizes one function definition into its token stream.
///
/// Local variables become `VAR_n`, globals `GVAR_n`, labels `LBL_n`; calls to
/// functions defined in `module` become `FUN`, other callees keep their name;
/// numeric literals are split per character and every line ends with `EOL`.
pub fn standardize_function(function: &IrFunction, module: &IrModule) -> TokenStream {
    let lexed: Vec<Vec<Lexeme>> = function.body_lines.iter().map(|l| lex_line(l)).collect();
    let labels = collect_labels(&lexed);
    let mut symbols = SymbolTable::new(module);
    let mut tokens = Vec::new();

    for lexemes in lexed.iter().filter(|l| !l.is_empty()) {
        let defined_label = label_definition(lexemes);
        for (i, lexeme) in lexemes.iter().enumerate() {
            match *lexeme {
                Lexeme::Local(name) if labels.contains(name) => tokens.push(symbols.label(name)),
                Lexeme::Local(name) => tokens.push(symbols.local(name)),
                Lexeme::Global(name) => {
                    let is_call = lexemes.get(i + 1) == Some(&Lexeme::Punct('('));
                    if symbols.defined_functions.contains(name) {
                        tokens.push(LOCAL_FUNCTION.to_string());
                    } else if is_call || module.is_declared(name) {
                        debug_assert_eq!(classify_callee(name, module), CalleeKind::External);
                        tokens.push(name.to_string());
                    } else {
                        tokens.push(symbols.global(name));
                    }
                }
                Lexeme::Word(name) | Lexeme::Number(name) if i == 0 && defined_label == Some(name) => {
                    tokens.push(symbols.label(name))
                }
                Lexeme::Number(lit) => tokens.extend(split_numeric_literal(lit)),
                Lexeme::Word(w) | Lexeme::Str(w) => tokens.push(w.to_string()),
                Lexeme::Punct(c) => tokens.push(c.to_string()),
            }
        }
        tokens.push(EOL.to_string());
    }

    TokenStream {
        tokens,
        function_name: function.name.clone(),
        cwe_id: None,
        flaw_label: None,
        source_path: module.source_path.clone(),
    }
}

/// Standardizes every definition in `module`, in source order.
pub fn standardize_module(module: &IrModule) -> Vec<TokenStream> {
    module
        .definitions()
        .map(|f| standardize_function(f, module))
        .collect()
}

/// True for `VAR_n`, `GVAR_n`, `LBL_n` with n ≥ 1.
pub fn is_placeholder(token: &str) -> bool {
    [VAR_PREFIX, GLOBAL_PREFIX, LABEL_PREFIX].iter().any(|prefix| {
        token.strip_prefix(prefix).is_some_and(|n| {
            !n.is_empty() && !n.starts_with('0') && n.bytes().all(|b| b.is_ascii_digit())
        })
    })
}
