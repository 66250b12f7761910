use std::collections::HashSet;

use super::lexer::strip_comment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    /// Comment-stripped, trimmed, non-empty lines between the braces.
    pub body_lines: Vec<String>,
    pub is_definition: bool,
    /// 1-based line of the `define`/`declare` keyword.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IrModule {
    pub source_path: String,
    pub functions: Vec<IrFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalleeKind {
    Local,
    External,
}

impl IrModule {
    pub fn definitions(&self) -> impl Iterator<Item = &IrFunction> {
        self.functions.iter().filter(|f| f.is_definition)
    }

    pub fn is_defined(&self, name: &str) -> bool {
        self.definitions().any(|f| f.name == name)
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.functions.iter().any(|f| !f.is_definition && f.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// Local iff the callee is defined in `module`; declarations and unknown names are external.
pub fn classify_callee(name: &str, module: &IrModule) -> CalleeKind {
    if module.is_defined(name) {
        CalleeKind::Local
    } else {
        CalleeKind::External
    }
}

fn function_name(line: &str) -> Option<String> {
    let at = line.find('@')?;
    let rest = &line[at + 1..];
    let name = if let Some(quoted) = rest.strip_prefix('"') {
        &quoted[..quoted.find('"')?]
    } else {
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '-')))
            .unwrap_or(rest.len());
        &rest[..end]
    };
    (!name.is_empty()).then(|| name.to_string())
}

fn keyword_line(line: &str, keyword: &str) -> bool {
    line.strip_prefix(keyword)
        .is_some_and(|rest| rest.is_empty() || rest.starts_with(char::is_whitespace))
}

/// Splits RetDec-style IR text into function definitions and declarations.
///
/// Everything outside `define … { … }` blocks and `declare` lines (globals,
/// metadata, target triples) is skipped.
pub fn parse_module(ir_text: &str, source_path: &str) -> Result<IrModule> {
    let mut functions: Vec<IrFunction> = Vec::new();
    let mut seen = HashSet::new();
    let mut lines = ir_text.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l).trim()));
    let total_lines = ir_text.lines().count();

    while let Some((lineno, line)) = lines.next() {
        let (is_definition, name) = if keyword_line(line, "define") {
            (true, function_name(line))
        } else if keyword_line(line, "declare") {
            (false, function_name(line))
        } else if line == "}" {
            return Err(Error::Parse {
                line: lineno,
                message: "closing brace outside of a function body".into(),
            });
        } else {
            continue;
        };
        let name = name.ok_or_else(|| Error::Parse {
            line: lineno,
            message: "cannot find a function name".into(),
        })?;
        if !seen.insert(name.clone()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("function `{name}` appears twice"),
            });
        }

        let mut body_lines = Vec::new();
        if is_definition {
            if !line.ends_with('{') {
                match lines.by_ref().find(|(_, l)| !l.is_empty()) {
                    Some((_, "{")) => {}
                    found => {
                        return Err(Error::Parse {
                            line: found.map_or(total_lines, |(n, _)| n),
                            message: format!("`define {name}` without a body"),
                        })
                    }
                }
            }
            loop {
                match lines.next() {
                    None => {
                        return Err(Error::Parse {
                            line: total_lines,
                            message: format!(
                                "end of file inside `{name}` (opened at line {lineno}): missing closing brace"
                            ),
                        })
                    }
                    Some((_, "}")) => break,
                    Some((n, l)) if keyword_line(l, "define") => {
                        return Err(Error::Parse {
                            line: n,
                            message: format!("unbalanced braces: `{name}` (line {lineno}) is not closed"),
                        })
                    }
                    Some((_, "")) => {}
                    Some((_, l)) => body_lines.push(l.to_string()),
                }
            }
            if body_lines.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("`define {name}` has an empty body"),
                });
            }
        }
        functions.push(IrFunction {
            name,
            body_lines,
            is_definition,
            line: lineno,
        });
    }

    Ok(IrModule {
        source_path: source_path.to_string(),
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
; ModuleID = 'test'
@global_var_1 = global i32 0

define i32 @main(i32 %argc) local_unnamed_addr {
dec_label_pc_1000:
  %v1 = call i32 @helper(i32 %argc) ; call
  ret i32 %v1
}

declare i8* @memcpy(i8*, i8*, i64) local_unnamed_addr
";

    #[test]
    fn splits_definitions_and_declarations() {
        let m = parse_module(SAMPLE, "a.ll").unwrap();
        assert_eq!(m.functions.len(), 2);
        assert_eq!(m.functions[0].name, "main");
        assert!(m.functions[0].is_definition);
        assert_eq!(m.functions[0].body_lines.len(), 3);
        assert_eq!(m.functions[0].body_lines[1], "%v1 = call i32 @helper(i32 %argc)");
        assert_eq!(m.functions[1].name, "memcpy");
        assert!(!m.functions[1].is_definition);
        assert!(m.functions[1].body_lines.is_empty());
    }

    #[test]
    fn empty_text_is_empty_module() {
        assert!(parse_module("", "e.ll").unwrap().functions.is_empty());
    }

    #[test]
    fn missing_brace_reports_end_of_file() {
        let text = "define void @f() {\n  ret void\n";
        match parse_module(text, "x.ll") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("missing closing brace"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn define_without_body_is_an_error() {
        let text = "define void @f()\ndeclare void @g()\n";
        assert!(matches!(parse_module(text, "x.ll"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn nested_define_is_unbalanced() {
        let text = "define void @f() {\n ret void\ndefine void @g() {\n ret void\n}\n";
        assert!(matches!(parse_module(text, "x.ll"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn brace_on_next_line() {
        let m = parse_module("define void @f()\n{\n ret void\n}\n", "x.ll").unwrap();
        assert_eq!(m.functions[0].body_lines, vec!["ret void"]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "declare void @f()\ndeclare void @f()\n";
        assert!(parse_module(text, "x.ll").is_err());
    }

    #[test]
    fn callee_classification() {
        let m = parse_module(SAMPLE, "a.ll").unwrap();
        assert_eq!(classify_callee("memcpy", &m), CalleeKind::External);
        assert_eq!(classify_callee("main", &m), CalleeKind::Local);
        assert_eq!(classify_callee("nowhere", &m), CalleeKind::External);
    }
}
