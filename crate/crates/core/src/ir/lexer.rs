//! Line-level lexer for textual LLVM IR.
//!
//! Produces raw lexemes only; renaming and literal splitting happen in
//! [`super::standardize`].

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lexeme<'a> {
    /// `%name` (sigil stripped, quotes removed).
    Local(&'a str),
    /// `@name` (sigil stripped, quotes removed).
    Global(&'a str),
    /// A standalone numeric literal, verbatim.
    Number(&'a str),
    /// Keywords, opcodes, type names, bare label names.
    Word(&'a str),
    /// A quoted string literal including its quotes.
    Str(&'a str),
    Punct(char),
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'$' | b'-')
}

fn is_word_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'$')
}

/// Length of the numeric literal starting at `s[0]`, if one starts there.
///
/// Accepts `-?DIGITS(.DIGITS*)?([eE][+-]?DIGITS)?` and `-?0x HEX+`.
pub fn scan_number(s: &[u8]) -> Option<usize> {
    let mut i = 0;
    if s.first() == Some(&b'-') {
        i += 1;
    }
    if !s.get(i).is_some_and(u8::is_ascii_digit) {
        return None;
    }
    if s[i] == b'0'
        && matches!(s.get(i + 1), Some(b'x' | b'X'))
        && s.get(i + 2).is_some_and(u8::is_ascii_hexdigit)
    {
        i += 2;
        while s.get(i).is_some_and(u8::is_ascii_hexdigit) {
            i += 1;
        }
        return Some(i);
    }
    while s.get(i).is_some_and(u8::is_ascii_digit) {
        i += 1;
    }
    if s.get(i) == Some(&b'.') {
        i += 1;
        while s.get(i).is_some_and(u8::is_ascii_digit) {
            i += 1;
        }
    }
    if matches!(s.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(s.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        if s.get(j).is_some_and(u8::is_ascii_digit) {
            while s.get(j).is_some_and(u8::is_ascii_digit) {
                j += 1;
            }
            i = j;
        }
    }
    Some(i)
}

/// True iff the whole lexeme is a numeric literal.
pub fn is_numeric_literal(lexeme: &str) -> bool {
    scan_number(lexeme.as_bytes()) == Some(lexeme.len())
}

/// Reads a `%`/`@` name: either a quoted string or a run of identifier characters.
fn scan_name(line: &str, start: usize) -> (&str, usize) {
    let bytes = line.as_bytes();
    if bytes.get(start) == Some(&b'"') {
        let rest = &line[start + 1..];
        match rest.find('"') {
            Some(end) => (&rest[..end], start + end + 2),
            None => (rest, line.len()),
        }
    } else {
        let mut end = start;
        while end < bytes.len() && is_ident_char(bytes[end]) {
            end += 1;
        }
        (&line[start..end], end)
    }
}

pub fn lex_line(line: &str) -> Vec<Lexeme<'_>> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        match c {
            b'%' | b'@' => {
                let (name, end) = scan_name(line, i + 1);
                if name.is_empty() {
                    out.push(Lexeme::Punct(c as char));
                    i += 1;
                    continue;
                }
                out.push(if c == b'%' {
                    Lexeme::Local(name)
                } else {
                    Lexeme::Global(name)
                });
                i = end;
            }
            b'"' => {
                let end = line[i + 1..].find('"').map_or(line.len(), |e| i + e + 2);
                out.push(Lexeme::Str(&line[i..end]));
                i = end;
            }
            b'-' | b'0'..=b'9' => {
                match scan_number(&bytes[i..]) {
                    // A literal must not run into an identifier (`2x`, `0abc`).
                    Some(len) if !bytes.get(i + len).is_some_and(|&b| is_word_char(b)) => {
                        out.push(Lexeme::Number(&line[i..i + len]));
                        i += len;
                    }
                    _ if c == b'-' => {
                        out.push(Lexeme::Punct('-'));
                        i += 1;
                    }
                    _ => {
                        let end = word_end(bytes, i);
                        out.push(Lexeme::Word(&line[i..end]));
                        i = end;
                    }
                }
            }
            _ if is_word_char(c) => {
                let end = word_end(bytes, i);
                out.push(Lexeme::Word(&line[i..end]));
                i = end;
            }
            _ => {
                let ch = line[i..].chars().next().expect("in bounds");
                out.push(Lexeme::Punct(ch));
                i += ch.len_utf8();
            }
        }
    }
    out
}

fn word_end(bytes: &[u8], start: usize) -> usize {
    let mut end = start;
    while end < bytes.len() && is_word_char(bytes[end]) {
        end += 1;
    }
    end
}

/// Removes a trailing `;` comment, ignoring semicolons inside string literals.
pub fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            ';' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
