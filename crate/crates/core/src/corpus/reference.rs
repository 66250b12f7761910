//! Published per-CWE sample counts of the selected Juliet C/C++ corpus.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CweCount {
    pub name: &'static str,
    pub cwe_id: u32,
    pub bad: usize,
    pub good: usize,
}

impl CweCount {
    pub const fn total(&self) -> usize {
        self.bad + self.good
    }
}

const fn row(name: &'static str, cwe_id: u32, bad: usize, good: usize) -> CweCount {
    CweCount { name, cwe_id, bad, good }
}

/// Selected samples per CWE, by descending total.
pub const SELECTED_CWES: [CweCount; 23] = [
    row("Heap-based Buffer Overflow", 122, 2412, 4127),
    row("Integer Overflow or Wraparound", 190, 1441, 3597),
    row("Stack-based Buffer Overflow", 121, 1575, 2777),
    row("Integer Underflow (Wrap or Wraparound)", 191, 1125, 2816),
    row("Use of Uninitialized Variable", 457, 650, 2320),
    row("Uncontrolled Format String", 134, 820, 2060),
    row("Free of Memory not on the Heap", 590, 1141, 1477),
    row("Mismatched Memory Management Routines", 762, 611, 1940),
    row("Improper Neutralization of Special Elements used OS Command Injection", 78, 960, 1260),
    row("Relative Path Traversal", 23, 930, 1230),
    row("Buffer Underwrite ('Buffer Underflow')", 124, 810, 1333),
    row("Absolute Path Traversal", 36, 907, 1205),
    row("Unexpected Sign Extension", 194, 907, 983),
    row("Signed to Unsigned Conversion Error", 195, 896, 988),
    row("Buffer Under-read", 127, 764, 1110),
    row("Improper Release of Memory Before Removing Last Reference (Memory Leak)", 401, 265, 1455),
    row("Uncontrolled Resource Consumption ('Resource Exhaustion')", 400, 543, 1154),
    row("Divide By Zero", 369, 535, 1107),
    row("Buffer Over-read", 126, 602, 910),
    row("Integer Overflow to Buffer Overflow", 680, 450, 474),
    row("Double Free", 415, 181, 393),
    row("Numeric Truncation Error", 197, 447, 54),
    row("Unchecked Return Value to NULL Pointer Dereference", 690, 94, 234),
];

/// Total token count and vocabulary size of the full selected corpus.
pub const FULL_CORPUS_TOKENS: u64 = 30_710_959;
pub const FULL_CORPUS_VOCABULARY: usize = 760;
pub const FULL_CORPUS_SAMPLES: usize = 54_070;
/// Sample count actually used for training and evaluation.
pub const TRAINING_SAMPLES: usize = 50_651;

pub fn cwe_name(cwe_id: u32) -> Option<&'static str> {
    SELECTED_CWES.iter().find(|c| c.cwe_id == cwe_id).map(|c| c.name)
}
