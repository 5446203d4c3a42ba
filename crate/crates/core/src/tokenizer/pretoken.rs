//! Script-aware pre-tokenization.
//!
//! Text is split into chunks before BPE so that merges never cross word,
//! number or punctuation boundaries. Five chunk classes are tried in order
//! at each position (leftmost match, first class wins, greedy within a
//! class):
//!
//! 1. an optional leading space plus a run of Perso-Arabic letters
//!    (U+0600..U+06FF minus the digit and sentence-punctuation codepoints),
//! 2. a run of Perso-Arabic digits (U+06F0..U+06F9 or U+0660..U+0669),
//! 3. a single mark from { ۔ ، ؟ ؛ },
//! 4. a run of any other non-whitespace codepoints,
//! 5. a run of whitespace.
//!
//! Concatenating the chunks always reproduces the input exactly.

use std::sync::LazyLock;

use regex::Regex;

const CHUNK_PATTERN: &str = concat!(
    r" ?[\x{0600}-\x{060B}\x{060D}-\x{061A}\x{061C}-\x{061E}\x{0620}-\x{065F}\x{066A}-\x{06D3}\x{06D5}-\x{06EF}\x{06FA}-\x{06FF}]+",
    r"|[\x{0660}-\x{0669}\x{06F0}-\x{06F9}]+",
    r"|[\x{06D4}\x{060C}\x{061F}\x{061B}]",
    r"|[^\s\x{0600}-\x{06FF}]+",
    r"|\s+",
);

/// Compiled chunking rules. The standard rule set is available through
/// [`PreTokenRules::standard`]; a shared instance backs the tokenizer.
#[derive(Debug, Clone)]
pub struct PreTokenRules {
    re: Regex,
}

static STANDARD: LazyLock<PreTokenRules> =
    LazyLock::new(|| PreTokenRules { re: Regex::new(CHUNK_PATTERN).expect("builtin chunk pattern") });

impl PreTokenRules {
    pub fn standard() -> &'static PreTokenRules {
        &STANDARD
    }

    /// Splits `text` into chunks; the concatenation of the result equals
    /// `text`.
    pub fn pretokenize<'t>(&self, text: &'t str) -> Vec<&'t str> {
        self.re.find_iter(text).map(|m| m.as_str()).collect()
    }
}

/// Chunks `text` with the standard rules.
pub fn pretokenize(text: &str) -> Vec<&str> {
    PreTokenRules::standard().pretokenize(text)
}
