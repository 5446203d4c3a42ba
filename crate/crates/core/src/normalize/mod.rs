//! Rule-based cleaning for scraped Urdu text.
//!
//! A document passes through five stages in a fixed order: noise removal,
//! ASCII digit conversion, character normalization, word-spacing repair and
//! unicode cleanup. Each stage is also exposed on its own. Cleaning the
//! output of `clean_document` again is a no-op under the default
//! configuration, and cleaned text never contains ASCII digits, U+00A0,
//! U+200B, runs of whitespace, runs of U+061F or empty parentheses.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("document is empty after cleaning")]
    EmptyAfterClean,
    #[error("map file line {line}: {message}")]
    BadMapFile { line: usize, message: String },
}

/// Noise categories tried in order by [`remove_noise`]. `StrayLatinDigits`
/// and `LatinScript` only apply when `remove_english` is set; the other
/// four always apply when present in the list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePattern {
    Url,
    Email,
    Phone,
    StrayLatinDigits,
    LatinScript,
    StraySymbols,
}

impl NoisePattern {
    pub const DEFAULT_ORDER: [NoisePattern; 6] = [
        NoisePattern::Url,
        NoisePattern::Email,
        NoisePattern::Phone,
        NoisePattern::StrayLatinDigits,
        NoisePattern::LatinScript,
        NoisePattern::StraySymbols,
    ];
}

/// Single-codepoint rewrite table. Values may be multi-codepoint (ligature
/// expansion) or empty (deletion).
#[derive(Debug, Clone, Default)]
pub struct CharMap {
    entries: HashMap<char, String>,
}

impl CharMap {
    pub fn get(&self, c: char) -> Option<&str> {
        self.entries.get(&c).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, from: char, to: String) {
        self.entries.insert(from, to);
    }

    pub fn remove(&mut self, from: char) {
        self.entries.remove(&from);
    }

    /// Parses `from<TAB>to` lines; `#` comments and blank lines are skipped.
    pub fn parse(text: &str) -> Result<CharMap, NormalizeError> {
        let mut map = CharMap::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let Some((from, to)) = raw.split_once('\t') else {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: "expected `from<TAB>to`".to_string(),
                });
            };
            let mut from_chars = from.chars();
            let (Some(c), None) = (from_chars.next(), from_chars.next()) else {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: format!("`from` must be exactly one codepoint, got `{from}`"),
                });
            };
            if map.entries.contains_key(&c) {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: format!("duplicate entry for `{c}`"),
                });
            }
            map.entries.insert(c, to.to_string());
        }
        Ok(map)
    }
}

/// Phrase rewrite table for run-together words. Matching is longest key
/// first, then leftmost, over the original text (replacements are never
/// rescanned).
#[derive(Debug, Clone, Default)]
pub struct SpaceMap {
    /// Sorted by (byte length desc, key asc) at construction.
    entries: Vec<(String, String)>,
}

impl SpaceMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_pairs(pairs: Vec<(String, String)>) -> SpaceMap {
        let mut entries = pairs;
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        SpaceMap { entries }
    }

    pub fn parse(text: &str) -> Result<SpaceMap, NormalizeError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let Some((from, to)) = raw.split_once('\t') else {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: "expected `from<TAB>to`".to_string(),
                });
            };
            if from.is_empty() || to.is_empty() {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: "both sides of a spacing entry must be non-empty".to_string(),
                });
            }
            if pairs.iter().any(|(k, _)| k == from) {
                return Err(NormalizeError::BadMapFile {
                    line: line_no,
                    message: format!("duplicate entry for `{from}`"),
                });
            }
            pairs.push((from.to_string(), to.to_string()));
        }
        Ok(SpaceMap::from_pairs(pairs))
    }
}

static DEFAULT_CHAR_MAP: LazyLock<CharMap> =
    LazyLock::new(|| CharMap::parse(include_str!("char_map_default.tsv")).expect("builtin char map"));
static DEFAULT_SPACE_MAP: LazyLock<SpaceMap> =
    LazyLock::new(|| SpaceMap::parse(include_str!("word_space_default.tsv")).expect("builtin space map"));

/// Arabic-Indic digits folded by the optional digit entries in the default
/// character map.
const ARABIC_INDIC_DIGITS: std::ops::RangeInclusive<char> = '\u{0660}'..='\u{0669}';

#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub remove_english: bool,
    pub noise_patterns: Vec<NoisePattern>,
    pub char_map: CharMap,
    pub word_space_map: SpaceMap,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            remove_english: false,
            noise_patterns: NoisePattern::DEFAULT_ORDER.to_vec(),
            char_map: DEFAULT_CHAR_MAP.clone(),
            word_space_map: DEFAULT_SPACE_MAP.clone(),
        }
    }
}

impl CleanConfig {
    /// Drops the Arabic-Indic digit entries (U+0660..U+0669) from the
    /// character map, leaving those digits untouched by cleaning.
    pub fn keep_arabic_indic_digits(mut self) -> Self {
        for c in ARABIC_INDIC_DIGITS {
            self.char_map.remove(c);
        }
        self
    }
}

/// Per-rule activity counters for one document or a whole corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleanReport {
    pub input_codepoints: u64,
    pub output_codepoints: u64,
    pub urls_removed: u64,
    pub emails_removed: u64,
    pub phones_removed: u64,
    pub stray_digit_runs_removed: u64,
    pub latin_runs_removed: u64,
    pub symbol_runs_removed: u64,
    pub digits_converted: u64,
    pub characters_mapped: u64,
    pub spacings_fixed: u64,
    pub zero_width_removed: u64,
    pub nbsp_replaced: u64,
    pub whitespace_runs_collapsed: u64,
    pub question_runs_collapsed: u64,
    pub empty_parens_removed: u64,
    pub documents_emptied: u64,
}

impl CleanReport {
    pub fn merge(&mut self, other: &CleanReport) {
        self.input_codepoints += other.input_codepoints;
        self.output_codepoints += other.output_codepoints;
        self.urls_removed += other.urls_removed;
        self.emails_removed += other.emails_removed;
        self.phones_removed += other.phones_removed;
        self.stray_digit_runs_removed += other.stray_digit_runs_removed;
        self.latin_runs_removed += other.latin_runs_removed;
        self.symbol_runs_removed += other.symbol_runs_removed;
        self.digits_converted += other.digits_converted;
        self.characters_mapped += other.characters_mapped;
        self.spacings_fixed += other.spacings_fixed;
        self.zero_width_removed += other.zero_width_removed;
        self.nbsp_replaced += other.nbsp_replaced;
        self.whitespace_runs_collapsed += other.whitespace_runs_collapsed;
        self.question_runs_collapsed += other.question_runs_collapsed;
        self.empty_parens_removed += other.empty_parens_removed;
        self.documents_emptied += other.documents_emptied;
    }

    /// (rule, count) rows in a fixed order, for the report CSV.
    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("input_codepoints", self.input_codepoints),
            ("output_codepoints", self.output_codepoints),
            ("urls_removed", self.urls_removed),
            ("emails_removed", self.emails_removed),
            ("phones_removed", self.phones_removed),
            ("stray_digit_runs_removed", self.stray_digit_runs_removed),
            ("latin_runs_removed", self.latin_runs_removed),
            ("symbol_runs_removed", self.symbol_runs_removed),
            ("digits_converted", self.digits_converted),
            ("characters_mapped", self.characters_mapped),
            ("spacings_fixed", self.spacings_fixed),
            ("zero_width_removed", self.zero_width_removed),
            ("nbsp_replaced", self.nbsp_replaced),
            ("whitespace_runs_collapsed", self.whitespace_runs_collapsed),
            ("question_runs_collapsed", self.question_runs_collapsed),
            ("empty_parens_removed", self.empty_parens_removed),
            ("documents_emptied", self.documents_emptied),
        ]
    }
}

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S+").unwrap());
static EMAIL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap());
// 7+ ASCII digits, optionally one dash or space between digits, optional +.
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\+?[0-9](?:[- ]?[0-9]){6,}").unwrap());
static LATIN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").unwrap());
static SYMBOL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:[\x00-\x08\x0B\x0C\x0E-\x1F\x7F\x{FFFD}#*^~|<>\\{}\[\]_•■□▪▫◦§¤†‡]+|&[A-Za-z]+;|&#[0-9]+;)")
        .unwrap()
});
// Punctuation a URL match should not swallow at its end.
const URL_TRAILING: [char; 10] = ['۔', '،', '؟', '؛', '.', ',', '!', '?', ')', '»'];

fn remove_matches(text: &str, re: &Regex, count: &mut u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in re.find_iter(text) {
        out.push_str(&text[last..m.start()]);
        last = m.end();
        *count += 1;
    }
    out.push_str(&text[last..]);
    out
}

fn remove_urls(text: &str, count: &mut u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in URL_RE.find_iter(text) {
        let matched = m.as_str().trim_end_matches(URL_TRAILING);
        out.push_str(&text[last..m.start()]);
        last = m.start() + matched.len();
        *count += 1;
    }
    out.push_str(&text[last..]);
    out
}

/// Removes ASCII digit runs inside tokens that mix Latin letters and digits
/// (OCR junk like `abc123`), leaving the letters for the Latin-script pass.
fn remove_stray_latin_digits(text: &str, count: &mut u64) -> String {
    static MIXED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9]+").unwrap());
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in MIXED_RE.find_iter(text) {
        let token = m.as_str();
        let has_alpha = token.bytes().any(|b| b.is_ascii_alphabetic());
        let has_digit = token.bytes().any(|b| b.is_ascii_digit());
        out.push_str(&text[last..m.start()]);
        last = m.end();
        if has_alpha && has_digit {
            let mut in_run = false;
            for c in token.chars() {
                if c.is_ascii_digit() {
                    if !in_run {
                        *count += 1;
                        in_run = true;
                    }
                } else {
                    in_run = false;
                    out.push(c);
                }
            }
        } else {
            out.push_str(token);
        }
    }
    out.push_str(&text[last..]);
    out
}

/// Applies the configured noise patterns in order, repeating the sequence
/// until nothing matches: removing one category can uncover another (a
/// symbol splitting a URL, for instance), and the output must match no
/// enabled pattern at all. Counts are per removed match.
pub fn remove_noise(text: &str, cfg: &CleanConfig) -> (String, CleanReport) {
    let mut report = CleanReport::default();
    let mut out = text.to_string();
    loop {
        let before_len = out.len();
        for pattern in &cfg.noise_patterns {
            out = match pattern {
                NoisePattern::Url => remove_urls(&out, &mut report.urls_removed),
                NoisePattern::Email => remove_matches(&out, &EMAIL_RE, &mut report.emails_removed),
                NoisePattern::Phone => remove_matches(&out, &PHONE_RE, &mut report.phones_removed),
                NoisePattern::StrayLatinDigits if cfg.remove_english => {
                    remove_stray_latin_digits(&out, &mut report.stray_digit_runs_removed)
                }
                NoisePattern::LatinScript if cfg.remove_english => {
                    remove_matches(&out, &LATIN_RE, &mut report.latin_runs_removed)
                }
                NoisePattern::StrayLatinDigits | NoisePattern::LatinScript => out,
                NoisePattern::StraySymbols => remove_matches(&out, &SYMBOL_RE, &mut report.symbol_runs_removed),
            };
        }
        // every pattern only deletes, so progress strictly shrinks the text
        if out.len() == before_len {
            return (out, report);
        }
    }
}

/// Rewrites ASCII digits 0-9 to U+06F0..U+06F9. All other codepoints pass
/// through unchanged.
pub fn convert_digits(text: &str) -> (String, u64) {
    let mut count = 0;
    let out = text
        .chars()
        .map(|c| {
            if c.is_ascii_digit() {
                count += 1;
                char::from_u32(0x06F0 + (c as u32 - '0' as u32)).unwrap()
            } else {
                c
            }
        })
        .collect();
    (out, count)
}

/// Single left-to-right pass over the text; produced output is not
/// re-scanned, so map cycles cannot loop.
pub fn normalize_characters(text: &str, map: &CharMap) -> (String, u64) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match map.get(c) {
            Some(replacement) => {
                count += 1;
                out.push_str(replacement);
            }
            None => out.push(c),
        }
    }
    (out, count)
}

/// Replaces each mapped run-together phrase with its spaced form. Longer
/// keys win over shorter ones; claimed spans are never re-matched.
pub fn fix_word_spacing(text: &str, map: &SpaceMap) -> (String, u64) {
    if map.entries.is_empty() {
        return (text.to_string(), 0);
    }
    // (start, end) byte spans claimed so far, with the replacement to emit.
    let mut claims: Vec<(usize, usize, &str)> = Vec::new();
    for (key, replacement) in &map.entries {
        for (start, _) in text.match_indices(key.as_str()) {
            let end = start + key.len();
            if claims.iter().all(|&(s, e, _)| end <= s || e <= start) {
                claims.push((start, end, replacement));
            }
        }
    }
    let count = claims.len() as u64;
    claims.sort_by_key(|&(s, _, _)| s);
    let mut out = String::with_capacity(text.len() + claims.len());
    let mut last = 0;
    for (start, end, replacement) in claims {
        out.push_str(&text[last..start]);
        out.push_str(replacement);
        last = end;
    }
    out.push_str(&text[last..]);
    (out, count)
}

#[derive(Debug, Clone, Copy, Default)]
struct CleanupCounts {
    zero_width: u64,
    nbsp: u64,
    whitespace_runs: u64,
    question_runs: u64,
    empty_parens: u64,
}

fn collapse_whitespace(text: &str, runs: &mut u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run_len = 0usize;
    let mut run_was_plain_space = true;
    let flush = |run_len: usize, plain: bool, runs: &mut u64| {
        if run_len > 1 || (run_len == 1 && !plain) {
            *runs += 1;
        }
    };
    for c in text.chars() {
        if c.is_whitespace() {
            if run_len == 0 {
                out.push(' ');
                run_was_plain_space = true;
            }
            run_was_plain_space &= c == ' ';
            run_len += 1;
        } else {
            flush(run_len, run_was_plain_space, runs);
            run_len = 0;
            out.push(c);
        }
    }
    flush(run_len, run_was_plain_space, runs);
    out
}

fn collapse_question_marks(text: &str, runs: &mut u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending = 0usize;
    for c in text.chars() {
        if c == '\u{061F}' {
            pending += 1;
        } else {
            if pending > 0 {
                out.push('\u{061F}');
                if pending > 1 {
                    *runs += 1;
                }
                pending = 0;
            }
            out.push(c);
        }
    }
    if pending > 0 {
        out.push('\u{061F}');
        if pending > 1 {
            *runs += 1;
        }
    }
    out
}

fn remove_empty_parens(text: &str, removed: &mut u64) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    loop {
        let mut next = Vec::with_capacity(chars.len());
        let mut hits = 0u64;
        let mut i = 0;
        while i < chars.len() {
            if chars[i] == '(' {
                if i + 1 < chars.len() && chars[i + 1] == ')' {
                    hits += 1;
                    i += 2;
                    continue;
                }
                if i + 2 < chars.len() && chars[i + 1] == ' ' && chars[i + 2] == ')' {
                    hits += 1;
                    i += 3;
                    continue;
                }
            }
            next.push(chars[i]);
            i += 1;
        }
        *removed += hits;
        if hits == 0 {
            return next.into_iter().collect();
        }
        chars = next;
    }
}

/// Final tidy pass: drops U+200B, turns U+00A0 into plain spaces, collapses
/// whitespace runs to one U+0020 and U+061F runs to one mark, deletes empty
/// parentheses (iterating to a fixed point) and trims the ends.
pub fn cleanup_unicode(text: &str) -> (String, CleanReport) {
    let mut counts = CleanupCounts::default();
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\u{200B}' => counts.zero_width += 1,
            '\u{00A0}' => {
                counts.nbsp += 1;
                out.push(' ');
            }
            _ => out.push(c),
        }
    }
    loop {
        let before = out.clone();
        out = collapse_whitespace(&out, &mut counts.whitespace_runs);
        out = collapse_question_marks(&out, &mut counts.question_runs);
        out = remove_empty_parens(&out, &mut counts.empty_parens);
        if out == before {
            break;
        }
    }
    out = out.trim_matches(' ').to_string();
    let report = CleanReport {
        zero_width_removed: counts.zero_width,
        nbsp_replaced: counts.nbsp,
        whitespace_runs_collapsed: counts.whitespace_runs,
        question_runs_collapsed: counts.question_runs,
        empty_parens_removed: counts.empty_parens,
        ..CleanReport::default()
    };
    (out, report)
}

fn clean_pass(text: &str, cfg: &CleanConfig) -> (String, CleanReport) {
    let (noise_removed, mut report) = remove_noise(text, cfg);
    let (digits_done, digits) = convert_digits(&noise_removed);
    report.digits_converted = digits;
    let (chars_done, mapped) = normalize_characters(&digits_done, &cfg.char_map);
    report.characters_mapped = mapped;
    let (spaced, fixed) = fix_word_spacing(&chars_done, &cfg.word_space_map);
    report.spacings_fixed = fixed;
    let (cleaned, cleanup) = cleanup_unicode(&spaced);
    report.zero_width_removed = cleanup.zero_width_removed;
    report.nbsp_replaced = cleanup.nbsp_replaced;
    report.whitespace_runs_collapsed = cleanup.whitespace_runs_collapsed;
    report.question_runs_collapsed = cleanup.question_runs_collapsed;
    report.empty_parens_removed = cleanup.empty_parens_removed;
    (cleaned, report)
}

/// Iteration cap for pathological user-supplied maps that keep rewriting
/// their own output; the default maps converge in one or two passes.
const MAX_CLEAN_PASSES: usize = 16;

/// Runs the stage order (noise removal, digit conversion, character
/// normalization, spacing repair, unicode cleanup) until the text is stable,
/// so late stages cannot leave behind newly-exposed noise. Fails with
/// [`NormalizeError::EmptyAfterClean`] when nothing survives.
pub fn clean_document(text: &str, cfg: &CleanConfig) -> Result<(String, CleanReport), NormalizeError> {
    let mut report = CleanReport { input_codepoints: text.chars().count() as u64, ..CleanReport::default() };
    let mut current = text.to_string();
    for _ in 0..MAX_CLEAN_PASSES {
        let (next, pass_report) = clean_pass(&current, cfg);
        report.merge(&pass_report);
        let stable = next == current;
        current = next;
        if stable {
            break;
        }
    }
    report.output_codepoints = current.chars().count() as u64;
    if current.is_empty() {
        return Err(NormalizeError::EmptyAfterClean);
    }
    Ok((current, report))
}
