//! Tokenizer quality metrics and side-by-side comparisons.
//!
//! Fertility (tokens per whitespace word) and average tokens per document
//! come from integer corpus totals divided once at the end, so they are
//! exact for a given corpus and independent of document order. Coverage is
//! the share of distinct word types whose bare form encodes to a single
//! token — a direct measure of vocabulary fit that repeating a common word
//! cannot inflate. Encoding throughput is measured separately and is off by
//! default: it is the one number here that is not reproducible.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::tokenizer::Vocabulary;

#[derive(Debug, Error)]
pub enum TokevalError {
    #[error("corpus has no {missing}")]
    EmptyCorpus { missing: &'static str },
    #[error("comparison needs at least 2 tokenizers, got {found}")]
    TooFewTokenizers { found: usize },
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerStats {
    /// Total tokens over total whitespace words.
    pub fertility: f64,
    /// Mean tokens per document.
    pub avg_token_count: f64,
    /// Median encoding throughput; `None` unless timing was requested.
    pub tokens_per_second: Option<f64>,
    /// Fraction of word types that encode to exactly one token.
    pub coverage: f64,
}

/// One evaluated tokenizer, labelled for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerReport {
    pub name: String,
    pub total_tokens: u64,
    pub stats: TokenizerStats,
}

/// Two or more tokenizers evaluated on the same corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub tokenizers: Vec<TokenizerReport>,
    /// `reduction_pct[i][j]`: percent fewer tokens tokenizer `i` produced
    /// than tokenizer `j` on this corpus (negative when `i` produced more).
    pub reduction_pct: Vec<Vec<f64>>,
}

/// Percent reduction of `count_a` relative to `count_b`.
pub fn token_reduction_pct(count_a: u64, count_b: u64) -> f64 {
    (1.0 - count_a as f64 / count_b as f64) * 100.0
}

fn per_doc_tokens(vocab: &Vocabulary, texts: &[String]) -> Vec<u64> {
    texts.par_iter().map(|t| vocab.encode(t).len() as u64).collect()
}

fn count_words(texts: &[String]) -> u64 {
    texts.iter().map(|t| t.split_whitespace().count() as u64).sum()
}

/// Tokens per whitespace word over the whole corpus.
pub fn fertility(vocab: &Vocabulary, texts: &[String]) -> Result<f64, TokevalError> {
    let words = count_words(texts);
    if words == 0 {
        return Err(TokevalError::EmptyCorpus { missing: "words" });
    }
    let tokens: u64 = per_doc_tokens(vocab, texts).iter().sum();
    Ok(tokens as f64 / words as f64)
}

/// Mean tokens per document. Documents may be empty; a corpus of only
/// empty documents averages to 0.
pub fn avg_token_count(vocab: &Vocabulary, texts: &[String]) -> Result<f64, TokevalError> {
    if texts.is_empty() {
        return Err(TokevalError::EmptyCorpus { missing: "documents" });
    }
    let tokens: u64 = per_doc_tokens(vocab, texts).iter().sum();
    Ok(tokens as f64 / texts.len() as f64)
}

/// Fraction of distinct word types whose bare form (no surrounding
/// whitespace) encodes to a single token.
pub fn coverage(vocab: &Vocabulary, texts: &[String]) -> Result<f64, TokevalError> {
    let types: HashSet<&str> = texts.iter().flat_map(|t| t.split_whitespace()).collect();
    if types.is_empty() {
        return Err(TokevalError::EmptyCorpus { missing: "word types" });
    }
    let types: Vec<&str> = types.into_iter().collect();
    let single: usize = types.par_iter().filter(|w| vocab.encode(w).len() == 1).count();
    Ok(single as f64 / types.len() as f64)
}

fn measure_tokens_per_second(vocab: &Vocabulary, texts: &[String], expected: u64) -> f64 {
    // single-threaded on purpose: a wall-clock number from a work-stealing
    // pool says more about the machine's load than the tokenizer
    let mut times: Vec<f64> = (0..3)
        .map(|_| {
            let t0 = Instant::now();
            let n: u64 = texts.iter().map(|t| vocab.encode(t).len() as u64).sum();
            assert_eq!(n, expected);
            t0.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    expected as f64 / times[times.len() / 2]
}

/// Evaluates one tokenizer on a corpus. `measure_speed` times at least
/// three full single-threaded encoding passes and reports the median.
pub fn evaluate(
    vocab: &Vocabulary,
    texts: &[String],
    measure_speed: bool,
) -> Result<TokenizerStats, TokevalError> {
    if texts.is_empty() {
        return Err(TokevalError::EmptyCorpus { missing: "documents" });
    }
    let words = count_words(texts);
    if words == 0 {
        return Err(TokevalError::EmptyCorpus { missing: "words" });
    }
    let tokens: u64 = per_doc_tokens(vocab, texts).iter().sum();
    Ok(TokenizerStats {
        fertility: tokens as f64 / words as f64,
        avg_token_count: tokens as f64 / texts.len() as f64,
        tokens_per_second: measure_speed
            .then(|| measure_tokens_per_second(vocab, texts, tokens)),
        coverage: coverage(vocab, texts)?,
    })
}

/// Evaluates two or more named tokenizers on the same corpus and computes
/// every pairwise token-count reduction.
pub fn compare(
    tokenizers: &[(&str, &Vocabulary)],
    texts: &[String],
    measure_speed: bool,
) -> Result<ComparisonReport, TokevalError> {
    if tokenizers.len() < 2 {
        return Err(TokevalError::TooFewTokenizers { found: tokenizers.len() });
    }
    let reports: Vec<TokenizerReport> = tokenizers
        .iter()
        .map(|&(name, vocab)| {
            Ok(TokenizerReport {
                name: name.to_string(),
                total_tokens: per_doc_tokens(vocab, texts).iter().sum(),
                stats: evaluate(vocab, texts, measure_speed)?,
            })
        })
        .collect::<Result<_, TokevalError>>()?;
    let reduction_pct = reports
        .iter()
        .map(|a| {
            reports.iter().map(|b| token_reduction_pct(a.total_tokens, b.total_tokens)).collect()
        })
        .collect();
    Ok(ComparisonReport { tokenizers: reports, reduction_pct })
}

pub const REPORT_HEADER: &str = "name,fertility,avg_token_count,tokens_per_second,coverage";

/// Writes one row per tokenizer under the header
/// `name,fertility,avg_token_count,tokens_per_second,coverage`.
pub fn write_report_csv(path: &Path, reports: &[TokenizerReport]) -> Result<(), TokevalError> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name,
            r.stats.fertility,
            r.stats.avg_token_count,
            r.stats.tokens_per_second.map(|t| t.to_string()).unwrap_or_default(),
            r.stats.coverage,
        ));
    }
    std::fs::write(path, out).map_err(|source| TokevalError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

/// Writes the bar-chart data: one `name,avg_token_count` row per tokenizer.
pub fn write_plot_csv(path: &Path, reports: &[TokenizerReport]) -> Result<(), TokevalError> {
    let mut out = String::from("name,avg_token_count\n");
    for r in reports {
        out.push_str(&format!("{},{}\n", r.name, r.stats.avg_token_count));
    }
    std::fs::write(path, out).map_err(|source| TokevalError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Vocabulary;

    fn texts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// One-word docs with known byte-fallback token counts: `two_byte` docs
    /// of "ab" (2 tokens each) and the rest "a" (1 token), `total` words.
    fn word_docs(total: usize, two_byte: usize) -> Vec<String> {
        let mut docs = vec!["ab".to_string(); two_byte];
        docs.extend(std::iter::repeat_n("a".to_string(), total - two_byte));
        docs
    }

    #[test]
    fn fertility_matches_hand_counted_ratios() {
        let v = Vocabulary::byte_fallback();
        // 445×1 + 55×2 = 555 tokens over 500 words
        assert_eq!(fertility(&v, &word_docs(500, 55)).unwrap(), 1.11);
        // 217×1 + 283×2 = 783 tokens
        assert_eq!(fertility(&v, &word_docs(500, 283)).unwrap(), 1.566);
        // 397×1 + 103×2 = 603 tokens
        assert_eq!(fertility(&v, &word_docs(500, 103)).unwrap(), 1.206);
        // every word one token
        assert_eq!(fertility(&v, &word_docs(500, 0)).unwrap(), 1.0);
    }

    #[test]
    fn fertility_is_one_division_of_integer_totals() {
        let v = Vocabulary::byte_fallback();
        let corpus = texts(&["abc abc", "a"]);
        let tokens: u64 = corpus.iter().map(|t| v.encode(t).len() as u64).sum();
        let words = 3u64;
        assert_eq!(fertility(&v, &corpus).unwrap(), tokens as f64 / words as f64);
    }

    #[test]
    fn avg_token_count_is_the_per_document_mean() {
        let v = Vocabulary::byte_fallback();
        // 10 and 20 single-byte tokens
        let corpus = texts(&[&"a".repeat(10), &"a".repeat(20)]);
        assert_eq!(avg_token_count(&v, &corpus).unwrap(), 15.0);
        // a single long document
        assert_eq!(avg_token_count(&v, &texts(&[&"a".repeat(603)])).unwrap(), 603.0);
        // empty documents still count toward the mean
        assert_eq!(avg_token_count(&v, &texts(&["", ""])).unwrap(), 0.0);
        assert!(matches!(
            avg_token_count(&v, &[]),
            Err(TokevalError::EmptyCorpus { missing: "documents" })
        ));
    }

    #[test]
    fn coverage_counts_word_types_not_occurrences() {
        let v = Vocabulary::byte_fallback();
        // types: a b c (single byte = single token), de fg hi jk lm no pq
        let corpus = texts(&["a b c de fg", "hi jk lm no pq"]);
        assert_eq!(coverage(&v, &corpus).unwrap(), 0.3);
        // repeating a covered word must not move the needle
        let skewed = texts(&["a a a a a a a a a de"]);
        assert_eq!(coverage(&v, &skewed).unwrap(), 0.5);
    }

    #[test]
    fn coverage_spans_the_unit_interval() {
        // base bytes only: every multi-byte word needs several tokens
        let v = Vocabulary::byte_fallback();
        assert_eq!(coverage(&v, &texts(&["اردو زبان"])).unwrap(), 0.0);
        // merge every corpus word into one token; each word also appears
        // document-initial so its bare form has a merge path of its own
        let corpus = texts(&["اردو زبان کا جملہ", "زبان اردو", "کا جملہ", "جملہ کا"]);
        let refs: Vec<&str> = corpus.iter().map(String::as_str).collect();
        let merges = crate::tokenizer::train_merge_sequence(refs, 10_000);
        let trained = Vocabulary::from_merges(merges).unwrap();
        assert_eq!(coverage(&trained, &corpus).unwrap(), 1.0);
        assert!(matches!(
            coverage(&trained, &texts(&["  \n "])),
            Err(TokevalError::EmptyCorpus { missing: "word types" })
        ));
    }

    #[test]
    fn evaluate_bundles_the_metrics() {
        let v = Vocabulary::byte_fallback();
        let corpus = texts(&["ab ab"]);
        let stats = evaluate(&v, &corpus, false).unwrap();
        // "ab ab" pretokenizes to ["ab", " ", "ab"]: five byte tokens
        assert_eq!(stats.fertility, 2.5);
        assert_eq!(stats.avg_token_count, 5.0);
        assert_eq!(stats.coverage, 0.0);
        assert_eq!(stats.tokens_per_second, None);
        assert!(stats.fertility >= 1.0);
        assert!(matches!(evaluate(&v, &[], false), Err(TokevalError::EmptyCorpus { .. })));
        assert!(matches!(
            evaluate(&v, &texts(&["   "]), false),
            Err(TokevalError::EmptyCorpus { .. })
        ));
    }

    #[test]
    fn training_improves_every_metric_on_the_training_corpus() {
        let corpus =
            texts(&["اردو زبان کا جملہ ہے", "زبان اردو زبان", "جملہ جملہ اردو زبان کا متن"]);
        let refs: Vec<&str> = corpus.iter().map(String::as_str).collect();
        let merges = crate::tokenizer::train_merge_sequence(refs, 10_000);
        let trained = Vocabulary::from_merges(merges).unwrap();
        let base = evaluate(&Vocabulary::byte_fallback(), &corpus, false).unwrap();
        let tuned = evaluate(&trained, &corpus, false).unwrap();
        assert!(tuned.fertility < base.fertility);
        assert!(tuned.avg_token_count < base.avg_token_count);
        assert!(tuned.coverage > base.coverage);
    }

    #[test]
    fn reduction_percentages_match_hand_computed_values() {
        assert_eq!(format!("{:.1}", token_reduction_pct(555, 783)), "29.1");
        assert_eq!(format!("{:.1}", token_reduction_pct(603, 783)), "23.0");
        assert_eq!(token_reduction_pct(700, 700), 0.0);
    }

    #[test]
    fn compare_reports_pairwise_reductions() {
        let base = Vocabulary::byte_fallback();
        let corpus = texts(&["اردو زبان کا جملہ", "اردو زبان"]);
        let refs: Vec<&str> = corpus.iter().map(String::as_str).collect();
        let merges = crate::tokenizer::train_merge_sequence(refs, 10_000);
        let trained = Vocabulary::from_merges(merges).unwrap();

        let report = compare(&[("trained", &trained), ("bytes", &base)], &corpus, false).unwrap();
        assert_eq!(report.tokenizers.len(), 2);
        assert_eq!(report.tokenizers[0].name, "trained");
        let a = report.tokenizers[0].total_tokens;
        let b = report.tokenizers[1].total_tokens;
        assert!(a < b);
        assert_eq!(report.reduction_pct[0][1], (1.0 - a as f64 / b as f64) * 100.0);
        assert_eq!(report.reduction_pct[0][0], 0.0);
        assert_eq!(report.reduction_pct[1][1], 0.0);
        // identical tokenizers: zero reduction both ways
        let same = compare(&[("x", &base), ("y", &base)], &corpus, false).unwrap();
        assert_eq!(same.reduction_pct, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);

        assert!(matches!(
            compare(&[("only", &base)], &corpus, false),
            Err(TokevalError::TooFewTokenizers { found: 1 })
        ));
    }

    #[test]
    fn throughput_is_only_reported_when_asked() {
        let v = Vocabulary::byte_fallback();
        let corpus = texts(&["کچھ متن یہاں", "اور کچھ وہاں"]);
        let quiet = evaluate(&v, &corpus, false).unwrap();
        assert!(quiet.tokens_per_second.is_none());
        let timed = evaluate(&v, &corpus, true).unwrap();
        assert!(timed.tokens_per_second.unwrap() > 0.0);
    }

    #[test]
    fn report_and_plot_csvs_use_the_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let v = Vocabulary::byte_fallback();
        let corpus = texts(&["ایک دو", "تین"]);
        let report = compare(&[("a", &v), ("b", &v)], &corpus, false).unwrap();
        write_report_csv(&path, &report.tokenizers).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("name,fertility,avg_token_count,tokens_per_second,coverage"));
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], "a");
        let fertility: f64 = fields[1].parse().unwrap();
        assert_eq!(fertility, report.tokenizers[0].stats.fertility);
        assert_eq!(fields[3], "", "no timing requested, so the speed cell stays empty");
        assert_eq!(lines.count(), 1);

        let plot = dir.path().join("plot.csv");
        write_plot_csv(&plot, &report.tokenizers).unwrap();
        let content = std::fs::read_to_string(&plot).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next(), Some("name,avg_token_count"));
        assert_eq!(
            lines.next(),
            Some(format!("a,{}", report.tokenizers[0].stats.avg_token_count).as_str())
        );
    }
}
