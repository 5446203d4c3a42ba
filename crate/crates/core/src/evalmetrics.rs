//! Downstream task evaluation: few-shot prompt assembly and text metrics.
//!
//! Four task shapes are supported. Each has a fixed CSV schema and a set of
//! named prompt slots; the answer-bearing slots may only appear in a
//! template's example section, never in its query section.
//!
//! | task code      | CSV header                | input slots         | output slot |
//! |----------------|---------------------------|---------------------|-------------|
//! | `sc`           | `text,label`              | `{input}`           | `{output}`  |
//! | `gec`          | `source,target`           | `{input}`           | `{output}`  |
//! | `qa_context`   | `context,question,answer` | `{context}`,
//! |                |                           | `{question}`        | `{answer}`  |
//! | `qa_nocontext` | `question,answer`         | `{question}`        | `{answer}`  |
//!
//! Metrics: exact-match accuracy in percent on the first non-empty line
//! (trimmed, casefolded), corpus BLEU with clipped n-gram precisions up to 4
//! and the closest-reference-length brevity penalty, and mean ROUGE-L (LCS
//! F-measure). Model outputs arrive as plain text files, one prediction per
//! line, one file per run; scores are reported per run and averaged.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("template: {message}")]
    BadTemplate { message: String },
    #[error("template slots: {message}")]
    TemplateSlotMismatch { message: String },
    #[error("expected {expected} prediction files (one per run), got {found}")]
    MissingRuns { expected: usize, found: usize },
    #[error("missing input files: {}", .paths.join(", "))]
    MissingFiles { paths: Vec<String> },
    #[error("predictions and references differ in length ({predictions} vs {references})")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("reference {index} has no words")]
    EmptyReference { index: usize },
    #[error("{path}: {message}")]
    BadData { path: String, message: String },
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    SpellCorrection,
    GrammarCorrection,
    QaWithContext,
    QaNoContext,
}

impl Task {
    pub fn code(self) -> &'static str {
        match self {
            Task::SpellCorrection => "sc",
            Task::GrammarCorrection => "gec",
            Task::QaWithContext => "qa_context",
            Task::QaNoContext => "qa_nocontext",
        }
    }

    pub fn from_code(code: &str) -> Option<Task> {
        match code {
            "sc" => Some(Task::SpellCorrection),
            "gec" => Some(Task::GrammarCorrection),
            "qa_context" => Some(Task::QaWithContext),
            "qa_nocontext" => Some(Task::QaNoContext),
            _ => None,
        }
    }

    /// `(csv column, slot name)` pairs, in header order.
    pub fn columns(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Task::SpellCorrection => &[("text", "input"), ("label", "output")],
            Task::GrammarCorrection => &[("source", "input"), ("target", "output")],
            Task::QaWithContext => {
                &[("context", "context"), ("question", "question"), ("answer", "answer")]
            }
            Task::QaNoContext => &[("question", "question"), ("answer", "answer")],
        }
    }

    pub fn input_slots(self) -> &'static [&'static str] {
        match self {
            Task::SpellCorrection | Task::GrammarCorrection => &["input"],
            Task::QaWithContext => &["context", "question"],
            Task::QaNoContext => &["question"],
        }
    }

    pub fn output_slot(self) -> &'static str {
        match self {
            Task::SpellCorrection | Task::GrammarCorrection => "output",
            Task::QaWithContext | Task::QaNoContext => "answer",
        }
    }
}

/// One task instance: slot name to value.
pub type Instance = BTreeMap<&'static str, String>;

static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

/// A few-shot prompt template: an example section and a query section
/// separated by a line containing only `---`. The example section must use
/// every slot of the task; the query section must use every input slot and
/// may not use the output slot.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    task: Task,
    example: String,
    query: String,
}

impl PromptTemplate {
    pub fn parse(text: &str, task: Task) -> Result<Self, EvalError> {
        let mut split = None;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if line.trim_end_matches(['\r', '\n']) == "---" {
                split = Some((offset, offset + line.len()));
                break;
            }
            offset += line.len();
        }
        let Some((sep_start, sep_end)) = split else {
            return Err(EvalError::BadTemplate {
                message: "no `---` separator line between example and query sections".into(),
            });
        };
        let example = text[..sep_start].to_string();
        let query = text[sep_end..].to_string();

        let mut allowed: Vec<&str> = task.input_slots().to_vec();
        allowed.push(task.output_slot());
        for (section, name) in [(&example, "example"), (&query, "query")] {
            for cap in SLOT_RE.captures_iter(section) {
                let slot = cap.get(1).unwrap().as_str();
                if !allowed.contains(&slot) {
                    return Err(EvalError::TemplateSlotMismatch {
                        message: format!(
                            "unknown slot {{{slot}}} in {name} section for task {}",
                            task.code()
                        ),
                    });
                }
            }
        }
        for slot in &allowed {
            if !example.contains(&format!("{{{slot}}}")) {
                return Err(EvalError::TemplateSlotMismatch {
                    message: format!("example section never uses {{{slot}}}"),
                });
            }
        }
        for slot in task.input_slots() {
            if !query.contains(&format!("{{{slot}}}")) {
                return Err(EvalError::TemplateSlotMismatch {
                    message: format!("query section never uses {{{slot}}}"),
                });
            }
        }
        let out = task.output_slot();
        if query.contains(&format!("{{{out}}}")) {
            return Err(EvalError::TemplateSlotMismatch {
                message: format!("query section must not use the answer slot {{{out}}}"),
            });
        }
        Ok(PromptTemplate { task, example, query })
    }

    pub fn from_file(path: &Path, task: Task) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            action: "read",
            path: path.display().to_string(),
            source,
        })?;
        PromptTemplate::parse(&text, task)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    fn fill(&self, section: &str, instance: &Instance, with_output: bool) -> Result<String, EvalError> {
        let mut slots: Vec<&str> = self.task.input_slots().to_vec();
        if with_output {
            slots.push(self.task.output_slot());
        }
        let mut out = section.to_string();
        for slot in slots {
            let value = instance.get(slot).ok_or_else(|| EvalError::TemplateSlotMismatch {
                message: format!("instance is missing a value for {{{slot}}}"),
            })?;
            out = out.replace(&format!("{{{slot}}}"), value);
        }
        Ok(out)
    }

    /// Renders the few-shot prompt: each example through the example
    /// section, then the query instance through the query section.
    pub fn render(&self, examples: &[Instance], query: &Instance) -> Result<String, EvalError> {
        let mut out = String::new();
        for ex in examples {
            out.push_str(&self.fill(&self.example, ex, true)?);
        }
        out.push_str(&self.fill(&self.query, query, false)?);
        Ok(out)
    }
}

/// Reads a task CSV with the exact header the task demands.
pub fn read_task_csv(path: &Path, task: Task) -> Result<Vec<Instance>, EvalError> {
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_path(path).map_err(|e| {
        EvalError::Io { action: "read", path: display.clone(), source: std::io::Error::other(e) }
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::BadData { path: display.clone(), message: e.to_string() })?;
    let want: Vec<&str> = task.columns().iter().map(|&(col, _)| col).collect();
    let found: Vec<&str> = headers.iter().collect();
    if found != want {
        return Err(EvalError::BadData {
            path: display,
            message: format!("expected header {:?} for task {}, found {:?}", want.join(","), task.code(), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record
            .map_err(|e| EvalError::BadData { path: display.clone(), message: e.to_string() })?;
        let mut inst = Instance::new();
        for (i, &(_, slot)) in task.columns().iter().enumerate() {
            inst.insert(slot, record[i].to_string());
        }
        rows.push(inst);
    }
    Ok(rows)
}

/// Reads model outputs: plain UTF-8 text, one prediction per line, aligned
/// with the task file's rows.
pub fn read_predictions(path: &Path) -> Result<Vec<String>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        action: "read",
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

/// The comparable core of a model answer: its first non-empty line, trimmed
/// and casefolded.
pub fn extract_answer(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_lowercase()
}

/// Percent of predictions whose extracted answer matches the reference's,
/// in [0, 100].
pub fn accuracy(predictions: &[String], references: &[String]) -> Result<f64, EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| extract_answer(p) == extract_answer(r))
        .count();
    Ok(hits as f64 * 100.0 / predictions.len() as f64)
}

/// Corpus BLEU (0..100) over whitespace words, clipped n-gram precisions
/// n = 1..4.
///
/// Orders for which the candidates have no n-grams at all are dropped from
/// the geometric mean; an order with n-grams but zero matches contributes
/// 1e-9 / total instead of zero. No unigram match anywhere scores 0. The
/// brevity penalty uses, per candidate, the reference length closest to the
/// candidate length (ties to the shorter one).
pub fn bleu(candidates: &[String], references: &[Vec<String>]) -> Result<f64, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: candidates.len(),
            references: references.len(),
        });
    }
    let mut totals = [0u64; 4];
    let mut matches = [0u64; 4];
    let mut c_total = 0u64;
    let mut r_total = 0u64;
    for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(EvalError::EmptyReference { index: i });
        }
        let cw: Vec<&str> = cand.split_whitespace().collect();
        let refs_words: Vec<Vec<&str>> = refs.iter().map(|r| r.split_whitespace().collect()).collect();
        if refs_words.iter().any(Vec::is_empty) {
            return Err(EvalError::EmptyReference { index: i });
        }
        c_total += cw.len() as u64;
        let closest = refs_words
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| ((l as i64 - cw.len() as i64).abs(), l))
            .expect("at least one reference");
        r_total += closest as u64;
        for n in 1..=4usize {
            if cw.len() < n {
                continue;
            }
            totals[n - 1] += (cw.len() - n + 1) as u64;
            let mut cand_counts: HashMap<&[&str], u64> = HashMap::new();
            for w in cw.windows(n) {
                *cand_counts.entry(w).or_insert(0) += 1;
            }
            let mut clip: HashMap<&[&str], u64> = HashMap::new();
            for rw in &refs_words {
                let mut counts: HashMap<&[&str], u64> = HashMap::new();
                for w in rw.windows(n) {
                    *counts.entry(w).or_insert(0) += 1;
                }
                for (k, v) in counts {
                    let best = clip.entry(k).or_insert(0);
                    *best = (*best).max(v);
                }
            }
            for (k, v) in cand_counts {
                matches[n - 1] += v.min(clip.get(k).copied().unwrap_or(0));
            }
        }
    }
    if c_total == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0u32;
    for n in 0..4 {
        if totals[n] == 0 {
            continue;
        }
        orders += 1;
        let p = if matches[n] == 0 {
            1e-9 / totals[n] as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / f64::from(orders)).exp();
    let bp = if c_total >= r_total {
        1.0
    } else {
        (1.0 - r_total as f64 / c_total as f64).exp()
    };
    Ok(100.0 * bp * geo)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for wa in a {
        for (j, wb) in b.iter().enumerate() {
            cur[j + 1] = if wa == wb { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (equal precision/recall weight) over whitespace words.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Mean ROUGE-L across pairs. References must be non-empty.
pub fn rouge_l_corpus(candidates: &[String], references: &[String]) -> Result<f64, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, (c, r)) in candidates.iter().zip(references).enumerate() {
        if r.split_whitespace().next().is_none() {
            return Err(EvalError::EmptyReference { index: i });
        }
        sum += rouge_l(c, r);
    }
    Ok(sum / candidates.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub task: Task,
    pub examples: usize,
    /// Exact-match accuracy in percent.
    pub accuracy: f64,
    pub bleu: f64,
    pub rouge_l: f64,
}

/// Scores for every run of one task, plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RunScores {
    pub per_run: Vec<TaskScores>,
    pub mean: TaskScores,
}

/// Scores `runs` prediction files against one gold file, reporting each run
/// and the mean across runs. All three metrics are computed for every task;
/// pick the one that suits the task downstream. Fails up front — wrong file
/// count, then every absent file by name — before reading anything.
pub fn evaluate_run(
    task: Task,
    gold_csv: &Path,
    predictions: &[PathBuf],
    runs: usize,
) -> Result<RunScores, EvalError> {
    if predictions.len() != runs || runs == 0 {
        return Err(EvalError::MissingRuns { expected: runs, found: predictions.len() });
    }
    let missing: Vec<String> = std::iter::once(gold_csv)
        .chain(predictions.iter().map(PathBuf::as_path))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingFiles { paths: missing });
    }
    let instances = read_task_csv(gold_csv, task)?;
    let golds: Vec<String> = instances.iter().map(|i| i[task.output_slot()].clone()).collect();
    let gold_refs: Vec<Vec<String>> = golds.iter().map(|g| vec![g.clone()]).collect();
    let mut per_run = Vec::with_capacity(runs);
    for path in predictions {
        let preds = read_predictions(path)?;
        if preds.len() != golds.len() {
            return Err(EvalError::LengthMismatch {
                predictions: preds.len(),
                references: golds.len(),
            });
        }
        per_run.push(TaskScores {
            task,
            examples: golds.len(),
            accuracy: accuracy(&preds, &golds)?,
            bleu: bleu(&preds, &gold_refs)?,
            rouge_l: rouge_l_corpus(&preds, &golds)?,
        });
    }
    let n = per_run.len() as f64;
    let mean = TaskScores {
        task,
        examples: golds.len(),
        accuracy: per_run.iter().map(|s| s.accuracy).sum::<f64>() / n,
        bleu: per_run.iter().map(|s| s.bleu).sum::<f64>() / n,
        rouge_l: per_run.iter().map(|s| s.rouge_l).sum::<f64>() / n,
    };
    Ok(RunScores { per_run, mean })
}

/// Writes one row per run plus a final `mean` row:
/// `task,run,examples,accuracy,bleu,rouge_l`.
pub fn write_scores_csv(path: &Path, scores: &RunScores) -> Result<(), EvalError> {
    let mut out = String::from("task,run,examples,accuracy,bleu,rouge_l\n");
    let row = |run: &str, s: &TaskScores| {
        format!("{},{},{},{},{},{}\n", s.task.code(), run, s.examples, s.accuracy, s.bleu, s.rouge_l)
    };
    for (i, s) in scores.per_run.iter().enumerate() {
        out.push_str(&row(&(i + 1).to_string(), s));
    }
    out.push_str(&row("mean", &scores.mean));
    std::fs::write(path, out).map_err(|source| EvalError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}
