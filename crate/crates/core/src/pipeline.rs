//! End-to-end corpus pipeline.
//!
//! One sectioned config file drives nine stages in fixed order: clean,
//! dedup, train_tokenizer, eval_tokenizer, pack, stats, schedule, budget
//! and eval_metrics. Every stage writes its outputs under `out_dir`, and a
//! `manifest.json` records per-stage timings and counts — always nine
//! entries, with disabled stages marked skipped. If a stage fails, the
//! manifest still lands with the stages that completed. Apart from the
//! manifest (whose timings necessarily vary), two runs of the same config
//! over the same input produce byte-identical outputs; encoding throughput
//! measurement stays off here for that reason.
//!
//! ```text
//! [run]                    # required: input, out_dir; optional: seed
//! [clean]                  # remove_english, keep_arabic_indic_digits
//! [dedup]                  # threshold, num_hashes, bands, rows, shingle_k, exact_verify
//! [tokenizer]              # vocab_size; disabling also skips eval_tokenizer and pack
//! [pack]                   # tokens_per_shard
//! [stats]
//! [schedule]               # points + any training-plan key
//! [model]                  # required: full model shape
//! [hardware]               # required: preset = v100_cluster | v100_single, or full profile
//! [budget]
//! [eval]                   # task, test, predictions (comma-separated, one file per run)
//! ```
//!
//! Each stage section takes `enabled = true|false` (default true).
//! Relative paths in the config are resolved against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::budget::{self, BudgetError, HardwareProfile, ModelShape, TrainPlan};
use crate::corpus::{self, CorpusError, CorpusRecord};
use crate::dedup::{dedup_corpus, DedupConfig, DedupError};
use crate::evalmetrics::{evaluate_run, write_scores_csv, EvalError, Task};
use crate::kv::{self, KvError};
use crate::normalize::{clean_document, CleanConfig, CleanReport, NormalizeError};
use crate::tokenizer::{train_bpe, TokenizerError, Vocabulary};
use crate::tokeval::{self, TokevalError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    BadConfig { path: String, message: String },
    #[error("invalid config: {}", .diagnostics.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid { diagnostics: Vec<Diagnostic> },
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Tokeval(#[from] TokevalError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// The config itself is inconsistent.
    Config,
    /// A file the config points at does not exist.
    MissingFile,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

/// Collects every config problem instead of stopping at the first.
#[derive(Default)]
struct Collector {
    diags: Vec<Diagnostic>,
}

impl Collector {
    fn config(&mut self, message: String) {
        self.diags.push(Diagnostic { kind: DiagnosticKind::Config, message });
    }

    fn kv(&mut self, e: KvError) {
        self.config(e.to_string());
    }

    fn kv_all(&mut self, errors: Vec<KvError>) {
        for e in errors {
            self.kv(e);
        }
    }

    fn len(&self) -> usize {
        self.diags.len()
    }
}

/// Walks `f`'s `key` with `Fields::$method`, passing a present value to the
/// setter and recording a type error without aborting the walk.
macro_rules! take {
    ($col:expr, $f:expr, $method:ident, $key:literal, $set:expr) => {
        match $f.$method($key) {
            Ok(Some(v)) => $set(v),
            Ok(None) => {}
            Err(e) => $col.kv(e),
        }
    };
}

/// Like [`take!`] for required keys: records the missing-key or type error
/// and yields `None`.
macro_rules! req {
    ($col:expr, $f:expr, $method:ident, $key:literal) => {
        match $f.$method($key) {
            Ok(v) => Some(v),
            Err(e) => {
                $col.kv(e);
                None
            }
        }
    };
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub task: Task,
    pub test_csv: PathBuf,
    /// One predictions file per run.
    pub predictions: Vec<PathBuf>,
}

/// Which stages run. Data sections ([run], [model], [hardware]) have no
/// toggle; eval_tokenizer follows the tokenizer, and pack needs both its own
/// flag and a tokenizer to encode with.
#[derive(Debug, Clone, Copy)]
pub struct StageToggles {
    pub clean: bool,
    pub dedup: bool,
    pub tokenizer: bool,
    pub pack: bool,
    pub stats: bool,
    pub schedule: bool,
    pub budget: bool,
    pub eval: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            clean: true,
            dedup: true,
            tokenizer: true,
            pack: true,
            stats: true,
            schedule: true,
            budget: true,
            eval: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub stages: StageToggles,
    pub remove_english: bool,
    pub keep_arabic_indic_digits: bool,
    pub dedup: DedupConfig,
    pub vocab_size: u32,
    pub tokens_per_shard: u64,
    pub plan: TrainPlan,
    pub schedule_points: u32,
    pub shape: ModelShape,
    pub hardware: HardwareProfile,
    pub eval: Option<EvalSettings>,
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn fields(col: &mut Collector, entries: Vec<kv::Entry>, line: usize) -> Option<kv::Fields> {
    match kv::Fields::new(entries) {
        Ok(f) => Some(f.with_context_line(line)),
        Err(e) => {
            col.kv(e);
            None
        }
    }
}

impl PipelineConfig {
    /// Parses a config, collecting every problem — unknown sections and
    /// keys, missing required keys and sections, type errors — into one
    /// `Invalid` error rather than stopping at the first. `base` anchors
    /// relative paths.
    pub fn parse(text: &str, base: &Path, _label: &str) -> Result<Self, PipelineError> {
        Self::parse_collect(text, base)
            .map_err(|diagnostics| PipelineError::Invalid { diagnostics })
    }

    fn parse_collect(text: &str, base: &Path) -> Result<Self, Vec<Diagnostic>> {
        let mut col = Collector::default();
        let sections = match kv::parse_sectioned(text) {
            Ok(s) => s,
            Err(e) => {
                col.kv(e);
                return Err(col.diags);
            }
        };

        let mut input = None;
        let mut out_dir = None;
        let mut seed = 42u64;
        let mut stages = StageToggles::default();
        let mut remove_english = false;
        let mut keep_arabic_indic_digits = false;
        let mut dedup = DedupConfig::default();
        let mut vocab_size = 32_000u32;
        let mut tokens_per_shard = corpus::DEFAULT_TOKENS_PER_SHARD;
        let mut plan = TrainPlan::default();
        let mut schedule_points = 100u32;
        let mut shape = None;
        let mut hardware = None;
        let mut eval = None;
        let mut saw_run = false;
        let mut saw_model = false;
        let mut saw_hardware = false;

        for section in sections {
            match section.name.as_str() {
                "run" => {
                    saw_run = true;
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    if let Some((_, v)) = req!(col, f, require_str, "input") {
                        input = Some(resolve(base, &v));
                    }
                    if let Some((_, v)) = req!(col, f, require_str, "out_dir") {
                        out_dir = Some(resolve(base, &v));
                    }
                    take!(col, f, take_u64, "seed", |v| seed = v);
                    col.kv_all(f.finish_all());
                }
                "clean" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.clean = v);
                    take!(col, f, take_bool, "remove_english", |v| remove_english = v);
                    take!(col, f, take_bool, "keep_arabic_indic_digits", |v| {
                        keep_arabic_indic_digits = v
                    });
                    col.kv_all(f.finish_all());
                }
                "dedup" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.dedup = v);
                    take!(col, f, take_f64, "threshold", |v| dedup.threshold = v);
                    take!(col, f, take_u64, "num_hashes", |v| dedup.num_hashes = v as usize);
                    take!(col, f, take_u64, "bands", |v| dedup.bands = v as usize);
                    take!(col, f, take_u64, "rows", |v| dedup.rows = v as usize);
                    take!(col, f, take_u64, "shingle_k", |v| dedup.shingle_k = v as usize);
                    take!(col, f, take_bool, "exact_verify", |v| dedup.exact_verify = v);
                    col.kv_all(f.finish_all());
                }
                "tokenizer" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.tokenizer = v);
                    take!(col, f, take_u32, "vocab_size", |v| vocab_size = v);
                    col.kv_all(f.finish_all());
                }
                "pack" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.pack = v);
                    take!(col, f, take_u64, "tokens_per_shard", |v| tokens_per_shard = v);
                    col.kv_all(f.finish_all());
                }
                "stats" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.stats = v);
                    col.kv_all(f.finish_all());
                }
                "schedule" => {
                    let (own, plan_entries): (Vec<kv::Entry>, Vec<kv::Entry>) = section
                        .entries
                        .into_iter()
                        .partition(|e| e.key == "points" || e.key == "enabled");
                    let Some(mut f) = fields(&mut col, own, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.schedule = v);
                    take!(col, f, take_u32, "points", |v: u32| {
                        if v == 0 {
                            col.config("schedule points must be positive".into());
                        } else {
                            schedule_points = v;
                        }
                    });
                    let before = col.len();
                    if let Some(mut f) = fields(&mut col, plan_entries.clone(), section.line) {
                        take!(col, f, take_f64, "peak_lr", |_: f64| {});
                        take!(col, f, take_f64, "min_lr_ratio", |_: f64| {});
                        take!(col, f, take_f64, "warmup_tokens", |_: f64| {});
                        take!(col, f, take_f64, "total_tokens", |_: f64| {});
                        take!(col, f, take_u64, "batch_tokens", |_: u64| {});
                        take!(col, f, take_u32, "epochs", |_: u32| {});
                        take!(col, f, take_f64, "adam_beta1", |_: f64| {});
                        take!(col, f, take_f64, "adam_beta2", |_: f64| {});
                        take!(col, f, take_f64, "adam_eps", |_: f64| {});
                        take!(col, f, take_f64, "grad_clip_norm", |_: f64| {});
                        col.kv_all(f.finish_all());
                    }
                    if col.len() == before {
                        match TrainPlan::from_entries(plan_entries) {
                            Ok(p) => plan = p,
                            Err(e) => col.config(e.to_string()),
                        }
                    }
                }
                "model" => {
                    saw_model = true;
                    let before = col.len();
                    if let Some(mut f) = fields(&mut col, section.entries.clone(), section.line) {
                        let _ = req!(col, f, require_f64, "n_params");
                        let _ = req!(col, f, require_u32, "n_layers");
                        let _ = req!(col, f, require_u32, "d_model");
                        let _ = req!(col, f, require_u32, "n_heads");
                        let _ = req!(col, f, require_u32, "d_head");
                        let _ = req!(col, f, require_u32, "n_ctx");
                        let _ = req!(col, f, require_u32, "vocab_size");
                        col.kv_all(f.finish_all());
                    }
                    if col.len() == before {
                        match ModelShape::from_entries(section.entries) {
                            Ok(s) => shape = Some(s),
                            Err(e) => col.config(e.to_string()),
                        }
                    }
                }
                "hardware" => {
                    saw_hardware = true;
                    if section.entries.iter().any(|e| e.key == "preset") {
                        let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                            continue;
                        };
                        if let Some((line, preset)) = req!(col, f, require_str, "preset") {
                            match preset.as_str() {
                                "v100_cluster" => hardware = Some(HardwareProfile::v100_cluster()),
                                "v100_single" => hardware = Some(HardwareProfile::v100_single()),
                                other => col.kv(KvError::new(
                                    line,
                                    format!("unknown hardware preset {other:?}"),
                                )),
                            }
                        }
                        col.kv_all(f.finish_all());
                    } else {
                        let before = col.len();
                        if let Some(mut f) = fields(&mut col, section.entries.clone(), section.line)
                        {
                            let _ = f.take_str("name");
                            let _ = req!(col, f, require_u32, "gpu_count");
                            let _ = req!(col, f, require_f64, "peak_tflops");
                            let _ = req!(col, f, require_f64, "power_per_gpu_w");
                            let _ = req!(col, f, require_f64, "node_power_factor");
                            let _ = req!(col, f, require_f64, "mem_bandwidth_gb_s");
                            let _ = req!(col, f, require_f64, "grid_kg_co2_per_kwh");
                            let _ = req!(col, f, require_f64, "energy_price_per_kwh");
                            col.kv_all(f.finish_all());
                        }
                        if col.len() == before {
                            match HardwareProfile::from_entries(section.entries) {
                                Ok(h) => hardware = Some(h),
                                Err(e) => col.config(e.to_string()),
                            }
                        }
                    }
                }
                "eval" => {
                    let Some(mut f) = fields(&mut col, section.entries, section.line) else {
                        continue;
                    };
                    take!(col, f, take_bool, "enabled", |v| stages.eval = v);
                    let task = req!(col, f, require_str, "task").and_then(|(line, code)| {
                        let parsed = Task::from_code(&code);
                        if parsed.is_none() {
                            col.kv(KvError::new(line, format!("unknown task {code:?}")));
                        }
                        parsed
                    });
                    let test_csv =
                        req!(col, f, require_str, "test").map(|(_, v)| resolve(base, &v));
                    let predictions = req!(col, f, require_str, "predictions").and_then(
                        |(line, list)| {
                            let paths: Vec<PathBuf> = list
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(|s| resolve(base, s))
                                .collect();
                            if paths.is_empty() {
                                col.kv(KvError::new(line, "predictions lists no files"));
                                None
                            } else {
                                Some(paths)
                            }
                        },
                    );
                    col.kv_all(f.finish_all());
                    if let (Some(task), Some(test_csv), Some(predictions)) =
                        (task, test_csv, predictions)
                    {
                        eval = Some(EvalSettings { task, test_csv, predictions });
                    }
                }
                other => {
                    col.kv(KvError::new(section.line, format!("unknown section [{other}]")));
                }
            }
        }

        if !saw_run {
            col.config("missing required section [run]".into());
        }
        if !saw_model {
            col.config("missing required section [model]".into());
        }
        if !saw_hardware {
            col.config("missing required section [hardware]".into());
        }
        if !col.diags.is_empty() {
            return Err(col.diags);
        }
        dedup.seed = seed;
        Ok(PipelineConfig {
            input: input.expect("diagnosed if missing"),
            out_dir: out_dir.expect("diagnosed if missing"),
            seed,
            stages,
            remove_english,
            keep_arabic_indic_digits,
            dedup,
            vocab_size,
            tokens_per_shard,
            plan,
            schedule_points,
            shape: shape.expect("diagnosed if missing"),
            hardware: hardware.expect("diagnosed if missing"),
            eval,
        })
    }

    pub fn from_file(path: &Path) -> Result<(Self, String), PipelineError> {
        let bytes = fs::read(path).map_err(|source| PipelineError::Io {
            action: "read",
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| PipelineError::BadConfig {
            path: path.display().to_string(),
            message: format!("not UTF-8: {e}"),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let cfg = PipelineConfig::parse(&text, base, &path.display().to_string())?;
        let sha = hex(&Sha256::digest(&bytes));
        Ok((cfg, sha))
    }

    /// Checks everything that can be checked without running: referenced
    /// files exist and settings are consistent. Empty means runnable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut missing = |p: &Path, what: &str| {
            if !p.exists() {
                out.push(Diagnostic {
                    kind: DiagnosticKind::MissingFile,
                    message: format!("{what} {} does not exist", p.display()),
                });
            }
        };
        missing(&self.input, "input");
        if let Some(eval) = &self.eval {
            if self.stages.eval {
                missing(&eval.test_csv, "eval test file");
                for p in &eval.predictions {
                    missing(p, "eval predictions file");
                }
            }
        }
        if self.vocab_size < 258 {
            out.push(Diagnostic {
                kind: DiagnosticKind::Config,
                message: format!("vocab_size {} is below the 258 minimum", self.vocab_size),
            });
        }
        if self.tokens_per_shard == 0 {
            out.push(Diagnostic {
                kind: DiagnosticKind::Config,
                message: "tokens_per_shard must be positive".into(),
            });
        }
        if let Err(e) = self.dedup.validate() {
            out.push(Diagnostic { kind: DiagnosticKind::Config, message: e.to_string() });
        }
        out
    }
}

/// Parses and validates a config file, reporting every problem as a
/// diagnostic rather than stopping at the first. Empty means runnable.
/// Only an unreadable file is an error.
pub fn validate_config_file(path: &Path) -> Result<Vec<Diagnostic>, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        action: "read",
        path: path.display().to_string(),
        source,
    })?;
    let Ok(text) = String::from_utf8(bytes) else {
        return Ok(vec![Diagnostic {
            kind: DiagnosticKind::Config,
            message: "config is not UTF-8".into(),
        }]);
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    match PipelineConfig::parse_collect(&text, base) {
        Ok(cfg) => Ok(cfg.validate()),
        Err(diags) => Ok(diags),
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub input: String,
    pub out_dir: String,
    pub stages: Vec<StageRecord>,
}

fn write_out(path: &Path, content: &str) -> Result<(), PipelineError> {
    fs::write(path, content).map_err(|source| PipelineError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn record(stages: &mut Vec<StageRecord>, name: &str, t0: Instant, c: &[(&str, u64)]) {
    stages.push(StageRecord {
        name: name.to_string(),
        seconds: t0.elapsed().as_secs_f64(),
        counts: counts(c),
    });
}

fn skip(stages: &mut Vec<StageRecord>, name: &str) {
    stages.push(StageRecord {
        name: name.to_string(),
        seconds: 0.0,
        counts: counts(&[("skipped", 1)]),
    });
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let tmp = out_dir.join("manifest.json.tmp");
    write_out(&tmp, &(json + "\n"))?;
    let final_path = out_dir.join("manifest.json");
    fs::rename(&tmp, &final_path).map_err(|source| PipelineError::Io {
        action: "write",
        path: final_path.display().to_string(),
        source,
    })
}

/// Runs the enabled stages of `config_path` in fixed order and writes the
/// manifest. A stage failure still writes a manifest holding the stages
/// that completed, then surfaces the error; an invalid config fails before
/// any stage, with no output directory at all.
pub fn run_pipeline(config_path: &Path) -> Result<RunManifest, PipelineError> {
    let (cfg, config_sha256) = PipelineConfig::from_file(config_path)?;
    let diagnostics = cfg.validate();
    if !diagnostics.is_empty() {
        return Err(PipelineError::Invalid { diagnostics });
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        action: "create",
        path: cfg.out_dir.display().to_string(),
        source,
    })?;

    let mut stages: Vec<StageRecord> = Vec::new();
    let result = run_stages(&cfg, &mut stages);
    let manifest = RunManifest {
        tool_version: crate::VERSION.to_string(),
        config_sha256,
        input: cfg.input.display().to_string(),
        out_dir: cfg.out_dir.display().to_string(),
        stages,
    };
    match result {
        Ok(()) => {
            write_manifest(&cfg.out_dir, &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            // the partial manifest is best effort; the stage error wins
            let _ = write_manifest(&cfg.out_dir, &manifest);
            Err(e)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, stages: &mut Vec<StageRecord>) -> Result<(), PipelineError> {
    let raw = corpus::read_csv(&cfg.input)?;
    // rows keep their 1-based position in the input file as a stable id
    let numbered: Vec<(usize, CorpusRecord)> =
        raw.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();

    // clean
    let cleaned: Vec<(usize, CorpusRecord)>;
    if cfg.stages.clean {
        let t0 = Instant::now();
        let mut clean_cfg =
            CleanConfig { remove_english: cfg.remove_english, ..CleanConfig::default() };
        if cfg.keep_arabic_indic_digits {
            clean_cfg = clean_cfg.keep_arabic_indic_digits();
        }
        let results: Vec<Result<(String, CleanReport), NormalizeError>> =
            numbered.par_iter().map(|(_, r)| clean_document(&r.data, &clean_cfg)).collect();
        let mut kept = Vec::new();
        let mut clean_report = CleanReport::default();
        let mut emptied = 0u64;
        for ((row, rec), result) in numbered.iter().zip(results) {
            match result {
                Ok((data, report)) => {
                    clean_report.merge(&report);
                    kept.push((
                        *row,
                        CorpusRecord {
                            data,
                            source: rec.source.clone(),
                            category: rec.category.clone(),
                        },
                    ));
                }
                Err(NormalizeError::EmptyAfterClean) => emptied += 1,
                Err(other) => return Err(other.into()),
            }
        }
        clean_report.documents_emptied = emptied;
        let records: Vec<CorpusRecord> = kept.iter().map(|(_, r)| r.clone()).collect();
        corpus::write_csv(&cfg.out_dir.join("cleaned.csv"), &records)?;
        let mut report_csv = String::from("counter,value\n");
        for (k, v) in clean_report.rows() {
            let _ = writeln!(report_csv, "{k},{v}");
        }
        write_out(&cfg.out_dir.join("clean_report.csv"), &report_csv)?;
        record(stages, "clean", t0, &[
            ("rows_in", numbered.len() as u64),
            ("rows_out", kept.len() as u64),
            ("rows_emptied", emptied),
        ]);
        cleaned = kept;
    } else {
        skip(stages, "clean");
        cleaned = numbered;
    }

    // dedup
    let survivors: Vec<(usize, CorpusRecord)>;
    if cfg.stages.dedup {
        let t0 = Instant::now();
        let texts: Vec<String> = cleaned.iter().map(|(_, r)| r.data.clone()).collect();
        let outcome = dedup_corpus(&texts, &cfg.dedup)?;
        let kept: Vec<(usize, CorpusRecord)> =
            outcome.kept.iter().map(|&i| cleaned[i].clone()).collect();
        let records: Vec<CorpusRecord> = kept.iter().map(|(_, r)| r.clone()).collect();
        corpus::write_csv(&cfg.out_dir.join("deduped.csv"), &records)?;
        let mut decisions_csv = String::from("kept_id,removed_id,est_jaccard\n");
        for d in &outcome.decisions {
            let _ = writeln!(
                decisions_csv,
                "{},{},{}",
                cleaned[d.kept].0, cleaned[d.removed].0, d.estimated_jaccard
            );
        }
        write_out(&cfg.out_dir.join("dedup_decisions.csv"), &decisions_csv)?;
        let mut borderline_csv = String::from("a_id,b_id,est_jaccard,exact_jaccard\n");
        for p in &outcome.borderline {
            let exact = p.exact_jaccard.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                borderline_csv,
                "{},{},{},{}",
                cleaned[p.a].0, cleaned[p.b].0, p.estimated_jaccard, exact
            );
        }
        write_out(&cfg.out_dir.join("dedup_borderline.csv"), &borderline_csv)?;
        record(stages, "dedup", t0, &[
            ("rows_in", cleaned.len() as u64),
            ("rows_out", kept.len() as u64),
            ("removed", outcome.decisions.len() as u64),
            ("candidate_pairs", outcome.candidate_pairs_evaluated as u64),
            ("borderline_pairs", outcome.borderline.len() as u64),
        ]);
        survivors = kept;
    } else {
        skip(stages, "dedup");
        survivors = cleaned;
    }

    let kept_texts: Vec<String> = survivors.iter().map(|(_, r)| r.data.clone()).collect();
    let kept_records: Vec<CorpusRecord> = survivors.into_iter().map(|(_, r)| r).collect();

    // train_tokenizer
    let mut vocab: Option<Vocabulary> = None;
    if cfg.stages.tokenizer {
        let t0 = Instant::now();
        let trained = train_bpe(kept_texts.iter().map(String::as_str), cfg.vocab_size)?;
        trained.save(&cfg.out_dir.join("tokenizer.vocab"))?;
        record(stages, "train_tokenizer", t0, &[
            ("vocab_size", u64::from(trained.vocab_size())),
            ("merges", trained.merges().len() as u64),
        ]);
        vocab = Some(trained);
    } else {
        skip(stages, "train_tokenizer");
    }

    // eval_tokenizer: the fresh tokenizer against the raw-bytes baseline
    if let Some(vocab) = &vocab {
        let t0 = Instant::now();
        let baseline = Vocabulary::byte_fallback();
        let report = tokeval::compare(
            &[("trained", vocab), ("byte_fallback", &baseline)],
            &kept_texts,
            false,
        )?;
        tokeval::write_report_csv(&cfg.out_dir.join("tokeval.csv"), &report.tokenizers)?;
        tokeval::write_plot_csv(&cfg.out_dir.join("tokeval_plot.csv"), &report.tokenizers)?;
        record(stages, "eval_tokenizer", t0, &[
            ("tokens", report.tokenizers[0].total_tokens),
            ("baseline_tokens", report.tokenizers[1].total_tokens),
        ]);
    } else {
        skip(stages, "eval_tokenizer");
    }

    // pack
    if cfg.stages.pack && vocab.is_some() {
        let t0 = Instant::now();
        let shards_dir = cfg.out_dir.join("shards");
        fs::create_dir_all(&shards_dir).map_err(|source| PipelineError::Io {
            action: "create",
            path: shards_dir.display().to_string(),
            source,
        })?;
        let summary = corpus::pack_documents(
            &kept_texts,
            vocab.as_ref().expect("checked above"),
            &shards_dir,
            "corpus",
            cfg.tokens_per_shard,
        )?;
        record(stages, "pack", t0, &[
            ("shards", summary.shard_paths.len() as u64),
            ("tokens", summary.total_tokens),
            ("documents", summary.documents),
        ]);
    } else {
        skip(stages, "pack");
    }

    // stats
    if cfg.stages.stats {
        let t0 = Instant::now();
        let stats = corpus::corpus_stats(&kept_records, vocab.as_ref());
        corpus::write_stats_csv(&cfg.out_dir.join("stats.csv"), &stats)?;
        let mut c = vec![
            ("rows", stats.rows),
            ("bytes", stats.bytes),
            ("categories", stats.categories.len() as u64),
        ];
        if let Some(tokens) = stats.tokens {
            c.push(("tokens", tokens));
        }
        record(stages, "stats", t0, &c);
    } else {
        skip(stages, "stats");
    }

    // schedule
    if cfg.stages.schedule {
        let t0 = Instant::now();
        let mut schedule_csv = String::from("tokens,lr\n");
        for i in 0..=cfg.schedule_points {
            let tokens = cfg.plan.total_tokens * (f64::from(i) / f64::from(cfg.schedule_points));
            let lr = budget::lr_at(&cfg.plan, tokens)?;
            let _ = writeln!(schedule_csv, "{tokens},{lr}");
        }
        write_out(&cfg.out_dir.join("schedule.csv"), &schedule_csv)?;
        record(stages, "schedule", t0, &[("points", u64::from(cfg.schedule_points) + 1)]);
    } else {
        skip(stages, "schedule");
    }

    // budget
    if cfg.stages.budget {
        let t0 = Instant::now();
        let training = budget::estimate_training(&cfg.shape, &cfg.plan, &cfg.hardware);
        let inference = budget::estimate_inference(
            cfg.shape.n_params,
            f64::from(cfg.shape.n_ctx),
            2.0,
            &cfg.hardware,
        );
        let mut budget_csv = String::from("quantity,value\n");
        for (k, v) in [
            ("n_params", training.n_params),
            ("total_tokens", training.total_tokens),
            ("flops_per_step", training.flops_per_step),
            ("flops_per_epoch", training.flops_per_epoch),
            ("total_flops", training.total_flops),
            ("wall_hours_lower_bound", training.wall_hours_lower_bound),
            ("energy_kwh", training.energy.kwh),
            ("co2_kg", training.energy.co2_kg),
            ("energy_cost", training.energy_cost),
            ("inference_prefill_flops", inference.prefill_flops),
            ("inference_latency_ms_per_token", inference.latency_ms_per_token),
            ("inference_energy_j_per_token", inference.energy_j_per_token),
        ] {
            let _ = writeln!(budget_csv, "{k},{v}");
        }
        write_out(&cfg.out_dir.join("budget.csv"), &budget_csv)?;
        record(stages, "budget", t0, &[]);
    } else {
        skip(stages, "budget");
    }

    // eval_metrics
    match &cfg.eval {
        Some(settings) if cfg.stages.eval => {
            let t0 = Instant::now();
            let scores = evaluate_run(
                settings.task,
                &settings.test_csv,
                &settings.predictions,
                settings.predictions.len(),
            )?;
            write_scores_csv(&cfg.out_dir.join("eval.csv"), &scores)?;
            record(stages, "eval_metrics", t0, &[
                ("runs", scores.per_run.len() as u64),
                ("examples", scores.mean.examples as u64),
            ]);
        }
        _ => skip(stages, "eval_metrics"),
    }

    Ok(())
}
