//! `urdukit`: every pipeline stage as its own subcommand, plus the
//! all-in-one `pipeline` runner driven by a sectioned config file.
//!
//! Logs go to standard error; data goes to named files or standard output.
//! Exit codes: 1 for config and usage problems, 2 for io (missing or
//! unreadable files), 3 for malformed data.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use thiserror::Error;

use urdukit::budget::{self, BudgetError, HardwareProfile, ModelShape, TrainPlan};
use urdukit::corpus::{self, CorpusError, CorpusRecord, SplitSpec};
use urdukit::dedup::{dedup_corpus, DedupConfig, DedupError};
use urdukit::evalmetrics::{evaluate_run, write_scores_csv, EvalError, Task};
use urdukit::normalize::{
    clean_document, CharMap, CleanConfig, CleanReport, NormalizeError, SpaceMap,
};
use urdukit::pipeline::{run_pipeline, validate_config_file, DiagnosticKind, PipelineError};
use urdukit::tokenizer::{train_bpe, TokenizerError, Vocabulary};
use urdukit::tokeval::{self, TokevalError};

#[derive(Parser)]
#[command(
    name = "urdukit",
    version,
    propagate_version = true,
    about = "Corpus curation, tokenization and training-budget toolkit for Urdu language modeling"
)]
struct Cli {
    /// Cap the thread pool shared by all parallel stages.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and denoise a corpus CSV or newline-delimited text.
    Clean {
        /// Corpus CSV (data,source,category) or plain text, one document per line.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Drop Latin-script runs instead of keeping them.
        #[arg(long)]
        remove_english: bool,
        /// Replace the built-in character fold table (from<TAB>to lines).
        #[arg(long, value_name = "FILE")]
        char_map: Option<PathBuf>,
        /// Replace the built-in compound-word spacing table.
        #[arg(long, value_name = "FILE")]
        space_map: Option<PathBuf>,
        /// Write per-rule activity counters as CSV.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Remove near-duplicate rows from a corpus CSV.
    Dedup {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Estimated-Jaccard removal threshold.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// MinHash permutations; must split evenly across bands.
        #[arg(long, default_value_t = 128)]
        perms: usize,
        #[arg(long, default_value_t = 16)]
        bands: usize,
        /// Words per shingle.
        #[arg(long, default_value_t = 5)]
        shingle: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Recompute exact Jaccard on candidates before removal.
        #[arg(long)]
        exact_verify: bool,
        /// Write removal decisions (kept_id,removed_id,est_jaccard).
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Train a byte-level BPE tokenizer and save its vocab file.
    TrainTokenizer {
        /// Corpus CSV or plain text, one document per line.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value_t = 32_000)]
        vocab_size: u32,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Encode text to space-separated token ids on standard output.
    Encode {
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        /// Text file; standard input when omitted.
        #[arg(long = "in", value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Decode space-separated token ids back to text on standard output.
    Decode {
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        /// Id file; standard input when omitted.
        #[arg(long = "in", value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Score one or more tokenizers on a corpus.
    EvalTokenizer {
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        /// Extra vocab files to compare against (repeatable). The raw-byte
        /// fallback is always included as `bytes`.
        #[arg(long = "baseline", value_name = "FILE")]
        baselines: Vec<PathBuf>,
        /// Corpus CSV or plain text, one document per line.
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        /// Report CSV: name,fertility,avg_token_count,tokens_per_second,coverage.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write name,avg_token_count rows for plotting.
        #[arg(long, value_name = "FILE")]
        plot_data: Option<PathBuf>,
    },
    /// Encode a corpus CSV into fixed-width binary token shards.
    Pack {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 16_000_000)]
        shard_tokens: u64,
    },
    /// Row, byte, category and token statistics for a corpus CSV.
    Stats {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        /// Count exact tokens with this vocab (omitted: byte stats only).
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Deal the .shard files in a directory into train and validation sets.
    Split {
        #[arg(long, value_name = "DIR")]
        shards: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        val_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write shard,split rows here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Learning-rate schedule lookup or full-curve dump.
    Schedule {
        /// Training plan (key = value file).
        #[arg(long, value_name = "FILE")]
        plan: PathBuf,
        /// Print the learning rate at this token position.
        #[arg(long, value_name = "N", conflicts_with = "dump")]
        at_tokens: Option<f64>,
        /// Emit the whole curve; `csv` is the only format.
        #[arg(long, value_name = "FORMAT")]
        dump: Option<String>,
    },
    /// Compute, time, energy, carbon and cost estimates for a training run.
    Budget {
        /// Model shape (key = value file).
        #[arg(long, value_name = "FILE")]
        shape: PathBuf,
        /// Training plan (key = value file).
        #[arg(long, value_name = "FILE")]
        plan: PathBuf,
        /// Hardware profile: preset name (v100_cluster, v100_single) or a file.
        #[arg(long, value_name = "PROFILE")]
        hw: String,
    },
    /// Score prediction files against a gold task CSV.
    EvalMetrics {
        /// Task code: sc, gec, qa_context, qa_nocontext.
        #[arg(long, value_name = "CODE")]
        task: String,
        #[arg(long, value_name = "CSV")]
        gold: PathBuf,
        /// One predictions file per run (repeatable).
        #[arg(long = "pred", value_name = "FILE", required = true)]
        preds: Vec<PathBuf>,
        /// Scores CSV: task,run,examples,accuracy,bleu,rouge_l.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run every enabled stage of a pipeline config in fixed order.
    Pipeline {
        #[arg(value_name = "CONFIG")]
        config: PathBuf,
    },
    /// Check a pipeline config and list every problem without running it.
    ValidateConfig {
        #[arg(value_name = "CONFIG")]
        config: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Tokeval(#[from] TokevalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn class_io(e: &std::io::Error) -> u8 {
    // budget's from_file wraps parse problems as InvalidData
    if e.kind() == std::io::ErrorKind::InvalidData {
        1
    } else {
        2
    }
}

fn class_normalize(e: &NormalizeError) -> u8 {
    match e {
        NormalizeError::BadMapFile { .. } => 1,
        NormalizeError::EmptyAfterClean => 3,
    }
}

fn class_dedup(e: &DedupError) -> u8 {
    match e {
        DedupError::InvalidConfig { .. } => 1,
        _ => 3,
    }
}

fn class_tokenizer(e: &TokenizerError) -> u8 {
    match e {
        TokenizerError::VocabSizeTooSmall { .. } => 1,
        TokenizerError::Io { source, .. } => class_io(source),
        _ => 3,
    }
}

fn class_tokeval(e: &TokevalError) -> u8 {
    match e {
        TokevalError::TooFewTokenizers { .. } => 1,
        TokevalError::Io { source, .. } => class_io(source),
        TokevalError::EmptyCorpus { .. } => 3,
    }
}

fn class_corpus(e: &CorpusError) -> u8 {
    match e {
        CorpusError::Io { source, .. } => class_io(source),
        CorpusError::BadSplit { .. } => 1,
        _ => 3,
    }
}

fn class_budget(e: &BudgetError) -> u8 {
    match e {
        BudgetError::Config(_) | BudgetError::OutOfRange { .. } => 1,
    }
}

fn class_eval(e: &EvalError) -> u8 {
    match e {
        EvalError::MissingRuns { .. } => 1,
        EvalError::MissingFiles { .. } => 2,
        EvalError::Io { source, .. } => class_io(source),
        _ => 3,
    }
}

fn class_pipeline(e: &PipelineError) -> u8 {
    match e {
        PipelineError::BadConfig { .. } => 1,
        PipelineError::Invalid { diagnostics } => {
            if diagnostics.iter().any(|d| d.kind == DiagnosticKind::MissingFile) {
                2
            } else {
                1
            }
        }
        PipelineError::Io { source, .. } => class_io(source),
        PipelineError::Corpus(e) => class_corpus(e),
        PipelineError::Dedup(e) => class_dedup(e),
        PipelineError::Tokenizer(e) => class_tokenizer(e),
        PipelineError::Tokeval(e) => class_tokeval(e),
        PipelineError::Budget(e) => class_budget(e),
        PipelineError::Eval(e) => class_eval(e),
        PipelineError::Normalize(e) => class_normalize(e),
    }
}

impl CliError {
    fn exit_class(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 3,
            CliError::Io { source, .. } => class_io(source),
            CliError::Normalize(e) => class_normalize(e),
            CliError::Dedup(e) => class_dedup(e),
            CliError::Tokenizer(e) => class_tokenizer(e),
            CliError::Tokeval(e) => class_tokeval(e),
            CliError::Corpus(e) => class_corpus(e),
            CliError::Budget(e) => class_budget(e),
            CliError::Eval(e) => class_eval(e),
            CliError::Pipeline(e) => class_pipeline(e),
        }
    }
}

fn io_err<'a>(action: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> CliError + 'a {
    move |source| CliError::Io { action, path: path.display().to_string(), source }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_class())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Clean { input, out, remove_english, char_map, space_map, report } => {
            cmd_clean(&input, &out, remove_english, char_map, space_map, report)
        }
        Command::Dedup {
            input,
            out,
            threshold,
            perms,
            bands,
            shingle,
            seed,
            exact_verify,
            report,
        } => cmd_dedup(&input, &out, threshold, perms, bands, shingle, seed, exact_verify, report),
        Command::TrainTokenizer { input, vocab_size, out } => {
            let texts = read_texts(&input)?;
            let vocab = train_bpe(texts.iter().map(String::as_str), vocab_size)?;
            vocab.save(&out)?;
            info!(
                "trained {} merges from {} documents -> {}",
                vocab.merges().len(),
                texts.len(),
                out.display()
            );
            Ok(())
        }
        Command::Encode { vocab, input } => {
            let vocab = Vocabulary::load(&vocab)?;
            let text = read_input(input.as_deref())?;
            let ids: Vec<String> =
                vocab.encode(&text).into_iter().map(|id| id.to_string()).collect();
            println!("{}", ids.join(" "));
            Ok(())
        }
        Command::Decode { vocab, input } => {
            let vocab = Vocabulary::load(&vocab)?;
            let text = read_input(input.as_deref())?;
            let ids: Vec<u32> = text
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| CliError::Data(format!("not a token id: {t:?}"))))
                .collect::<Result<_, _>>()?;
            print!("{}", vocab.decode(&ids)?);
            Ok(())
        }
        Command::EvalTokenizer { vocab, baselines, corpus, out, plot_data } => {
            cmd_eval_tokenizer(&vocab, &baselines, &corpus, &out, plot_data)
        }
        Command::Pack { input, vocab, out_dir, shard_tokens } => {
            let records = corpus::read_csv(&input)?;
            let texts: Vec<String> = records.into_iter().map(|r| r.data).collect();
            let vocab = Vocabulary::load(&vocab)?;
            fs::create_dir_all(&out_dir).map_err(io_err("create", &out_dir))?;
            let summary = corpus::pack_documents(&texts, &vocab, &out_dir, "corpus", shard_tokens)?;
            info!(
                "packed {} documents: {} tokens in {} shard(s)",
                summary.documents,
                summary.total_tokens,
                summary.shard_paths.len()
            );
            Ok(())
        }
        Command::Stats { input, vocab, out } => {
            let records = corpus::read_csv(&input)?;
            let vocab = vocab.map(|p| Vocabulary::load(&p)).transpose()?;
            let stats = corpus::corpus_stats(&records, vocab.as_ref());
            corpus::write_stats_csv(&out, &stats)?;
            info!("{} rows, {} bytes, {} categories", stats.rows, stats.bytes, stats.categories.len());
            Ok(())
        }
        Command::Split { shards, val_fraction, seed, out } => {
            cmd_split(&shards, val_fraction, seed, out)
        }
        Command::Schedule { plan, at_tokens, dump } => cmd_schedule(&plan, at_tokens, dump),
        Command::Budget { shape, plan, hw } => cmd_budget(&shape, &plan, &hw),
        Command::EvalMetrics { task, gold, preds, out } => {
            let task = Task::from_code(&task)
                .ok_or_else(|| CliError::Usage(format!("unknown task {task:?}")))?;
            let scores = evaluate_run(task, &gold, &preds, preds.len())?;
            write_scores_csv(&out, &scores)?;
            info!(
                "{} runs on {} examples: mean accuracy {:.2}, bleu {:.2}, rouge_l {:.4}",
                scores.per_run.len(),
                scores.mean.examples,
                scores.mean.accuracy,
                scores.mean.bleu,
                scores.mean.rouge_l
            );
            Ok(())
        }
        Command::Pipeline { config } => {
            let manifest = run_pipeline(&config)?;
            for s in &manifest.stages {
                info!("{}: {:.3}s {:?}", s.name, s.seconds, s.counts);
            }
            info!("manifest: {}/manifest.json", manifest.out_dir);
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let diags = validate_config_file(&config)?;
            if diags.is_empty() {
                info!("config is valid");
                Ok(())
            } else {
                for d in &diags {
                    println!("{}", d.message);
                }
                Err(CliError::Usage(format!("{} config problem(s)", diags.len())))
            }
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Documents from a corpus CSV's data column, or non-empty lines of a
/// plain-text file.
fn read_texts(path: &Path) -> Result<Vec<String>, CliError> {
    if is_csv(path) {
        Ok(corpus::read_csv(path)?.into_iter().map(|r| r.data).collect())
    } else {
        let text = fs::read_to_string(path).map_err(io_err("read", path))?;
        Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
    }
}

fn read_input(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(io_err("read", p)),
        None => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).map_err(|source| CliError::Io {
                action: "read",
                path: "stdin".into(),
                source,
            })?;
            Ok(text)
        }
    }
}

fn cmd_clean(
    input: &Path,
    out: &Path,
    remove_english: bool,
    char_map: Option<PathBuf>,
    space_map: Option<PathBuf>,
    report: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = CleanConfig { remove_english, ..CleanConfig::default() };
    if let Some(p) = char_map {
        cfg.char_map = CharMap::parse(&fs::read_to_string(&p).map_err(io_err("read", &p))?)?;
    }
    if let Some(p) = space_map {
        cfg.word_space_map = SpaceMap::parse(&fs::read_to_string(&p).map_err(io_err("read", &p))?)?;
    }
    let mut totals = CleanReport::default();
    let mut emptied = 0u64;
    if is_csv(input) {
        let records = corpus::read_csv(input)?;
        let results: Vec<_> = records.par_iter().map(|r| clean_document(&r.data, &cfg)).collect();
        let mut kept = Vec::new();
        for (r, result) in records.iter().zip(results) {
            match result {
                Ok((data, rep)) => {
                    totals.merge(&rep);
                    kept.push(CorpusRecord {
                        data,
                        source: r.source.clone(),
                        category: r.category.clone(),
                    });
                }
                Err(NormalizeError::EmptyAfterClean) => emptied += 1,
                Err(e) => return Err(e.into()),
            }
        }
        totals.documents_emptied = emptied;
        corpus::write_csv(out, &kept)?;
        info!("cleaned {} rows: {} kept, {} emptied", records.len(), kept.len(), emptied);
    } else {
        let text = fs::read_to_string(input).map_err(io_err("read", input))?;
        let docs: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let results: Vec<_> = docs.par_iter().map(|d| clean_document(d, &cfg)).collect();
        let mut kept = Vec::new();
        for result in results {
            match result {
                Ok((data, rep)) => {
                    totals.merge(&rep);
                    kept.push(data);
                }
                Err(NormalizeError::EmptyAfterClean) => emptied += 1,
                Err(e) => return Err(e.into()),
            }
        }
        totals.documents_emptied = emptied;
        let mut body = kept.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(out, body).map_err(io_err("write", out))?;
        info!("cleaned {} documents: {} kept, {} emptied", docs.len(), kept.len(), emptied);
    }
    if let Some(p) = report {
        let mut csv = String::from("counter,value\n");
        for (k, v) in totals.rows() {
            csv.push_str(&format!("{k},{v}\n"));
        }
        fs::write(&p, csv).map_err(io_err("write", &p))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_dedup(
    input: &Path,
    out: &Path,
    threshold: f64,
    perms: usize,
    bands: usize,
    shingle: usize,
    seed: u64,
    exact_verify: bool,
    report: Option<PathBuf>,
) -> Result<(), CliError> {
    if bands == 0 || perms % bands != 0 {
        return Err(CliError::Usage(format!(
            "--perms {perms} does not split evenly into --bands {bands}"
        )));
    }
    let cfg = DedupConfig {
        threshold,
        num_hashes: perms,
        bands,
        rows: perms / bands,
        shingle_k: shingle,
        seed,
        exact_verify,
        ..DedupConfig::default()
    };
    let records = corpus::read_csv(input)?;
    let texts: Vec<String> = records.iter().map(|r| r.data.clone()).collect();
    let outcome = dedup_corpus(&texts, &cfg)?;
    let kept: Vec<CorpusRecord> = outcome.kept.iter().map(|&i| records[i].clone()).collect();
    corpus::write_csv(out, &kept)?;
    if let Some(p) = report {
        // ids are 1-based data-row numbers in the input file
        let mut csv = String::from("kept_id,removed_id,est_jaccard\n");
        for d in &outcome.decisions {
            csv.push_str(&format!("{},{},{}\n", d.kept + 1, d.removed + 1, d.estimated_jaccard));
        }
        fs::write(&p, csv).map_err(io_err("write", &p))?;
    }
    info!(
        "{} rows: kept {}, removed {} ({} candidate pairs)",
        records.len(),
        kept.len(),
        outcome.decisions.len(),
        outcome.candidate_pairs_evaluated
    );
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tok".into())
}

fn cmd_eval_tokenizer(
    vocab_path: &Path,
    baselines: &[PathBuf],
    corpus_path: &Path,
    out: &Path,
    plot_data: Option<PathBuf>,
) -> Result<(), CliError> {
    let texts = read_texts(corpus_path)?;
    let main = Vocabulary::load(vocab_path)?;
    let extra: Vec<(String, Vocabulary)> = baselines
        .iter()
        .map(|p| Ok((stem(p), Vocabulary::load(p)?)))
        .collect::<Result<_, CliError>>()?;
    let bytes = Vocabulary::byte_fallback();
    let main_name = stem(vocab_path);
    let mut entries: Vec<(&str, &Vocabulary)> = vec![(&main_name, &main)];
    for (name, v) in &extra {
        entries.push((name.as_str(), v));
    }
    entries.push(("bytes", &bytes));
    let report = tokeval::compare(&entries, &texts, true)?;
    tokeval::write_report_csv(out, &report.tokenizers)?;
    if let Some(p) = plot_data {
        tokeval::write_plot_csv(&p, &report.tokenizers)?;
    }
    for t in &report.tokenizers {
        info!(
            "{}: fertility {:.4}, coverage {:.4}, {} tokens",
            t.name, t.stats.fertility, t.stats.coverage, t.total_tokens
        );
    }
    Ok(())
}

fn cmd_split(
    shards_dir: &Path,
    val_fraction: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut names: Vec<String> = fs::read_dir(shards_dir)
        .map_err(io_err("read", shards_dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".shard"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Usage(format!("no .shard files in {}", shards_dir.display())));
    }
    let (train, val) = corpus::split_shards(names.len(), &SplitSpec { val_fraction, seed })?;
    let mut csv = String::from("shard,split\n");
    let mut assignment = vec!["train"; names.len()];
    for &i in &val {
        assignment[i] = "val";
    }
    for (name, split) in names.iter().zip(&assignment) {
        csv.push_str(&format!("{name},{split}\n"));
    }
    match out {
        Some(p) => fs::write(&p, csv).map_err(io_err("write", &p))?,
        None => print!("{csv}"),
    }
    info!("{} shards: {} train, {} val", names.len(), train.len(), val.len());
    Ok(())
}

fn cmd_schedule(plan: &Path, at_tokens: Option<f64>, dump: Option<String>) -> Result<(), CliError> {
    let plan = TrainPlan::from_file(plan).map_err(io_err("read", plan))?;
    match (at_tokens, dump) {
        (Some(tokens), None) => {
            println!("{}", budget::lr_at(&plan, tokens)?);
            Ok(())
        }
        (None, Some(format)) => {
            if format != "csv" {
                return Err(CliError::Usage(format!("unsupported dump format {format:?}")));
            }
            let points = 100u32;
            let mut out = String::from("tokens,lr\n");
            for i in 0..=points {
                let tokens = plan.total_tokens * (f64::from(i) / f64::from(points));
                out.push_str(&format!("{},{}\n", tokens, budget::lr_at(&plan, tokens)?));
            }
            print!("{out}");
            Ok(())
        }
        _ => Err(CliError::Usage("pass exactly one of --at-tokens N or --dump csv".into())),
    }
}

fn fmt_params(n: f64) -> String {
    if n >= 1e9 {
        format!("{:.2}B", n / 1e9)
    } else {
        format!("{:.1}M", n / 1e6)
    }
}

fn fmt_flops(f: f64) -> String {
    if f >= 1e15 {
        format!("{:.1} PFLOPs", f / 1e15)
    } else {
        format!("{:.2} TFLOPs", f / 1e12)
    }
}

fn cmd_budget(shape: &Path, plan: &Path, hw: &str) -> Result<(), CliError> {
    let shape = ModelShape::from_file(shape).map_err(io_err("read", shape))?;
    let plan = TrainPlan::from_file(plan).map_err(io_err("read", plan))?;
    let profile = match hw {
        "v100_cluster" => HardwareProfile::v100_cluster(),
        "v100_single" => HardwareProfile::v100_single(),
        path => {
            let path = Path::new(path);
            HardwareProfile::from_file(path).map_err(io_err("read", path))?
        }
    };
    let est = budget::estimate_training(&shape, &plan, &profile);
    let epochs = f64::from(est.epochs.max(1));
    println!("Estimates");
    let rows = [
        ("Model size", format!("{} params", fmt_params(est.n_params))),
        ("Token sequence length", est.n_ctx.to_string()),
        ("Batch size (effective)", format!("{} tokens", est.batch_tokens)),
        ("FLOPs per step", fmt_flops(est.flops_per_step)),
        ("Compute per epoch", fmt_flops(est.flops_per_epoch)),
        ("Total compute", fmt_flops(est.total_flops)),
        ("GPU type", format!("{} x{}", profile.name, profile.gpu_count)),
        ("Power per GPU", format!("{:.0} W", profile.power_per_gpu_w)),
        ("Time per epoch", format!("{:.2} h", est.wall_hours_lower_bound / epochs)),
        ("Total time", format!("{:.2} h", est.wall_hours_lower_bound)),
        ("Total energy", format!("{:.2} kWh", est.energy.kwh)),
        ("Carbon footprint", format!("{:.2} kg CO2", est.energy.co2_kg)),
        ("Estimated cost", format!("{:.2}", est.energy_cost)),
    ];
    for (label, value) in rows {
        println!("  {label:<24}{value}");
    }
    Ok(())
}
