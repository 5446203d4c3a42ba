//! Corpus preparation and accounting toolkit for Urdu language-model
//! pretraining.
//!
//! The crate covers the whole data path from raw scraped text to binary
//! training shards, plus the bookkeeping around a pretraining run:
//!
//! - [`normalize`]: rule-based text cleaning (noise removal, digit and
//!   character normalization, spacing repair, unicode cleanup).
//! - [`dedup`]: MinHash/LSH near-duplicate detection and corpus-level
//!   deduplication.
//! - [`tokenizer`]: byte-level BPE with script-aware pre-tokenization,
//!   training, encoding/decoding and a stable vocabulary file format.
//! - [`tokeval`]: tokenizer quality metrics (fertility, coverage,
//!   throughput) and side-by-side comparisons.
//! - [`corpus`]: CSV corpus I/O, binary token shards, split planning and
//!   corpus statistics.
//! - [`budget`]: learning-rate schedules and compute/energy/carbon
//!   estimates for training and inference.
//! - [`evalmetrics`]: few-shot prompt construction and task scoring
//!   (accuracy, BLEU, ROUGE-L).
//! - [`pipeline`]: an end-to-end, configuration-driven run of the above
//!   stages with a machine-readable manifest.

pub mod budget;
pub mod corpus;
pub mod dedup;
pub mod evalmetrics;
pub mod kv;
pub mod normalize;
pub mod pipeline;
pub mod tokenizer;
pub mod tokeval;

/// Version string reported by the CLI and embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
