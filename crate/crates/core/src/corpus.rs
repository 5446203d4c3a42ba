//! Corpus I/O: record CSVs, token shards, splits and summary stats.
//!
//! A corpus is a CSV with header `data,source,category` — the extracted
//! text, where it came from, and a free-form domain label (news, blogs,
//! books, …). Shards are flat little-endian token dumps with a fixed
//! 24-byte header:
//!
//! ```text
//! offset 0   magic   "LRFG"
//! offset 4   u32     format version (1)
//! offset 8   u32     vocab size
//! offset 12  u32     bytes per token: 2 if vocab_size <= 65536, else 4
//! offset 16  u64     token count
//! ```
//!
//! Every document is followed by one end-of-text token and is never split
//! across shards, so any single shard decodes to whole documents.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::tokenizer::Vocabulary;

pub const SHARD_MAGIC: [u8; 4] = *b"LRFG";
pub const SHARD_VERSION: u32 = 1;
pub const DEFAULT_TOKENS_PER_SHARD: u64 = 16_000_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header \"data,source,category\", found {found:?}")]
    BadHeader { path: String, found: Vec<String> },
    #[error("{path}:{line}: {message}")]
    MalformedRow { path: String, line: u64, message: String },
    #[error("document needs {tokens} tokens but shards hold at most {capacity}")]
    DocumentExceedsShard { tokens: u64, capacity: u64 },
    #[error("token id {id} does not fit vocab size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: u32 },
    #[error("{path}: {message}")]
    BadShard { path: String, message: String },
    #[error("bad split: {message}")]
    BadSplit { message: String },
}

fn io_err<'a>(action: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> CorpusError + 'a {
    move |source| CorpusError::Io { action, path: display(path), source }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub data: String,
    pub source: String,
    pub category: String,
}

/// Reads a `data,source,category` CSV in file order. Quoted fields may
/// contain commas and newlines.
pub fn read_csv(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                let source = match e.into_kind() {
                    csv::ErrorKind::Io(io) => io,
                    _ => unreachable!(),
                };
                CorpusError::Io { action: "read", path: display(path), source }
            }
            _ => CorpusError::MalformedRow { path: display(path), line: 1, message: e.to_string() },
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::MalformedRow { path: display(path), line: 1, message: e.to_string() })?;
    if headers.len() != 3
        || &headers[0] != "data"
        || &headers[1] != "source"
        || &headers[2] != "category"
    {
        return Err(CorpusError::BadHeader {
            path: display(path),
            found: headers.iter().map(str::to_string).collect(),
        });
    }
    let mut records = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CorpusError::MalformedRow {
            path: display(path),
            line: e.position().map(csv::Position::line).unwrap_or(0),
            message: e.to_string(),
        })?;
        records.push(CorpusRecord {
            data: record[0].to_string(),
            source: record[1].to_string(),
            category: record[2].to_string(),
        });
    }
    Ok(records)
}

/// Writes records as a `data,source,category` CSV (the inverse of
/// [`read_csv`]).
pub fn write_csv(path: &Path, records: &[CorpusRecord]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| CorpusError::Io {
        action: "write",
        path: display(path),
        source: std::io::Error::other(e),
    })?;
    wtr.write_record(["data", "source", "category"])
        .and_then(|()| {
            records.iter().try_for_each(|r| {
                wtr.write_record([r.data.as_str(), r.source.as_str(), r.category.as_str()])
            })
        })
        .and_then(|()| wtr.flush().map_err(csv::Error::from))
        .map_err(|e| CorpusError::Io {
            action: "write",
            path: display(path),
            source: std::io::Error::other(e),
        })
}

fn token_width(vocab_size: u32) -> u32 {
    if vocab_size <= 65_536 {
        2
    } else {
        4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u32,
    pub vocab_size: u32,
    pub token_width: u32,
    pub token_count: u64,
}

/// Streams documents into numbered shard files. Call [`ShardWriter::finish`]
/// to close the last shard and collect the summary. Shard files are created
/// lazily, so packing nothing produces no files.
pub struct ShardWriter {
    dir: PathBuf,
    prefix: String,
    vocab_size: u32,
    eot: u32,
    width: u32,
    capacity: u64,
    current: Option<(BufWriter<File>, PathBuf)>,
    current_tokens: u64,
    shards: Vec<PathBuf>,
    total_tokens: u64,
    documents: u64,
}

#[derive(Debug)]
pub struct PackSummary {
    pub shard_paths: Vec<PathBuf>,
    pub total_tokens: u64,
    pub documents: u64,
}

impl ShardWriter {
    pub fn new(
        dir: &Path,
        prefix: &str,
        vocab_size: u32,
        tokens_per_shard: u64,
    ) -> Result<Self, CorpusError> {
        if tokens_per_shard == 0 {
            return Err(CorpusError::BadSplit { message: "tokens_per_shard must be positive".into() });
        }
        Ok(ShardWriter {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            vocab_size,
            eot: vocab_size - 1,
            width: token_width(vocab_size),
            capacity: tokens_per_shard,
            current: None,
            current_tokens: 0,
            shards: Vec::new(),
            total_tokens: 0,
            documents: 0,
        })
    }

    fn open_next(&mut self) -> Result<(), CorpusError> {
        let path = self.dir.join(format!("{}-{:05}.shard", self.prefix, self.shards.len()));
        let file = File::create(&path).map_err(io_err("create", &path))?;
        let mut w = BufWriter::new(file);
        let mut header = [0u8; 24];
        header[0..4].copy_from_slice(&SHARD_MAGIC);
        header[4..8].copy_from_slice(&SHARD_VERSION.to_le_bytes());
        header[8..12].copy_from_slice(&self.vocab_size.to_le_bytes());
        header[12..16].copy_from_slice(&self.width.to_le_bytes());
        // token count is patched in on close
        w.write_all(&header).map_err(io_err("write", &path))?;
        self.shards.push(path.clone());
        self.current = Some((w, path));
        self.current_tokens = 0;
        Ok(())
    }

    fn close_current(&mut self) -> Result<(), CorpusError> {
        let Some((mut w, path)) = self.current.take() else {
            return Ok(());
        };
        w.flush().map_err(io_err("write", &path))?;
        let mut file = w.into_inner().map_err(|e| CorpusError::Io {
            action: "write",
            path: display(&path),
            source: e.into_error(),
        })?;
        file.seek(SeekFrom::Start(16)).map_err(io_err("write", &path))?;
        file.write_all(&self.current_tokens.to_le_bytes()).map_err(io_err("write", &path))?;
        file.sync_all().map_err(io_err("write", &path))?;
        Ok(())
    }

    /// Appends one document's tokens plus the trailing end-of-text token,
    /// rolling to a new shard if the document would not fit in this one.
    pub fn append(&mut self, ids: &[u32]) -> Result<(), CorpusError> {
        let need = ids.len() as u64 + 1;
        if need > self.capacity {
            return Err(CorpusError::DocumentExceedsShard { tokens: need, capacity: self.capacity });
        }
        if self.current.is_some() && self.current_tokens + need > self.capacity {
            self.close_current()?;
        }
        if self.current.is_none() {
            self.open_next()?;
        }
        let (w, path) = self.current.as_mut().expect("shard opened above");
        for &id in ids.iter().chain(std::iter::once(&self.eot)) {
            if id >= self.vocab_size {
                return Err(CorpusError::TokenOutOfRange { id, vocab_size: self.vocab_size });
            }
            let res = if self.width == 2 {
                w.write_all(&(id as u16).to_le_bytes())
            } else {
                w.write_all(&id.to_le_bytes())
            };
            res.map_err(|source| CorpusError::Io { action: "write", path: display(path), source })?;
        }
        self.current_tokens += need;
        self.total_tokens += need;
        self.documents += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PackSummary, CorpusError> {
        self.close_current()?;
        Ok(PackSummary {
            shard_paths: self.shards,
            total_tokens: self.total_tokens,
            documents: self.documents,
        })
    }
}

/// Encodes `texts` and packs them into shards under `dir`.
pub fn pack_documents(
    texts: &[String],
    vocab: &Vocabulary,
    dir: &Path,
    prefix: &str,
    tokens_per_shard: u64,
) -> Result<PackSummary, CorpusError> {
    let encoded: Vec<Vec<u32>> = texts.par_iter().map(|t| vocab.encode(t)).collect();
    let mut writer = ShardWriter::new(dir, prefix, vocab.vocab_size(), tokens_per_shard)?;
    for ids in &encoded {
        writer.append(ids)?;
    }
    writer.finish()
}

/// Reads one shard back as raw token ids (end-of-text tokens included).
pub fn read_shard(path: &Path) -> Result<(ShardHeader, Vec<u32>), CorpusError> {
    let bad = |message: String| CorpusError::BadShard { path: display(path), message };
    let mut file = File::open(path).map_err(io_err("read", path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err("read", path))?;
    if bytes.len() < 24 {
        return Err(bad(format!("file is {} bytes, shorter than the 24-byte header", bytes.len())));
    }
    if bytes[0..4] != SHARD_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let header = ShardHeader {
        version: u32_at(4),
        vocab_size: u32_at(8),
        token_width: u32_at(12),
        token_count: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
    };
    if header.version != SHARD_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.token_width != token_width(header.vocab_size) {
        return Err(bad(format!(
            "token width {} does not match vocab size {}",
            header.token_width, header.vocab_size
        )));
    }
    let expected = 24 + header.token_count as usize * header.token_width as usize;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {} tokens, found {}", header.token_count, bytes.len())));
    }
    let body = &bytes[24..];
    let mut tokens = Vec::with_capacity(header.token_count as usize);
    match header.token_width {
        2 => {
            for c in body.chunks_exact(2) {
                tokens.push(u32::from(u16::from_le_bytes([c[0], c[1]])));
            }
        }
        4 => {
            for c in body.chunks_exact(4) {
                tokens.push(u32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            }
        }
        w => return Err(bad(format!("unsupported token width {w}"))),
    }
    if let Some(&id) = tokens.iter().find(|&&id| id >= header.vocab_size) {
        return Err(bad(format!("token id {id} out of range for vocab size {}", header.vocab_size)));
    }
    if let Some(&last) = tokens.last() {
        if last != header.vocab_size - 1 {
            return Err(bad("shard does not end on an end-of-text token".into()));
        }
    }
    Ok((header, tokens))
}

/// Splits a shard's token stream back into per-document token slices.
pub fn split_by_eot(tokens: &[u32], eot: u32) -> Vec<&[u32]> {
    let mut docs: Vec<&[u32]> = tokens.split(|&t| t == eot).collect();
    if let Some(last) = docs.last() {
        if last.is_empty() {
            docs.pop();
        }
    }
    docs
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffles `0..n` (seeded Fisher-Yates) and deals the indices into parts
/// sized `round(fraction * n)`, the last part taking the remainder. Each
/// part comes back in ascending order. Fractions must sum to 1.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>, CorpusError> {
    if fractions.is_empty() {
        return Err(CorpusError::BadSplit { message: "no fractions given".into() });
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(CorpusError::BadSplit { message: "fractions must lie in [0, 1]".into() });
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadSplit { message: format!("fractions sum to {sum}, expected 1") });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = seed;
    for i in (1..n).rev() {
        let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let mut parts = Vec::with_capacity(fractions.len());
    let mut taken = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        let k = if i + 1 == fractions.len() {
            n - taken
        } else {
            ((f * n as f64).round() as usize).min(n - taken)
        };
        let mut part: Vec<usize> = order[taken..taken + k].to_vec();
        part.sort_unstable();
        parts.push(part);
        taken += k;
    }
    Ok(parts)
}

/// Seeded train/validation assignment for whole shards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of shards held out for validation, in `[0, 1)`.
    pub val_fraction: f64,
    pub seed: u64,
}

/// Deals shard indices `0..n_shards` into (train, val), both ascending.
/// The validation side gets `round(val_fraction * n)` shards.
pub fn split_shards(n_shards: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(CorpusError::BadSplit {
            message: format!("val_fraction {} outside [0, 1)", spec.val_fraction),
        });
    }
    let mut parts =
        split_indices(n_shards, &[1.0 - spec.val_fraction, spec.val_fraction], spec.seed)?;
    let val = parts.pop().expect("two parts");
    let train = parts.pop().expect("two parts");
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub category: String,
    pub rows: u64,
    pub bytes: u64,
    /// Share of total corpus bytes, in percent.
    pub share_pct: f64,
    /// Exact token count including one end-of-text token per row; present
    /// when stats were computed with a vocabulary.
    pub tokens: Option<u64>,
}

/// Corpus totals plus a per-category breakdown (largest categories first).
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub rows: u64,
    pub bytes: u64,
    pub tokens: Option<u64>,
    pub categories: Vec<CategoryStats>,
}

pub fn corpus_stats(records: &[CorpusRecord], vocab: Option<&Vocabulary>) -> CorpusStats {
    let token_counts: Option<Vec<u64>> = vocab.map(|v| {
        records.par_iter().map(|r| v.encode(&r.data).len() as u64 + 1).collect()
    });
    let mut by_category: HashMap<&str, (u64, u64, u64)> = HashMap::new();
    let mut total_bytes = 0u64;
    let mut total_tokens = 0u64;
    for (i, r) in records.iter().enumerate() {
        let entry = by_category.entry(r.category.as_str()).or_default();
        entry.0 += 1;
        entry.1 += r.data.len() as u64;
        if let Some(counts) = &token_counts {
            entry.2 += counts[i];
            total_tokens += counts[i];
        }
        total_bytes += r.data.len() as u64;
    }
    let mut categories: Vec<CategoryStats> = by_category
        .into_iter()
        .map(|(category, (rows, bytes, tokens))| CategoryStats {
            category: category.to_string(),
            rows,
            bytes,
            share_pct: if total_bytes == 0 { 0.0 } else { bytes as f64 / total_bytes as f64 * 100.0 },
            tokens: token_counts.as_ref().map(|_| tokens),
        })
        .collect();
    categories.sort_by(|a, b| b.bytes.cmp(&a.bytes).then_with(|| a.category.cmp(&b.category)));
    CorpusStats {
        rows: records.len() as u64,
        bytes: total_bytes,
        tokens: token_counts.map(|_| total_tokens),
        categories,
    }
}

/// Writes stats as CSV: one row per category plus a final `total` row.
/// The `tokens` column is empty when no vocabulary was supplied.
pub fn write_stats_csv(path: &Path, stats: &CorpusStats) -> Result<(), CorpusError> {
    let mut out = String::from("category,rows,bytes,share_pct,tokens\n");
    let fmt_tokens = |t: Option<u64>| t.map(|v| v.to_string()).unwrap_or_default();
    for c in &stats.categories {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.category,
            c.rows,
            c.bytes,
            c.share_pct,
            fmt_tokens(c.tokens)
        ));
    }
    out.push_str(&format!(
        "total,{},{},100,{}\n",
        stats.rows,
        stats.bytes,
        fmt_tokens(stats.tokens)
    ));
    std::fs::write(path, out).map_err(io_err("write", path))
}
