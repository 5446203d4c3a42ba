//! Exact and near-duplicate detection.
//!
//! Documents are shingled into overlapping word 5-grams, hashed, and
//! sketched with MinHash: position i of a signature holds the minimum of
//! `(a_i * x + b_i) mod (2^61 - 1)` over all shingle hashes x. The share of
//! equal positions between two signatures estimates their shingle-set
//! Jaccard similarity. Banding the signatures (LSH) keeps the number of
//! compared pairs near-linear, and a union-find over the above-threshold
//! pairs groups duplicates so each cluster keeps exactly one document.
//!
//! Everything is seeded and hand-rolled (splitmix64 for parameter draws,
//! FNV-1a for shingles) so signatures are stable across runs, platforms and
//! versions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

/// Modulus for the hash family: the Mersenne prime 2^61 - 1.
pub const MERSENNE_P: u64 = (1 << 61) - 1;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("document has no words to shingle")]
    EmptyDocument,
    #[error("document {index} has no words to shingle")]
    EmptyDocumentAt { index: usize },
    #[error("signatures are not comparable: {message}")]
    SignatureMismatch { message: String },
    #[error("invalid dedup config: {message}")]
    InvalidConfig { message: String },
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Reduces a 122-bit product modulo 2^61 - 1 with shifts instead of
/// division.
fn mod_mersenne61(mut v: u128) -> u64 {
    let p = u128::from(MERSENNE_P);
    v = (v & p) + (v >> 61);
    v = (v & p) + (v >> 61);
    let mut r = v as u64;
    if r >= MERSENNE_P {
        r -= MERSENNE_P;
    }
    r
}

/// The set of hashed word `k`-shingles of `text`. Texts shorter than `k`
/// words contribute a single shingle covering all of them; whitespace runs
/// do not affect the result. Empty (all-whitespace) texts have no shingles.
fn shingle_set(text: &str, k: usize, seed: u64) -> BTreeSet<u64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut set = BTreeSet::new();
    if words.is_empty() {
        return set;
    }
    if words.len() < k {
        set.insert(fnv1a64(words.join(" ").as_bytes(), seed));
        return set;
    }
    for window in words.windows(k) {
        set.insert(fnv1a64(window.join(" ").as_bytes(), seed));
    }
    set
}

/// Exact Jaccard similarity of the two texts' shingle sets.
pub fn exact_jaccard(a: &str, b: &str, k: usize, seed: u64) -> Result<f64, DedupError> {
    let sa = shingle_set(a, k, seed);
    let sb = shingle_set(b, k, seed);
    if sa.is_empty() || sb.is_empty() {
        return Err(DedupError::EmptyDocument);
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// MinHash signature: per-permutation minima plus the parameters' identity,
/// so incompatible signatures cannot be compared by accident.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    seed: u64,
    values: Vec<u64>,
}

impl MinHashSignature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fraction of positions on which the two signatures agree — an unbiased
/// estimate of the documents' shingle Jaccard similarity.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.seed != b.seed {
        return Err(DedupError::SignatureMismatch {
            message: format!("seeds differ ({} vs {})", a.seed, b.seed),
        });
    }
    if a.values.len() != b.values.len() {
        return Err(DedupError::SignatureMismatch {
            message: format!("lengths differ ({} vs {})", a.values.len(), b.values.len()),
        });
    }
    let matches = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(matches as f64 / a.values.len() as f64)
}

/// Draws the `(a_i, b_i)` hash family from a seed and turns shingle sets
/// into signatures.
#[derive(Debug, Clone)]
pub struct MinHasher {
    seed: u64,
    shingle_k: usize,
    params: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(num_hashes: usize, shingle_k: usize, seed: u64) -> Result<Self, DedupError> {
        if num_hashes == 0 {
            return Err(DedupError::InvalidConfig { message: "num_hashes must be positive".into() });
        }
        if shingle_k == 0 {
            return Err(DedupError::InvalidConfig { message: "shingle_k must be positive".into() });
        }
        let mut state = seed;
        let params = (0..num_hashes)
            .map(|_| {
                let a = splitmix64(&mut state) % (MERSENNE_P - 1) + 1;
                let b = splitmix64(&mut state) % MERSENNE_P;
                (a, b)
            })
            .collect();
        Ok(MinHasher { seed, shingle_k, params })
    }

    pub fn signature(&self, text: &str) -> Result<MinHashSignature, DedupError> {
        let shingles = shingle_set(text, self.shingle_k, self.seed);
        if shingles.is_empty() {
            return Err(DedupError::EmptyDocument);
        }
        let values = self
            .params
            .iter()
            .map(|&(a, b)| {
                shingles
                    .iter()
                    .map(|&x| {
                        let v = u128::from(a) * u128::from(x % MERSENNE_P) + u128::from(b);
                        mod_mersenne61(v)
                    })
                    .min()
                    .expect("non-empty shingle set")
            })
            .collect();
        Ok(MinHashSignature { seed: self.seed, values })
    }
}

/// Banded index over signatures: two documents become candidates when any
/// band of `rows` consecutive signature values hashes identically.
#[derive(Debug)]
pub struct LshIndex {
    bands: usize,
    rows: usize,
    buckets: HashMap<(usize, u64), Vec<u32>>,
}

impl LshIndex {
    pub fn new(bands: usize, rows: usize) -> Result<Self, DedupError> {
        if bands == 0 || rows == 0 {
            return Err(DedupError::InvalidConfig { message: "bands and rows must be positive".into() });
        }
        Ok(LshIndex { bands, rows, buckets: HashMap::new() })
    }

    pub fn insert(&mut self, idx: u32, sig: &MinHashSignature) -> Result<(), DedupError> {
        if sig.values.len() != self.bands * self.rows {
            return Err(DedupError::SignatureMismatch {
                message: format!(
                    "signature has {} values, index expects {} ({} bands x {} rows)",
                    sig.values.len(),
                    self.bands * self.rows,
                    self.bands,
                    self.rows
                ),
            });
        }
        for band in 0..self.bands {
            let chunk = &sig.values[band * self.rows..(band + 1) * self.rows];
            let mut bytes = Vec::with_capacity(self.rows * 8);
            for v in chunk {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let key = (band, fnv1a64(&bytes, band as u64));
            self.buckets.entry(key).or_default().push(idx);
        }
        Ok(())
    }

    /// All distinct pairs that share at least one bucket, as (low, high).
    pub fn candidate_pairs(&self) -> BTreeSet<(u32, u32)> {
        let mut pairs = BTreeSet::new();
        for ids in self.buckets.values() {
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    if a != b {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        pairs
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

#[derive(Debug, Clone)]
pub struct DedupConfig {
    /// Estimated-similarity threshold above which a pair is a duplicate.
    pub threshold: f64,
    pub num_hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub shingle_k: usize,
    pub seed: u64,
    /// Recompute the true shingle Jaccard for every above-threshold pair and
    /// drop edges the exact value does not confirm.
    pub exact_verify: bool,
    /// Candidate pairs whose estimate lands in this band are reported for
    /// manual review regardless of the dedup outcome.
    pub borderline_lo: f64,
    pub borderline_hi: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: 0.90,
            num_hashes: 128,
            bands: 16,
            rows: 8,
            shingle_k: 5,
            seed: 42,
            exact_verify: false,
            borderline_lo: 0.80,
            borderline_hi: 0.92,
        }
    }
}

impl DedupConfig {
    pub(crate) fn validate(&self) -> Result<(), DedupError> {
        if self.bands * self.rows != self.num_hashes {
            return Err(DedupError::InvalidConfig {
                message: format!(
                    "bands ({}) x rows ({}) must equal num_hashes ({})",
                    self.bands, self.rows, self.num_hashes
                ),
            });
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(DedupError::InvalidConfig {
                message: format!("threshold {} outside (0, 1]", self.threshold),
            });
        }
        if self.borderline_lo > self.borderline_hi {
            return Err(DedupError::InvalidConfig {
                message: "borderline_lo above borderline_hi".into(),
            });
        }
        if self.shingle_k == 0 {
            return Err(DedupError::InvalidConfig { message: "shingle_k must be positive".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    ExactDuplicate,
    NearDuplicate,
}

/// Why one document was dropped in favor of another.
#[derive(Debug, Clone)]
pub struct DedupDecision {
    pub removed: usize,
    pub kept: usize,
    pub reason: DropReason,
    pub estimated_jaccard: f64,
    pub exact_jaccard: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BorderlinePair {
    pub a: usize,
    pub b: usize,
    pub estimated_jaccard: f64,
    pub exact_jaccard: Option<f64>,
}

#[derive(Debug)]
pub struct DedupOutcome {
    /// Indices into the input corpus, ascending; cluster representatives and
    /// unique documents.
    pub kept: Vec<usize>,
    pub decisions: Vec<DedupDecision>,
    pub borderline: Vec<BorderlinePair>,
    pub candidate_pairs_evaluated: usize,
}

/// Removes byte-identical documents (keeping the first occurrence), then
/// clusters near-duplicates and keeps one representative per cluster: the
/// longest document in codepoints, ties broken by lowest index.
pub fn dedup_corpus(docs: &[String], cfg: &DedupConfig) -> Result<DedupOutcome, DedupError> {
    cfg.validate()?;

    // Pass 1: exact duplicates by byte equality.
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let mut survivors: Vec<usize> = Vec::new();
    let mut decisions: Vec<DedupDecision> = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        match first_seen.get(doc.as_str()) {
            Some(&first) => decisions.push(DedupDecision {
                removed: i,
                kept: first,
                reason: DropReason::ExactDuplicate,
                estimated_jaccard: 1.0,
                exact_jaccard: Some(1.0),
            }),
            None => {
                first_seen.insert(doc, i);
                survivors.push(i);
            }
        }
    }

    // Pass 2: near duplicates among the survivors.
    let hasher = MinHasher::new(cfg.num_hashes, cfg.shingle_k, cfg.seed)?;
    let sigs: Vec<Result<MinHashSignature, DedupError>> =
        survivors.par_iter().map(|&i| hasher.signature(&docs[i])).collect();
    let mut signatures = Vec::with_capacity(sigs.len());
    for (pos, res) in sigs.into_iter().enumerate() {
        match res {
            Ok(sig) => signatures.push(sig),
            Err(DedupError::EmptyDocument) => {
                return Err(DedupError::EmptyDocumentAt { index: survivors[pos] })
            }
            Err(e) => return Err(e),
        }
    }

    let mut index = LshIndex::new(cfg.bands, cfg.rows)?;
    for (pos, sig) in signatures.iter().enumerate() {
        index.insert(pos as u32, sig)?;
    }

    let candidates = index.candidate_pairs();
    let candidate_pairs_evaluated = candidates.len();
    let mut uf = UnionFind::new(survivors.len());
    let mut edges: Vec<(u32, u32, f64, Option<f64>)> = Vec::new();
    let mut borderline: Vec<BorderlinePair> = Vec::new();
    for (a, b) in candidates {
        let est = estimate_jaccard(&signatures[a as usize], &signatures[b as usize])?;
        let mut exact = None;
        if cfg.exact_verify && est > cfg.threshold {
            exact = Some(exact_jaccard(
                &docs[survivors[a as usize]],
                &docs[survivors[b as usize]],
                cfg.shingle_k,
                cfg.seed,
            )?);
        }
        if est >= cfg.borderline_lo && est <= cfg.borderline_hi {
            borderline.push(BorderlinePair {
                a: survivors[a as usize],
                b: survivors[b as usize],
                estimated_jaccard: est,
                exact_jaccard: exact,
            });
        }
        if est > cfg.threshold {
            if let Some(x) = exact {
                if x <= cfg.threshold {
                    continue; // estimate overshot; exact check vetoes the edge
                }
            }
            uf.union(a, b);
            edges.push((a, b, est, exact));
        }
    }

    // Pick each cluster's representative.
    let mut clusters: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for pos in 0..survivors.len() as u32 {
        clusters.entry(uf.find(pos)).or_default().push(pos);
    }
    let mut kept: Vec<usize> = Vec::new();
    for members in clusters.values() {
        let rep = *members
            .iter()
            .max_by_key(|&&pos| (docs[survivors[pos as usize]].chars().count(), std::cmp::Reverse(pos)))
            .expect("clusters are non-empty");
        kept.push(survivors[rep as usize]);
        for &pos in members {
            if pos == rep {
                continue;
            }
            // Justify the drop with the strongest edge at this document.
            let best = edges
                .iter()
                .filter(|&&(a, b, _, _)| a == pos || b == pos)
                .max_by(|x, y| x.2.total_cmp(&y.2))
                .expect("non-representative members joined through an edge");
            decisions.push(DedupDecision {
                removed: survivors[pos as usize],
                kept: survivors[rep as usize],
                reason: DropReason::NearDuplicate,
                estimated_jaccard: best.2,
                exact_jaccard: best.3,
            });
        }
    }

    kept.sort_unstable();
    decisions.sort_by_key(|d| d.removed);
    Ok(DedupOutcome { kept, decisions, borderline, candidate_pairs_evaluated })
}
