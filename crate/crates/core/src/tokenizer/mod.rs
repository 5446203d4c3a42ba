//! Byte-level BPE tokenizer.
//!
//! Tokens are byte sequences: ids 0..=255 are the raw bytes, each learned
//! merge appends one id, and the final id is reserved for the end-of-text
//! marker. Encoding chunks text with [`pretokenize`] and applies merges in
//! rank order inside each chunk, so a trained model's output never depends
//! on how documents were concatenated.

mod io;
mod pretoken;
mod train;

pub use pretoken::{pretokenize, PreTokenRules};
pub use train::{train_bpe, train_merge_sequence};

use std::collections::HashMap;

use thiserror::Error;

/// Number of ids reserved for raw bytes.
pub const BYTE_IDS: u32 = 256;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocab size {requested} is below the minimum of {minimum}")]
    VocabSizeTooSmall { requested: u32, minimum: u32 },
    #[error("corpus exhausted after {merges_done} merges ({merges_target} requested); use a larger corpus or a smaller vocab")]
    CorpusTooSmall { merges_done: usize, merges_target: usize },
    #[error("unknown token id {id} (vocab size {vocab_size})")]
    UnknownId { id: u32, vocab_size: u32 },
    #[error("invalid merge rule {index}: {message}")]
    InvalidMerge { index: usize, message: String },
    #[error("{path}:{line}: {message}")]
    MalformedVocabFile { path: String, line: usize, message: String },
    #[error("tokens {a} and {b} map to the same byte sequence; vocab cannot be saved unambiguously")]
    DuplicateTokenBytes { a: u32, b: u32 },
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A trained tokenizer: an ordered merge list plus the end-of-text id.
///
/// `vocab_size = 256 + merges + 1`; the end-of-text id is always
/// `vocab_size - 1` and has no byte expansion.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    merges: Vec<(u32, u32)>,
    token_bytes: Vec<Vec<u8>>,
    pair_rank: HashMap<(u32, u32), u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered merge list. Each rule's ids must
    /// refer to bytes or previously created tokens.
    pub fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self, TokenizerError> {
        let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut pair_rank = HashMap::with_capacity(merges.len());
        for (i, &(l, r)) in merges.iter().enumerate() {
            let limit = BYTE_IDS + i as u32;
            if l >= limit || r >= limit {
                return Err(TokenizerError::InvalidMerge {
                    index: i,
                    message: format!("pair ({l}, {r}) references an id not yet defined (limit {limit})"),
                });
            }
            let mut bytes = token_bytes[l as usize].clone();
            bytes.extend_from_slice(&token_bytes[r as usize]);
            token_bytes.push(bytes);
            if pair_rank.insert((l, r), i as u32).is_some() {
                return Err(TokenizerError::InvalidMerge {
                    index: i,
                    message: format!("pair ({l}, {r}) appears twice"),
                });
            }
        }
        Ok(Vocabulary { merges, token_bytes, pair_rank })
    }

    /// The merge-free vocabulary: 256 bytes plus the end-of-text id (257).
    pub fn byte_fallback() -> Self {
        Vocabulary::from_merges(Vec::new()).expect("empty merge list is valid")
    }

    pub fn vocab_size(&self) -> u32 {
        BYTE_IDS + self.merges.len() as u32 + 1
    }

    pub fn eot_id(&self) -> u32 {
        self.vocab_size() - 1
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Byte expansion of `id`, or `None` for out-of-range ids and the
    /// end-of-text id.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.token_bytes.get(id as usize).map(Vec::as_slice)
    }

    /// A vocabulary that keeps only the first merges of this one, as if
    /// training had been stopped at `vocab_size`.
    pub fn truncated(&self, vocab_size: u32) -> Result<Self, TokenizerError> {
        let minimum = BYTE_IDS + 1;
        if vocab_size < minimum {
            return Err(TokenizerError::VocabSizeTooSmall { requested: vocab_size, minimum });
        }
        if vocab_size > self.vocab_size() {
            return Err(TokenizerError::VocabSizeTooSmall {
                requested: self.vocab_size(),
                minimum: vocab_size,
            });
        }
        let keep = (vocab_size - minimum) as usize;
        Vocabulary::from_merges(self.merges[..keep].to_vec())
    }

    /// Encodes one pre-token chunk (no further splitting is applied).
    pub fn encode_chunk(&self, chunk: &[u8]) -> Vec<u32> {
        let mut ids: Vec<u32> = chunk.iter().map(|&b| u32::from(b)).collect();
        loop {
            let mut best = u32::MAX;
            for w in ids.windows(2) {
                if let Some(&rank) = self.pair_rank.get(&(w[0], w[1])) {
                    best = best.min(rank);
                }
            }
            if best == u32::MAX {
                break;
            }
            let (l, r) = self.merges[best as usize];
            let new_id = BYTE_IDS + best;
            let mut out = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(ids[i]);
                    i += 1;
                }
            }
            ids = out;
        }
        ids
    }

    /// Encodes `text`. The output never contains the end-of-text id; that is
    /// appended by corpus packing, not by encoding.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut cache: HashMap<&str, Vec<u32>> = HashMap::new();
        let mut out = Vec::new();
        for chunk in pretokenize(text) {
            match cache.get(chunk) {
                Some(ids) => out.extend_from_slice(ids),
                None => {
                    let ids = self.encode_chunk(chunk.as_bytes());
                    out.extend_from_slice(&ids);
                    cache.insert(chunk, ids);
                }
            }
        }
        out
    }

    /// Decodes ids back to text. The end-of-text id decodes to nothing; pass
    /// a visible marker to [`Vocabulary::decode_with_marker`] if boundaries
    /// should survive. Invalid UTF-8 (possible when decoding a slice that
    /// starts or ends inside a multi-byte character) is replaced with U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        self.decode_with_marker(ids, "")
    }

    pub fn decode_with_marker(&self, ids: &[u32], eot_marker: &str) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            if id == self.eot_id() {
                bytes.extend_from_slice(eot_marker.as_bytes());
            } else {
                match self.token_bytes(id) {
                    Some(b) => bytes.extend_from_slice(b),
                    None => {
                        return Err(TokenizerError::UnknownId { id, vocab_size: self.vocab_size() })
                    }
                }
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Writes the vocabulary to `path` in the line-based merge format.
    pub fn save(&self, path: &std::path::Path) -> Result<(), TokenizerError> {
        io::save(self, path)
    }

    /// Reads a vocabulary saved by [`Vocabulary::save`].
    pub fn load(path: &std::path::Path) -> Result<Self, TokenizerError> {
        io::load(path)
    }
}
