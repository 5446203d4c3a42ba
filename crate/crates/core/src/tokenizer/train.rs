//! BPE training.
//!
//! The trainer counts distinct pre-token chunks once and weights every pair
//! count by chunk frequency, which gives the same merge sequence as scanning
//! each occurrence (pair counts are sums over occurrences either way). Each
//! merge updates only the chunks that contain the merged pair; candidates
//! live in a lazy max-heap and stale entries are re-keyed when popped.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::pretoken::pretokenize;
use super::{TokenizerError, Vocabulary, BYTE_IDS};

struct Word {
    ids: Vec<u32>,
    count: u64,
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Vec<u8>,
    right: Vec<u8>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest count wins; ties prefer the lexicographically smallest
        // left byte sequence, then the smallest right one. The pair ids are
        // a final tiebreak so the order is total.
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn apply_merge(ids: &[u32], l: u32, r: u32, new_id: u32) -> Vec<u32> {
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
    out
}

/// Runs the merge loop for up to `max_merges` steps and returns the merges
/// chosen, stopping early if no pair is left. Exposed separately from
/// [`train_bpe`] so tests can compare partial sequences.
pub fn train_merge_sequence<'a, I>(texts: I, max_merges: usize) -> Vec<(u32, u32)>
where
    I: IntoIterator<Item = &'a str>,
{
    // Distinct chunks in first-occurrence order, weighted by frequency.
    let mut chunk_index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<Word> = Vec::new();
    for text in texts {
        for chunk in pretokenize(text) {
            match chunk_index.get(chunk) {
                Some(&i) => words[i].count += 1,
                None => {
                    chunk_index.insert(chunk.to_owned(), words.len());
                    words.push(Word {
                        ids: chunk.bytes().map(u32::from).collect(),
                        count: 1,
                    });
                }
            }
        }
    }
    drop(chunk_index);

    let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<u32>> = HashMap::new();
    for (wi, word) in words.iter().enumerate() {
        for w in word.ids.windows(2) {
            let p = (w[0], w[1]);
            *pair_counts.entry(p).or_insert(0) += word.count;
            pair_words.entry(p).or_default().insert(wi as u32);
        }
    }

    let mut heap = BinaryHeap::with_capacity(pair_counts.len());
    let mut initial: Vec<((u32, u32), u64)> = pair_counts.iter().map(|(&p, &c)| (p, c)).collect();
    initial.sort_unstable_by_key(|&(p, _)| p);
    for (pair, count) in initial {
        heap.push(Candidate {
            count,
            left: token_bytes[pair.0 as usize].clone(),
            right: token_bytes[pair.1 as usize].clone(),
            pair,
        });
    }

    let mut merges: Vec<(u32, u32)> = Vec::with_capacity(max_merges);
    while merges.len() < max_merges {
        // Pop until the top entry's count matches the live table. Counts of
        // existing pairs only ever decrease (new adjacencies always involve
        // the token a merge just created), so a stale entry is re-keyed
        // downward and the loop terminates.
        let top = loop {
            let Some(mut cand) = heap.pop() else {
                return merges;
            };
            let current = pair_counts.get(&cand.pair).copied().unwrap_or(0);
            if current == 0 {
                continue;
            }
            if current != cand.count {
                cand.count = current;
                heap.push(cand);
                continue;
            }
            break cand;
        };

        let (l, r) = top.pair;
        let new_id = BYTE_IDS + merges.len() as u32;
        merges.push(top.pair);
        let mut bytes = token_bytes[l as usize].clone();
        bytes.extend_from_slice(&token_bytes[r as usize]);
        token_bytes.push(bytes);

        let mut affected: Vec<u32> = pair_words
            .remove(&top.pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();

        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        for wi in affected {
            let word = &mut words[wi as usize];
            let new_ids = apply_merge(&word.ids, l, r, new_id);
            if new_ids.len() == word.ids.len() {
                continue;
            }
            let mut occ_old: HashMap<(u32, u32), i64> = HashMap::new();
            for w in word.ids.windows(2) {
                *occ_old.entry((w[0], w[1])).or_insert(0) += 1;
            }
            let mut occ_new: HashMap<(u32, u32), i64> = HashMap::new();
            for w in new_ids.windows(2) {
                *occ_new.entry((w[0], w[1])).or_insert(0) += 1;
            }
            let weight = word.count as i64;
            for (&p, &c_old) in &occ_old {
                let c_new = occ_new.get(&p).copied().unwrap_or(0);
                if c_new == 0 {
                    if let Some(set) = pair_words.get_mut(&p) {
                        set.remove(&wi);
                        if set.is_empty() {
                            pair_words.remove(&p);
                        }
                    }
                }
                if c_new != c_old {
                    *delta.entry(p).or_insert(0) += (c_new - c_old) * weight;
                }
            }
            for (&p, &c_new) in &occ_new {
                if !occ_old.contains_key(&p) {
                    pair_words.entry(p).or_default().insert(wi);
                    *delta.entry(p).or_insert(0) += c_new * weight;
                }
            }
            word.ids = new_ids;
        }

        let mut touched: Vec<((u32, u32), i64)> = delta.into_iter().collect();
        touched.sort_unstable_by_key(|&(p, _)| p);
        for (pair, d) in touched {
            if d == 0 {
                continue;
            }
            let next = pair_counts.get(&pair).copied().unwrap_or(0) as i64 + d;
            debug_assert!(next >= 0, "pair count underflow for {pair:?}");
            if next <= 0 {
                pair_counts.remove(&pair);
                continue;
            }
            pair_counts.insert(pair, next as u64);
            if d > 0 {
                heap.push(Candidate {
                    count: next as u64,
                    left: token_bytes[pair.0 as usize].clone(),
                    right: token_bytes[pair.1 as usize].clone(),
                    pair,
                });
            }
        }
        debug_assert!(!pair_counts.contains_key(&top.pair));
    }
    merges
}

/// Trains a tokenizer with `vocab_size - 257` merges (256 byte ids plus one
/// end-of-text id). Fails if the corpus runs out of pairs first.
pub fn train_bpe<'a, I>(texts: I, vocab_size: u32) -> Result<Vocabulary, TokenizerError>
where
    I: IntoIterator<Item = &'a str>,
{
    let minimum = BYTE_IDS + 2; // at least one merge
    if vocab_size < minimum {
        return Err(TokenizerError::VocabSizeTooSmall { requested: vocab_size, minimum });
    }
    let target = (vocab_size - BYTE_IDS - 1) as usize;
    let merges = train_merge_sequence(texts, target);
    if merges.len() < target {
        return Err(TokenizerError::CorpusTooSmall {
            merges_done: merges.len(),
            merges_target: target,
        });
    }
    Vocabulary::from_merges(merges)
}
