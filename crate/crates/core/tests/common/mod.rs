//! Deterministic synthetic-corpus generators shared by the integration
//! tests. Everything is seeded splitmix64, so the committed fixtures under
//! `tests/data/` can be regenerated byte-identically (see
//! `regen_fixtures.rs`).
#![allow(dead_code)] // each test target uses a different subset

use std::path::PathBuf;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn next_f64(state: &mut u64) -> f64 {
    (splitmix64(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn pick<'a, T>(state: &mut u64, items: &'a [T]) -> &'a T {
    &items[(splitmix64(state) % items.len() as u64) as usize]
}

fn sample_cdf(state: &mut u64, cdf: &[f64]) -> usize {
    let u = next_f64(state);
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

const CONSONANTS: &[&str] = &[
    "ب", "پ", "ت", "ٹ", "ث", "ج", "چ", "ح", "خ", "د", "ڈ", "ذ", "ر", "ڑ", "ز", "ژ", "س", "ش",
    "ص", "ض", "ط", "ظ", "ع", "غ", "ف", "ق", "ک", "گ", "ل", "م", "ن", "و", "ہ", "ھ", "ی",
];
const VOWELS: &[&str] = &["ا", "ی", "و", "ے"];

const SUFFIXES: &[(&str, f64)] = &[
    ("", 0.45),
    ("وں", 0.07),
    ("یں", 0.06),
    ("ے", 0.06),
    ("ی", 0.06),
    ("ہ", 0.05),
    ("ات", 0.05),
    ("نے", 0.05),
    ("نا", 0.05),
    ("تا", 0.04),
    ("تی", 0.03),
    ("کر", 0.03),
];

const FUNCTION_WORDS: &[&str] = &[
    "کا", "کی", "کے", "میں", "نے", "سے", "پر", "ہے", "ہیں", "اور", "یہ", "وہ", "کو", "بھی",
    "تھا", "تھی",
];

/// Zipf-weighted synthetic Urdu word sampler. The root lexicon depends only
/// on `lexicon_seed`, so corpora drawn with different `stream_seed`s share
/// their vocabulary (train vs held-out) while sampling different text.
pub struct TextGen {
    state: u64,
    roots: Vec<String>,
    root_cdf: Vec<f64>,
    suffix_cdf: Vec<f64>,
}

impl TextGen {
    pub fn new(lexicon_seed: u64, stream_seed: u64, n_roots: usize, zipf_s: f64) -> TextGen {
        let mut state = lexicon_seed ^ 0xa5a5_5a5a_1234_fedc;
        let mut roots = Vec::with_capacity(n_roots);
        let mut seen = std::collections::HashSet::new();
        while roots.len() < n_roots {
            let syllables = 2 + (splitmix64(&mut state) % 2) as usize;
            let mut root = String::new();
            for _ in 0..syllables {
                root.push_str(pick(&mut state, CONSONANTS));
                if next_f64(&mut state) < 0.6 {
                    root.push_str(pick(&mut state, VOWELS));
                }
            }
            if seen.insert(root.clone()) {
                roots.push(root);
            }
        }
        let mut root_cdf = Vec::with_capacity(n_roots);
        let mut acc = 0.0;
        for k in 0..n_roots {
            acc += 1.0 / ((k + 1) as f64).powf(zipf_s);
            root_cdf.push(acc);
        }
        for w in &mut root_cdf {
            *w /= acc;
        }
        let mut suffix_cdf = Vec::with_capacity(SUFFIXES.len());
        let mut acc = 0.0;
        for &(_, w) in SUFFIXES {
            acc += w;
            suffix_cdf.push(acc);
        }
        for w in &mut suffix_cdf {
            *w /= acc;
        }
        TextGen { state: stream_seed, roots, root_cdf, suffix_cdf }
    }

    pub fn word(&mut self) -> String {
        let root = sample_cdf(&mut self.state, &self.root_cdf);
        let suffix = sample_cdf(&mut self.state, &self.suffix_cdf);
        format!("{}{}", self.roots[root], SUFFIXES[suffix].0)
    }

    pub fn sentence(&mut self) -> String {
        let n = 6 + (splitmix64(&mut self.state) % 8) as usize;
        let mut words = Vec::with_capacity(n * 2);
        for _ in 0..n {
            words.push(self.word());
            if next_f64(&mut self.state) < 0.4 {
                words.push((*pick(&mut self.state, FUNCTION_WORDS)).to_string());
            }
        }
        let mut s = words.join(" ");
        s.push('۔');
        s
    }

    pub fn document(&mut self) -> String {
        let n = 4 + (splitmix64(&mut self.state) % 5) as usize;
        (0..n).map(|_| self.sentence()).collect::<Vec<_>>().join(" ")
    }
}

const SOURCES: &[&str] = &["web", "news-api", "books-api"];
const CATEGORIES: &[(&str, f64)] = &[("news", 0.4), ("blogs", 0.3), ("books", 0.2), ("wiki", 0.1)];

/// The shared root lexicon for all corpus fixtures. Held-out text must come
/// from the same vocabulary as training text or fertility measurements
/// degenerate to syllable statistics.
pub const LEXICON_SEED: u64 = 0xC0FFEE;

/// `n_docs` clean synthetic records, ready for `corpus::write_csv`.
pub fn synth_records(seed: u64, n_docs: usize) -> Vec<urdukit::corpus::CorpusRecord> {
    let mut gen = TextGen::new(LEXICON_SEED, seed, 20_000, 0.45);
    let mut meta_state = seed ^ 0x0f0f_f0f0_c3c3_3c3c;
    (0..n_docs)
        .map(|_| {
            let u = next_f64(&mut meta_state);
            let mut acc = 0.0;
            let mut category = CATEGORIES[0].0;
            for &(name, w) in CATEGORIES {
                acc += w;
                if u < acc {
                    category = name;
                    break;
                }
            }
            urdukit::corpus::CorpusRecord {
                data: gen.document(),
                source: (*pick(&mut meta_state, SOURCES)).to_string(),
                category: category.to_string(),
            }
        })
        .collect()
}

const NOISE_SNIPPETS: &[&str] = &[
    "https://spam.example.com/offer?id=17",
    "http://t.co/abc",
    "user@mail.example.com",
    "0301-1234567",
    "12345",
    "42",
    "۱۲۳۴",
    "\u{200B}",
    "\u{200C}",
    "\u{00A0}",
    "؟؟؟",
    "؟؟",
    "()",
    "( )",
    "SALE NOW",
    "click here",
    "\t",
    "  ",
];

/// A document with random web junk spliced between the words: links,
/// digits in both scripts, zero-widths, stray Latin, empty parens.
pub fn noisy_document(state: &mut u64) -> String {
    let mut gen = TextGen::new(LEXICON_SEED, splitmix64(state), 400, 1.0);
    let n = 3 + (splitmix64(state) % 30) as usize;
    let mut parts = Vec::with_capacity(n * 2);
    for _ in 0..n {
        parts.push(gen.word());
        if next_f64(state) < 0.35 {
            parts.push((*pick(state, NOISE_SNIPPETS)).to_string());
        }
    }
    parts.join(" ")
}
