//! Vocabulary file format.
//!
//! Line-oriented UTF-8:
//!
//! ```text
//! version 1
//! vocab_size 32000
//! specials EOT=31999
//! <base64 left> <base64 right>     (one line per merge, in rank order)
//! ```
//!
//! Merge sides are the tokens' byte sequences, base64-encoded so arbitrary
//! bytes survive. The format addresses tokens by content, so a vocabulary in
//! which two ids expand to the same bytes cannot be written unambiguously;
//! both save and load reject that case.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::{TokenizerError, Vocabulary, BYTE_IDS};

pub(super) fn save(v: &Vocabulary, path: &Path) -> Result<(), TokenizerError> {
    let mut seen: HashMap<&[u8], u32> = HashMap::new();
    for (id, bytes) in v.token_bytes.iter().enumerate() {
        if let Some(&prev) = seen.get(bytes.as_slice()) {
            return Err(TokenizerError::DuplicateTokenBytes { a: prev, b: id as u32 });
        }
        seen.insert(bytes, id as u32);
    }
    let mut out = String::new();
    out.push_str("version 1\n");
    out.push_str(&format!("vocab_size {}\n", v.vocab_size()));
    out.push_str(&format!("specials EOT={}\n", v.eot_id()));
    for &(l, r) in &v.merges {
        out.push_str(&B64.encode(&v.token_bytes[l as usize]));
        out.push(' ');
        out.push_str(&B64.encode(&v.token_bytes[r as usize]));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| TokenizerError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

pub(super) fn load(path: &Path) -> Result<Vocabulary, TokenizerError> {
    let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        action: "read",
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

fn malformed(path: &str, line: usize, message: impl Into<String>) -> TokenizerError {
    TokenizerError::MalformedVocabFile { path: path.to_string(), line, message: message.into() }
}

fn parse(text: &str, path: &str) -> Result<Vocabulary, TokenizerError> {
    let mut lines = text.lines();

    let version = lines.next().unwrap_or_default();
    if version != "version 1" {
        return Err(malformed(path, 1, format!("expected \"version 1\", found {version:?}")));
    }
    let vocab_line = lines.next().unwrap_or_default();
    let vocab_size: u32 = vocab_line
        .strip_prefix("vocab_size ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(path, 2, format!("expected \"vocab_size <n>\", found {vocab_line:?}")))?;
    if vocab_size < BYTE_IDS + 1 {
        return Err(malformed(path, 2, format!("vocab_size {vocab_size} is below the 257 floor")));
    }
    let specials_line = lines.next().unwrap_or_default();
    let eot: u32 = specials_line
        .strip_prefix("specials EOT=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(path, 3, format!("expected \"specials EOT=<id>\", found {specials_line:?}")))?;
    if eot != vocab_size - 1 {
        return Err(malformed(path, 3, format!("EOT id {eot} must be vocab_size - 1 = {}", vocab_size - 1)));
    }

    let expected = (vocab_size - BYTE_IDS - 1) as usize;
    let mut bytes_to_id: HashMap<Vec<u8>, u32> = (0..=255u8).map(|b| (vec![b], u32::from(b))).collect();
    let mut merges: Vec<(u32, u32)> = Vec::with_capacity(expected);

    for (i, line) in lines.enumerate() {
        let lineno = i + 4;
        if merges.len() == expected {
            return Err(malformed(path, lineno, format!("expected {expected} merge lines, found more")));
        }
        let mut fields = line.split(' ');
        let (Some(lf), Some(rf), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(malformed(path, lineno, "expected two space-separated base64 fields"));
        };
        if lf.is_empty() || rf.is_empty() {
            return Err(malformed(path, lineno, "empty merge field"));
        }
        let lb = B64
            .decode(lf)
            .map_err(|e| malformed(path, lineno, format!("bad base64 in left field: {e}")))?;
        let rb = B64
            .decode(rf)
            .map_err(|e| malformed(path, lineno, format!("bad base64 in right field: {e}")))?;
        let &lid = bytes_to_id
            .get(&lb)
            .ok_or_else(|| malformed(path, lineno, "left side is not a known token"))?;
        let &rid = bytes_to_id
            .get(&rb)
            .ok_or_else(|| malformed(path, lineno, "right side is not a known token"))?;
        let mut joined = lb;
        joined.extend_from_slice(&rb);
        let new_id = BYTE_IDS + merges.len() as u32;
        if bytes_to_id.insert(joined, new_id).is_some() {
            return Err(malformed(path, lineno, "merge result duplicates an existing token"));
        }
        merges.push((lid, rid));
    }

    if merges.len() != expected {
        let line = 3 + merges.len() + 1;
        return Err(malformed(
            path,
            line,
            format!("expected {expected} merge lines, found {}", merges.len()),
        ));
    }
    Vocabulary::from_merges(merges)
}

#[cfg(test)]
mod tests {
    use super::super::{train_bpe, TokenizerError, Vocabulary};

    fn sample() -> Vocabulary {
        train_bpe(["اردو زبان اردو زبان جملہ", "زبان اور اردو"], 270).unwrap()
    }

    #[test]
    fn save_load_roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vocab");
        let v = sample();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.merges(), v.merges());
        assert_eq!(loaded.vocab_size(), v.vocab_size());
        // a second save is byte-identical
        let first = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("v2.vocab");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), first);
    }

    #[test]
    fn header_errors_carry_line_numbers() {
        let cases = [
            ("version 2\nvocab_size 258\nspecials EOT=257\n", 1),
            ("version 1\nvocab_size x\nspecials EOT=257\n", 2),
            ("version 1\nvocab_size 258\nspecials EOT=9\n", 3),
            ("version 1\nvocab_size 100\nspecials EOT=99\n", 2),
        ];
        for (text, want_line) in cases {
            match super::parse(text, "test.vocab") {
                Err(TokenizerError::MalformedVocabFile { line, .. }) => {
                    assert_eq!(line, want_line, "input {text:?}")
                }
                other => panic!("expected malformed error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn merge_line_errors_carry_line_numbers() {
        // vocab_size 259 expects two merges
        let base = "version 1\nvocab_size 259\nspecials EOT=258\n";
        let cases = [
            (format!("{base}YQ== YQ==\n"), 5usize, "missing second merge"),
            (format!("{base}not-base64!! YQ==\nYQ== YQ==\n"), 4, "bad base64"),
            (format!("{base}YQ==\nYQ== YQ==\n"), 4, "one field"),
            (format!("{base}YQ== YQ==\nYWE= YQ==\nYWFh YQ==\n"), 6, "extra line"),
        ];
        for (text, want_line, what) in cases {
            match super::parse(&text, "test.vocab") {
                Err(TokenizerError::MalformedVocabFile { line, .. }) => {
                    assert_eq!(line, want_line, "{what}")
                }
                other => panic!("expected malformed error ({what}), got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_token_reference_is_rejected() {
        // "ab" used as a side before being created
        let text = "version 1\nvocab_size 259\nspecials EOT=258\nYWI= YQ==\nYQ== YQ==\n";
        match super::parse(text, "test.vocab") {
            Err(TokenizerError::MalformedVocabFile { line: 4, message, .. }) => {
                assert!(message.contains("not a known token"), "{message}");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn loaded_vocab_encodes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vocab");
        let v = sample();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        let text = "اردو زبان میں نیا جملہ";
        assert_eq!(v.encode(text), loaded.encode(text));
    }
}
