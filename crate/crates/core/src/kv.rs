//! Line-oriented `key = value` configuration files.
//!
//! Model shapes, training plans and hardware profiles are flat files;
//! the pipeline configuration adds `[section]` headers on top of the same
//! line grammar. `#` starts a comment, blank lines are ignored. Every
//! diagnostic carries the 1-based line number it refers to, and consumers
//! reject keys they do not understand.

use std::fmt;
use std::path::Path;

/// A parse or validation problem tied to a config file line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        KvError { line, message: message.into() }
    }
}

impl fmt::Display for KvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for KvError {}

/// One `key = value` entry with its source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// A `[name]` block and the entries under it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub line: usize,
    pub name: String,
    pub entries: Vec<Entry>,
}

fn split_entry(line_no: usize, line: &str) -> Result<Entry, KvError> {
    let Some((key, value)) = line.split_once('=') else {
        return Err(KvError::new(line_no, format!("expected `key = value`, got `{line}`")));
    };
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() {
        return Err(KvError::new(line_no, "empty key"));
    }
    if !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
        return Err(KvError::new(line_no, format!("invalid key `{key}`")));
    }
    Ok(Entry { line: line_no, key: key.to_string(), value: value.to_string() })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(idx) => &line[..idx],
        None => line,
    }
}

/// Parses a flat (section-free) config file.
pub fn parse_flat(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            return Err(KvError::new(line_no, "sections are not allowed in this file"));
        }
        entries.push(split_entry(line_no, line)?);
    }
    Ok(entries)
}

/// Parses a sectioned config file. Entries before the first section header
/// are rejected.
pub fn parse_sectioned(text: &str) -> Result<Vec<Section>, KvError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(KvError::new(line_no, format!("unterminated section header `{line}`")));
            };
            let name = name.trim();
            if name.is_empty() {
                return Err(KvError::new(line_no, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(KvError::new(line_no, format!("duplicate section `[{name}]`")));
            }
            sections.push(Section { line: line_no, name: name.to_string(), entries: Vec::new() });
            continue;
        }
        let entry = split_entry(line_no, line)?;
        match sections.last_mut() {
            Some(section) => section.entries.push(entry),
            None => {
                return Err(KvError::new(line_no, "entry outside of any [section]"));
            }
        }
    }
    Ok(sections)
}

/// Typed, consume-tracking access to a set of entries. Call the `take_*`
/// methods for every known key, then [`Fields::finish`] to reject leftovers.
pub struct Fields {
    entries: Vec<Entry>,
    taken: Vec<bool>,
    /// Line blamed for "missing key" errors (the section header line, or 0).
    context_line: usize,
}

impl Fields {
    pub fn new(entries: Vec<Entry>) -> Result<Self, KvError> {
        for (i, e) in entries.iter().enumerate() {
            if let Some(first) = entries[..i].iter().find(|p| p.key == e.key) {
                return Err(KvError::new(
                    e.line,
                    format!("duplicate key `{}` (first set on line {})", e.key, first.line),
                ));
            }
        }
        let taken = vec![false; entries.len()];
        Ok(Fields { entries, taken, context_line: 0 })
    }

    pub fn with_context_line(mut self, line: usize) -> Self {
        self.context_line = line;
        self
    }

    fn take(&mut self, key: &str) -> Option<&Entry> {
        let idx = self.entries.iter().position(|e| e.key == key)?;
        self.taken[idx] = true;
        Some(&self.entries[idx])
    }

    pub fn take_str(&mut self, key: &str) -> Option<(usize, String)> {
        self.take(key).map(|e| (e.line, e.value.clone()))
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>, KvError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(KvError::new(e.line, format!("`{key}` must be a finite number, got `{}`", e.value))),
            },
        }
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>, KvError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<u64>()
                .map(Some)
                .map_err(|_| KvError::new(e.line, format!("`{key}` must be a non-negative integer, got `{}`", e.value))),
        }
    }

    pub fn take_u32(&mut self, key: &str) -> Result<Option<u32>, KvError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<u32>()
                .map(Some)
                .map_err(|_| KvError::new(e.line, format!("`{key}` must be a non-negative integer, got `{}`", e.value))),
        }
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>, KvError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => match e.value.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(KvError::new(e.line, format!("`{key}` must be `true` or `false`, got `{other}`"))),
            },
        }
    }

    /// Fails with the entry's line when the key is absent.
    pub fn require_f64(&mut self, key: &str) -> Result<f64, KvError> {
        self.take_f64(key)?
            .ok_or_else(|| KvError::new(self.context_line, format!("missing required key `{key}`")))
    }

    pub fn require_u32(&mut self, key: &str) -> Result<u32, KvError> {
        self.take_u32(key)?
            .ok_or_else(|| KvError::new(self.context_line, format!("missing required key `{key}`")))
    }

    pub fn require_str(&mut self, key: &str) -> Result<(usize, String), KvError> {
        self.take_str(key)
            .ok_or_else(|| KvError::new(self.context_line, format!("missing required key `{key}`")))
    }

    /// Rejects any entry that was never consumed.
    pub fn finish(self) -> Result<(), KvError> {
        for (entry, taken) in self.entries.iter().zip(&self.taken) {
            if !taken {
                return Err(KvError::new(entry.line, format!("unknown key `{}`", entry.key)));
            }
        }
        Ok(())
    }

    /// Like [`Fields::finish`] but reports every leftover key.
    pub fn finish_all(self) -> Vec<KvError> {
        self.entries
            .iter()
            .zip(&self.taken)
            .filter(|(_, taken)| !**taken)
            .map(|(entry, _)| KvError::new(entry.line, format!("unknown key `{}`", entry.key)))
            .collect()
    }
}

/// Reads and parses a flat config file.
pub fn read_flat(path: &Path) -> Result<Vec<Entry>, std::io::Error> {
    std::fs::read_to_string(path).map(|text| parse_flat(&text)).and_then(|r| {
        r.map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_parses_values_and_comments() {
        let entries = parse_flat("a = 1\n# comment\n\nb_2 = x y # trailing\n").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0], Entry { line: 1, key: "a".into(), value: "1".into() });
        assert_eq!(entries[1], Entry { line: 4, key: "b_2".into(), value: "x y".into() });
    }

    #[test]
    fn flat_rejects_sections_and_bad_lines() {
        assert_eq!(parse_flat("[x]\n").unwrap_err().line, 1);
        assert_eq!(parse_flat("a = 1\nnot a pair\n").unwrap_err().line, 2);
        assert_eq!(parse_flat("BAD = 1\n").unwrap_err().line, 1);
    }

    #[test]
    fn sectioned_groups_entries() {
        let text = "[one]\na = 1\n[two]\nb = 2\n";
        let sections = parse_sectioned(text).unwrap();
        assert_eq!(sections.len(), 2);
        assert_eq!(sections[0].name, "one");
        assert_eq!(sections[1].entries[0].key, "b");
        assert_eq!(sections[1].entries[0].line, 4);
    }

    #[test]
    fn sectioned_rejects_orphans_and_duplicates() {
        assert_eq!(parse_sectioned("a = 1\n").unwrap_err().line, 1);
        assert_eq!(parse_sectioned("[x]\n[x]\n").unwrap_err().line, 2);
        assert_eq!(parse_sectioned("[x\n").unwrap_err().line, 1);
    }

    #[test]
    fn fields_tracks_unknown_and_duplicate_keys() {
        let entries = parse_flat("a = 1\nb = 2\n").unwrap();
        let mut f = Fields::new(entries).unwrap();
        assert_eq!(f.take_u64("a").unwrap(), Some(1));
        let leftovers = f.finish_all();
        assert_eq!(leftovers.len(), 1);
        assert_eq!(leftovers[0].line, 2);

        let dup = parse_flat("a = 1\na = 2\n").unwrap();
        assert!(Fields::new(dup).is_err());
    }

    #[test]
    fn fields_parses_scientific_notation() {
        let entries = parse_flat("lr = 6.0e-4\ntokens = 171e6\n").unwrap();
        let mut f = Fields::new(entries).unwrap();
        assert_eq!(f.take_f64("lr").unwrap(), Some(6.0e-4));
        assert_eq!(f.take_f64("tokens").unwrap(), Some(171e6));
        f.finish().unwrap();
    }
}
