//! Flat `key = value` text files with `#` comments.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parsed key/value document. Keys are consumed with [`take`](Self::take);
/// [`finish`](Self::finish) rejects anything left over.
#[derive(Debug, Clone)]
pub struct KvDoc {
    source: String,
    entries: Vec<Entry>,
}

impl KvDoc {
    pub fn parse(source: impl Into<String>, text: &str) -> Result<Self> {
        let source = source.into();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(&source, line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(&source, line, "empty key"));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::parse(
                    &source,
                    line,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(KvDoc { source, entries })
    }

    /// Inserts or replaces a value; replaced entries keep their line number.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value.trim().to_string(),
            None => self.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: 0,
            }),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    /// Removes and returns the raw value and its line number.
    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let idx = self.entries.iter().position(|e| e.key == key)?;
        let e = self.entries.remove(idx);
        Some((e.value, e.line))
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(&self.source, line, format!("cannot parse `{v}` for `{key}`"))),
        }
    }

    pub fn require_parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| Error::parse(&self.source, 0, format!("missing key `{key}`")))
    }

    /// Whitespace- or comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => split_list(&v)
                .map(|tok| {
                    tok.parse()
                        .map_err(|_| Error::parse(&self.source, line, format!("cannot parse `{tok}` in `{key}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn require_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        self.take_list(key)?
            .ok_or_else(|| Error::parse(&self.source, 0, format!("missing key `{key}`")))
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some(e) => Err(Error::parse(&self.source, e.line, format!("unknown key `{}`", e.key))),
        }
    }

    pub fn remaining_keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }
}

pub(crate) fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn join_floats(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 12);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{v:?}"));
    }
    out
}
