//! Flat `key = value` text with optional `[section]` headers.
//!
//! Used for run configurations and the checkpoint config block. Keys inside
//! a section are addressed as `section.key`.

use std::fmt::Write as _;

use crate::error::{MsnnError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let Some(name) = inner.strip_suffix(']') else {
                    return Err(MsnnError::Format(format!("line {}: unterminated section header", lineno + 1)));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(MsnnError::Format(format!("line {}: expected key = value", lineno + 1)));
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            doc.set(key, v.trim());
        }
        Ok(doc)
    }

    /// Inserts or replaces a key, keeping first-insertion order.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn merge(&mut self, other: &KvDoc) {
        for (k, v) in &other.entries {
            self.set(k.clone(), v);
        }
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| MsnnError::Config(format!("cannot parse {key} = {v:?}"))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_list(v)
                .map(Some)
                .ok_or_else(|| MsnnError::Config(format!("cannot parse list {key} = {v:?}"))),
        }
    }

    /// Renders sections in order of first appearance; keys without a dot go
    /// first with no header.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut sections: Vec<&str> = Vec::new();
        for (k, v) in &self.entries {
            if !k.contains('.') {
                let _ = writeln!(out, "{k} = {v}");
            } else {
                let s = k.split_once('.').unwrap().0;
                if !sections.contains(&s) {
                    sections.push(s);
                }
            }
        }
        for s in sections {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{s}]");
            for (k, v) in &self.entries {
                if let Some((ks, rest)) = k.split_once('.') {
                    if ks == s {
                        let _ = writeln!(out, "{rest} = {v}");
                    }
                }
            }
        }
        out
    }
}

pub fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

pub fn render_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
