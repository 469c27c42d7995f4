//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are trimmed and
//! lower-cased; values are trimmed. Later occurrences of a key override
//! earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, (u64, String)>,
}

impl KeyValues {
    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(source, line_no, format!("expected `key = value`, found `{line}`")));
            };
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::parse(source, line_no, "empty key"));
            }
            entries.insert(key, (line_no, v.trim().to_string()));
        }
        Ok(KeyValues {
            source: source.to_string(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_ascii_lowercase(), (0, value.into()));
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parse the value at `key`, or `None` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::parse(&self.source, *line, format!("invalid value for `{key}`: {e}"))),
        }
    }

    /// Parse the value at `key`, falling back to `default` (and logging that
    /// the default was used) when the key is absent.
    pub fn get_or<T: FromStr + std::fmt::Debug>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                log::info!("config key `{key}` not set; using default {default:?}");
                Ok(default)
            }
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("t", "# c\nstep_size = 0.1\n\nMODE=batch\nstep_size=0.2\n").unwrap();
        assert_eq!(kv.get::<f64>("step_size").unwrap(), Some(0.2));
        assert_eq!(kv.get_str("mode"), Some("batch"));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
        assert_eq!(kv.get_or("epochs", 1000usize).unwrap(), 1000);
    }

    #[test]
    fn reports_line_of_bad_value() {
        let kv = KeyValues::parse("cfg", "a=1\nepochs = ten\n").unwrap();
        match kv.get::<usize>("epochs") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(KeyValues::parse("cfg", "no equals sign").is_err());
    }
}
