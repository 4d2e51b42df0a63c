//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Later keys override
//! earlier ones.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    origin: PathBuf,
}

impl KeyValues {
    pub fn parse(text: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.clone(),
                msg: format!("line {}: expected key=value, got `{line}`", lineno + 1),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    path: origin,
                    msg: format!("line {}: empty key", lineno + 1),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(KeyValues { entries, origin })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn from_pairs<K: Display, V: Display>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        KeyValues {
            entries: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            origin: PathBuf::from("<memory>"),
        }
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
                path: self.origin.clone(),
                msg: format!("cannot parse value `{v}` for key `{key}`"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Parse {
            path: self.origin.clone(),
            msg: format!("missing key `{key}`"),
        })
    }

    /// Overwrites `slot` when `key` is present.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("# c\na = 1\n\nb=2.5\na=3\n", "x").unwrap();
        assert_eq!(kv.require::<u32>("a").unwrap(), 3);
        assert_eq!(kv.get::<f64>("b").unwrap(), Some(2.5));
        assert_eq!(kv.get::<f64>("c").unwrap(), None);
        assert!(kv.require::<f64>("c").is_err());
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(KeyValues::parse("oops\n", "x").is_err());
        assert!(KeyValues::parse("=1\n", "x").is_err());
        let kv = KeyValues::parse("a=x\n", "x").unwrap();
        assert!(kv.get::<u32>("a").is_err());
    }
}
