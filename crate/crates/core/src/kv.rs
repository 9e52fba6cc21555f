//! `key=value` line files. Blank lines and `#` comments are skipped.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    path: String,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(path, i + 1, format!("expected key=value, got {line:?}")));
            };
            let k = k.trim().to_string();
            if entries.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate key {k:?}")));
            }
        }
        Ok(KeyValues {
            entries,
            path: path.display().to_string(),
        })
    }

    /// Fails on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "{}:{line}: unknown key {k:?} (allowed: {})",
                    self.path,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}:{line}: bad value {v:?} for {key}", self.path))),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(Error::Config(format!("{}:{line}: bad boolean {v:?} for {key}", self.path))),
            },
        }
    }
}
