//! Flat `key = value` configuration text.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Values
//! are taken verbatim (trimmed); no quoting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (u64, String)>,
}

impl KeyValues {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx as u64 + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    path,
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    path,
                    line,
                    message: "empty key or value".into(),
                });
            }
            if entries
                .insert(key.to_string(), (line, value.to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    path,
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key).ok_or_else(|| Error::MissingKey {
            path: self.path.clone(),
            key: key.to_string(),
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        let Some((line, raw)) = self.entries.get(key) else {
            return Ok(None);
        };
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line: *line,
            message: format!("`{key}` is not a number: `{raw}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: *line,
                message: format!("`{key}` must be finite"),
            });
        }
        Ok(Some(value))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| Error::MissingKey {
            path: self.path.clone(),
            key: key.to_string(),
        })
    }

    /// Reject keys outside `allowed`, reporting the first offender.
    pub fn deny_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let kv = KeyValues::parse("c.txt", "# header\na = 1.5\n\nb=hello # trailing\n").unwrap();
        assert_eq!(kv.require_f64("a").unwrap(), 1.5);
        assert_eq!(kv.require_str("b").unwrap(), "hello");
        assert!(!kv.contains("c"));
    }

    #[test]
    fn missing_key_is_named() {
        let kv = KeyValues::parse("c.txt", "a = 1\n").unwrap();
        let err = kv.require_f64("u_max").unwrap_err();
        assert!(err.to_string().contains("u_max"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KeyValues::parse("c.txt", "a = 1\nnot a pair\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_keys_rejected() {
        assert!(KeyValues::parse("c.txt", "a = 1\na = 2\n").is_err());
        let kv = KeyValues::parse("c.txt", "a = 1\nzz = 2\n").unwrap();
        assert!(kv.deny_unknown(&["a"]).is_err());
    }
}
