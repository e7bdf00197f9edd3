//! Run configuration files: plain `key=value` lines with dotted sections.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! workers = 4
//! degrade.apply_prob = 0.5
//! degrade.weights.snow = 0.16
//! degrade.blur.sigma = 0.5,3.5
//! ```

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::degrade::config::{ConfigError, DegradeConfig};

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {source}")]
    Key {
        line: usize,
        #[source]
        source: ConfigError,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub degrade: DegradeConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, RunConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| RunConfigError::Syntax {
                line,
                text: body.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(RunConfigError::Syntax {
                    line,
                    text: body.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(RunConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value).map_err(|source| RunConfigError::Key { line, source })?;
        }
        cfg.degrade.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        match key {
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("not an unsigned integer"))?),
            "workers" => {
                let n: usize = value.parse().map_err(|_| bad("not an unsigned integer"))?;
                if n == 0 {
                    return Err(bad("must be at least 1"));
                }
                self.workers = Some(n);
            }
            _ => match key.strip_prefix("degrade.") {
                Some(rest) => self.degrade.set(rest, value)?,
                None => return Err(ConfigError::UnknownKey(key.to_string())),
            },
        }
        Ok(())
    }

    /// Canonical listing of the effective degradation settings.
    pub fn degrade_entries(&self) -> Vec<(String, String)> {
        self.degrade
            .entries()
            .into_iter()
            .map(|(k, v)| (format!("degrade.{k}"), v))
            .collect()
    }
}

/// Hex SHA-256 of `key=value` lines in the given order.
pub fn config_hash(entries: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in entries {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::config::Range;

    #[test]
    fn parses_sections() {
        let cfg = RunConfig::parse(
            "# run\nseed = 7\n\nworkers=2\ndegrade.apply_prob = 0.25\ndegrade.blur.sigma = 1,2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.workers, Some(2));
        assert_eq!(cfg.degrade.apply_prob, 0.25);
        assert_eq!(cfg.degrade.blur.sigma, Range::new(1.0, 2.0));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let err = RunConfig::parse("degrade.colour = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(err.to_string().contains("degrade.colour") || err.to_string().contains("colour"));
        assert!(RunConfig::parse("speed = 3\n").is_err());
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("seed = -1\n").is_err());
        assert!(RunConfig::parse("workers = 0\n").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(matches!(
            RunConfig::parse("degrade.apply_prob = 1.5\n"),
            Err(RunConfigError::Invalid(_))
        ));
        assert!(RunConfig::parse("degrade.blur.motion_prob = -0.1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default().degrade_entries();
        assert_eq!(config_hash(&a), config_hash(&a));
        assert_eq!(config_hash(&a).len(), 64);
        let mut b = RunConfig::default();
        b.degrade.apply_prob = 0.4;
        assert_ne!(config_hash(&a), config_hash(&b.degrade_entries()));
    }
}
