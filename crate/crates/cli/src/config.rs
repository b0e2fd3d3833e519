//! Flat key = value configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment, keys match the CLI
//! long-flag names without the leading dashes. Command-line flags override
//! file values; built-in defaults fill the rest.

use anyhow::{bail, Context, Result};
use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "config line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// CLI value if given, else the config-file value, else the default.
    pub fn resolve<T>(&self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key {key} = {raw:?}: {e}")),
            None => Ok(default),
        }
    }

    /// Same as [`resolve`](Self::resolve) but without a default.
    pub fn resolve_required<T>(&self, key: &str, cli: Option<T>) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key {key} = {raw:?}: {e}")),
            None => bail!("missing required option --{key} (flag or config key)"),
        }
    }
}

/// Comma-separated float list, e.g. `0.0,0.5,1.0`.
pub fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .with_context(|| format!("bad float {tok:?} in list {raw:?}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_with_precedence() {
        let cfg = FileConfig::parse("epochs = 20\n# comment\nalpha = 0.5  # trailing\n").unwrap();
        assert_eq!(cfg.resolve::<usize>("epochs", None, 5).unwrap(), 20);
        assert_eq!(cfg.resolve::<usize>("epochs", Some(7), 5).unwrap(), 7);
        assert_eq!(cfg.resolve::<f64>("alpha", None, 1.0).unwrap(), 0.5);
        assert_eq!(cfg.resolve::<f64>("missing", None, 1.0).unwrap(), 1.0);
        assert!(cfg.resolve_required::<f64>("missing", None).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(FileConfig::parse("just a line\n").is_err());
    }

    #[test]
    fn float_lists() {
        assert_eq!(parse_f64_list("0.0, 0.5,1.0").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_f64_list("0.0,x").is_err());
    }
}
