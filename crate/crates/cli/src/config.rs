//! Flat `key = value` configuration with `[section]` headers.
//!
//! Grammar (diff-friendly by construction):
//!
//! ```text
//! # comment
//! [section]
//! key = value          # scalars: string, f64, usize, bool
//! list = 1, 2, 3       # arrays: comma-separated
//! ```
//!
//! Keys are looked up as `section.key`. One experiment per file; a batch
//! is a list of files.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    path: String,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    bail!("{origin}:{}: malformed section header", lineno + 1);
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{origin}:{}: expected `key = value`", lineno + 1);
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            values.insert(full, value.trim().to_string());
        }
        Ok(Config {
            values,
            path: origin.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn origin(&self) -> &str {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .with_context(|| format!("{}: missing key `{key}`", self.path))
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("{}: key `{key}` is not a number: {s}", self.path)),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("{}: key `{key}` is not an integer: {s}", self.path)),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("{}: key `{key}` is not an integer: {s}", self.path)),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let Some(s) = self.get(key) else {
            return Ok(Vec::new());
        };
        s.split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .with_context(|| format!("{}: bad number `{item}` in `{key}`", self.path))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_scalars_and_lists() {
        let cfg = Config::parse(
            "# header comment\n\
             [experiment]\n\
             kind = tv-dirichlet   # trailing comment\n\
             seed = 17\n\
             [solver]\n\
             tau = 2.5e-4\n\
             levels = 1, 2, 4\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.get("experiment.kind"), Some("tv-dirichlet"));
        assert_eq!(cfg.u64_or("experiment.seed", 0).unwrap(), 17);
        assert_eq!(cfg.f64_or("solver.tau", 0.0).unwrap(), 2.5e-4);
        assert_eq!(cfg.f64_list("solver.levels").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(cfg.get("solver.missing").is_none());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("[oops\n", "t").is_err());
        assert!(Config::parse("novalue\n", "t").is_err());
    }
}
