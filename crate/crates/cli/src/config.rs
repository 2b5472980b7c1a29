//! `key = value` run configuration. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

const KNOWN_KEYS: &[&str] = &[
    "ip",
    "control",
    "sizes",
    "kernel",
    "table",
    "shift",
    "chrom",
    "out",
    "q",
    "seed",
    "genome-length",
    "window-small",
    "window-large",
    "n-lambda",
    "n-u",
    "margin",
    "min-sim-length",
    "min-sim-maxima",
    "lambda-min",
    "lambda-max",
    "tentative-shift",
    "prelim-sigma",
    "n-peaks",
    "profile-window",
    "kernel-width",
    "knot-spacing",
    "empirical-null",
    "diagnostics-points",
    "length",
    "n-spikes",
    "snr",
    "replicates",
    "template",
    "template-chrom",
    "area-scale",
    "peaks",
    "null-peaks",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in config file {}", path.display()))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {:?}", i + 1, k.trim());
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Config {
            values,
            base: PathBuf::new(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: cannot parse {v:?}: {e}")),
        }
    }

    /// Paths are relative to the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|v| self.base.join(v))
    }

    /// Flag, then config value, then default.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }

    pub fn pick_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.path(key))
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.pick_path(flag, key)
            .ok_or_else(|| anyhow!("missing required --{key} (flag or config key)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let c = Config::parse("# run\nq = 0.05\nseed=9\nn_lambda = 50 # trailing\n").unwrap();
        assert_eq!(c.pick(None, "q", 0.01).unwrap(), 0.05);
        assert_eq!(c.pick(Some(0.2), "q", 0.01).unwrap(), 0.2);
        assert_eq!(c.pick::<u64>(None, "seed", 1).unwrap(), 9);
        assert_eq!(c.pick::<usize>(None, "n-lambda", 300).unwrap(), 50);
        assert_eq!(c.pick::<usize>(None, "n-u", 200).unwrap(), 200);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("q 0.1").is_err());
        assert!(Config::parse("colour = red").is_err());
        let c = Config::parse("q = lots").unwrap();
        assert!(c.pick::<f64>(None, "q", 0.1).is_err());
    }
}
