//! Layered settings: command-line flag, then `NKF_*` environment variable,
//! then a line-based `key = value` config file, then the built-in default.
//!
//! Flags and environment variables are both resolved by clap, so by the time
//! a value reaches [`Settings::pick`] it is either explicit or absent; the
//! config file fills the gaps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Keys a config file may set. Each matches the long flag of the same name.
pub const KNOWN_KEYS: &[&str] = &[
    "method",
    "weights",
    "seed",
    "subset",
    "out",
    "threads",
    "precision",
    "taps",
    "count",
    "duration",
    "corpus",
    "rir-len",
    "metrics",
    "manifest",
    "methods",
    "preset",
    "lr",
    "epochs",
    "batch-size",
    "clips",
    "bins",
    "optimizer",
    "clip-norm",
    "output-init-scale",
    "checkpoint-dir",
    "loss-csv",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl Settings {
    pub fn load(path: &Path) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut settings = Settings::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        settings.source = Some(path.to_path_buf());
        Ok(settings)
    }

    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped; keys may use `-` or `_`.
    pub fn parse(text: &str) -> CliResult<Settings> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!("line {}: expected `key = value`", i + 1)));
            };
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!("line {}: unknown key {key:?}", i + 1)));
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(Settings { values, source: None })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `explicit` if given, else the file value for `key` parsed as `T`.
    pub fn lookup<T: FromStr>(&self, explicit: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if explicit.is_some() {
            return Ok(explicit);
        }
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                let origin = self
                    .source
                    .as_ref()
                    .map_or_else(|| "config".to_owned(), |p| p.display().to_string());
                CliError::config(format!("{origin}: bad value {raw:?} for {key}: {e}"))
            }),
        }
    }

    /// Like [`Settings::lookup`] with a fallback default.
    pub fn pick<T: FromStr>(&self, explicit: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.lookup(explicit, key)?.unwrap_or(default))
    }

    /// Like [`Settings::lookup`] for a value without a default.
    pub fn require<T: FromStr>(&self, explicit: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.lookup(explicit, key)?
            .ok_or_else(|| CliError::config(format!("missing required setting --{key}")))
    }
}
