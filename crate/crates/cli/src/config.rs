//! Flat `key = value` run configuration and setting resolution.
//!
//! Every setting resolves as command-line flag, then config-file value, then
//! built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    // shared
    "input",
    "model",
    "out_dir",
    "grid_minutes",
    "level",
    "plot",
    "seed",
    "group",
    // model
    "transform",
    "criterion",
    "knots",
    "factors",
    "random_intercept",
    "tune_weights",
    "aggregation",
    // schema
    "subject_column",
    "day_column",
    "minute_column",
    "vm_column",
    "factor_columns",
    "time_format",
    "strict_schema",
    // simulation
    "scenario",
    "subjects_per_group",
    "minutes_per_day",
    "days",
    "sigma_b",
    "sigma_eps",
    "intercept",
    "height",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::domain(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::domain(format!(
                    "config line {}: unknown key \"{key}\"",
                    i + 1
                )));
            }
            if values.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(CliError::domain(format!(
                    "config line {}: duplicate key \"{key}\"",
                    i + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Resolves settings against one config file.
pub struct Resolver {
    config: ConfigFile,
}

impl Resolver {
    pub fn new(path: Option<&Path>) -> Result<Self, CliError> {
        let config = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(Self { config })
    }

    #[cfg(test)]
    pub fn from_config(config: ConfigFile) -> Self {
        Self { config }
    }

    /// Flag value, else the parsed config value, else `None`.
    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.config.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::domain(format!("config key {key}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(flag.or_else(|| self.config.get(key).map(PathBuf::from)))
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)?.ok_or_else(|| {
            CliError::domain(format!(
                "missing --{} (or \"{key}\" in the config file)",
                key.replace('_', "-")
            ))
        })
    }

    /// Comma-separated list; an empty value means an empty list.
    pub fn list(&self, flag: Option<String>, key: &str, default: &[&str]) -> Vec<String> {
        match flag.or_else(|| self.config.get(key).map(str::to_owned)) {
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
            None => default.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}
