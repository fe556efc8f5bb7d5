//! Layered run configuration: defaults < config file < command-line flags.
//!
//! The config file is plain text with one `key=value` pair per line; `#`
//! starts a comment and blank lines are ignored. Every key mirrors the long
//! flag of the same name, so a value given on the command line always wins
//! over the file.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Parsed contents of a `key=value` config file. An empty map when no file
/// was given.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("failed to read config file {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config file {}", p.display()))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key=value, found `{line}`", idx + 1);
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", idx + 1);
            }
            if values.insert(key.clone(), value).is_some() {
                bail!("line {}: duplicate key `{key}`", idx + 1);
            }
        }
        Ok(FileConfig { values })
    }

    /// Typed lookup; `Ok(None)` when the key is absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key `{key}`: bad value `{raw}`: {e}"),
            },
        }
    }

    /// Resolve one setting: the flag wins, then the file, then the default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Like `resolve` but with no default: `Ok(None)` when neither the flag
    /// nor the file provides the setting.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
    }
}

/// Deterministic `key=value` echo of a resolved configuration, embedded as a
/// comment at the top of every output file.
pub fn echo(command: &str, pairs: &[(&str, String)]) -> String {
    let mut parts = vec![format!("command={command}")];
    for (key, value) in pairs {
        parts.push(format!("{key}={value}"));
    }
    parts.join(" ")
}
