//! Flat `key = value` configuration with line-precise errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "PILEUP_CONFIG";

pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "output",
    "seed",
    "log",
    // simulation
    "lambda",
    "model",
    "service",
    "service_rate",
    "service_value",
    "service_shape",
    "service_scale",
    "service_low",
    "service_high",
    "energy_table",
    "n_cycles",
    "duration",
    // estimator
    "c",
    "x",
    "h",
    "omega_max",
    "omega_points",
    "kernel",
    "kernel_a",
    "y_min",
    "y_max",
    "y_count",
    "denominator_floor",
    "project_density",
    // mise
    "axis",
    "values",
    "replicates",
    // validate
    "checks",
    "z_max",
    "identity_s",
    "identity_p",
    "identity_n",
    "identity_tolerance",
    // decompose
    "n_reference",
];

pub const PRESETS: &[(&str, &str)] = &[
    ("table1-n", include_str!("../../presets/table1-n.conf")),
    ("table1-c", include_str!("../../presets/table1-c.conf")),
    ("table1-x", include_str!("../../presets/table1-x.conf")),
    ("cs137", include_str!("../../presets/cs137.conf")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("unknown preset '{name}', available: {}", names.join(", ")))
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    origin: String,
    line: usize,
}

/// Ordered key/value store remembering where each value came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, Entry>,
}

impl ConfigMap {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::ConfigLine { origin: origin.to_string(), line, message };
            let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("empty value for `{key}`")));
            }
            if map.entries.contains_key(key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            map.entries.insert(key.to_string(), Entry { value: value.to_string(), origin: origin.to_string(), line });
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Later layers win.
    pub fn merge(&mut self, other: ConfigMap) {
        self.entries.extend(other.entries);
    }

    /// Applies a `key=value` override from the command line.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let layer = Self::parse(assignment, "--set")?;
        if layer.entries.is_empty() {
            return Err(Error::Config(format!("empty --set assignment `{assignment}`")));
        }
        self.merge(layer);
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: String, origin: &str) {
        self.entries.insert(key.to_string(), Entry { value, origin: origin.to_string(), line: 0 });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn invalid(&self, key: &str, message: String) -> Error {
        let e = &self.entries[key];
        if e.line == 0 {
            Error::Config(format!("{key}: {message}"))
        } else {
            Error::ConfigLine { origin: e.origin.clone(), line: e.line, message: format!("{key}: {message}") }
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.invalid(key, format!("cannot parse `{}`", e.value))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get_str(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(other) => Err(self.invalid(key, format!("expected true/false, got `{other}`"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| item.trim().parse::<T>().map_err(|_| self.invalid(key, format!("cannot parse list item `{}`", item.trim()))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get_str(key).map(PathBuf::from)
    }

    /// Effective configuration, sorted by key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }

    /// SHA-256 of the echoed `key=value` lines. File paths are left out; the
    /// input is hashed by content in the metadata.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.echo().into_iter().filter(|(k, _)| k != "input" && k != "output") {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
