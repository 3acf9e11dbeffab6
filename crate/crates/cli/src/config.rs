//! Flat TOML run configuration with `key=value` overrides.

use std::path::{Path, PathBuf};

use betdetect::{Error, Result};
use toml::{Table, Value};

pub const KEYS: &[&str] = &[
    "mode",
    "alpha",
    "alphas",
    "epsilon",
    "gamma",
    "time_budget",
    "d",
    "d_policy",
    "prefix_len",
    "d_sequence",
    "violation_policy",
    "seed",
    "preset",
    "hypothesis",
    "file",
    "h0_file",
    "h1_file",
    "pool",
    "pool_b",
    "calibration_mode",
    "shuffles",
    "runs",
    "test",
    "batch_size",
    "n_permutations",
    "correction",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    table: Table,
    /// Directory relative file paths are resolved against.
    base: PathBuf,
}

fn bad(key: &str, expected: &str, got: &Value) -> Error {
    Error::Config(format!("key `{key}`: expected {expected}, got {got}"))
}

/// Parse an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl Settings {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let table = text.parse::<Table>().map_err(|e| {
                    Error::Config(format!("{}: {}", p.display(), e.message()))
                })?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (Table::new(), PathBuf::new()),
        };
        let mut s = Settings { table, base };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
            s.table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        if let Some(k) = s.table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        Ok(s)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(bad(key, "a number", v)),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(bad(key, "a nonnegative integer", v)),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(bad(key, "a nonnegative integer", v)),
        }
    }

    pub fn str(&self, key: &str) -> Result<Option<&str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(bad(key, "a string", v)),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(bad(key, "an array of numbers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(bad(key, "an array of numbers", v)),
        }
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.str(key)?.map(|s| {
            let p = Path::new(s);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                self.base.join(p)
            }
        }))
    }

    /// `"unbounded"` maps to `None`.
    pub fn budget(&self, key: &str) -> Result<Option<Option<usize>>> {
        match self.table.get(key) {
            Some(Value::String(s)) if s == "unbounded" => Ok(Some(None)),
            Some(Value::String(_)) => Err(bad(key, "an integer or \"unbounded\"", &self.table[key])),
            _ => Ok(self.usize(key)?.map(Some)),
        }
    }

    /// Parse a string key into one of `choices`.
    pub fn choice<'a>(&self, key: &str, choices: &[&'a str]) -> Result<Option<&'a str>> {
        match self.str(key)? {
            None => Ok(None),
            Some(s) => choices
                .iter()
                .find(|c| **c == s)
                .copied()
                .map(Some)
                .ok_or_else(|| Error::Config(format!("key `{key}`: expected one of {choices:?}, got \"{s}\""))),
        }
    }
}
