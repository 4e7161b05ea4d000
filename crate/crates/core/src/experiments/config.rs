use crate::error::{Error, Result};
use crate::io::parse_key_values;

/// Flat `key = value` configuration; later entries override earlier ones.
///
/// Keys `experiment` and `version` and keys starting with `meta.` are
/// provenance written by [`super::Report::write`] and are ignored by
/// parameter parsing, so a manifest can be fed back as a config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: Vec<(String, String)>,
}

fn is_provenance(key: &str) -> bool {
    key == "experiment" || key == "version" || key.starts_with("meta.")
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("'{key}' = '{value}' is not {what}"))
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_key_values(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Config { entries })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        self.entries.retain(|(k, _)| *k != key);
        self.entries.push((key, value));
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Fails on any parameter key outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.entries {
            if !is_provenance(k) && !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'; expected one of {}", known.join(", "))));
            }
        }
        Ok(())
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(key, v, "a finite number")),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(key, v, "a nonnegative integer")),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64(key, default as u64)? as usize)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(key, v, "a recognised name")),
        }
    }

    /// Inclusive integer range `lo..hi` (a single integer is allowed).
    pub fn range(&self, key: &str, default: (u32, u32)) -> Result<Vec<u32>> {
        let (lo, hi) = match self.get(key) {
            None => default,
            Some(v) => {
                let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| bad(key, v, "a range lo..hi"));
                match v.split_once("..") {
                    Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
                    None => (parse(v)?, parse(v)?),
                }
            }
        };
        if lo > hi {
            return Err(Error::Config(format!("'{key}' range {lo}..{hi} is empty")));
        }
        Ok((lo..=hi).collect())
    }

    /// Comma-separated numbers.
    pub fn list_f64(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(key, v, "a list of numbers")))
                .collect(),
        }
    }

    /// Comma-separated names.
    pub fn list_parsed<T: std::str::FromStr>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v.split(',').map(|s| s.trim().parse().map_err(|_| bad(key, v, "a list of names"))).collect(),
        }
    }
}

/// `a,b,c` with round-trip float formatting.
pub(crate) fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub(crate) fn join_names<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn range_string(ns: &[u32]) -> String {
    format!("{}..{}", ns[0], ns[ns.len() - 1])
}
