//! Run configuration: defaults, then a `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// A configuration problem; reported with exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// Keys accepted in files and flags.
pub const KEYS: &[&str] = &[
    "L", "lambda", "lambda_arg", "T", "N", "alpha", "beta", "beta_arg", "beta0", "steps", "seed", "n_paths", "b_beta",
    "rel_tol", "out",
];

pub fn defaults() -> BTreeMap<String, String> {
    [
        ("L", "2"),
        ("lambda", "0.02"),
        ("lambda_arg", "0"),
        ("T", "4,16,64"),
        ("N", "0,1,2,3"),
        ("alpha", "1"),
        ("beta", "0.1,1,10"),
        ("beta_arg", "0"),
        ("steps", "60"),
        ("seed", "1"),
        ("n_paths", "100000"),
        ("b_beta", "1.9634954084936207"),
        ("rel_tol", "1e-8"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn check_key(key: &str) -> ConfigResult<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError(format!("unknown key '{key}'")))
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k)?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Merged parameters with typed accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// `flags` override `file`, which overrides the defaults.
    pub fn merge(file: Option<&Path>, flags: BTreeMap<String, String>) -> ConfigResult<Self> {
        let mut values = defaults();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            values.extend(parse_file(&text)?);
        }
        for k in flags.keys() {
            check_key(k)?;
        }
        values.extend(flags);
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> ConfigResult<&str> {
        self.raw(key).ok_or_else(|| ConfigError(format!("missing parameter '{key}'")))
    }

    pub fn f64(&self, key: &str) -> ConfigResult<f64> {
        parse_f64(key, self.required(key)?)
    }

    pub fn f64_list(&self, key: &str) -> ConfigResult<Vec<f64>> {
        self.required(key)?.split(',').map(|s| parse_f64(key, s.trim())).collect()
    }

    pub fn u64(&self, key: &str) -> ConfigResult<u64> {
        let s = self.required(key)?;
        s.parse().map_err(|_| ConfigError(format!("'{key}' must be a nonnegative integer, got '{s}'")))
    }

    pub fn u32_list(&self, key: &str) -> ConfigResult<Vec<u32>> {
        self.required(key)?
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse().map_err(|_| ConfigError(format!("'{key}' entries must be nonnegative integers, got '{s}'")))
            })
            .collect()
    }
}

fn parse_f64(key: &str, s: &str) -> ConfigResult<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ConfigError(format!("'{key}' must be a finite number, got '{s}'"))),
    }
}
