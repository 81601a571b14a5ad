//! Layered run configuration: built-in defaults, then a file, then flags.
//!
//! Files are flat `key = value` text. Keys are dotted (`grid.steps`); a
//! `[grid]` header prefixes the keys below it. `#` and `;` start comments.
//! A JSON run manifest is accepted in place of a file and contributes its
//! recorded configuration. Unknown keys are hard errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{source_name}: unknown key '{key}'")]
    UnknownKey { key: String, source_name: String },
    #[error("{key} = '{value}': expected {expected}")]
    BadValue { key: String, value: String, expected: String },
    #[error("missing key '{key}': {reason}")]
    Missing { key: String, reason: String },
    #[error("{source_name}:{line}: cannot parse '{text}' (expected key = value)")]
    Syntax { source_name: String, line: usize, text: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// `(key, default, expected domain)`; an empty default means "unset".
const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "an unsigned integer"),
    ("model.kind", "brownian", "one of brownian, ou, gbm, constant, sign, vol_table"),
    ("model.horizon", "1", "a positive number"),
    ("model.mu", "0", "a number"),
    ("model.sigma", "1", "a number"),
    ("model.kappa", "1", "a number"),
    ("model.mean", "0", "a number"),
    ("model.payoff", "tanh", "one of identity, tanh, sin, clip01, positive_part, constant:<c>"),
    ("model.running", "0", "a number (constant running reward g)"),
    ("model.y0", "", "a number"),
    ("model.center", "0", "a number"),
    ("model.vol_table", "", "a path to a t,y,sigma CSV"),
    ("loss.kind", "entropic", "one of entropic, cvar, mmv"),
    ("loss.alpha", "", "a level in (0, 1)"),
    ("grid.steps", "400", "a positive integer"),
    ("grid.y_nodes", "121", "an integer >= 3"),
    ("grid.z_nodes", "81", "an integer >= 3"),
    ("grid.y_lo", "", "a number"),
    ("grid.y_hi", "", "a number"),
    ("grid.z_lo", "", "a nonnegative number"),
    ("grid.z_hi", "", "a positive number"),
    ("grid.n_schedule", "1,2,4,8", "a comma-separated increasing list of positive numbers"),
    ("grid.cfl_safety", "1", "a number in (0, 1]"),
    ("grid.tol_n", "1e-4", "a nonnegative number"),
    ("grid.stencil_reach", "3", "a positive integer"),
    ("grid.tol_conc", "1e-8", "a nonnegative number"),
    ("grid.store_argmax", "false", "true or false"),
    ("boundary.kind", "mc", "one of mc, degenerate, closed_form"),
    ("boundary.paths", "4000", "a positive integer"),
    ("boundary.time_stride", "20", "a positive integer"),
    ("boundary.steps_per_unit", "50", "a positive number"),
    ("mc.paths", "100000", "a positive integer"),
    ("mc.steps", "100", "a positive integer"),
    ("mc.record_paths", "0", "a nonnegative integer (paths written to paths.csv)"),
    ("query.s", "0", "a time in [0, T)"),
    ("query.y", "", "a comma-separated list of numbers"),
    ("query.z", "1", "a comma-separated list of positive numbers"),
    ("oracle.which", "entropic", "one of entropic, mmv, cvar, dpp"),
    ("oracle.method", "pde", "one of pde, mc"),
    ("oracle.steps", "2000", "a positive integer"),
    ("oracle.nodes", "1601", "an integer >= 3"),
    ("oracle.half_width", "10", "a positive number"),
    ("oracle.theta", "", "a time in (s, T)"),
    ("oracle.controls", "20", "a positive integer"),
    ("oracle.control_pieces", "4", "a positive integer"),
    ("oracle.control_cap", "1", "a positive number"),
    ("oracle.outer_paths", "10000", "a positive integer"),
    ("oracle.inner_paths", "2000", "a positive integer"),
    ("oracle.dpp_steps", "50", "a positive integer"),
    ("bass.law", "uniform", "one of gaussian, uniform, two-point, constant, table:<file>"),
    ("bass.params", "", "a comma-separated list of law parameters"),
    ("bass.quad_order", "64", "a positive integer"),
    ("bass.table_size", "201", "an integer >= 3"),
    ("bass.paths", "100000", "a positive integer"),
    ("bass.steps", "200", "a positive integer"),
    ("bass.unit_vol", "false", "true or false"),
    ("compare.tol", "2e-2", "a nonnegative number"),
    ("compare.sigmas", "3", "a positive number"),
    ("output.dir", "out", "a directory path"),
    ("output.times", "0", "a comma-separated list of times"),
];

/// Every known key with its resolved value.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn expected(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _, _)| *k == key).map_or("a known value", |(_, _, e)| e)
}

impl Config {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: &str, source_name: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey {
                key: key.to_string(),
                source_name: source_name.to_string(),
            }),
        }
    }

    /// Applies `key = value` text.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = inner.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                source_name: source_name.to_string(),
                line: n + 1,
                text: raw.to_string(),
            })?;
            let k = k.trim();
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            self.set(&key, v, source_name)?;
        }
        Ok(())
    }

    /// Applies a config file, or the configuration recorded in a JSON manifest.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: crate::manifest::RunManifest = serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
                source_name: name.clone(),
                line: e.line(),
                text: e.to_string(),
            })?;
            for (k, v) in &manifest.config {
                self.set(k, v, &name)?;
            }
            return Ok(());
        }
        self.apply_text(&text, &name)
    }

    /// Applies `key=value` flags.
    pub fn apply_flags<S: AsRef<str>>(&mut self, flags: &[S]) -> Result<(), ConfigError> {
        for f in flags {
            let f = f.as_ref();
            let (k, v) = f.split_once('=').ok_or_else(|| ConfigError::Syntax {
                source_name: "--set".to_string(),
                line: 0,
                text: f.to_string(),
            })?;
            self.set(k.trim(), v, "--set")?;
        }
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn bad(&self, key: &str) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            value: self.raw(key).to_string(),
            expected: expected(key).to_string(),
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.raw(key).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad(key))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.is_set(key) {
            self.f64(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key).ok().filter(|v| *v > 0.0).ok_or_else(|| self.bad(key))
    }

    pub fn nonneg(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key).ok().filter(|v| *v >= 0.0).ok_or_else(|| self.bad(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.raw(key).parse::<usize>().map_err(|_| self.bad(key))
    }

    pub fn count(&self, key: &str, min: usize) -> Result<usize, ConfigError> {
        self.usize(key).ok().filter(|v| *v >= min).ok_or_else(|| self.bad(key))
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.raw(key).parse::<u64>().map_err(|_| self.bad(key))
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(self.bad(key)),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        if !self.is_set(key) {
            return Ok(Vec::new());
        }
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| self.bad(key))
    }

    /// A list that must be nonempty and strictly increasing.
    pub fn ascending(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.list(key)?;
        if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(self.bad(key));
        }
        Ok(v)
    }

    pub fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<&'a str, ConfigError> {
        let v = self.raw(key);
        options.iter().find(|o| **o == v).copied().ok_or_else(|| self.bad(key))
    }

    /// Error for a key that is required by another key's value.
    pub fn require(&self, key: &str, reason: &str) -> Result<(), ConfigError> {
        if self.is_set(key) {
            Ok(())
        } else {
            Err(ConfigError::Missing {
                key: key.to_string(),
                reason: reason.to_string(),
            })
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
