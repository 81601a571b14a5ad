//! Run manifests: the resolved configuration plus provenance of one run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub module_versions: BTreeMap<String, String>,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    /// Per-stage wall-clock, kept out of the CSV outputs so those stay reproducible.
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &crate::config::Config, seed: u64, threads: Option<usize>) -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let mut module_versions = BTreeMap::new();
        module_versions.insert("risk-pde".to_string(), risk_pde::VERSION.to_string());
        module_versions.insert("risk-pde-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        RunManifest {
            tool: "risk-pde".to_string(),
            command: command.to_string(),
            config: config.values().clone(),
            seed,
            module_versions,
            parallel: risk_pde::par::is_parallel(),
            threads,
            started_unix,
            wall_clock_seconds: 0.0,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckRecord {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
