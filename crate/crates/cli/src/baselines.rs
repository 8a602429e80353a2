//! Regression baselines: measured values with relative tolerances, kept in
//! a checked-in JSON file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../baselines.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub value: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub entries: BTreeMap<String, Baseline>,
}

/// One comparison of a measured value against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineCheck {
    pub key: String,
    pub measured: f64,
    pub baseline: Option<f64>,
    pub rel_tol: Option<f64>,
    /// None when the file has no entry for the key.
    pub pass: Option<bool>,
}

/// Tolerance given to values recorded without a previous entry.
pub const DEFAULT_REL_TOL: f64 = 0.05;

impl Baselines {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("built-in baselines are valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    }

    pub fn check(&self, key: &str, measured: f64) -> BaselineCheck {
        match self.entries.get(key) {
            Some(b) => BaselineCheck {
                key: key.to_string(),
                measured,
                baseline: Some(b.value),
                rel_tol: Some(b.rel_tol),
                pass: Some((measured - b.value).abs() <= b.rel_tol * b.value.abs()),
            },
            None => BaselineCheck {
                key: key.to_string(),
                measured,
                baseline: None,
                rel_tol: None,
                pass: None,
            },
        }
    }

    /// New baselines from measured values, keeping existing tolerances.
    pub fn record(&self, checks: &[BaselineCheck]) -> Self {
        let entries = checks
            .iter()
            .map(|c| {
                let rel_tol = self.entries.get(&c.key).map_or(DEFAULT_REL_TOL, |b| b.rel_tol);
                (c.key.clone(), Baseline { value: c.measured, rel_tol })
            })
            .collect();
        Self { entries }
    }
}
