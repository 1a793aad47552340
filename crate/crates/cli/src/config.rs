//! Experiment configuration: a TOML document with top-level run settings
//! and a flat `[model]` table of parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub n_trajectories: Option<u64>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub model: BTreeMap<String, toml::Value>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<Violation>> {
        toml::from_str(text).map_err(|e| vec![Violation::new("config-parse", e.to_string())])
    }
}

/// A named precondition failure, reported before any computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub name: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl Violation {
    pub fn new(name: &str, message: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            message: message.into(),
            value: None,
            bound: None,
        }
    }

    pub fn with_bound(mut self, value: f64, bound: f64) -> Self {
        self.value = Some(value);
        self.bound = Some(bound);
        self
    }
}

impl From<collapse_core::Error> for Violation {
    fn from(e: collapse_core::Error) -> Self {
        use collapse_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Stability { dt, bound } => Violation::new("pde-stability", msg).with_bound(dt, bound),
            E::Resolution { width, bound } => Violation::new("smear-resolution", msg).with_bound(width, bound),
            E::TooLarge { sites, limit } => Violation::new("dense-limit", msg).with_bound(sites as f64, limit as f64),
            E::InvalidParameter { .. } => Violation::new("invalid-parameter", msg),
            _ => Violation::new("model-precondition", msg),
        }
    }
}

/// Typed access to the `[model]` table. Every lookup records the value in
/// effect (explicit or default); keys never looked up are rejected.
#[derive(Debug)]
pub struct Params {
    raw: BTreeMap<String, toml::Value>,
    used: BTreeSet<String>,
    effective: BTreeMap<String, Json>,
    violations: Vec<Violation>,
}

impl Params {
    pub fn new(raw: BTreeMap<String, toml::Value>) -> Self {
        Self {
            raw,
            used: BTreeSet::new(),
            effective: BTreeMap::new(),
            violations: Vec::new(),
        }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.used.insert(key.to_string());
        self.raw.get(key).cloned()
    }

    fn bad_type(&mut self, key: &str, want: &str) {
        self.violations.push(Violation::new("invalid-type", format!("model.{key} must be {want}")));
    }

    fn number(v: &toml::Value) -> Option<f64> {
        match v {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn f64(&mut self, key: &str, default: f64) -> f64 {
        let v = match self.take(key) {
            None => default,
            Some(v) => match Self::number(&v) {
                Some(x) => x,
                None => {
                    self.bad_type(key, "a number");
                    default
                }
            },
        };
        self.effective.insert(key.to_string(), Json::from(v));
        v
    }

    pub fn usize(&mut self, key: &str, default: usize) -> usize {
        let v = match self.take(key) {
            None => default,
            Some(toml::Value::Integer(i)) if i >= 0 => i as usize,
            Some(_) => {
                self.bad_type(key, "a non-negative integer");
                default
            }
        };
        self.effective.insert(key.to_string(), Json::from(v));
        v
    }

    pub fn vec(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        let v = match self.take(key) {
            None => default.to_vec(),
            Some(toml::Value::Array(items)) => match items.iter().map(Self::number).collect::<Option<Vec<f64>>>() {
                Some(v) => v,
                None => {
                    self.bad_type(key, "an array of numbers");
                    default.to_vec()
                }
            },
            Some(_) => {
                self.bad_type(key, "an array of numbers");
                default.to_vec()
            }
        };
        self.effective.insert(key.to_string(), Json::from(v.clone()));
        v
    }

    pub fn string(&mut self, key: &str, default: &str, allowed: &[&str]) -> String {
        let v = match self.take(key) {
            None => default.to_string(),
            Some(toml::Value::String(s)) => s,
            Some(_) => {
                self.bad_type(key, "a string");
                default.to_string()
            }
        };
        if !allowed.contains(&v.as_str()) {
            self.violations
                .push(Violation::new("invalid-parameter", format!("model.{key} = {v:?}; expected one of {allowed:?}")));
        }
        self.effective.insert(key.to_string(), Json::from(v.clone()));
        v
    }

    pub fn bool(&mut self, key: &str, default: bool) -> bool {
        let v = match self.take(key) {
            None => default,
            Some(toml::Value::Boolean(b)) => b,
            Some(_) => {
                self.bad_type(key, "a boolean");
                default
            }
        };
        self.effective.insert(key.to_string(), Json::from(v));
        v
    }

    pub fn violate(&mut self, v: Violation) {
        self.violations.push(v);
    }

    /// Effective parameters, or every violation including unknown keys.
    pub fn finish(mut self) -> Result<BTreeMap<String, Json>, Vec<Violation>> {
        for key in self.raw.keys() {
            if !self.used.contains(key) {
                self.violations.push(Violation::new("unknown-key", format!("model.{key} is not a parameter of this experiment")));
            }
        }
        if self.violations.is_empty() {
            Ok(self.effective)
        } else {
            Err(self.violations)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let cfg = ExperimentConfig::parse("experiment = \"x\"\n[model]\nalpha = 1\nbogus = 2\n").unwrap();
        let mut p = Params::new(cfg.model);
        assert_eq!(p.f64("alpha", 0.0), 1.0);
        let err = p.finish().unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].name, "unknown-key");
        assert!(ExperimentConfig::parse("experiment = \"x\"\nstray = 1\n").is_err());
    }

    #[test]
    fn defaults_are_echoed() {
        let mut p = Params::new(BTreeMap::new());
        assert_eq!(p.vec("x0", &[0.3, 0.7]), vec![0.3, 0.7]);
        let eff = p.finish().unwrap();
        assert_eq!(eff["x0"], serde_json::json!([0.3, 0.7]));
    }
}
