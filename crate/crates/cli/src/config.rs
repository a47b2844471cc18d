//! Layered experiment configuration.
//!
//! Resolution order, later wins: built-in defaults for the subcommand, the
//! `--config` file, `--set key=value` overrides, typed flags. The resolved
//! snapshot is what gets written to the run directory and hashed.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub params: Value,
}

impl ExperimentConfig {
    /// Canonical JSON (sorted keys) used for hashing and snapshots.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn typed<P: DeserializeOwned>(&self) -> CliResult<P> {
        serde_json::from_value(self.params.clone()).map_err(|e| CliError::Config(format!("{}: {e}", self.command)))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Recursively overlays `top` onto `base`; objects merge, everything else
/// replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn parse_assignment(s: &str) -> CliResult<(Vec<String>, Value)> {
    let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Config(format!("expected key=value, got `{s}`")))?;
    let path: Vec<String> = key.split('.').map(|p| p.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("empty key segment in `{s}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

pub fn nest(path: &[String], value: Value) -> Value {
    path.iter().rev().fold(value, |acc, k| {
        let mut m = Map::new();
        m.insert(k.clone(), acc);
        Value::Object(m)
    })
}

/// Builds the resolved config for `command`.
///
/// `defaults` are the subcommand's default params; `flags` carries typed
/// command-line options already converted to a params object.
pub fn resolve(
    command: &str,
    defaults: Value,
    file: Option<&Path>,
    sets: &[String],
    flags: Value,
    seed_flag: Option<u64>,
) -> CliResult<ExperimentConfig> {
    let mut params = defaults;
    let mut seed = 0;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(mut obj) = v else {
            return Err(CliError::Config(format!("{}: top level must be an object", path.display())));
        };
        if let Some(c) = obj.remove("command") {
            if c.as_str() != Some(command) {
                return Err(CliError::Config(format!("{}: config is for `{c}`, not `{command}`", path.display())));
            }
        }
        if let Some(s) = obj.remove("seed") {
            seed = s.as_u64().ok_or_else(|| CliError::Config(format!("seed must be a non-negative integer, got {s}")))?;
        }
        let body = match obj.remove("params") {
            Some(p) if obj.is_empty() => p,
            Some(_) => return Err(CliError::Config(format!("{}: unexpected keys next to `params`", path.display()))),
            None => Value::Object(obj),
        };
        merge(&mut params, body);
    }
    for s in sets {
        let (path, value) = parse_assignment(s)?;
        if path.len() == 1 && path[0] == "seed" {
            seed = value.as_u64().ok_or_else(|| CliError::Config(format!("seed must be a non-negative integer, got {value}")))?;
            continue;
        }
        merge(&mut params, nest(&path, value));
    }
    merge(&mut params, flags);
    if let Some(s) = seed_flag {
        seed = s;
    }
    Ok(ExperimentConfig { command: command.to_string(), seed, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        std::fs::write(&f, r#"{"seed": 4, "params": {"dim": 30, "train": {"steps": 10}}}"#).unwrap();
        let defaults = json!({"dim": 20, "n": 5, "train": {"steps": 1, "learning_rate": 0.1}});
        let cfg = resolve("x", defaults, Some(&f), &["train.steps=99".into(), "n=7".into()], json!({"n": 8}), None).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.params, json!({"dim": 30, "n": 8, "train": {"steps": 99, "learning_rate": 0.1}}));
        let cfg = resolve("x", json!({}), Some(&f), &[], json!({}), Some(11)).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn flat_files_and_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        std::fs::write(&f, r#"{"command": "kkt", "dim": 3}"#).unwrap();
        assert_eq!(resolve("kkt", json!({"dim": 1}), Some(&f), &[], json!({}), None).unwrap().params, json!({"dim": 3}));
        assert!(matches!(resolve("flip-sweep", json!({}), Some(&f), &[], json!({}), None), Err(CliError::Config(_))));
        std::fs::write(&f, "[1]").unwrap();
        assert!(resolve("kkt", json!({}), Some(&f), &[], json!({}), None).is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(parse_assignment("a.b=3").unwrap(), (vec!["a".into(), "b".into()], json!(3)));
        assert_eq!(parse_assignment("x=boc").unwrap().1, json!("boc"));
        assert_eq!(parse_assignment("x=[1,2]").unwrap().1, json!([1, 2]));
        assert!(parse_assignment("novalue").is_err());
        assert!(parse_assignment("a..b=1").is_err());
    }

    #[test]
    fn hash_is_key_order_independent() {
        let a = ExperimentConfig { command: "k".into(), seed: 1, params: serde_json::from_str(r#"{"a":1,"b":2}"#).unwrap() };
        let b = ExperimentConfig { command: "k".into(), seed: 1, params: serde_json::from_str(r#"{"b":2,"a":1}"#).unwrap() };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
