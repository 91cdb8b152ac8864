//! Run configuration, read from a flat `key = value` file or a JSON object.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::harness::task::{TaskKind, TaskSpec};
use crate::pipeline::{CombineMode, NoiseSharing, SampleOptions};
use crate::schedule::BridgeSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserChoice {
    #[default]
    Oracle,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: f64,
    pub train_steps: usize,
    pub sample_steps: usize,
    pub gamma: f64,
    pub task: TaskKind,
    pub dim: usize,
    pub noise_scale: f64,
    /// Size of the held-out evaluation set.
    pub count: usize,
    pub denoiser: DenoiserChoice,
    pub checkpoint: Option<PathBuf>,
    pub combine: CombineMode,
    pub stochastic: bool,
    pub noise: NoiseSharing,
    pub record_trajectory: bool,
    pub train_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sched = BridgeSchedule::default();
        Self {
            seed: 0,
            horizon: sched.horizon(),
            train_steps: sched.train_steps(),
            sample_steps: sched.sample_steps(),
            gamma: sched.gamma(),
            task: TaskKind::Midpoint,
            dim: 2,
            noise_scale: 0.5,
            count: 1000,
            denoiser: DenoiserChoice::Oracle,
            checkpoint: None,
            combine: CombineMode::Mean,
            stochastic: true,
            noise: NoiseSharing::Shared,
            record_trajectory: false,
            train_iters: 20_000,
            batch_size: 64,
            learning_rate: 1e-3,
            out_dir: None,
        }
    }
}

fn field_names() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

impl RunConfig {
    pub fn schedule(&self) -> Result<BridgeSchedule> {
        BridgeSchedule::new(
            self.horizon,
            self.train_steps,
            self.sample_steps,
            self.gamma,
        )
    }

    pub fn task_spec(&self, seed: u64) -> TaskSpec {
        TaskSpec {
            kind: self.task,
            dim: self.dim,
            noise_scale: self.noise_scale,
            count: self.count,
            seed,
        }
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            mode: self.combine,
            stochastic: self.stochastic,
            noise: self.noise,
            record_trajectory: self.record_trajectory,
        }
    }

    /// Checks every field against the module that consumes it.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.task_spec(0).validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let known = field_names();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut map = Map::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {lineno}: expected key = value, got {line:?}"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !known.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {lineno}: unknown key {key:?}")));
            }
            if let Some(first) = seen.insert(key.to_string(), lineno) {
                return Err(Error::Config(format!(
                    "line {lineno}: duplicate key {key:?} (first set on line {first})"
                )));
            }
            let parsed = serde_json::from_str::<Value>(value)
                .unwrap_or_else(|_| Value::String(value.to_string()));
            map.insert(key.to_string(), parsed);
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))
    }

    /// One `key = value` line per field; unset optional paths are omitted.
    pub fn to_key_value(&self) -> Result<String> {
        let Value::Object(map) = serde_json::to_value(self)? else {
            unreachable!("RunConfig serializes to an object")
        };
        let mut out = String::new();
        for (k, v) in map {
            let text = match v {
                Value::Null => continue,
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {text}\n"));
        }
        Ok(out)
    }
}

/// Reads a config file, choosing JSON when the first non-blank character is `{`.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        RunConfig::from_json(&text)
    } else {
        RunConfig::from_key_value(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_seed_gives_defaults() {
        let c = RunConfig::from_key_value("seed = 9\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.horizon, 2.0);
        assert_eq!(c.train_steps, 1000);
        assert_eq!(c.sample_steps, 50);
        assert_eq!(c.gamma, 5.0);
        let j = RunConfig::from_json(r#"{"seed": 9}"#).unwrap();
        assert_eq!(c, j);
    }

    #[test]
    fn duplicate_key_named() {
        let err = RunConfig::from_key_value("seed = 1\ngamma = 2\nseed = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("seed") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn unknown_key_named() {
        let msg = RunConfig::from_key_value("seed = 1\nhorizn = 2\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("horizn") && msg.contains("line 2"), "{msg}");
        assert!(RunConfig::from_json(r#"{"horizn": 2}"#).is_err());
    }

    #[test]
    fn malformed_line() {
        let msg = RunConfig::from_key_value("seed 1").unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn bad_value_type() {
        assert!(RunConfig::from_key_value("dim = two").is_err());
        assert!(RunConfig::from_key_value("combine = median").is_err());
    }

    #[test]
    fn full_round_trip() {
        let c = RunConfig {
            seed: 123,
            horizon: 3.5,
            train_steps: 500,
            sample_steps: 20,
            gamma: 4.25,
            task: TaskKind::JointGaussian,
            dim: 3,
            noise_scale: 0.1,
            count: 17,
            denoiser: DenoiserChoice::Mlp,
            checkpoint: Some("runs/net.json".into()),
            combine: CombineMode::ZOnly,
            stochastic: false,
            noise: NoiseSharing::Independent,
            record_trajectory: true,
            train_iters: 77,
            batch_size: 8,
            learning_rate: 3e-4,
            out_dir: Some("runs/a b".into()),
        };
        assert_eq!(
            RunConfig::from_key_value(&c.to_key_value().unwrap()).unwrap(),
            c
        );
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.sample_steps = 0;
        assert!(c.validate().is_err());
        let c = RunConfig {
            count: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
