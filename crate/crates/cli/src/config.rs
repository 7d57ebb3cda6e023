//! Run configuration: one JSON object with flat dotted keys such as
//! "gen.n_pairs", "model.d_model" or "train.lr". Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fsac_core::synth::GenConfig;
use fsac_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Hypotheses returned per input; 0 means the beam width.
    pub top_k: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam: 5, top_k: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

/// Short spellings accepted in config files and `--set`.
const ALIASES: &[(&str, &str)] = &[
    ("train.lr", "train.learning_rate"),
    ("train.batch", "train.batch_size"),
    ("gen.n", "gen.n_pairs"),
    ("model.layers", "model.n_layers"),
    ("model.heads", "model.n_heads"),
];

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("prefixes are objects");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

fn canonical_key(key: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, k)| k)
}

impl RunConfig {
    pub fn flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    /// Sets one dotted key. Values are parsed as JSON, falling back to a
    /// plain string.
    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let key = canonical_key(key);
        let mut flat = self.flat();
        let slot = flat.get_mut(key).ok_or_else(|| UsageError(format!("unknown config key {key:?}")))?;
        *slot = value;
        *self = serde_json::from_value(unflatten(&flat)).map_err(|e| UsageError(format!("config key {key:?}: {e}")))?;
        Ok(())
    }

    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key, value)
    }

    /// Parses `key=value` assignments from `--set`.
    pub fn apply_assignments(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let Some((k, v)) = s.split_once('=') else {
                bail!(UsageError(format!("--set expects key=value, got {s:?}")));
            };
            self.set_str(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let doc: Map<String, Value> =
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (k, v) in doc {
            cfg.set(&k, v).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: Option<&Path>) -> Result<RunConfig> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gen.n_pairs == 0 {
            bail!(UsageError("gen.n_pairs must be positive".into()));
        }
        self.gen.validate().map_err(|e| UsageError(e.to_string()))?;
        self.model.validate().map_err(|e| UsageError(e.to_string()))?;
        self.train.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.decode.beam == 0 {
            bail!(UsageError("decode.beam must be positive".into()));
        }
        Ok(())
    }

    /// The flat config as a JSON object, for manifests.
    pub fn echo(&self) -> Value {
        Value::Object(self.flat().into_iter().collect())
    }
}
