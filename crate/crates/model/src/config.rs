use serde::{Deserialize, Serialize};
use thiserror::Error;

use fsac_core::codec::VOCAB_SIZE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("d_model {d_model} is not divisible by n_heads {n_heads}")]
    HeadSplit { d_model: usize, n_heads: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    /// Encoder layers; the decoder has as many.
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
    /// Relative-position buckets per attention direction.
    pub rel_buckets: usize,
    pub rel_max_distance: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: VOCAB_SIZE,
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 512,
            dropout: 0.1,
            max_seq_len: 256,
            rel_buckets: 32,
            rel_max_distance: 128,
        }
    }
}

impl ModelConfig {
    /// Default proportions (4 heads, d_ff = 4·d) at another width and depth.
    pub fn sized(d_model: usize, n_layers: usize) -> ModelConfig {
        ModelConfig { d_model, n_layers, d_ff: 4 * d_model, ..ModelConfig::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
            ("rel_buckets", self.rel_buckets),
            ("rel_max_distance", self.rel_max_distance),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ConfigError::HeadSplit { d_model: self.d_model, n_heads: self.n_heads });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::OutOfRange { name: "dropout", value: self.dropout, range: "[0, 1)" });
        }
        if self.rel_buckets < 4 {
            return Err(ConfigError::OutOfRange { name: "rel_buckets", value: self.rel_buckets as f64, range: "[4, inf)" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Validation loss is computed every `eval_every` steps and at the end.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement; 0 disables.
    pub patience: usize,
    pub clip_norm: f64,
    pub label_smoothing: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Cap on validation pairs scored per evaluation; 0 means all.
    pub val_limit: usize,
    /// Wall-clock budget in seconds; 0 means unlimited.
    #[serde(default)]
    pub max_seconds: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 32,
            max_steps: 20_000,
            eval_every: 500,
            patience: 10,
            clip_norm: 1.0,
            label_smoothing: 0.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            val_limit: 0,
            max_seconds: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("batch_size", self.batch_size), ("max_steps", self.max_steps), ("eval_every", self.eval_every)] {
            if v == 0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("clip_norm", self.clip_norm), ("adam_eps", self.adam_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NonPositive(name));
            }
        }
        for (name, v) in [("label_smoothing", self.label_smoothing), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(ConfigError::OutOfRange { name, value: v, range: "[0, 1)" });
            }
        }
        Ok(())
    }
}
