//! Teacher-forced training: Adam at a constant rate, global gradient-norm
//! clipping, periodic validation and early stopping on validation loss.

use std::time::Instant;

use fsac_core::codec::vocab::string_to_ids;
use fsac_core::synth::FlowsheetPair;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::params::Params;
use crate::transformer::{forward_backward, Batch, LossStats, ModelError};

/// One tokenized pair; both sides carry SOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

pub fn tokenize_pairs(pairs: &[FlowsheetPair]) -> Vec<Example> {
    pairs.iter().map(|p| Example { src: string_to_ids(&p.source), tgt: string_to_ids(&p.target) }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Token-weighted mean training loss since the previous evaluation.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStop,
    TimeBudget,
    /// A non-finite loss or gradient; the best parameters seen so far are kept.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation loss.
    pub params: Params<f32>,
    pub curves: Vec<CurvePoint>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub stop: StopReason,
    pub seconds: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("{split} example {index} has a {len}-token sequence; max_seq_len is {max}")]
    SequenceTooLong { split: &'static str, index: usize, len: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Token-weighted loss over `data` without dropout.
pub fn evaluate_loss(p: &Params<f32>, data: &[Example], batch_size: usize) -> Result<LossStats, ModelError> {
    let parts: Vec<LossStats> = data
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let (src, tgt) = unzip(chunk);
            forward_backward(p, Batch { src: &src, tgt: &tgt }, 0.0, None, None)
        })
        .collect::<Result<_, _>>()?;
    let mut total = LossStats::default();
    let mut sum = 0.0;
    for s in parts {
        sum += s.loss * s.tokens as f64;
        total.tokens += s.tokens;
        total.correct += s.correct;
    }
    total.loss = sum / total.tokens.max(1) as f64;
    Ok(total)
}

fn unzip(chunk: &[Example]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    chunk.iter().map(|e| (e.src.clone(), e.tgt.clone())).unzip()
}

fn check_lengths(split: &'static str, data: &[Example], max: usize) -> Result<(), TrainError> {
    for (index, e) in data.iter().enumerate() {
        let len = e.src.len().max(e.tgt.len());
        if len > max {
            return Err(TrainError::SequenceTooLong { split, index, len, max });
        }
    }
    Ok(())
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn step(&mut self, w: &mut [f32], g: &[f32], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = (cfg.learning_rate * c2.sqrt() / c1) as f32;
        let eps = (cfg.adam_eps * c2.sqrt()) as f32;
        let (b1, b2) = (b1 as f32, b2 as f32);
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * *m / (v.sqrt() + eps);
        }
    }
}

/// Rescales `g` to global L2 norm at most `max`; returns the norm before clipping.
pub fn clip_grad_norm(g: &mut [f32], max: f64) -> f64 {
    let norm = g.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > max {
        let s = (max / norm) as f32;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

/// Trains `init` on `train`, scoring `val` every `eval_every` steps and after
/// the last step. `on_eval` sees each curve point as it is produced, with the
/// current parameters and whether they are the new best.
pub fn train(
    init: Params<f32>,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&CurvePoint, &Params<f32>, bool),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    init.config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let max = init.config.max_seq_len;
    check_lengths("train", train, max)?;
    check_lengths("val", val, max)?;
    let val = if cfg.val_limit > 0 { &val[..cfg.val_limit.min(val.len())] } else { val };

    let started = Instant::now();
    let mut p = init;
    let mut grad = vec![0f32; p.len()];
    let mut adam = Adam { m: vec![0.0; p.len()], v: vec![0.0; p.len()], t: 0 };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let dropout = p.config.dropout > 0.0;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut curves = Vec::new();
    let (mut best, mut best_step, mut best_val) = (p.clone(), 0, f64::INFINITY);
    let mut stale = 0;
    let (mut run_loss, mut run_tokens) = (0.0, 0usize);
    let mut stop = StopReason::MaxSteps;
    let mut step = 0;

    while step < cfg.max_steps {
        if cursor >= order.len() {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + cfg.batch_size).min(order.len())];
        cursor += idx.len();
        let (src, tgt): (Vec<_>, Vec<_>) = idx.iter().map(|&i| (train[i].src.clone(), train[i].tgt.clone())).unzip();

        grad.fill(0.0);
        let rng = if dropout { Some(&mut dropout_rng) } else { None };
        let stats = match forward_backward(&p, Batch { src: &src, tgt: &tgt }, cfg.label_smoothing, rng, Some(&mut grad)) {
            Ok(s) => s,
            Err(ModelError::NonFinite) => {
                stop = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let norm = clip_grad_norm(&mut grad, cfg.clip_norm);
        if !stats.loss.is_finite() || !norm.is_finite() {
            stop = StopReason::Diverged;
            break;
        }
        adam.step(&mut p.data, &grad, cfg);
        step += 1;
        run_loss += stats.loss * stats.tokens as f64;
        run_tokens += stats.tokens;

        let out_of_time = cfg.max_seconds > 0 && started.elapsed().as_secs() >= cfg.max_seconds;
        if step % cfg.eval_every == 0 || step == cfg.max_steps || out_of_time {
            let v = evaluate_loss(&p, val, cfg.batch_size)?.loss;
            let point = CurvePoint { step, train_loss: run_loss / run_tokens.max(1) as f64, val_loss: v };
            (run_loss, run_tokens) = (0.0, 0);
            curves.push(point);
            if !v.is_finite() {
                on_eval(&point, &p, false);
                stop = StopReason::Diverged;
                break;
            }
            let improved = v < best_val;
            on_eval(&point, &p, improved);
            if improved {
                (best, best_step, best_val, stale) = (p.clone(), step, v, 0);
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    stop = StopReason::EarlyStop;
                    break;
                }
            }
            if out_of_time {
                stop = StopReason::TimeBudget;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        curves,
        best_step,
        best_val_loss: best_val,
        steps: step,
        stop,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Token ids back to a string. Special tokens other than the leading SOS
/// and final EOS are kept as their surface forms, which no parser accepts.
pub fn ids_to_string(ids: &[u32]) -> String {
    let mut body = ids;
    if body.first() == Some(&fsac_core::codec::vocab::SOS_ID) {
        body = &body[1..];
    }
    if body.last() == Some(&fsac_core::codec::vocab::EOS_ID) {
        body = &body[..body.len() - 1];
    }
    body.iter()
        .map(|&i| fsac_core::codec::vocab::Token::from_id(i).map_or_else(|| format!("<{i}>"), |t| t.surface()))
        .collect()
}
