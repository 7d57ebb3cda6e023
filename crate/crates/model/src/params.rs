//! Parameter layout: every tensor lives at a fixed offset in one flat buffer,
//! so gradients and optimizer moments share the same indexing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ConfigError, ModelConfig};
use crate::linalg::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// normal(0, 1/sqrt(fan_in)) with fan_in = first dimension.
    Normal,
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one attention block's projections.
#[derive(Debug, Clone, Copy)]
pub struct AttnOff {
    pub q: usize,
    pub k: usize,
    pub v: usize,
    pub o: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FfOff {
    pub wi: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncOff {
    pub ln1: usize,
    pub attn: AttnOff,
    pub ln2: usize,
    pub ff: FfOff,
}

#[derive(Debug, Clone, Copy)]
pub struct DecOff {
    pub ln1: usize,
    pub self_attn: AttnOff,
    pub ln2: usize,
    pub cross: AttnOff,
    pub ln3: usize,
    pub ff: FfOff,
}

#[derive(Debug, Clone)]
pub struct Offsets {
    pub embed: usize,
    pub enc_rel: usize,
    pub dec_rel: usize,
    pub enc: Vec<EncOff>,
    pub dec: Vec<DecOff>,
    pub lm_head: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub offsets: Offsets,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let offset = self.total;
        let t = TensorInfo { name, shape: shape.to_vec(), offset, init };
        self.total += t.len();
        self.tensors.push(t);
        offset
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnOff {
        let mut p = |n: &str| self.add(format!("{prefix}.{n}"), &[d, d], Init::Normal);
        AttnOff { q: p("q"), k: p("k"), v: p("v"), o: p("o") }
    }

    fn ff(&mut self, prefix: &str, d: usize, dff: usize) -> FfOff {
        FfOff {
            wi: self.add(format!("{prefix}.wi"), &[d, dff], Init::Normal),
            wo: self.add(format!("{prefix}.wo"), &[dff, d], Init::Normal),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let (v, d, dff, h) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.n_heads);
        let mut b = Builder { tensors: Vec::new(), total: 0 };
        let embed = b.add("embed".into(), &[v, d], Init::Normal);
        let enc_rel = b.add("enc.rel_bias".into(), &[cfg.rel_buckets, h], Init::Zeros);
        let dec_rel = b.add("dec.rel_bias".into(), &[cfg.rel_buckets, h], Init::Zeros);
        let enc = (0..cfg.n_layers)
            .map(|l| EncOff {
                ln1: b.add(format!("enc.{l}.ln1"), &[d], Init::Ones),
                attn: b.attn(&format!("enc.{l}.attn"), d),
                ln2: b.add(format!("enc.{l}.ln2"), &[d], Init::Ones),
                ff: b.ff(&format!("enc.{l}.ff"), d, dff),
            })
            .collect();
        let dec = (0..cfg.n_layers)
            .map(|l| DecOff {
                ln1: b.add(format!("dec.{l}.ln1"), &[d], Init::Ones),
                self_attn: b.attn(&format!("dec.{l}.self"), d),
                ln2: b.add(format!("dec.{l}.ln2"), &[d], Init::Ones),
                cross: b.attn(&format!("dec.{l}.cross"), d),
                ln3: b.add(format!("dec.{l}.ln3"), &[d], Init::Ones),
                ff: b.ff(&format!("dec.{l}.ff"), d, dff),
            })
            .collect();
        let lm_head = b.add("lm_head".into(), &[d, v], Init::Normal);
        Layout { offsets: Offsets { embed, enc_rel, dec_rel, enc, dec, lm_head }, total: b.total, tensors: b.tensors }
    }
}

/// Number of trainable scalars for a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    Layout::new(cfg).total
}

#[derive(Debug, Clone)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Params<T>, ConfigError> {
        config.validate()?;
        let layout = Layout::new(config);
        let data = vec![T::zero(); layout.total];
        Ok(Params { config: config.clone(), layout, data })
    }

    /// Deterministic initialization from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Params<T>, ConfigError> {
        let mut p = Params::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &p.layout.tensors {
            let slot = &mut p.data[t.range()];
            match t.init {
                Init::Zeros => slot.fill(T::zero()),
                Init::Ones => slot.fill(T::one()),
                Init::Normal => {
                    let normal = Normal::new(0.0, 1.0 / (t.shape[0] as f64).sqrt()).expect("finite std");
                    for v in slot.iter_mut() {
                        *v = T::of(normal.sample(&mut rng));
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.tensors.iter().find(|t| t.name == name).map(|t| &self.data[t.range()])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same parameters at another precision.
    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64().expect("finite"))).collect(),
        }
    }
}
