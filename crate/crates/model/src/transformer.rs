//! Teacher-forced forward and backward passes of the encoder-decoder.
//!
//! Pre-norm residual blocks with scale-only RMS norms, bias-free projections,
//! ReLU feed-forward, a relative-position bias shared by all layers of a
//! stack, and a parameter-free RMS norm before the decoder's output head.
//! Dropout acts on the embeddings and on every residual branch output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use fsac_core::codec::vocab::PAD_ID;

use crate::attention::{attend, attend_backward, Geometry, RelBias, Seqs};
use crate::config::ModelConfig;
use crate::linalg::{add_into, linear, linear_backward, log_sum_exp, rms_norm, rms_norm_backward, Real};
use crate::params::{AttnOff, FfOff, Offsets, Params};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(u32),
    #[error("empty sequence")]
    EmptySequence,
    #[error("no supervised (non-PAD) target positions")]
    NoSupervisedPositions,
    #[error("logits hold {logits} values but {rows} targets × {vocab} classes were expected")]
    ShapeMismatch { logits: usize, rows: usize, vocab: usize },
    #[error("source and target batch sizes differ ({0} vs {1})")]
    BatchMismatch(usize, usize),
    #[error("loss is not finite")]
    NonFinite,
}

/// Source sequences and full target sequences (SOS … EOS). The decoder reads
/// `tgt[..n-1]` and predicts `tgt[1..]`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub src: &'a [Vec<u32>],
    pub tgt: &'a [Vec<u32>],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    /// Mean cross-entropy over supervised positions.
    pub loss: f64,
    pub tokens: usize,
    /// Positions whose argmax equals the label.
    pub correct: usize,
}

pub(crate) fn check_seq(cfg: &ModelConfig, s: &[u32]) -> Result<(), ModelError> {
    if s.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if s.len() > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong { len: s.len(), max: cfg.max_seq_len });
    }
    match s.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        Some(&t) => Err(ModelError::TokenOutOfRange(t)),
        None => Ok(()),
    }
}

/// Mean token cross-entropy of row-major `logits` against `targets`, with
/// PAD targets excluded, and its gradient with respect to the logits.
pub fn cross_entropy<T: Real>(
    logits: &[T],
    targets: &[u32],
    vocab: usize,
    smoothing: f64,
) -> Result<(LossStats, Vec<T>), ModelError> {
    if logits.len() != targets.len() * vocab {
        return Err(ModelError::ShapeMismatch { logits: logits.len(), rows: targets.len(), vocab });
    }
    let n = targets.iter().filter(|&&t| t != PAD_ID).count();
    if n == 0 {
        return Err(ModelError::NoSupervisedPositions);
    }
    let mut grad = vec![T::zero(); logits.len()];
    let mut stats = LossStats { tokens: n, ..LossStats::default() };
    let inv_n = 1.0 / n as f64;
    let off = smoothing / vocab as f64;
    let mut total = 0.0f64;
    for (i, &t) in targets.iter().enumerate() {
        if t == PAD_ID {
            continue;
        }
        let row = &logits[i * vocab..(i + 1) * vocab];
        let lse = log_sum_exp(row).to_f64().unwrap_or(f64::NAN);
        let mut best = 0;
        for j in 0..vocab {
            if row[j] > row[best] {
                best = j;
            }
            let z = row[j].to_f64().unwrap_or(f64::NAN);
            let q = off + if j == t as usize { 1.0 - smoothing } else { 0.0 };
            total += q * (lse - z);
            grad[i * vocab + j] = T::of(((z - lse).exp() - q) * inv_n);
        }
        stats.correct += (best == t as usize) as usize;
    }
    stats.loss = total * inv_n;
    if !stats.loss.is_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok((stats, grad))
}

fn slice<T>(p: &[T], off: usize, len: usize) -> &[T] {
    &p[off..off + len]
}

struct Dropout<'a> {
    p: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    /// Applies inverted dropout in place and returns the mask (empty if off).
    fn apply<T: Real>(&mut self, x: &mut [T]) -> Vec<T> {
        let Some(rng) = self.rng.as_deref_mut().filter(|_| self.p > 0.0) else {
            return Vec::new();
        };
        let keep = T::of(1.0 / (1.0 - self.p));
        let mask: Vec<T> = (0..x.len()).map(|_| if rng.gen_bool(self.p) { T::zero() } else { keep }).collect();
        for (v, &m) in x.iter_mut().zip(&mask) {
            *v = *v * m;
        }
        mask
    }
}

fn unmask<T: Real>(dy: &[T], mask: &[T]) -> Vec<T> {
    if mask.is_empty() {
        dy.to_vec()
    } else {
        dy.iter().zip(mask).map(|(&a, &m)| a * m).collect()
    }
}

struct AttnCache<T> {
    x: Vec<T>,
    inv: Vec<T>,
    xn: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    mask: Vec<T>,
}

struct FfCache<T> {
    x: Vec<T>,
    inv: Vec<T>,
    xn: Vec<T>,
    h: Vec<T>,
    mask: Vec<T>,
}

/// Shared context of one stack pass.
struct Ctx<'a, T> {
    p: &'a [T],
    cfg: &'a ModelConfig,
    o: &'a Offsets,
}

impl<'a, T: Real> Ctx<'a, T> {
    fn d(&self) -> usize {
        self.cfg.d_model
    }

    fn rel(&self, off: usize, bidirectional: bool) -> RelBias<'a, T> {
        RelBias {
            table: slice(self.p, off, self.cfg.rel_buckets * self.cfg.n_heads),
            bidirectional,
            max_distance: self.cfg.rel_max_distance,
        }
    }

    /// Pre-norm attention block; `kv` is (memory rows, memory seqs) for
    /// cross-attention, `None` for self-attention.
    #[allow(clippy::too_many_arguments)]
    fn attn_block(
        &self,
        x: &mut [T],
        seqs: &Seqs,
        ln: usize,
        w: AttnOff,
        kv: Option<(&[T], &Seqs)>,
        causal: bool,
        bias: Option<RelBias<T>>,
        drop: &mut Dropout,
    ) -> AttnCache<T> {
        let d = self.d();
        let n = seqs.total;
        let mut xn = vec![T::zero(); n * d];
        let inv = rms_norm(x, Some(slice(self.p, ln, d)), d, &mut xn);
        let (mem, mseqs) = kv.unwrap_or((&xn, seqs));
        let m = mseqs.total;
        let mut q = vec![T::zero(); n * d];
        let mut k = vec![T::zero(); m * d];
        let mut v = vec![T::zero(); m * d];
        linear(&xn, slice(self.p, w.q, d * d), n, d, d, &mut q);
        linear(mem, slice(self.p, w.k, d * d), m, d, d, &mut k);
        linear(mem, slice(self.p, w.v, d * d), m, d, d, &mut v);
        let g = Geometry { q: seqs, k: mseqs, heads: self.cfg.n_heads, d, causal, q_pos: None };
        let mut probs = Vec::new();
        let mut ctx = vec![T::zero(); n * d];
        attend(&q, &k, &v, g, bias, &mut probs, &mut ctx);
        let mut out = vec![T::zero(); n * d];
        linear(&ctx, slice(self.p, w.o, d * d), n, d, d, &mut out);
        let mask = drop.apply(&mut out);
        let cache = AttnCache { x: x.to_vec(), inv, xn, q, k, v, probs, ctx, mask };
        add_into(x, &out);
        cache
    }

    /// Backward of [`Ctx::attn_block`]. `dx` holds the gradient of the block
    /// output and receives the gradient of its input.
    #[allow(clippy::too_many_arguments)]
    fn attn_block_backward(
        &self,
        c: &AttnCache<T>,
        dx: &mut [T],
        seqs: &Seqs,
        ln: usize,
        w: AttnOff,
        kv: Option<(&[T], &Seqs, &mut [T])>,
        causal: bool,
        bias: Option<(RelBias<T>, usize)>,
        grad: &mut [T],
    ) {
        let d = self.d();
        let dd = d * d;
        let n = seqs.total;
        let dout = unmask(dx, &c.mask);
        let mut dctx = vec![T::zero(); n * d];
        linear_backward(&c.ctx, slice(self.p, w.o, dd), &dout, n, d, d, Some(&mut dctx), &mut grad[w.o..w.o + dd]);
        let mseqs = kv.as_ref().map_or(seqs, |k| k.1);
        let m = mseqs.total;
        let (mut dq, mut dk, mut dv) = (vec![T::zero(); n * d], vec![T::zero(); m * d], vec![T::zero(); m * d]);
        let g = Geometry { q: seqs, k: mseqs, heads: self.cfg.n_heads, d, causal, q_pos: None };
        let rb = bias.map(|b| b.0);
        let dbias = bias.map(|(_, off)| off);
        let nb = self.cfg.rel_buckets * self.cfg.n_heads;
        {
            let db = dbias.map(|off| &mut grad[off..off + nb]);
            attend_backward(&c.q, &c.k, &c.v, &c.probs, &dctx, g, rb, &mut dq, &mut dk, &mut dv, db);
        }
        let mut dxn = vec![T::zero(); n * d];
        linear_backward(&c.xn, slice(self.p, w.q, dd), &dq, n, d, d, Some(&mut dxn), &mut grad[w.q..w.q + dd]);
        match kv {
            None => {
                linear_backward(&c.xn, slice(self.p, w.k, dd), &dk, n, d, d, Some(&mut dxn), &mut grad[w.k..w.k + dd]);
                linear_backward(&c.xn, slice(self.p, w.v, dd), &dv, n, d, d, Some(&mut dxn), &mut grad[w.v..w.v + dd]);
            }
            Some((mem, _, dmem)) => {
                linear_backward(mem, slice(self.p, w.k, dd), &dk, m, d, d, Some(&mut *dmem), &mut grad[w.k..w.k + dd]);
                linear_backward(mem, slice(self.p, w.v, dd), &dv, m, d, d, Some(dmem), &mut grad[w.v..w.v + dd]);
            }
        }
        rms_norm_backward(&c.x, &c.inv, Some(slice(self.p, ln, d)), &dxn, d, dx, Some(&mut grad[ln..ln + d]));
    }

    fn ff_block(&self, x: &mut [T], n: usize, ln: usize, w: FfOff, drop: &mut Dropout) -> FfCache<T> {
        let (d, dff) = (self.d(), self.cfg.d_ff);
        let mut xn = vec![T::zero(); n * d];
        let inv = rms_norm(x, Some(slice(self.p, ln, d)), d, &mut xn);
        let mut h = vec![T::zero(); n * dff];
        linear(&xn, slice(self.p, w.wi, d * dff), n, d, dff, &mut h);
        for v in h.iter_mut() {
            *v = v.max(T::zero());
        }
        let mut out = vec![T::zero(); n * d];
        linear(&h, slice(self.p, w.wo, dff * d), n, dff, d, &mut out);
        let mask = drop.apply(&mut out);
        let cache = FfCache { x: x.to_vec(), inv, xn, h, mask };
        add_into(x, &out);
        cache
    }

    fn ff_block_backward(&self, c: &FfCache<T>, dx: &mut [T], n: usize, ln: usize, w: FfOff, grad: &mut [T]) {
        let (d, dff) = (self.d(), self.cfg.d_ff);
        let dout = unmask(dx, &c.mask);
        let mut dh = vec![T::zero(); n * dff];
        linear_backward(&c.h, slice(self.p, w.wo, dff * d), &dout, n, dff, d, Some(&mut dh), &mut grad[w.wo..w.wo + dff * d]);
        for (g, &h) in dh.iter_mut().zip(&c.h) {
            if h <= T::zero() {
                *g = T::zero();
            }
        }
        let mut dxn = vec![T::zero(); n * d];
        linear_backward(&c.xn, slice(self.p, w.wi, d * dff), &dh, n, d, dff, Some(&mut dxn), &mut grad[w.wi..w.wi + d * dff]);
        rms_norm_backward(&c.x, &c.inv, Some(slice(self.p, ln, d)), &dxn, d, dx, Some(&mut grad[ln..ln + d]));
    }

    fn embed(&self, ids: &[u32], off: usize, drop: &mut Dropout) -> (Vec<T>, Vec<T>) {
        let d = self.d();
        let mut x = Vec::with_capacity(ids.len() * d);
        for &t in ids {
            x.extend_from_slice(slice(self.p, off + t as usize * d, d));
        }
        let mask = drop.apply(&mut x);
        (x, mask)
    }
}

struct EncCache<T> {
    emb_mask: Vec<T>,
    layers: Vec<(AttnCache<T>, FfCache<T>)>,
    last: Vec<T>,
    inv: Vec<T>,
}

struct DecCache<T> {
    emb_mask: Vec<T>,
    layers: Vec<(AttnCache<T>, AttnCache<T>, FfCache<T>)>,
    last: Vec<T>,
    inv: Vec<T>,
    y: Vec<T>,
}

fn run_encoder<T: Real>(c: &Ctx<T>, ids: &[u32], seqs: &Seqs, drop: &mut Dropout) -> (Vec<T>, EncCache<T>) {
    let o = c.o;
    let d = c.d();
    let (mut x, emb_mask) = c.embed(ids, o.embed, drop);
    let rel = c.rel(o.enc_rel, true);
    let mut layers = Vec::with_capacity(o.enc.len());
    for l in &o.enc {
        let a = c.attn_block(&mut x, seqs, l.ln1, l.attn, None, false, Some(rel), drop);
        let f = c.ff_block(&mut x, seqs.total, l.ln2, l.ff, drop);
        layers.push((a, f));
    }
    let mut out = vec![T::zero(); x.len()];
    let inv = rms_norm(&x, None, d, &mut out);
    (out, EncCache { emb_mask, layers, last: x, inv })
}

/// Runs the encoder alone (no dropout); returns normalized memory rows.
pub fn encode<T: Real>(p: &Params<T>, src: &[Vec<u32>]) -> Result<(Vec<T>, Seqs), ModelError> {
    for s in src {
        check_seq(&p.config, s)?;
    }
    let seqs = Seqs::new(src.iter().map(Vec::len));
    let ids: Vec<u32> = src.iter().flatten().copied().collect();
    let c = Ctx { p: &p.data, cfg: &p.config, o: &p.layout.offsets };
    let (mem, _) = run_encoder(&c, &ids, &seqs, &mut Dropout { p: 0.0, rng: None });
    Ok((mem, seqs))
}

/// Teacher-forced pass over a batch. With `grad`, gradients of the mean loss
/// are accumulated into it; with `rng`, dropout is active.
pub fn forward_backward<T: Real>(
    p: &Params<T>,
    batch: Batch,
    smoothing: f64,
    rng: Option<&mut ChaCha8Rng>,
    grad: Option<&mut [T]>,
) -> Result<LossStats, ModelError> {
    let (logits, labels, run) = forward_cached(p, batch, rng)?;
    let (stats, dlogits) = cross_entropy(&logits, &labels, p.config.vocab_size, smoothing)?;
    if let Some(grad) = grad {
        backward(p, &run, &dlogits, grad);
    }
    Ok(stats)
}

/// Logits [prefix rows × vocab] for one source and one decoder input prefix.
pub fn forward_logits<T: Real>(p: &Params<T>, src: &[u32], prefix: &[u32]) -> Result<Vec<T>, ModelError> {
    check_seq(&p.config, prefix)?;
    // A dummy label per position; only the logits are used.
    let mut tgt = prefix.to_vec();
    tgt.push(PAD_ID);
    let (src, tgt) = (vec![src.to_vec()], vec![tgt]);
    let (logits, _, _) = forward_cached(p, Batch { src: &src, tgt: &tgt }, None)?;
    Ok(logits)
}

struct Run<T> {
    src_seqs: Seqs,
    tgt_seqs: Seqs,
    src_ids: Vec<u32>,
    dec_ids: Vec<u32>,
    mem: Vec<T>,
    enc: EncCache<T>,
    dec: DecCache<T>,
}

type Forward<T> = (Vec<T>, Vec<u32>, Run<T>);

fn forward_cached<T: Real>(p: &Params<T>, batch: Batch, mut rng: Option<&mut ChaCha8Rng>) -> Result<Forward<T>, ModelError> {
    let cfg = &p.config;
    if batch.src.len() != batch.tgt.len() {
        return Err(ModelError::BatchMismatch(batch.src.len(), batch.tgt.len()));
    }
    for (s, t) in batch.src.iter().zip(batch.tgt) {
        check_seq(cfg, s)?;
        if t.len() < 2 {
            return Err(ModelError::NoSupervisedPositions);
        }
        check_seq(cfg, &t[..t.len() - 1])?;
    }
    let c = Ctx { p: &p.data, cfg, o: &p.layout.offsets };
    let o = c.o;
    let d = cfg.d_model;
    let src_seqs = Seqs::new(batch.src.iter().map(Vec::len));
    let tgt_seqs = Seqs::new(batch.tgt.iter().map(|t| t.len() - 1));
    let src_ids: Vec<u32> = batch.src.iter().flatten().copied().collect();
    let dec_ids: Vec<u32> = batch.tgt.iter().flat_map(|t| t[..t.len() - 1].iter().copied()).collect();
    let labels: Vec<u32> = batch.tgt.iter().flat_map(|t| t[1..].iter().copied()).collect();
    let mut drop = Dropout { p: cfg.dropout, rng: rng.as_deref_mut() };
    let (mem, enc) = run_encoder(&c, &src_ids, &src_seqs, &mut drop);
    let (mut x, emb_mask) = c.embed(&dec_ids, o.embed, &mut drop);
    let rel = c.rel(o.dec_rel, false);
    let n = tgt_seqs.total;
    let mut layers = Vec::with_capacity(o.dec.len());
    for l in &o.dec {
        let a = c.attn_block(&mut x, &tgt_seqs, l.ln1, l.self_attn, None, true, Some(rel), &mut drop);
        let b = c.attn_block(&mut x, &tgt_seqs, l.ln2, l.cross, Some((&mem, &src_seqs)), false, None, &mut drop);
        let f = c.ff_block(&mut x, n, l.ln3, l.ff, &mut drop);
        layers.push((a, b, f));
    }
    let mut y = vec![T::zero(); n * d];
    let inv = rms_norm(&x, None, d, &mut y);
    let v = cfg.vocab_size;
    let mut logits = vec![T::zero(); n * v];
    linear(&y, slice(&p.data, o.lm_head, d * v), n, d, v, &mut logits);
    let dec = DecCache { emb_mask, layers, last: x, inv, y };
    Ok((logits, labels, Run { src_seqs, tgt_seqs, src_ids, dec_ids, mem, enc, dec }))
}

fn embed_backward<T: Real>(ids: &[u32], dx: &[T], mask: &[T], d: usize, gembed: &mut [T]) {
    let dx = unmask(dx, mask);
    for (row, &t) in dx.chunks_exact(d).zip(ids) {
        add_into(&mut gembed[t as usize * d..(t as usize + 1) * d], row);
    }
}

fn backward<T: Real>(p: &Params<T>, run: &Run<T>, dlogits: &[T], grad: &mut [T]) {
    let cfg = &p.config;
    let c = Ctx { p: &p.data, cfg, o: &p.layout.offsets };
    let o = c.o;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let n = run.tgt_seqs.total;
    let m = run.src_seqs.total;
    let mut dy = vec![T::zero(); n * d];
    let head = o.lm_head..o.lm_head + d * v;
    linear_backward(&run.dec.y, slice(&p.data, o.lm_head, d * v), dlogits, n, d, v, Some(&mut dy), &mut grad[head]);
    let mut dx = vec![T::zero(); n * d];
    rms_norm_backward(&run.dec.last, &run.dec.inv, None, &dy, d, &mut dx, None);
    let mut dmem = vec![T::zero(); m * d];
    let dec_rel = c.rel(o.dec_rel, false);
    for (l, (a, b, f)) in o.dec.iter().zip(&run.dec.layers).rev() {
        c.ff_block_backward(f, &mut dx, n, l.ln3, l.ff, grad);
        let kv = Some((run.mem.as_slice(), &run.src_seqs, dmem.as_mut_slice()));
        c.attn_block_backward(b, &mut dx, &run.tgt_seqs, l.ln2, l.cross, kv, false, None, grad);
        let bias = Some((dec_rel, o.dec_rel));
        c.attn_block_backward(a, &mut dx, &run.tgt_seqs, l.ln1, l.self_attn, None, true, bias, grad);
    }
    let emb = o.embed..o.embed + v * d;
    embed_backward(&run.dec_ids, &dx, &run.dec.emb_mask, d, &mut grad[emb.clone()]);
    let mut dx = vec![T::zero(); m * d];
    rms_norm_backward(&run.enc.last, &run.enc.inv, None, &dmem, d, &mut dx, None);
    let enc_rel = c.rel(o.enc_rel, true);
    for (l, (a, f)) in o.enc.iter().zip(&run.enc.layers).rev() {
        c.ff_block_backward(f, &mut dx, m, l.ln2, l.ff, grad);
        let bias = Some((enc_rel, o.enc_rel));
        c.attn_block_backward(a, &mut dx, &run.src_seqs, l.ln1, l.attn, None, false, bias, grad);
    }
    embed_backward(&run.src_ids, &dx, &run.enc.emb_mask, d, &mut grad[emb]);
}
