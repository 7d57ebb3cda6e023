//! Incremental decoding with cached keys and values: greedy and beam search.

use std::cmp::Ordering;

use fsac_core::codec::vocab::{EOS_ID, PAD_ID, SOS_ID};

use crate::attention::rel_bucket;
use crate::linalg::{add_into, linear, log_sum_exp, rms_norm, Real};
use crate::params::{AttnOff, Params};
use crate::transformer::{check_seq, encode, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// SOS, generated tokens, and EOS unless cut off at the length limit.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// `log_prob` divided by the number of generated tokens.
    pub score: f64,
}

impl Hypothesis {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS_ID)
    }
}

/// Generation budget for a source of `src_len` tokens.
pub fn max_decode_len(max_seq_len: usize, src_len: usize) -> usize {
    max_seq_len.min((1.5 * src_len as f64).ceil() as usize + 20)
}

/// Per-hypothesis self-attention keys and values, one flat [t × d] buffer
/// per decoder layer.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

/// Encoded source plus cross-attention keys and values for every layer.
pub struct Decoder<'a, T> {
    p: &'a Params<T>,
    cross_k: Vec<Vec<T>>,
    cross_v: Vec<Vec<T>>,
    mem_len: usize,
}

/// Attention of one query row over `n` cached key/value rows.
#[allow(clippy::too_many_arguments)]
fn attend_one<T: Real>(q: &[T], k: &[T], v: &[T], n: usize, heads: usize, bias: Option<(&[T], usize, usize, usize)>, out: &mut [T]) {
    let d = q.len();
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut s = vec![T::zero(); n];
    for h in 0..heads {
        let qh = &q[h * dh..(h + 1) * dh];
        for (j, sj) in s.iter_mut().enumerate() {
            let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
            *sj = qh.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
            if let Some((table, pos, buckets, max_distance)) = bias {
                *sj = *sj + table[rel_bucket(j as i64 - pos as i64, false, buckets, max_distance) * heads + h];
            }
        }
        crate::linalg::softmax_row(&mut s);
        let oh = &mut out[h * dh..(h + 1) * dh];
        oh.fill(T::zero());
        for (j, &pj) in s.iter().enumerate() {
            for (o, &vv) in oh.iter_mut().zip(&v[j * d + h * dh..j * d + (h + 1) * dh]) {
                *o = *o + pj * vv;
            }
        }
    }
}

impl<'a, T: Real> Decoder<'a, T> {
    pub fn new(p: &'a Params<T>, src: &[u32]) -> Result<Decoder<'a, T>, ModelError> {
        check_seq(&p.config, src)?;
        let (mem, seqs) = encode(p, &[src.to_vec()])?;
        let d = p.config.d_model;
        let m = seqs.total;
        let o = &p.layout.offsets;
        let project = |off: usize| {
            let mut out = vec![T::zero(); m * d];
            linear(&mem, &p.data[off..off + d * d], m, d, d, &mut out);
            out
        };
        let cross_k = o.dec.iter().map(|l| project(l.cross.k)).collect();
        let cross_v = o.dec.iter().map(|l| project(l.cross.v)).collect();
        Ok(Decoder { p, cross_k, cross_v, mem_len: m })
    }

    pub fn empty_cache(&self) -> Cache<T> {
        let l = self.p.config.n_layers;
        Cache { k: vec![Vec::new(); l], v: vec![Vec::new(); l] }
    }

    fn w(&self, off: usize, len: usize) -> &[T] {
        &self.p.data[off..off + len]
    }

    /// Feeds token `tokens[r]` at position `pos` to hypothesis `r` and returns
    /// next-token log-probabilities [rows × vocab].
    pub fn step(&self, tokens: &[u32], pos: usize, caches: &mut [&mut Cache<T>]) -> Vec<f64> {
        let cfg = &self.p.config;
        let o = &self.p.layout.offsets;
        let (d, dff, heads, vocab) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.vocab_size);
        let rows = tokens.len();
        let mut x: Vec<T> = tokens.iter().flat_map(|&t| self.w(o.embed + t as usize * d, d).to_vec()).collect();
        let mut xn = vec![T::zero(); rows * d];
        let mut ctx = vec![T::zero(); rows * d];
        let mut out = vec![T::zero(); rows * d];
        let table = self.w(o.dec_rel, cfg.rel_buckets * heads);
        for (l, lo) in o.dec.iter().enumerate() {
            rms_norm(&x, Some(self.w(lo.ln1, d)), d, &mut xn);
            let proj = |w: AttnOff, src: &[T]| {
                let mut q = vec![T::zero(); rows * d];
                let mut k = vec![T::zero(); rows * d];
                let mut v = vec![T::zero(); rows * d];
                linear(src, self.w(w.q, d * d), rows, d, d, &mut q);
                linear(src, self.w(w.k, d * d), rows, d, d, &mut k);
                linear(src, self.w(w.v, d * d), rows, d, d, &mut v);
                (q, k, v)
            };
            let (q, k, v) = proj(lo.self_attn, &xn);
            for (r, c) in caches.iter_mut().enumerate() {
                c.k[l].extend_from_slice(&k[r * d..(r + 1) * d]);
                c.v[l].extend_from_slice(&v[r * d..(r + 1) * d]);
                let bias = Some((table, pos, cfg.rel_buckets, cfg.rel_max_distance));
                attend_one(&q[r * d..(r + 1) * d], &c.k[l], &c.v[l], pos + 1, heads, bias, &mut ctx[r * d..(r + 1) * d]);
            }
            linear(&ctx, self.w(lo.self_attn.o, d * d), rows, d, d, &mut out);
            add_into(&mut x, &out);

            rms_norm(&x, Some(self.w(lo.ln2, d)), d, &mut xn);
            let mut q = vec![T::zero(); rows * d];
            linear(&xn, self.w(lo.cross.q, d * d), rows, d, d, &mut q);
            for r in 0..rows {
                let (ks, vs) = (&self.cross_k[l], &self.cross_v[l]);
                attend_one(&q[r * d..(r + 1) * d], ks, vs, self.mem_len, heads, None, &mut ctx[r * d..(r + 1) * d]);
            }
            linear(&ctx, self.w(lo.cross.o, d * d), rows, d, d, &mut out);
            add_into(&mut x, &out);

            rms_norm(&x, Some(self.w(lo.ln3, d)), d, &mut xn);
            let mut h = vec![T::zero(); rows * dff];
            linear(&xn, self.w(lo.ff.wi, d * dff), rows, d, dff, &mut h);
            for v in h.iter_mut() {
                *v = v.max(T::zero());
            }
            linear(&h, self.w(lo.ff.wo, dff * d), rows, dff, d, &mut out);
            add_into(&mut x, &out);
        }
        rms_norm(&x.clone(), None, d, &mut x);
        let mut logits = vec![T::zero(); rows * vocab];
        linear(&x, self.w(o.lm_head, d * vocab), rows, d, vocab, &mut logits);
        let mut lp = Vec::with_capacity(rows * vocab);
        for row in logits.chunks_exact(vocab) {
            let lse = log_sum_exp(row);
            lp.extend(row.iter().map(|&z| (z - lse).to_f64().unwrap_or(f64::NEG_INFINITY)));
        }
        lp
    }
}

/// Tokens the decoder may emit.
fn allowed(t: usize) -> bool {
    t as u32 != PAD_ID && t as u32 != SOS_ID
}

fn finish(tokens: Vec<u32>, log_prob: f64) -> Hypothesis {
    let generated = (tokens.len() - 1).max(1);
    Hypothesis { score: log_prob / generated as f64, tokens, log_prob }
}

/// Argmax decoding until EOS or `max_len` generated tokens.
pub fn greedy_decode<T: Real>(p: &Params<T>, src: &[u32], max_len: usize) -> Result<Hypothesis, ModelError> {
    let dec = Decoder::new(p, src)?;
    let mut cache = dec.empty_cache();
    let mut tokens = vec![SOS_ID];
    let mut log_prob = 0.0;
    let v = p.config.vocab_size;
    for pos in 0..max_len.min(p.config.max_seq_len) {
        let lp = dec.step(&tokens[pos..=pos], pos, &mut [&mut cache]);
        let best = (0..v).filter(|&t| allowed(t)).fold(None, |b: Option<usize>, t| match b {
            Some(b) if lp[b] >= lp[t] => Some(b),
            _ => Some(t),
        });
        let best = best.expect("vocabulary has emittable tokens");
        log_prob += lp[best];
        tokens.push(best as u32);
        if best as u32 == EOS_ID {
            break;
        }
    }
    Ok(finish(tokens, log_prob))
}

struct Live<T> {
    tokens: Vec<u32>,
    log_prob: f64,
    cache: Cache<T>,
}

/// Descending score, ties broken by token sequence for determinism.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search. Each step keeps the `beam_width` best extensions by
/// cumulative log-probability; extensions ending in EOS (or reaching
/// `max_len`) leave the beam as finished hypotheses. Returns the best
/// `beam_width` finished hypotheses by length-normalized score.
pub fn beam_decode<T: Real>(p: &Params<T>, src: &[u32], beam_width: usize, max_len: usize) -> Result<Vec<Hypothesis>, ModelError> {
    let beam_width = beam_width.max(1);
    let max_len = max_len.min(p.config.max_seq_len).max(1);
    let dec = Decoder::new(p, src)?;
    let v = p.config.vocab_size;
    let mut live = vec![Live { tokens: vec![SOS_ID], log_prob: 0.0, cache: dec.empty_cache() }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for pos in 0..max_len {
        let last: Vec<u32> = live.iter().map(|h| *h.tokens.last().expect("starts with SOS")).collect();
        let lp = {
            let mut caches: Vec<&mut Cache<T>> = live.iter_mut().map(|h| &mut h.cache).collect();
            dec.step(&last, pos, &mut caches)
        };
        let mut cand: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * v);
        for (r, h) in live.iter().enumerate() {
            for t in (0..v).filter(|&t| allowed(t)) {
                cand.push((h.log_prob + lp[r * v + t], r, t as u32));
            }
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cand.truncate(beam_width);
        let mut next = Vec::with_capacity(cand.len());
        for (score, r, t) in cand {
            let mut tokens = live[r].tokens.clone();
            tokens.push(t);
            if t == EOS_ID || pos + 1 == max_len {
                done.push(finish(tokens, score));
            } else {
                next.push(Live { tokens, log_prob: score, cache: live[r].cache.clone() });
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    done.sort_by(rank);
    done.truncate(beam_width);
    Ok(done)
}
