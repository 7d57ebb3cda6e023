//! Multi-head attention over packed variable-length sequences.

use crate::linalg::{gemm, softmax_row, Real, View};

/// Row ranges of the sequences in a packed batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seqs {
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
    pub total: usize,
}

impl Seqs {
    pub fn new(lens: impl IntoIterator<Item = usize>) -> Seqs {
        let lens: Vec<usize> = lens.into_iter().collect();
        let mut starts = Vec::with_capacity(lens.len());
        let mut total = 0;
        for &l in &lens {
            starts.push(total);
            total += l;
        }
        Seqs { starts, lens, total }
    }

    pub fn len(&self) -> usize {
        self.lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lens.is_empty()
    }
}

/// Bucket of the offset `rel = key − query`, following the T5 scheme: exact
/// buckets for small offsets, logarithmic ones up to `max_distance`.
/// Unidirectional tables only distinguish how far a key lies in the past.
pub fn rel_bucket(rel: i64, bidirectional: bool, num_buckets: usize, max_distance: usize) -> usize {
    let mut n = -rel;
    let mut nb = num_buckets;
    let mut ret = 0;
    if bidirectional {
        nb /= 2;
        if n < 0 {
            ret += nb;
            n = -n;
        }
    } else {
        n = n.max(0);
    }
    let n = n as usize;
    let max_exact = nb / 2;
    if n < max_exact {
        return ret + n;
    }
    let log_ratio = (n as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln();
    let large = max_exact + (log_ratio * (nb - max_exact) as f64) as usize;
    ret + large.min(nb - 1)
}

/// Relative-position bias source: table [buckets × heads] and direction.
#[derive(Debug, Clone, Copy)]
pub struct RelBias<'a, T> {
    pub table: &'a [T],
    pub bidirectional: bool,
    pub max_distance: usize,
}

impl<T> RelBias<'_, T> {
    fn buckets(&self, heads: usize) -> usize {
        self.table.len() / heads
    }

    pub fn index(&self, i: usize, j: usize, heads: usize, h: usize) -> usize {
        rel_bucket(j as i64 - i as i64, self.bidirectional, self.buckets(heads), self.max_distance) * heads + h
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Geometry<'a> {
    pub q: &'a Seqs,
    pub k: &'a Seqs,
    pub heads: usize,
    pub d: usize,
    pub causal: bool,
    /// Absolute position of each sequence's first query row, for incremental
    /// decoding where queries start after the cached keys.
    pub q_pos: Option<&'a [usize]>,
}

impl Geometry<'_> {
    fn dh(&self) -> usize {
        self.d / self.heads
    }

    /// Offsets of the per-(sequence, head) probability blocks.
    pub fn prob_offsets(&self) -> (Vec<usize>, usize) {
        let mut offs = Vec::with_capacity(self.q.len());
        let mut total = 0;
        for b in 0..self.q.len() {
            offs.push(total);
            total += self.heads * self.q.lens[b] * self.k.lens[b];
        }
        (offs, total)
    }

    fn pos(&self, b: usize, i: usize) -> usize {
        self.q_pos.map_or(i, |p| p[b] + i)
    }
}

/// Scaled dot-product attention. Writes per-head context into `ctx`
/// ([q rows × d]) and the attention weights into `probs`.
pub fn attend<T: Real>(q: &[T], k: &[T], v: &[T], g: Geometry, bias: Option<RelBias<T>>, probs: &mut Vec<T>, ctx: &mut [T]) {
    let (d, dh, heads) = (g.d, g.dh(), g.heads);
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let (offs, total) = g.prob_offsets();
    probs.clear();
    probs.resize(total, T::zero());
    for b in 0..g.q.len() {
        let (tq, tk) = (g.q.lens[b], g.k.lens[b]);
        let (q0, k0) = (g.q.starts[b] * d, g.k.starts[b] * d);
        for h in 0..heads {
            let off = offs[b] + h * tq * tk;
            let block = &mut probs[off..off + tq * tk];
            let kt = View { off: k0 + h * dh, rs: 1, cs: d };
            gemm(tq, dh, tk, scale, q, View { off: q0 + h * dh, rs: d, cs: 1 }, k, kt, T::zero(), block, View::at(0, tk));
            for i in 0..tq {
                let row = &mut block[i * tk..(i + 1) * tk];
                let pi = g.pos(b, i);
                if let Some(rb) = bias {
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = *s + rb.table[rb.index(pi, j, heads, h)];
                    }
                }
                if g.causal {
                    for s in row.iter_mut().skip(pi + 1) {
                        *s = T::neg_infinity();
                    }
                }
                softmax_row(row);
            }
            let vv = View { off: k0 + h * dh, rs: d, cs: 1 };
            let cv = View { off: q0 + h * dh, rs: d, cs: 1 };
            gemm(tq, tk, dh, T::one(), block, View::at(0, tk), v, vv, T::zero(), ctx, cv);
        }
    }
}

/// Gradients of [`attend`]; accumulates into `dq`, `dk`, `dv` and `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn attend_backward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dctx: &[T],
    g: Geometry,
    bias: Option<RelBias<T>>,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
    mut dbias: Option<&mut [T]>,
) {
    let (d, dh, heads) = (g.d, g.dh(), g.heads);
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let (offs, _) = g.prob_offsets();
    let mut tmp = Vec::new();
    for b in 0..g.q.len() {
        let (tq, tk) = (g.q.lens[b], g.k.lens[b]);
        let (q0, k0) = (g.q.starts[b] * d, g.k.starts[b] * d);
        for h in 0..heads {
            let off = offs[b] + h * tq * tk;
            let p = &probs[off..off + tq * tk];
            let qv = View { off: q0 + h * dh, rs: d, cs: 1 };
            let kv = View { off: k0 + h * dh, rs: d, cs: 1 };
            tmp.clear();
            tmp.resize(tq * tk, T::zero());
            gemm(tq, dh, tk, T::one(), dctx, qv, v, kv.t(), T::zero(), &mut tmp, View::at(0, tk));
            gemm(tk, tq, dh, T::one(), p, View::at(0, tk).t(), dctx, qv, T::one(), dv, kv);
            for i in 0..tq {
                let (pr, sr) = (&p[i * tk..(i + 1) * tk], &mut tmp[i * tk..(i + 1) * tk]);
                let dot: T = pr.iter().zip(sr.iter()).map(|(&a, &b)| a * b).sum();
                for (s, &pp) in sr.iter_mut().zip(pr) {
                    *s = pp * (*s - dot);
                }
                if let (Some(rb), Some(db)) = (bias, dbias.as_deref_mut()) {
                    let pi = g.pos(b, i);
                    for (j, &s) in sr.iter().enumerate() {
                        let idx = rb.index(pi, j, heads, h);
                        db[idx] = db[idx] + s;
                    }
                }
            }
            gemm(tq, tk, dh, scale, &tmp, View::at(0, tk), k, kv, T::one(), dq, qv);
            gemm(tk, tq, dh, scale, &tmp, View::at(0, tk).t(), q, qv, T::one(), dk, kv);
        }
    }
}
