//! Dense kernels over flat row-major buffers.

use num_traits::Float;

pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `c = alpha * a·b + beta * c` with element strides.
    ///
    /// # Safety
    /// Every addressed element must lie inside the allocations behind the
    /// pointers, and `c` must not overlap `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self;
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f32 {
        x as f32
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f64 {
        x
    }
}

/// A matrix inside a flat buffer: element (i, j) lives at `off + i*rs + j*cs`.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    /// Row-major block starting at `off` with leading dimension `ld`.
    pub fn at(off: usize, ld: usize) -> View {
        View { off, rs: ld, cs: 1 }
    }

    pub fn t(self) -> View {
        View { off: self.off, rs: self.cs, cs: self.rs }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        self.off + (rows.max(1) - 1) * self.rs + (cols.max(1) - 1) * self.cs
    }
}

/// `c[m×n] = alpha · a[m×k] · b[k×n] + beta · c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, alpha: T, a: &[T], av: View, b: &[T], bv: View, beta: T, c: &mut [T], cv: View) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(av.last(m, k) < a.len().max(1) || k == 0, "a out of bounds");
    assert!(bv.last(k, n) < b.len().max(1) || k == 0, "b out of bounds");
    assert!(cv.last(m, n) < c.len(), "c out of bounds");
    // SAFETY: bounds checked above; `c` is a unique borrow so it cannot alias.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        )
    }
}

/// `y[rows×out] = x[rows×inp] · w[inp×out]` (overwrites `y`).
pub fn linear<T: Real>(x: &[T], w: &[T], rows: usize, inp: usize, out: usize, y: &mut [T]) {
    gemm(rows, inp, out, T::one(), x, View::at(0, inp), w, View::at(0, out), T::zero(), y, View::at(0, out));
}

/// Accumulates `dw += xᵀ·dy` and `dx += dy·wᵀ` for [`linear`].
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    rows: usize,
    inp: usize,
    out: usize,
    dx: Option<&mut [T]>,
    dw: &mut [T],
) {
    gemm(inp, rows, out, T::one(), x, View::at(0, inp).t(), dy, View::at(0, out), T::one(), dw, View::at(0, out));
    if let Some(dx) = dx {
        gemm(rows, out, inp, T::one(), dy, View::at(0, out), w, View::at(0, out).t(), T::one(), dx, View::at(0, inp));
    }
}

pub const NORM_EPS: f64 = 1e-6;

/// Row-wise RMS normalization with optional per-feature scale. Returns the
/// per-row reciprocal RMS for the backward pass.
pub fn rms_norm<T: Real>(x: &[T], scale: Option<&[T]>, d: usize, y: &mut [T]) -> Vec<T> {
    let eps = T::of(NORM_EPS);
    let dn = T::of(d as f64);
    let mut inv = Vec::with_capacity(x.len() / d);
    for (xr, yr) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)) {
        let ms = xr.iter().map(|&v| v * v).sum::<T>() / dn;
        let r = (ms + eps).sqrt().recip();
        inv.push(r);
        match scale {
            Some(g) => {
                for ((o, &v), &s) in yr.iter_mut().zip(xr).zip(g) {
                    *o = v * r * s;
                }
            }
            None => {
                for (o, &v) in yr.iter_mut().zip(xr) {
                    *o = v * r;
                }
            }
        }
    }
    inv
}

/// Backward of [`rms_norm`]: accumulates into `dx` and `dscale`.
pub fn rms_norm_backward<T: Real>(
    x: &[T],
    inv: &[T],
    scale: Option<&[T]>,
    dy: &[T],
    d: usize,
    dx: &mut [T],
    mut dscale: Option<&mut [T]>,
) {
    let dn = T::of(d as f64);
    let mut g = vec![T::zero(); d];
    for (((xr, &r), dyr), dxr) in x.chunks_exact(d).zip(inv).zip(dy.chunks_exact(d)).zip(dx.chunks_exact_mut(d)) {
        for j in 0..d {
            g[j] = match scale {
                Some(s) => dyr[j] * s[j],
                None => dyr[j],
            };
            if let Some(ds) = dscale.as_deref_mut() {
                ds[j] = ds[j] + dyr[j] * xr[j] * r;
            }
        }
        // x̂ = x·r;  dx = r·(g − x̂·mean(g·x̂))
        let dot = (0..d).map(|j| g[j] * xr[j] * r).sum::<T>() / dn;
        for j in 0..d {
            dxr[j] = dxr[j] + r * (g[j] - xr[j] * r * dot);
        }
    }
}

/// In-place numerically stable softmax of one row.
pub fn softmax_row<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = sum.recip();
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}

/// Natural log of the softmax normalizer of one row.
pub fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a = *a + v;
    }
}
