//! Forward and backward kernels over row-major activation buffers.

use crate::linalg::{gemm_into, MatRef};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

/// `out = x·w + b` with `x: n×din`, `w: din×dout`.
pub(crate) fn linear<T: Scalar>(x: &[T], n: usize, din: usize, w: &[T], b: &[T], dout: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), n * dout);
    for row in out.chunks_exact_mut(dout) {
        row.copy_from_slice(&b[..dout]);
    }
    gemm_into(T::one(), MatRef::dense(x, n, din), MatRef::dense(w, din, dout), T::one(), out, dout);
}

/// Accumulates `dw += xᵀ·dy`, `db += Σ dy`; writes (or adds, when
/// `accumulate`) `dx = dy·wᵀ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Scalar>(
    x: &[T],
    n: usize,
    din: usize,
    w: &[T],
    dout: usize,
    dy: &[T],
    dx: Option<&mut [T]>,
    accumulate: bool,
    dw: &mut [T],
    db: &mut [T],
) {
    gemm_into(T::one(), MatRef::dense(x, n, din).t(), MatRef::dense(dy, n, dout), T::one(), dw, dout);
    for row in dy.chunks_exact(dout) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    if let Some(dx) = dx {
        let beta = if accumulate { T::one() } else { T::zero() };
        gemm_into(T::one(), MatRef::dense(dy, n, dout), MatRef::dense(w, din, dout).t(), beta, dx, din);
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layernorm<T: Scalar>(x: &[T], d: usize, g: &[T], b: &[T], y: &mut [T]) -> LnCache<T> {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let eps = T::lit(LN_EPS);
    let inv_d = T::one() / T::from_usize_lossy(d);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        let xh = &mut xhat[i * d..(i + 1) * d];
        let yr = &mut y[i * d..(i + 1) * d];
        for j in 0..d {
            let v = (row[j] - mean) * r;
            xh[j] = v;
            yr[j] = v * g[j] + b[j];
        }
    }
    LnCache { xhat, rstd }
}

/// Adds the input gradient into `dx`.
pub(crate) fn layernorm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    d: usize,
    g: &[T],
    dx: &mut [T],
    dg: &mut [T],
    db: &mut [T],
) {
    let n = cache.rstd.len();
    let inv_d = T::one() / T::from_usize_lossy(d);
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut sum_dyg = T::zero();
        let mut sum_dyg_xh = T::zero();
        for j in 0..d {
            let dyg = dyr[j] * g[j];
            sum_dyg += dyg;
            sum_dyg_xh += dyg * xh[j];
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
        }
        let mean_dyg = sum_dyg * inv_d;
        let mean_dyg_xh = sum_dyg_xh * inv_d;
        let r = cache.rstd[i];
        let dxr = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            dxr[j] += r * (dyr[j] * g[j] - mean_dyg - xh[j] * mean_dyg_xh);
        }
    }
}

const GELU_A: f64 = 0.044_715;

/// `tanh` through `exp`, several times faster than libm's `tanh`.
#[inline]
fn tanh_exp<T: Scalar>(z: T) -> T {
    let two = T::lit(2.0);
    T::one() - two / ((two * z).exp() + T::one())
}

/// Tanh-approximated GELU.
pub(crate) fn gelu<T: Scalar>(x: &[T], y: &mut [T]) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    for (o, &v) in y.iter_mut().zip(x) {
        let t = tanh_exp(c * (v + a * v * v * v));
        *o = half * v * (T::one() + t);
    }
}

/// `dx = dy · gelu'(x)`, overwriting `dx`.
pub(crate) fn gelu_backward<T: Scalar>(x: &[T], dy: &[T], dx: &mut [T]) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(GELU_A);
    let three_a = T::lit(3.0 * GELU_A);
    let half = T::lit(0.5);
    for ((o, &v), &g) in dx.iter_mut().zip(x).zip(dy) {
        let t = tanh_exp(c * (v + a * v * v * v));
        let dt = (T::one() - t * t) * c * (T::one() + three_a * v * v);
        *o = g * (half * (T::one() + t) + half * v * dt);
    }
}

/// Location of one projection (q, k or v) inside a packed row buffer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Slot {
    pub stride: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnShape {
    pub batch: usize,
    pub tq: usize,
    pub tk: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub causal: bool,
}

impl AttnShape {
    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn probs_len(&self) -> usize {
        self.batch * self.heads * self.tq * self.tk
    }

    fn key_limit(&self, i: usize, key_len: usize) -> usize {
        if self.causal {
            (i + 1).min(key_len)
        } else {
            key_len
        }
    }
}

/// Multi-head scaled dot-product attention. `out` is `batch·tq × width`.
/// Key `j` is visible to query `i` iff `j < key_len[b]` and, when causal,
/// `j ≤ i`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention<T: Scalar>(
    qbuf: &[T],
    q: Slot,
    kvbuf: &[T],
    k: Slot,
    v: Slot,
    key_lens: &[usize],
    s: AttnShape,
    probs: &mut [T],
    out: &mut [T],
) {
    let (dh, width) = (s.head_dim, s.width());
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    for b in 0..s.batch {
        for h in 0..s.heads {
            let p = &mut probs[((b * s.heads + h) * s.tq) * s.tk..((b * s.heads + h) * s.tq + s.tq) * s.tk];
            let qv = MatRef::new(qbuf, b * s.tq * q.stride + q.offset + h * dh, s.tq, dh, q.stride, 1);
            let kv = MatRef::new(kvbuf, b * s.tk * k.stride + k.offset + h * dh, s.tk, dh, k.stride, 1);
            gemm_into(scale, qv, kv.t(), T::zero(), p, s.tk);
            for i in 0..s.tq {
                let lim = s.key_limit(i, key_lens[b]);
                let row = &mut p[i * s.tk..(i + 1) * s.tk];
                softmax_prefix(row, lim);
            }
            let vv = MatRef::new(kvbuf, b * s.tk * v.stride + v.offset + h * dh, s.tk, dh, v.stride, 1);
            let o = &mut out[b * s.tq * width + h * dh..];
            gemm_into(T::one(), MatRef::dense(p, s.tq, s.tk), vv, T::zero(), o, width);
        }
    }
}

/// Softmax over `row[..lim]`, zeros elsewhere.
pub(crate) fn softmax_prefix<T: Scalar>(row: &mut [T], lim: usize) {
    if lim == 0 {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let max = row[..lim].iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in &mut row[..lim] {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in &mut row[..lim] {
        *v *= inv;
    }
    for v in &mut row[lim..] {
        *v = T::zero();
    }
}

/// Gradients of [`attention`]. `dq` receives query gradients (overwritten
/// in its slot); key/value gradients are accumulated into `dkv`, or into
/// `dq`'s buffer when `dkv` is `None` (packed self-attention).
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<T: Scalar>(
    qbuf: &[T],
    q: Slot,
    kvbuf: &[T],
    k: Slot,
    v: Slot,
    s: AttnShape,
    probs: &[T],
    dout: &[T],
    dq: &mut [T],
    mut dkv: Option<&mut [T]>,
) {
    let (dh, width) = (s.head_dim, s.width());
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let mut dp = vec![T::zero(); s.tq * s.tk];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let p = &probs[((b * s.heads + h) * s.tq) * s.tk..((b * s.heads + h) * s.tq + s.tq) * s.tk];
            let pm = MatRef::dense(p, s.tq, s.tk);
            let dov = MatRef::new(dout, b * s.tq * width + h * dh, s.tq, dh, width, 1);
            let vv = MatRef::new(kvbuf, b * s.tk * v.stride + v.offset + h * dh, s.tk, dh, v.stride, 1);
            let kv = MatRef::new(kvbuf, b * s.tk * k.stride + k.offset + h * dh, s.tk, dh, k.stride, 1);
            let qv = MatRef::new(qbuf, b * s.tq * q.stride + q.offset + h * dh, s.tq, dh, q.stride, 1);

            // dV += Pᵀ·dO
            {
                let dst = match dkv.as_deref_mut() {
                    Some(buf) => buf,
                    None => &mut *dq,
                };
                gemm_into(T::one(), pm.t(), dov, T::one(), &mut dst[b * s.tk * v.stride + v.offset + h * dh..], v.stride);
            }
            // dP = dO·Vᵀ, then dS = P ⊙ (dP − rowsum(P ⊙ dP))
            gemm_into(T::one(), dov, vv.t(), T::zero(), &mut dp, s.tk);
            for i in 0..s.tq {
                let pr = &p[i * s.tk..(i + 1) * s.tk];
                let dr = &mut dp[i * s.tk..(i + 1) * s.tk];
                let dot: T = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                for (d, &pv) in dr.iter_mut().zip(pr) {
                    *d = pv * (*d - dot);
                }
            }
            let dsm = MatRef::dense(&dp, s.tq, s.tk);
            // dQ = scale·dS·K
            gemm_into(scale, dsm, kv, T::zero(), &mut dq[b * s.tq * q.stride + q.offset + h * dh..], q.stride);
            // dK += scale·dSᵀ·Q
            let dst = match dkv.as_deref_mut() {
                Some(buf) => buf,
                None => &mut *dq,
            };
            gemm_into(scale, dsm.t(), qv, T::one(), &mut dst[b * s.tk * k.stride + k.offset + h * dh..], k.stride);
        }
    }
}
