//! Forward kernels with paired hand-derived backward passes.
//!
//! Every forward is a pure function of its inputs. Backwards return gradient
//! contributions; accumulation into [`super::ParamWithGrad`] is the caller's
//! job so a single forward graph can be replayed against shared parameters.

use super::counter::{self, FLOPS_PER_ACTIVATION};
use super::matrix::Matrix;
use super::real::Real;
use crate::error::{Error, Result};

/// Standard product, kept as a free function to pair with its backward.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

/// Gradients of `a * b` given the upstream gradient: `(dout * b^T, a^T * dout)`.
pub fn matmul_backward<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    dout: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if dout.shape() != (a.rows(), b.cols()) {
        return Err(Error::Dimension {
            op: "matmul_backward",
            lhs: (a.rows(), b.cols()),
            rhs: dout.shape(),
        });
    }
    let da = dout.matmul_transpose_b(b)?;
    let db = a.matmul_transpose_a(dout)?;
    Ok((da, db))
}

fn silu_prime<T: Real>(x: T) -> T {
    let s = x.sigmoid();
    s * (T::ONE + x * (T::ONE - s))
}

/// Intermediates of one SwiGLU feed-forward application.
pub struct SwigluCache<T: Real> {
    pub up: Matrix<T>,
    pub pre_gate: Matrix<T>,
    pub gate: Matrix<T>,
    pub hidden: Matrix<T>,
}

pub struct SwigluGrads<T: Real> {
    pub dx: Matrix<T>,
    pub dwu: Matrix<T>,
    pub dwv: Matrix<T>,
    pub dwo: Matrix<T>,
}

/// Dimension-preserving gated feed-forward:
/// `out = ((x Wu) .* silu(x Wv)) Wo`, applied row-wise, no biases.
pub fn swigluffn_forward<T: Real>(
    x: &Matrix<T>,
    wu: &Matrix<T>,
    wv: &Matrix<T>,
    wo: &Matrix<T>,
) -> Result<Matrix<T>> {
    let (out, _) = swigluffn_forward_cached(x, wu, wv, wo)?;
    Ok(out)
}

pub fn swigluffn_forward_cached<T: Real>(
    x: &Matrix<T>,
    wu: &Matrix<T>,
    wv: &Matrix<T>,
    wo: &Matrix<T>,
) -> Result<(Matrix<T>, SwigluCache<T>)> {
    if wu.shape() != wv.shape() || wu.rows() != x.cols() || wo.shape() != (wu.cols(), x.cols()) {
        return Err(Error::Dimension {
            op: "swigluffn_forward",
            lhs: x.shape(),
            rhs: wu.shape(),
        });
    }
    let up = x.matmul(wu)?;
    let pre_gate = x.matmul(wv)?;
    let mut gate = pre_gate.clone();
    for g in gate.data_mut() {
        *g = g.silu();
    }
    counter::add_flops(gate.data().len() as u64 * FLOPS_PER_ACTIVATION);
    let hidden = up.hadamard(&gate)?;
    let out = hidden.matmul(wo)?;
    Ok((
        out,
        SwigluCache {
            up,
            pre_gate,
            gate,
            hidden,
        },
    ))
}

pub fn swigluffn_backward<T: Real>(
    x: &Matrix<T>,
    cache: &SwigluCache<T>,
    wu: &Matrix<T>,
    wv: &Matrix<T>,
    wo: &Matrix<T>,
    dout: &Matrix<T>,
) -> Result<SwigluGrads<T>> {
    let (dhidden, dwo) = matmul_backward(&cache.hidden, wo, dout)?;
    let dup = dhidden.hadamard(&cache.gate)?;
    let dgate = dhidden.hadamard(&cache.up)?;
    let mut dpre = dgate;
    for (d, &v) in dpre.data_mut().iter_mut().zip(cache.pre_gate.data()) {
        *d *= silu_prime(v);
    }
    counter::add_flops(dpre.data().len() as u64 * FLOPS_PER_ACTIVATION);
    let (dx_u, dwu) = matmul_backward(x, wu, &dup)?;
    let (dx_v, dwv) = matmul_backward(x, wv, &dpre)?;
    let mut dx = dx_u;
    dx.add_assign(&dx_v)?;
    Ok(SwigluGrads { dx, dwu, dwv, dwo })
}

/// Intermediates of a layer-norm application.
pub struct LayerNormCache<T: Real> {
    pub xhat: Matrix<T>,
    pub rstd: Vec<T>,
}

pub struct LayerNormGrads<T: Real> {
    pub dx: Matrix<T>,
    pub dgamma: Matrix<T>,
    pub dbeta: Matrix<T>,
}

/// Row-wise normalization over the last axis, then affine with gamma/beta.
pub fn layer_norm<T: Real>(
    x: &Matrix<T>,
    gamma: &Matrix<T>,
    beta: &Matrix<T>,
    eps: f64,
) -> Result<Matrix<T>> {
    let (out, _) = layer_norm_cached(x, gamma, beta, eps)?;
    Ok(out)
}

pub fn layer_norm_cached<T: Real>(
    x: &Matrix<T>,
    gamma: &Matrix<T>,
    beta: &Matrix<T>,
    eps: f64,
) -> Result<(Matrix<T>, LayerNormCache<T>)> {
    let d = x.cols();
    if d == 0 {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape(),
            rhs: (1, 0),
        });
    }
    if gamma.cols() != d || beta.cols() != d {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape(),
            rhs: gamma.shape(),
        });
    }
    let inv_d = T::from_f64(1.0 / d as f64);
    let eps = T::from_f64(eps);
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut rstd = Vec::with_capacity(x.rows());
    let mut out = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        let row = x.row(i);
        let mut mean = T::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let r = T::ONE / (var + eps).sqrt();
        rstd.push(r);
        let xh = xhat.row_mut(i);
        let o = out.row_mut(i);
        for j in 0..d {
            xh[j] = (row[j] - mean) * r;
            o[j] = xh[j] * gamma.data()[j] + beta.data()[j];
        }
    }
    counter::add_flops((x.rows() * d) as u64 * FLOPS_PER_ACTIVATION);
    Ok((out, LayerNormCache { xhat, rstd }))
}

pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gamma: &Matrix<T>,
    dout: &Matrix<T>,
) -> Result<LayerNormGrads<T>> {
    let (rows, d) = dout.shape();
    if cache.xhat.shape() != (rows, d) {
        return Err(Error::Dimension {
            op: "layer_norm_backward",
            lhs: cache.xhat.shape(),
            rhs: dout.shape(),
        });
    }
    let inv_d = T::from_f64(1.0 / d as f64);
    let mut dx = Matrix::zeros(rows, d);
    let mut dgamma = Matrix::zeros(1, d);
    let mut dbeta = Matrix::zeros(1, d);
    for i in 0..rows {
        let dy = dout.row(i);
        let xh = cache.xhat.row(i);
        let r = cache.rstd[i];
        let mut m1 = T::ZERO;
        let mut m2 = T::ZERO;
        for j in 0..d {
            let dxh = dy[j] * gamma.data()[j];
            m1 += dxh;
            m2 += dxh * xh[j];
            dgamma.data_mut()[j] += dy[j] * xh[j];
            dbeta.data_mut()[j] += dy[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        let dxr = dx.row_mut(i);
        for j in 0..d {
            let dxh = dy[j] * gamma.data()[j];
            dxr[j] = (dxh - m1 - xh[j] * m2) * r;
        }
    }
    counter::add_flops((rows * d) as u64 * FLOPS_PER_ACTIVATION);
    Ok(LayerNormGrads { dx, dgamma, dbeta })
}

/// Parameter-free row-wise RMS normalization cache.
pub struct RmsNormCache<T: Real> {
    pub normalized: Matrix<T>,
    pub rstd: Vec<T>,
}

/// Row-wise `y = x / sqrt(mean(x^2) + eps)`; scale-free token conditioning.
pub fn rms_norm_cached<T: Real>(x: &Matrix<T>, eps: f64) -> (Matrix<T>, RmsNormCache<T>) {
    let (rows, d) = x.shape();
    let inv_d = T::from_f64(1.0 / d.max(1) as f64);
    let eps = T::from_f64(eps);
    let mut out = Matrix::zeros(rows, d);
    let mut rstd = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mut ms = T::ZERO;
        for &v in row {
            ms += v * v;
        }
        ms *= inv_d;
        let r = T::ONE / (ms + eps).sqrt();
        rstd.push(r);
        for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
            *o = v * r;
        }
    }
    counter::add_flops((rows * d) as u64 * FLOPS_PER_ACTIVATION);
    let normalized = out.clone();
    (out, RmsNormCache { normalized, rstd })
}

pub fn rms_norm_backward<T: Real>(cache: &RmsNormCache<T>, dout: &Matrix<T>) -> Matrix<T> {
    let (rows, d) = dout.shape();
    let inv_d = T::from_f64(1.0 / d.max(1) as f64);
    let mut dx = Matrix::zeros(rows, d);
    for i in 0..rows {
        let g = dout.row(i);
        let y = cache.normalized.row(i);
        let r = cache.rstd[i];
        let mut dot = T::ZERO;
        for (&gi, &yi) in g.iter().zip(y) {
            dot += gi * yi;
        }
        dot *= inv_d;
        for (o, (&gi, &yi)) in dx.row_mut(i).iter_mut().zip(g.iter().zip(y)) {
            *o = (gi - yi * dot) * r;
        }
    }
    counter::add_flops((rows * d) as u64 * FLOPS_PER_ACTIVATION);
    dx
}

/// Numerically stabilized softmax over a logit vector.
pub fn softmax_row<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Dimension {
            op: "softmax_row",
            lhs: (1, 0),
            rhs: (1, 1),
        });
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Real>(values: &mut [T]) {
    let mut max = values[0];
    for &v in values.iter() {
        max = max.maximum(v);
    }
    let mut sum = T::ZERO;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::ONE / sum;
    for v in values.iter_mut() {
        *v *= inv;
    }
    counter::add_flops(values.len() as u64 * FLOPS_PER_ACTIVATION);
}

/// Jacobian-vector product of softmax: `ds = alpha .* (dalpha - <dalpha, alpha>)`.
pub fn softmax_backward<T: Real>(alpha: &[T], dalpha: &[T]) -> Vec<T> {
    let mut dot = T::ZERO;
    for (&a, &d) in alpha.iter().zip(dalpha) {
        dot += a * d;
    }
    counter::add_flops(alpha.len() as u64 * 4);
    alpha
        .iter()
        .zip(dalpha)
        .map(|(&a, &d)| a * (d - dot))
        .collect()
}
