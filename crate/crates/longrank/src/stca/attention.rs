//! Single-query multi-head cross attention from the target to the history.
//!
//! Two algebraically identical execution paths exist. The standard form
//! projects every history token into per-head key/value spaces before
//! scoring. The reordered form folds the query through the key projection
//! first (`u = (q Wq) Wk^T`), scores directly against the raw token matrix,
//! reduces it with the attention weights, and only then applies the value
//! projection. No length-L projection or intermediate is ever materialized.

use super::params::AttentionParams;
use crate::error::{Error, Result};
use crate::numerics::{counter, softmax_backward, softmax_in_place, Matrix, Real};

/// Borrowed view over a contiguous block of key rows, so ragged segments can
/// attend without copying.
#[derive(Clone, Copy)]
pub struct KeysView<'a, T: Real> {
    data: &'a [T],
    rows: usize,
    cols: usize,
}

impl<'a, T: Real> KeysView<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        KeysView { data, rows, cols }
    }

    pub fn from_matrix(m: &'a Matrix<T>) -> Self {
        KeysView {
            data: m.data(),
            rows: m.rows(),
            cols: m.cols(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Reusable scratch for the reordered path; sized once per batch so the
/// attention itself stays allocation-free.
pub struct AttnScratch<T: Real> {
    qh: Vec<T>,
    u: Vec<T>,
    scores: Vec<T>,
    ctx: Vec<T>,
    concat: Vec<T>,
}

impl<T: Real> AttnScratch<T> {
    pub fn new(d: usize, head_dim: usize, max_len: usize) -> Self {
        counter::add_alloc_entries((max_len + 3 * d + head_dim) as u64);
        AttnScratch {
            qh: vec![T::ZERO; head_dim],
            u: vec![T::ZERO; d],
            scores: vec![T::ZERO; max_len],
            ctx: vec![T::ZERO; d],
            concat: vec![T::ZERO; d],
        }
    }
}

fn check_inputs<T: Real>(q: &Matrix<T>, len: usize, cols: usize, d: usize) -> Result<()> {
    if q.shape() != (1, d) || cols != d {
        return Err(Error::Dimension {
            op: "cross_attention",
            lhs: q.shape(),
            rhs: (len, cols),
        });
    }
    if len == 0 {
        return Err(Error::EmptyHistory { segment: 0 });
    }
    Ok(())
}

/// Standard-form attention: materializes per-head `X Wk` and `X Wv`.
///
/// Kept as the reference side of the dual-path oracle; production execution
/// uses the reordered form.
pub fn cross_attention_layer<T: Real>(
    q: &Matrix<T>,
    keys: &Matrix<T>,
    attn: &AttentionParams<T>,
) -> Result<Matrix<T>> {
    let d = attn.wo.value.rows();
    let heads = attn.wq.len();
    let dh = d / heads;
    check_inputs(q, keys.rows(), keys.cols(), d)?;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut concat = Matrix::zeros(1, d);
    for r in 0..heads {
        let k = keys.matmul(&attn.wk[r].value)?;
        let v = keys.matmul(&attn.wv[r].value)?;
        let qh = q.matmul(&attn.wq[r].value)?;
        let mut scores = qh.matmul_transpose_b(&k)?;
        scores.scale(scale);
        softmax_in_place(scores.data_mut());
        let outh = scores.matmul(&v)?;
        concat.row_mut(0)[r * dh..(r + 1) * dh].copy_from_slice(outh.row(0));
    }
    concat.matmul(&attn.wo.value)
}

/// Reordered single-query attention over a key view, writing into `out`.
fn reordered_into<T: Real>(
    q: &[T],
    keys: KeysView<'_, T>,
    attn: &AttentionParams<T>,
    scratch: &mut AttnScratch<T>,
    out: &mut [T],
) {
    let d = attn.wo.value.rows();
    let heads = attn.wq.len();
    let dh = d / heads;
    let len = keys.rows();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let scores = &mut scratch.scores[..len];
    for r in 0..heads {
        let wq = &attn.wq[r].value;
        let wk = &attn.wk[r].value;
        let wv = &attn.wv[r].value;
        // qh = q Wq
        for c in 0..dh {
            let mut acc = T::ZERO;
            for (i, &qi) in q.iter().enumerate() {
                acc += qi * wq.get(i, c);
            }
            scratch.qh[c] = acc;
        }
        // u = qh Wk^T, one d-vector replacing L key projections
        for i in 0..d {
            let mut acc = T::ZERO;
            let wrow = wk.row(i);
            for (c, &qh) in scratch.qh.iter().enumerate() {
                acc += qh * wrow[c];
            }
            scratch.u[i] = acc;
        }
        counter::add_macs(2 * (d * dh) as u64);
        // scores over raw tokens
        for (j, s) in scores.iter_mut().enumerate() {
            let row = keys.row(j);
            let mut acc = T::ZERO;
            for (&ui, &xi) in scratch.u.iter().zip(row) {
                acc += ui * xi;
            }
            *s = acc * scale;
        }
        counter::add_macs((len * d) as u64);
        counter::add_flops(len as u64);
        softmax_in_place(scores);
        // ctx = alpha X
        scratch.ctx.iter_mut().for_each(|v| *v = T::ZERO);
        for (j, &a) in scores.iter().enumerate() {
            let row = keys.row(j);
            for (c, &xi) in scratch.ctx.iter_mut().zip(row) {
                *c += a * xi;
            }
        }
        counter::add_macs((len * d) as u64);
        // head output = ctx Wv
        for c in 0..dh {
            let mut acc = T::ZERO;
            for (i, &x) in scratch.ctx.iter().enumerate() {
                acc += x * wv.get(i, c);
            }
            scratch.concat[r * dh + c] = acc;
        }
        counter::add_macs((d * dh) as u64);
    }
    let wo = &attn.wo.value;
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = T::ZERO;
        for (i, &ci) in scratch.concat.iter().enumerate() {
            acc += ci * wo.get(i, j);
        }
        *o = acc;
    }
    counter::add_macs((d * d) as u64);
}

/// Reordered-form attention; mathematically identical to
/// [`cross_attention_layer`] while consuming the raw token matrix directly.
pub fn cross_attention_layer_reordered<T: Real>(
    q: &Matrix<T>,
    keys: &Matrix<T>,
    attn: &AttentionParams<T>,
) -> Result<Matrix<T>> {
    let d = attn.wo.value.rows();
    check_inputs(q, keys.rows(), keys.cols(), d)?;
    let mut scratch = AttnScratch::new(d, d / attn.wq.len(), keys.rows());
    let mut out = Matrix::zeros(1, d);
    reordered_into(
        q.row(0),
        KeysView::from_matrix(keys),
        attn,
        &mut scratch,
        out.row_mut(0),
    );
    Ok(out)
}

/// Segment-level entry point for ragged batches: same math, shared scratch.
pub(crate) fn reordered_segment<T: Real>(
    q: &[T],
    keys: KeysView<'_, T>,
    attn: &AttentionParams<T>,
    scratch: &mut AttnScratch<T>,
    out: &mut [T],
) -> Result<()> {
    if keys.rows() == 0 {
        return Err(Error::EmptyHistory { segment: 0 });
    }
    reordered_into(q, keys, attn, scratch, out);
    Ok(())
}

/// Saved intermediates of one reordered attention application.
pub struct AttentionCache<T: Real> {
    pub heads: Vec<HeadCache<T>>,
    pub concat: Matrix<T>,
}

pub struct HeadCache<T: Real> {
    pub qh: Vec<T>,
    pub u: Vec<T>,
    pub alpha: Vec<T>,
    pub ctx: Vec<T>,
}

/// Reordered attention that keeps per-head intermediates for backward.
pub fn reordered_cached<T: Real>(
    q: &Matrix<T>,
    keys: &Matrix<T>,
    attn: &AttentionParams<T>,
) -> Result<(Matrix<T>, AttentionCache<T>)> {
    let d = attn.wo.value.rows();
    let heads = attn.wq.len();
    let dh = d / heads;
    check_inputs(q, keys.rows(), keys.cols(), d)?;
    let len = keys.rows();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut concat = Matrix::zeros(1, d);
    let mut head_caches = Vec::with_capacity(heads);
    for r in 0..heads {
        let qh = q.matmul(&attn.wq[r].value)?;
        let u = qh.matmul_transpose_b(&attn.wk[r].value)?;
        let mut alpha = vec![T::ZERO; len];
        for (j, a) in alpha.iter_mut().enumerate() {
            let row = keys.row(j);
            let mut acc = T::ZERO;
            for (&ui, &xi) in u.row(0).iter().zip(row) {
                acc += ui * xi;
            }
            *a = acc * scale;
        }
        counter::add_macs((len * d) as u64);
        counter::add_flops(len as u64);
        softmax_in_place(&mut alpha);
        let mut ctx = vec![T::ZERO; d];
        for (j, &a) in alpha.iter().enumerate() {
            for (c, &xi) in ctx.iter_mut().zip(keys.row(j)) {
                *c += a * xi;
            }
        }
        counter::add_macs((len * d) as u64);
        let ctx_m = Matrix::row_vector(ctx.clone());
        let outh = ctx_m.matmul(&attn.wv[r].value)?;
        concat.row_mut(0)[r * dh..(r + 1) * dh].copy_from_slice(outh.row(0));
        head_caches.push(HeadCache {
            qh: qh.row(0).to_vec(),
            u: u.row(0).to_vec(),
            alpha,
            ctx,
        });
    }
    let out = concat.matmul(&attn.wo.value)?;
    Ok((
        out,
        AttentionCache {
            heads: head_caches,
            concat,
        },
    ))
}

/// Backward of the reordered attention. Accumulates projection gradients,
/// returns gradients for the query and the key matrix.
pub fn attention_backward<T: Real>(
    q: &Matrix<T>,
    keys: &Matrix<T>,
    attn: &mut AttentionParams<T>,
    cache: &AttentionCache<T>,
    dout: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let d = attn.wo.value.rows();
    let heads = attn.wq.len();
    let dh = d / heads;
    let len = keys.rows();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());

    let dwo = cache.concat.matmul_transpose_a(dout)?;
    attn.wo.accumulate(&dwo)?;
    let dconcat = dout.matmul_transpose_b(&attn.wo.value)?;

    let mut dq = Matrix::zeros(1, d);
    let mut dkeys = Matrix::zeros(len, d);
    for r in 0..heads {
        let hc = &cache.heads[r];
        let dch = &dconcat.row(0)[r * dh..(r + 1) * dh];
        // outh = ctx Wv
        let mut dctx = vec![T::ZERO; d];
        {
            let wv = &attn.wv[r].value;
            let mut dwv = Matrix::zeros(d, dh);
            for i in 0..d {
                let wrow = wv.row(i);
                let grow = dwv.row_mut(i);
                let mut acc = T::ZERO;
                for c in 0..dh {
                    acc += dch[c] * wrow[c];
                    grow[c] = hc.ctx[i] * dch[c];
                }
                dctx[i] = acc;
            }
            counter::add_macs(2 * (d * dh) as u64);
            attn.wv[r].accumulate(&dwv)?;
        }
        // ctx = alpha X
        let mut dalpha = vec![T::ZERO; len];
        for (j, da) in dalpha.iter_mut().enumerate() {
            let row = keys.row(j);
            let mut acc = T::ZERO;
            for (&dc, &xi) in dctx.iter().zip(row) {
                acc += dc * xi;
            }
            *da = acc;
            let drow = dkeys.row_mut(j);
            let a = hc.alpha[j];
            for (dk, &dc) in drow.iter_mut().zip(&dctx) {
                *dk += a * dc;
            }
        }
        counter::add_macs(2 * (len * d) as u64);
        // softmax and score scale
        let dscores = softmax_backward(&hc.alpha, &dalpha);
        let mut du = vec![T::ZERO; d];
        for (j, &ds) in dscores.iter().enumerate() {
            let g = ds * scale;
            let row = keys.row(j);
            let drow = dkeys.row_mut(j);
            for i in 0..d {
                du[i] += g * row[i];
                drow[i] += g * hc.u[i];
            }
        }
        counter::add_macs(2 * (len * d) as u64);
        // u = qh Wk^T
        let wk = &attn.wk[r].value;
        let mut dqh = vec![T::ZERO; dh];
        let mut dwk = Matrix::zeros(d, dh);
        for i in 0..d {
            let wrow = wk.row(i);
            let grow = dwk.row_mut(i);
            for c in 0..dh {
                dqh[c] += du[i] * wrow[c];
                grow[c] = du[i] * hc.qh[c];
            }
        }
        counter::add_macs(2 * (d * dh) as u64);
        attn.wk[r].accumulate(&dwk)?;
        // qh = q Wq
        let wq = &attn.wq[r].value;
        let mut dwq = Matrix::zeros(d, dh);
        let qrow = q.row(0);
        let dqrow = dq.row_mut(0);
        for i in 0..d {
            let wrow = wq.row(i);
            let grow = dwq.row_mut(i);
            let mut acc = T::ZERO;
            for c in 0..dh {
                acc += dqh[c] * wrow[c];
                grow[c] = qrow[i] * dqh[c];
            }
            dqrow[i] += acc;
        }
        counter::add_macs(2 * (d * dh) as u64);
        attn.wq[r].accumulate(&dwq)?;
    }
    Ok((dq, dkeys))
}
