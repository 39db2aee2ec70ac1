//! Hand-derived backward pass through the full encoder.
//!
//! The per-target backward accumulates parameter gradients immediately but
//! only *collects* gradients flowing into the shared history tensors; after
//! every target of a request has run, [`backward_shared`] pushes the summed
//! history gradient through the per-layer feed-forward/norm stack once and
//! scatters it into the embedding tables.

use super::attention::attention_backward;
use super::config::StcaConfig;
use super::forward::{SharedHistory, TargetPass};
use super::params::StcaParams;
use crate::error::Result;
use crate::numerics::{counter, rms_norm_backward, Matrix, Real};

/// Gradient sink for the shared history path of one request.
pub struct SharedGrad<T: Real> {
    pub d_tilde: Vec<Matrix<T>>,
}

impl<T: Real> SharedGrad<T> {
    pub fn zeros(len: usize, config: &StcaConfig) -> Self {
        SharedGrad {
            d_tilde: (0..config.layers)
                .map(|_| Matrix::zeros(len, config.d))
                .collect(),
        }
    }
}

fn silu_prime<T: Real>(x: T) -> T {
    let s = x.sigmoid();
    s * (T::ONE + x * (T::ONE - s))
}

/// Backward for one target given `d loss / d logit`. Parameter gradients are
/// accumulated in place; history gradients land in `shared_grad`.
pub fn backward_target<T: Real>(
    pass: &TargetPass<T>,
    shared: &SharedHistory<T>,
    d_logit: T,
    params: &mut StcaParams<T>,
    config: &StcaConfig,
    shared_grad: &mut SharedGrad<T>,
) -> Result<()> {
    let d = config.d;
    let layer_count = config.layers;

    // Logit layer.
    params.head.b.grad.data_mut()[0] += d_logit;
    {
        let w = &params.head.w.value;
        let grad_w = params.head.w.grad.data_mut();
        for i in 0..d {
            grad_w[i] += pass.hidden.get(0, i) * d_logit;
        }
        let mut dhidden = Matrix::zeros(1, d);
        for i in 0..d {
            dhidden.data_mut()[i] = d_logit * w.get(i, 0);
        }
        counter::add_macs(2 * d as u64);

        // Mixer second layer.
        let dw2 = pass.mix_act.matmul_transpose_a(&dhidden)?;
        params.head.mixer_w2.accumulate(&dw2)?;
        let dmix_act = dhidden.matmul_transpose_b(&params.head.mixer_w2.value)?;
        let mut dmix_pre = dmix_act;
        for (g, &x) in dmix_pre.data_mut().iter_mut().zip(pass.mix_pre.data()) {
            *g *= silu_prime(x);
        }
        counter::add_flops(d as u64 * counter::FLOPS_PER_ACTIVATION);
        let dw1 = pass.x_mix.matmul_transpose_a(&dmix_pre)?;
        params.head.mixer_w1.accumulate(&dw1)?;
        let dx_mix = dmix_pre.matmul_transpose_b(&params.head.mixer_w1.value)?;

        // Undo the per-token normalization, then split the token gradients.
        let tokens = config.mixer_tokens();
        let dnormed = Matrix::from_vec(tokens, d, dx_mix.data().to_vec())?;
        let dtokens = rms_norm_backward(&pass.mix_rms, &dnormed);
        let dz = Matrix::row_vector(dtokens.row(0).to_vec());
        for (k, &idx) in pass.user_token_idx.iter().enumerate() {
            let chunk = dtokens.row(1 + k);
            let row = params.emb.user_token.grad.row_mut(idx);
            for (g, &v) in row.iter_mut().zip(chunk) {
                *g += v;
            }
        }
        let cand_base = 1 + pass.user_token_idx.len();
        for (c, table) in params.emb.candidate.iter_mut().enumerate() {
            let chunk = dtokens.row(cand_base + c);
            let row = table.grad.row_mut(pass.video_idx);
            for (g, &v) in row.iter_mut().zip(chunk) {
                *g += v;
            }
        }

        // Head feed-forward and summary compression.
        let dpre_z = params.head.ffn.backward(&pass.pre_z, &pass.z_ffn, &dz)?;
        let dwz = pass.head_cat.matmul_transpose_a(&dpre_z)?;
        params.head.wz.accumulate(&dwz)?;
        let dhead_cat = dpre_z.matmul_transpose_b(&params.head.wz.value)?;

        // Route the head gradient into summaries and the target embedding.
        let mut d_summaries: Vec<Matrix<T>> = (0..layer_count).map(|_| Matrix::zeros(1, d)).collect();
        let mut dx_t = Matrix::zeros(1, d);
        for i in 0..layer_count {
            let chunk = &dhead_cat.row(0)[i * d..(i + 1) * d];
            d_summaries[i].row_mut(0).copy_from_slice(chunk);
        }
        dx_t.row_mut(0)
            .copy_from_slice(&dhead_cat.row(0)[layer_count * d..(layer_count + 1) * d]);

        // Layers, top down. At step i every consumer of summary i has already run.
        let mut dq1_total = Matrix::zeros(1, d);
        for i in (0..layer_count).rev() {
            let layer = &mut params.layers[i];
            let (dq, dkeys) = attention_backward(
                &pass.queries[i],
                &shared.layers[i].tilde,
                &mut layer.attn,
                &pass.attn[i],
                &d_summaries[i],
            )?;
            shared_grad.d_tilde[i].add_assign(&dkeys)?;
            match (&pass.fusions[i], &mut layer.fusion) {
                (Some(fcache), Some(fparams)) => {
                    let dffn_out = fparams.ln.backward(&fcache.ln, &dq)?;
                    let dpre = fparams.ffn.backward(&fcache.pre, &fcache.ffn, &dffn_out)?;
                    let dwc = fcache.cat.matmul_transpose_a(&dpre)?;
                    fparams.wc.accumulate(&dwc)?;
                    let dcat = dpre.matmul_transpose_b(&fparams.wc.value)?;
                    for j in 0..i {
                        let chunk = &dcat.row(0)[j * d..(j + 1) * d];
                        let row = d_summaries[j].row_mut(0);
                        for (g, &v) in row.iter_mut().zip(chunk) {
                            *g += v;
                        }
                    }
                    let chunk = &dcat.row(0)[i * d..(i + 1) * d];
                    let row = dx_t.row_mut(0);
                    for (g, &v) in row.iter_mut().zip(chunk) {
                        *g += v;
                    }
                }
                _ => {
                    dq1_total.add_assign(&dq)?;
                }
            }
        }

        // First-query path.
        let dq1_pre = params.query.ln.backward(&pass.q1_ln, &dq1_total)?;
        let dxt_from_q = params.query.ffn.backward(&pass.x_t, &pass.q1_ffn, &dq1_pre)?;
        dx_t.add_assign(&dxt_from_q)?;

        // Target embedding scatter.
        let row = params.emb.video.grad.row_mut(pass.video_idx);
        for (g, &v) in row.iter_mut().zip(dx_t.row(0)) {
            *g += v;
        }
    }
    Ok(())
}

/// Push the accumulated history gradient through the shared path once and
/// scatter into the event embedding tables.
pub fn backward_shared<T: Real>(
    shared: &SharedHistory<T>,
    shared_grad: &SharedGrad<T>,
    params: &mut StcaParams<T>,
    config: &StcaConfig,
) -> Result<()> {
    let len = shared.len();
    let mut dx = Matrix::zeros(len, config.d);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let d_tilde = &shared_grad.d_tilde[i];
        let d_pre = layer.ln.backward(&shared.layers[i].ln_cache, d_tilde)?;
        let dx_i = layer
            .ffn
            .backward(&shared.x, &shared.layers[i].ffn_cache, &d_pre)?;
        dx.add_assign(&dx_i)?;
    }
    for (j, feats) in shared.rows.iter().enumerate() {
        let src = dx.row(j);
        let row = params.emb.video.grad.row_mut(feats.video);
        for (g, &v) in row.iter_mut().zip(src) {
            *g += v;
        }
        let row = params.emb.action.grad.row_mut(feats.action);
        for (g, &v) in row.iter_mut().zip(src) {
            *g += v;
        }
        if let Some(p) = feats.position {
            let row = params.emb.position.grad.row_mut(p);
            for (g, &v) in row.iter_mut().zip(src) {
                *g += v;
            }
        }
        if let Some(b) = feats.time_delta {
            let row = params.emb.time_delta.grad.row_mut(b);
            for (g, &v) in row.iter_mut().zip(src) {
                *g += v;
            }
        }
    }
    Ok(())
}
