//! Full encoder forward pass, split into a shared history path and a
//! per-target path so one history encoding can serve many targets.

use super::attention::{reordered_cached, AttentionCache};
use super::config::{time_delta_bucket, HistoryEvent, StcaConfig, TargetItem};
use super::params::StcaParams;
use crate::error::{Error, Result};
use crate::numerics::{counter, rms_norm_cached, LayerNormCache, Matrix, Real, RmsNormCache, SwigluCache};

/// Resolved embedding-table rows of one history event, kept for the
/// scatter step of the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct RowFeatures {
    pub video: usize,
    pub action: usize,
    pub position: Option<usize>,
    pub time_delta: Option<usize>,
}

/// Per-layer history tensors shared by every target of a request.
pub struct SharedLayer<T: Real> {
    pub ffn_cache: SwigluCache<T>,
    pub ln_cache: LayerNormCache<T>,
    /// The normalized, feed-forwarded token matrix attended by this layer.
    pub tilde: Matrix<T>,
}

/// The compute-once history path: raw encoding plus all per-layer tensors.
pub struct SharedHistory<T: Real> {
    pub x: Matrix<T>,
    pub rows: Vec<RowFeatures>,
    pub layers: Vec<SharedLayer<T>>,
}

impl<T: Real> SharedHistory<T> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

fn resolve(id: u32, vocab: usize) -> usize {
    let idx = id as usize;
    if idx < vocab {
        idx
    } else {
        0 // reserved out-of-vocabulary slot
    }
}

/// Additively fuse video, action, recency-position and time-delta embeddings
/// into one row per event, in history order.
pub fn encode_history<T: Real>(
    events: &[HistoryEvent],
    target: &TargetItem,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<Matrix<T>> {
    let (x, _) = encode_history_with_features(events, target, params, config)?;
    Ok(x)
}

fn encode_history_with_features<T: Real>(
    events: &[HistoryEvent],
    target: &TargetItem,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<(Matrix<T>, Vec<RowFeatures>)> {
    let len = events.len();
    if len == 0 {
        return Err(Error::EmptyHistory { segment: 0 });
    }
    let d = config.d;
    let mut x = Matrix::zeros(len, d);
    let mut rows = Vec::with_capacity(len);
    let mut add_tables = 1u64;
    for (j, ev) in events.iter().enumerate() {
        let video = resolve(ev.video_id, config.video_vocab);
        let action = resolve(ev.action_type, config.action_vocab);
        // Recency rank: 0 for the most recent event, clamped to the table.
        let position = config
            .use_position
            .then(|| (len - 1 - j).min(config.position_vocab - 1));
        let time_delta = config.use_time_delta.then(|| {
            time_delta_bucket(target.request_time - ev.timestamp, config.time_delta_buckets)
        });
        let row = x.row_mut(j);
        row.copy_from_slice(&params.emb.video.value.row(video)[..d]);
        for (o, &e) in row.iter_mut().zip(params.emb.action.value.row(action)) {
            *o += e;
        }
        if let Some(p) = position {
            for (o, &e) in row.iter_mut().zip(params.emb.position.value.row(p)) {
                *o += e;
            }
            add_tables = add_tables.max(2);
        }
        if let Some(b) = time_delta {
            for (o, &e) in row.iter_mut().zip(params.emb.time_delta.value.row(b)) {
                *o += e;
            }
            add_tables = add_tables.max(3);
        }
        rows.push(RowFeatures {
            video,
            action,
            position,
            time_delta,
        });
    }
    counter::add_flops((len * d) as u64 * add_tables);
    Ok((x, rows))
}

/// Encode a history once: input fusion plus every layer's feed-forward and
/// normalization. Ticks the encoder-invocation counter exactly once.
pub fn forward_shared<T: Real>(
    events: &[HistoryEvent],
    target: &TargetItem,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<SharedHistory<T>> {
    let (x, rows) = encode_history_with_features(events, target, params, config)?;
    counter::add_encoder_invocation();
    let mut layers = Vec::with_capacity(config.layers);
    for layer in &params.layers {
        let (pre, ffn_cache) = layer.ffn.forward_cached(&x)?;
        let (tilde, ln_cache) = layer.ln.forward_cached(&pre)?;
        layers.push(SharedLayer {
            ffn_cache,
            ln_cache,
            tilde,
        });
    }
    Ok(SharedHistory { x, rows, layers })
}

/// Fusion intermediates for one layer's query.
pub struct FusionCache<T: Real> {
    pub cat: Matrix<T>,
    pub pre: Matrix<T>,
    pub ffn: SwigluCache<T>,
    pub ffn_out: Matrix<T>,
    pub ln: LayerNormCache<T>,
}

/// Everything computed for one target against a shared history.
pub struct TargetPass<T: Real> {
    pub video_idx: usize,
    pub user_token_idx: Vec<usize>,
    pub x_t: Matrix<T>,
    pub q1_ffn: SwigluCache<T>,
    pub q1_ln: LayerNormCache<T>,
    pub q1_pre: Matrix<T>,
    pub queries: Vec<Matrix<T>>,
    pub attn: Vec<AttentionCache<T>>,
    pub summaries: Vec<Matrix<T>>,
    pub fusions: Vec<Option<FusionCache<T>>>,
    pub head_cat: Matrix<T>,
    pub pre_z: Matrix<T>,
    pub z_ffn: SwigluCache<T>,
    pub z: Matrix<T>,
    /// Mixer input tokens before normalization, one row per token.
    pub mix_tokens: Matrix<T>,
    pub mix_rms: RmsNormCache<T>,
    pub x_mix: Matrix<T>,
    pub mix_pre: Matrix<T>,
    pub mix_act: Matrix<T>,
    pub hidden: Matrix<T>,
    pub logit: T,
    pub y_hat: T,
}

/// All layer summaries stacked into an M x d matrix.
pub struct LayerSummaries<T: Real> {
    pub o: Matrix<T>,
}

/// Public result of scoring one target.
pub struct StcaOutput<T: Real> {
    pub y_hat: T,
    pub logit: T,
    pub z: Matrix<T>,
    pub summaries: LayerSummaries<T>,
}

fn concat_rows<T: Real>(parts: &[&[T]]) -> Matrix<T> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut m = Matrix::zeros(1, total);
    let mut at = 0;
    for p in parts {
        m.row_mut(0)[at..at + p.len()].copy_from_slice(p);
        at += p.len();
    }
    m
}

/// Target-conditioned query fusion: compress all lower-layer summaries plus
/// the target embedding into the next query.
pub fn fuse_query<T: Real>(
    summaries: &[Matrix<T>],
    x_t: &Matrix<T>,
    wc: &Matrix<T>,
    ffn: &super::params::SwigluParams<T>,
) -> Result<Matrix<T>> {
    let mut parts: Vec<&[T]> = summaries.iter().map(|s| s.row(0)).collect();
    parts.push(x_t.row(0));
    let cat = concat_rows(&parts);
    if cat.cols() != wc.rows() {
        return Err(Error::Dimension {
            op: "fuse_query",
            lhs: cat.shape(),
            rhs: wc.shape(),
        });
    }
    let pre = cat.matmul(wc)?;
    let (q, _) = ffn.forward_cached(&pre)?;
    Ok(q)
}

/// Run the per-target path against a shared history.
pub fn forward_target<T: Real>(
    shared: &SharedHistory<T>,
    target: &TargetItem,
    user_tokens: &[u64],
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<TargetPass<T>> {
    let d = config.d;
    if user_tokens.len() < config.user_tokens {
        return Err(Error::Config(format!(
            "request carries {} user tokens, model expects {}",
            user_tokens.len(),
            config.user_tokens
        )));
    }
    let video_idx = resolve(target.video_id, config.video_vocab);
    let x_t = Matrix::row_vector(params.emb.video.value.row(video_idx).to_vec());

    let (q1_pre, q1_ffn) = params.query.ffn.forward_cached(&x_t)?;
    let (q1, q1_ln) = params.query.ln.forward_cached(&q1_pre)?;

    let layer_count = config.layers;
    let mut queries = Vec::with_capacity(layer_count);
    let mut attn_caches = Vec::with_capacity(layer_count);
    let mut summaries: Vec<Matrix<T>> = Vec::with_capacity(layer_count);
    let mut fusions: Vec<Option<FusionCache<T>>> = Vec::with_capacity(layer_count);

    fusions.push(None);
    queries.push(q1.clone());
    for i in 0..layer_count {
        let layer = &params.layers[i];
        let (o, cache) = reordered_cached(&queries[i], &shared.layers[i].tilde, &layer.attn)?;
        attn_caches.push(cache);
        summaries.push(o);
        if i + 1 < layer_count {
            let next_layer = &params.layers[i + 1];
            if config.use_query_fusion {
                let fusion = next_layer
                    .fusion
                    .as_ref()
                    .expect("layers beyond the first carry fusion parameters");
                let mut parts: Vec<&[T]> = summaries.iter().map(|s| s.row(0)).collect();
                parts.push(x_t.row(0));
                let cat = concat_rows(&parts);
                let pre = cat.matmul(&fusion.wc.value)?;
                let (ffn_out, ffn_cache) = fusion.ffn.forward_cached(&pre)?;
                let (q_next, ln_cache) = fusion.ln.forward_cached(&ffn_out)?;
                queries.push(q_next);
                fusions.push(Some(FusionCache {
                    cat,
                    pre,
                    ffn: ffn_cache,
                    ffn_out,
                    ln: ln_cache,
                }));
            } else {
                queries.push(q1.clone());
                fusions.push(None);
            }
        }
    }

    // Head: compress all summaries with the target.
    let mut parts: Vec<&[T]> = summaries.iter().map(|s| s.row(0)).collect();
    parts.push(x_t.row(0));
    let head_cat = concat_rows(&parts);
    let pre_z = head_cat.matmul(&params.head.wz.value)?;
    let (z, z_ffn) = params.head.ffn.forward_cached(&pre_z)?;

    // Token mixer over the summary plus aux user/candidate tokens. Each token
    // is RMS-normalized so no input channel drowns out the others.
    let user_token_idx: Vec<usize> = user_tokens[..config.user_tokens]
        .iter()
        .map(|&t| (t % config.user_token_vocab.max(1) as u64) as usize)
        .collect();
    let mut mix_tokens = Matrix::zeros(config.mixer_tokens(), d);
    mix_tokens.row_mut(0).copy_from_slice(z.row(0));
    for (k, &idx) in user_token_idx.iter().enumerate() {
        mix_tokens
            .row_mut(1 + k)
            .copy_from_slice(params.emb.user_token.value.row(idx));
    }
    for (c, table) in params.emb.candidate.iter().enumerate() {
        mix_tokens
            .row_mut(1 + config.user_tokens + c)
            .copy_from_slice(table.value.row(video_idx));
    }
    let (mix_normed, mix_rms) = rms_norm_cached(&mix_tokens, 1e-8);
    let x_mix = Matrix::row_vector(mix_normed.data().to_vec());
    let mix_pre = x_mix.matmul(&params.head.mixer_w1.value)?;
    let mut mix_act = mix_pre.clone();
    for v in mix_act.data_mut() {
        *v = v.silu();
    }
    counter::add_flops(d as u64 * counter::FLOPS_PER_ACTIVATION);
    let hidden = mix_act.matmul(&params.head.mixer_w2.value)?;
    let logit_m = hidden.matmul(&params.head.w.value)?;
    let logit = logit_m.get(0, 0) + params.head.b.value.get(0, 0);
    counter::add_flops(1 + counter::FLOPS_PER_ACTIVATION);
    let y_hat = logit.sigmoid();

    Ok(TargetPass {
        video_idx,
        user_token_idx,
        x_t,
        q1_ffn,
        q1_ln,
        q1_pre,
        queries,
        attn: attn_caches,
        summaries,
        fusions,
        head_cat,
        pre_z,
        z_ffn,
        z,
        mix_tokens,
        mix_rms,
        x_mix,
        mix_pre,
        mix_act,
        hidden,
        logit,
        y_hat,
    })
}

impl<T: Real> TargetPass<T> {
    pub fn output(&self, config: &StcaConfig) -> StcaOutput<T> {
        let mut o = Matrix::zeros(config.layers, config.d);
        for (i, s) in self.summaries.iter().enumerate() {
            o.row_mut(i).copy_from_slice(s.row(0));
        }
        StcaOutput {
            y_hat: self.y_hat,
            logit: self.logit,
            z: self.z.clone(),
            summaries: LayerSummaries { o },
        }
    }
}

/// Score one target against one history end to end.
pub fn stca_forward<T: Real>(
    events: &[HistoryEvent],
    target: &TargetItem,
    user_tokens: &[u64],
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<StcaOutput<T>> {
    let shared = forward_shared(events, target, params, config)?;
    let pass = forward_target(&shared, target, user_tokens, params, config)?;
    Ok(pass.output(config))
}

/// Clamped binary cross-entropy.
pub fn bce_loss<T: Real>(y_hat: T, y: u8) -> T {
    let lo = T::from_f64(1e-7);
    let hi = T::ONE - lo;
    let p = y_hat.maximum(lo).minimum(hi);
    if y == 1 {
        -p.ln()
    } else {
        -(T::ONE - p).ln()
    }
}

/// BCE evaluated from the logit, numerically stable for extreme scores.
pub fn bce_loss_from_logit<T: Real>(logit: T, y: u8) -> T {
    // max(s,0) - s*y + ln(1 + e^-|s|)
    let zero = T::ZERO;
    let pos = logit.maximum(zero);
    let sy = if y == 1 { logit } else { zero };
    pos - sy + (T::ONE + (-logit.abs()).exp()).ln()
}

/// d BCE / d logit.
pub fn bce_grad_logit<T: Real>(y_hat: T, y: u8) -> T {
    y_hat - if y == 1 { T::ONE } else { T::ZERO }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stca::StcaParams;
    use rand::SeedableRng;

    fn toy_events(n: usize, seed: u64) -> Vec<HistoryEvent> {
        use rand::Rng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n)
            .map(|j| HistoryEvent {
                video_id: rng.random_range(1..12),
                action_type: rng.random_range(0..3),
                position: j as u32,
                timestamp: 1000 + 60 * j as i64,
            })
            .collect()
    }

    fn toy_target() -> TargetItem {
        TargetItem {
            video_id: 5,
            request_time: 10_000,
        }
    }

    #[test]
    fn zero_tables_encode_to_zero() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let mut params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        for table in [
            &mut params.emb.video,
            &mut params.emb.action,
            &mut params.emb.position,
            &mut params.emb.time_delta,
        ] {
            table.value.fill(0.0);
        }
        let x = encode_history(&toy_events(5, 2), &toy_target(), &params, &cfg).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_event_row_is_the_sum_of_its_embeddings() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let ev = HistoryEvent {
            video_id: 7,
            action_type: 2,
            position: 0,
            timestamp: 6_400,
        };
        let target = toy_target();
        let x = encode_history(std::slice::from_ref(&ev), &target, &params, &cfg).unwrap();
        assert_eq!(x.shape(), (1, cfg.d));
        let bucket = time_delta_bucket(target.request_time - ev.timestamp, cfg.time_delta_buckets);
        for j in 0..cfg.d {
            let expect = params.emb.video.value.get(7, j)
                + params.emb.action.value.get(2, j)
                + params.emb.position.value.get(0, j) // recency rank 0
                + params.emb.time_delta.value.get(bucket, j);
            assert!((x.get(0, j) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_vocabulary_ids_map_to_the_reserved_slot() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let mut ev = toy_events(1, 5);
        ev[0].video_id = 999_999;
        ev[0].action_type = 999;
        let a = encode_history(&ev, &toy_target(), &params, &cfg).unwrap();
        let mut ev0 = ev.clone();
        ev0[0].video_id = 0;
        ev0[0].action_type = 0;
        let b = encode_history(&ev0, &toy_target(), &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameters_are_length_agnostic() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let tokens = vec![1u64; 4];
        for len in [1usize, 16, 4096] {
            let out = stca_forward(&toy_events(len, 7), &toy_target(), &tokens, &params, &cfg).unwrap();
            assert!(out.y_hat > 0.0 && out.y_hat < 1.0);
            assert_eq!(out.z.shape(), (1, cfg.d));
            assert_eq!(out.summaries.o.shape(), (cfg.layers, cfg.d));
        }
    }

    #[test]
    fn attention_is_permutation_invariant_without_order_features() {
        let mut cfg = StcaConfig::toy();
        cfg.use_position = false;
        cfg.use_time_delta = false;
        cfg.layers = 1;
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let events = toy_events(9, 9);
        let mut shuffled = events.clone();
        shuffled.swap(0, 7);
        shuffled.swap(2, 5);
        shuffled.swap(1, 8);
        let tokens = vec![1u64; 4];
        let a = stca_forward(&events, &toy_target(), &tokens, &params, &cfg).unwrap();
        let b = stca_forward(&shuffled, &toy_target(), &tokens, &params, &cfg).unwrap();
        assert!((a.y_hat - b.y_hat).abs() < 1e-12);
    }

    #[test]
    fn planted_suffix_event_changes_the_prediction() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(10);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let events = toy_events(12, 11);
        let tokens = vec![1u64; 4];
        let base = stca_forward(&events, &toy_target(), &tokens, &params, &cfg).unwrap();
        let mut extended = events.clone();
        extended.push(HistoryEvent {
            video_id: 3,
            action_type: 1,
            position: 12,
            timestamp: 1000 + 60 * 12,
        });
        let longer = stca_forward(&extended, &toy_target(), &tokens, &params, &cfg).unwrap();
        // The extra event takes nonzero attention mass, so the score moves.
        assert!((base.y_hat - longer.y_hat).abs() > 1e-9);
    }

    #[test]
    fn fusion_reduces_to_ffn_through_a_selector_matrix() {
        let cfg = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(12);
        let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();
        let d = cfg.d;
        let fusion = params.layers[1].fusion.as_ref().unwrap();
        let o1 = Matrix::uniform(1, d, 1.0, &mut rng);
        let x_t = Matrix::uniform(1, d, 1.0, &mut rng);
        // Stacked [I; 0] selects the first summary and drops the target.
        let mut selector = Matrix::zeros(2 * d, d);
        for i in 0..d {
            selector.set(i, i, 1.0);
        }
        let fused = fuse_query(std::slice::from_ref(&o1), &x_t, &selector, &fusion.ffn).unwrap();
        let (direct, _) = fusion.ffn.forward_cached(&o1).unwrap();
        assert!(fused.max_abs_diff(&direct) < 1e-12);

        // Zero inputs propagate to a zero query.
        let zero = Matrix::zeros(1, d);
        let fused =
            fuse_query(std::slice::from_ref(&zero), &zero, &fusion.wc.value, &fusion.ffn).unwrap();
        assert!(fused.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.9, 1) - 0.105360515).abs() < 1e-8);
        assert!((bce_loss(0.9, 0) - 2.302585093).abs() < 1e-8);
        // Clamped extremes stay finite.
        assert!(bce_loss(0.0f64, 1).is_finite());
        assert!(bce_loss(1.0f64, 0).is_finite());
        // Logit form agrees with the probability form.
        for (logit, y) in [(0.3f64, 1u8), (-2.0, 0), (5.0, 1), (-7.0, 1)] {
            let p = logit.sigmoid();
            assert!((bce_loss_from_logit(logit, y) - bce_loss(p, y)).abs() < 1e-9);
        }
    }
}
