//! Learnable parameter groups for the encoder.

use rand::Rng;

use super::config::StcaConfig;
use crate::error::Result;
use crate::numerics::{
    layer_norm_backward, layer_norm_cached, swigluffn_backward, swigluffn_forward_cached,
    LayerNormCache, Matrix, ParamWithGrad, Real, SwigluCache, LAYER_NORM_EPS,
};

// Variance-preserving uniform init for a plain linear map.
fn dense<T: Real, R: Rng>(name: String, rows: usize, cols: usize, rng: &mut R) -> ParamWithGrad<T> {
    let a = (3.0 / rows as f64).sqrt();
    ParamWithGrad::new(name, Matrix::uniform(rows, cols, a, rng))
}

// The gate halves second moments; compensate on the down projection so a
// stack of gated blocks neither explodes nor vanishes.
fn dense_gated_out<T: Real, R: Rng>(
    name: String,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> ParamWithGrad<T> {
    let a = (3.0 / (0.38 * rows as f64)).sqrt();
    ParamWithGrad::new(name, Matrix::uniform(rows, cols, a, rng))
}

fn embedding<T: Real, R: Rng>(
    name: String,
    rows: usize,
    cols: usize,
    range: f64,
    rng: &mut R,
) -> ParamWithGrad<T> {
    ParamWithGrad::new(name, Matrix::uniform(rows, cols, range, rng))
}

/// Gated feed-forward block parameters (`wu`, `wv`: d x rd, `wo`: rd x d).
#[derive(Debug, Clone)]
pub struct SwigluParams<T: Real> {
    pub wu: ParamWithGrad<T>,
    pub wv: ParamWithGrad<T>,
    pub wo: ParamWithGrad<T>,
}

impl<T: Real> SwigluParams<T> {
    fn init<R: Rng>(prefix: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        SwigluParams {
            wu: dense(format!("{prefix}.wu"), d, hidden, rng),
            wv: dense(format!("{prefix}.wv"), d, hidden, rng),
            wo: dense_gated_out(format!("{prefix}.wo"), hidden, d, rng),
        }
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, SwigluCache<T>)> {
        swigluffn_forward_cached(x, &self.wu.value, &self.wv.value, &self.wo.value)
    }

    /// Accumulates weight gradients, returns the input gradient.
    pub fn backward(
        &mut self,
        x: &Matrix<T>,
        cache: &SwigluCache<T>,
        dout: &Matrix<T>,
    ) -> Result<Matrix<T>> {
        let grads =
            swigluffn_backward(x, cache, &self.wu.value, &self.wv.value, &self.wo.value, dout)?;
        self.wu.accumulate(&grads.dwu)?;
        self.wv.accumulate(&grads.dwv)?;
        self.wo.accumulate(&grads.dwo)?;
        Ok(grads.dx)
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a ParamWithGrad<T>>) {
        out.push(&self.wu);
        out.push(&self.wv);
        out.push(&self.wo);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamWithGrad<T>>) {
        out.push(&mut self.wu);
        out.push(&mut self.wv);
        out.push(&mut self.wo);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams<T: Real> {
    pub gamma: ParamWithGrad<T>,
    pub beta: ParamWithGrad<T>,
}

impl<T: Real> LayerNormParams<T> {
    fn init(prefix: &str, d: usize) -> Self {
        let mut gamma = Matrix::zeros(1, d);
        gamma.fill(T::ONE);
        LayerNormParams {
            gamma: ParamWithGrad::new(format!("{prefix}.gamma"), gamma),
            beta: ParamWithGrad::new(format!("{prefix}.beta"), Matrix::zeros(1, d)),
        }
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, LayerNormCache<T>)> {
        layer_norm_cached(x, &self.gamma.value, &self.beta.value, LAYER_NORM_EPS)
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dout: &Matrix<T>) -> Result<Matrix<T>> {
        let grads = layer_norm_backward(cache, &self.gamma.value, dout)?;
        self.gamma.accumulate(&grads.dgamma)?;
        self.beta.accumulate(&grads.dbeta)?;
        Ok(grads.dx)
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a ParamWithGrad<T>>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamWithGrad<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// Per-head projections plus the shared output projection of one layer.
#[derive(Debug, Clone)]
pub struct AttentionParams<T: Real> {
    pub wq: Vec<ParamWithGrad<T>>,
    pub wk: Vec<ParamWithGrad<T>>,
    pub wv: Vec<ParamWithGrad<T>>,
    pub wo: ParamWithGrad<T>,
}

impl<T: Real> AttentionParams<T> {
    fn init<R: Rng>(prefix: &str, d: usize, heads: usize, rng: &mut R) -> Self {
        let dh = d / heads;
        let per_head = |tag: &str, rng: &mut R| -> Vec<ParamWithGrad<T>> {
            (0..heads)
                .map(|h| dense(format!("{prefix}.h{h}.{tag}"), d, dh, rng))
                .collect()
        };
        AttentionParams {
            wq: per_head("wq", rng),
            wk: per_head("wk", rng),
            wv: per_head("wv", rng),
            wo: dense(format!("{prefix}.wo"), d, d, rng),
        }
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a ParamWithGrad<T>>) {
        for p in self.wq.iter().chain(&self.wk).chain(&self.wv) {
            out.push(p);
        }
        out.push(&self.wo);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamWithGrad<T>>) {
        for p in self
            .wq
            .iter_mut()
            .chain(self.wk.iter_mut())
            .chain(self.wv.iter_mut())
        {
            out.push(p);
        }
        out.push(&mut self.wo);
    }
}

/// Query fusion entering a layer: compress lower summaries and the target.
/// The fused query is normalized like the first query.
#[derive(Debug, Clone)]
pub struct FusionParams<T: Real> {
    /// (i+1)d x d compression of the concatenated summaries and target.
    pub wc: ParamWithGrad<T>,
    pub ffn: SwigluParams<T>,
    pub ln: LayerNormParams<T>,
}

#[derive(Debug, Clone)]
pub struct LayerParams<T: Real> {
    /// Token-wise feed-forward on the raw history, one per layer.
    pub ffn: SwigluParams<T>,
    pub ln: LayerNormParams<T>,
    pub attn: AttentionParams<T>,
    /// Present from the second layer on; produces this layer's query.
    pub fusion: Option<FusionParams<T>>,
}

/// Target-side input path producing the first query.
#[derive(Debug, Clone)]
pub struct QueryPathParams<T: Real> {
    pub ffn: SwigluParams<T>,
    pub ln: LayerNormParams<T>,
}

/// Prediction head: summary compression, token mixer, logit.
#[derive(Debug, Clone)]
pub struct HeadParams<T: Real> {
    /// (M+1)d x d compression of all layer summaries and the target.
    pub wz: ParamWithGrad<T>,
    pub ffn: SwigluParams<T>,
    pub mixer_w1: ParamWithGrad<T>,
    pub mixer_w2: ParamWithGrad<T>,
    pub w: ParamWithGrad<T>,
    pub b: ParamWithGrad<T>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingParams<T: Real> {
    pub video: ParamWithGrad<T>,
    pub action: ParamWithGrad<T>,
    pub position: ParamWithGrad<T>,
    pub time_delta: ParamWithGrad<T>,
    pub user_token: ParamWithGrad<T>,
    pub candidate: Vec<ParamWithGrad<T>>,
}

/// All learnable state of the model. Shapes are fully determined by the config.
#[derive(Debug, Clone)]
pub struct StcaParams<T: Real> {
    pub emb: EmbeddingParams<T>,
    pub query: QueryPathParams<T>,
    pub layers: Vec<LayerParams<T>>,
    pub head: HeadParams<T>,
}

impl<T: Real> StcaParams<T> {
    pub fn init<R: Rng>(config: &StcaConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let hidden = config.expansion * d;
        // Vocab row 0 is the reserved out-of-vocabulary slot.
        let e = config.embedding_init;
        let emb = EmbeddingParams {
            video: embedding("emb.video".into(), config.video_vocab, d, e, rng),
            action: embedding("emb.action".into(), config.action_vocab, d, e, rng),
            position: embedding("emb.position".into(), config.position_vocab.max(1), d, e, rng),
            time_delta: embedding(
                "emb.time_delta".into(),
                config.time_delta_buckets.max(1),
                d,
                e,
                rng,
            ),
            user_token: embedding(
                "emb.user_token".into(),
                config.user_token_vocab.max(1),
                d,
                e,
                rng,
            ),
            candidate: (0..config.candidate_tokens)
                .map(|c| embedding(format!("emb.candidate.{c}"), config.video_vocab, d, e, rng))
                .collect(),
        };
        let query = QueryPathParams {
            ffn: SwigluParams::init("query.ffn", d, hidden, rng),
            ln: LayerNormParams::init("query.ln", d),
        };
        let layers = (0..config.layers)
            .map(|i| {
                let prefix = format!("layer.{i}");
                LayerParams {
                    ffn: SwigluParams::init(&format!("{prefix}.ffn"), d, hidden, rng),
                    ln: LayerNormParams::init(&format!("{prefix}.ln"), d),
                    attn: AttentionParams::init(&format!("{prefix}.attn"), d, config.heads, rng),
                    fusion: (i > 0).then(|| FusionParams {
                        wc: dense(format!("{prefix}.fusion.wc"), (i + 1) * d, d, rng),
                        ffn: SwigluParams::init(&format!("{prefix}.fusion.ffn"), d, hidden, rng),
                        ln: LayerNormParams::init(&format!("{prefix}.fusion.ln"), d),
                    }),
                }
            })
            .collect();
        let head = HeadParams {
            wz: dense("head.wz".into(), (config.layers + 1) * d, d, rng),
            ffn: SwigluParams::init("head.ffn", d, hidden, rng),
            mixer_w1: dense("head.mixer.w1".into(), config.mixer_tokens() * d, d, rng),
            mixer_w2: dense("head.mixer.w2".into(), d, d, rng),
            w: dense("head.w".into(), d, 1, rng),
            b: ParamWithGrad::new("head.b", Matrix::zeros(1, 1)),
        };
        let mut params = StcaParams {
            emb,
            query,
            layers,
            head,
        };
        // Tied starting point, free to diverge: the query path reuses the
        // first history feed-forward so queries and keys begin in one
        // representation space, and each key projection starts equal to its
        // query projection so the score form is positive semi-definite and
        // matching content scores high before any training.
        params.query.ffn.wu.value = params.layers[0].ffn.wu.value.clone();
        params.query.ffn.wv.value = params.layers[0].ffn.wv.value.clone();
        params.query.ffn.wo.value = params.layers[0].ffn.wo.value.clone();
        for layer in &mut params.layers {
            for (wk, wq) in layer.attn.wk.iter_mut().zip(&layer.attn.wq) {
                wk.value = wq.value.clone();
            }
        }
        Ok(params)
    }

    /// Every parameter in a fixed, stable order.
    pub fn params(&self) -> Vec<&ParamWithGrad<T>> {
        let mut out = vec![
            &self.emb.video,
            &self.emb.action,
            &self.emb.position,
            &self.emb.time_delta,
            &self.emb.user_token,
        ];
        for c in &self.emb.candidate {
            out.push(c);
        }
        self.query.ffn.collect(&mut out);
        self.query.ln.collect(&mut out);
        for layer in &self.layers {
            layer.ffn.collect(&mut out);
            layer.ln.collect(&mut out);
            layer.attn.collect(&mut out);
            if let Some(f) = &layer.fusion {
                out.push(&f.wc);
                f.ffn.collect(&mut out);
                f.ln.collect(&mut out);
            }
        }
        out.push(&self.head.wz);
        self.head.ffn.collect(&mut out);
        out.push(&self.head.mixer_w1);
        out.push(&self.head.mixer_w2);
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamWithGrad<T>> {
        let mut out = vec![
            &mut self.emb.video,
            &mut self.emb.action,
            &mut self.emb.position,
            &mut self.emb.time_delta,
            &mut self.emb.user_token,
        ];
        for c in &mut self.emb.candidate {
            out.push(c);
        }
        self.query.ffn.collect_mut(&mut out);
        self.query.ln.collect_mut(&mut out);
        for layer in &mut self.layers {
            layer.ffn.collect_mut(&mut out);
            layer.ln.collect_mut(&mut out);
            layer.attn.collect_mut(&mut out);
            if let Some(f) = &mut layer.fusion {
                out.push(&mut f.wc);
                f.ffn.collect_mut(&mut out);
                f.ln.collect_mut(&mut out);
            }
        }
        out.push(&mut self.head.wz);
        self.head.ffn.collect_mut(&mut out);
        out.push(&mut self.head.mixer_w1);
        out.push(&mut self.head.mixer_w2);
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params()
            .iter()
            .map(|p| p.value.rows() * p.value.cols())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.all_finite())
    }

    pub fn cast<U: Real>(&self) -> StcaParams<U> {
        StcaParams {
            emb: EmbeddingParams {
                video: cast_param(&self.emb.video),
                action: cast_param(&self.emb.action),
                position: cast_param(&self.emb.position),
                time_delta: cast_param(&self.emb.time_delta),
                user_token: cast_param(&self.emb.user_token),
                candidate: self.emb.candidate.iter().map(cast_param).collect(),
            },
            query: QueryPathParams {
                ffn: cast_swiglu(&self.query.ffn),
                ln: LayerNormParams {
                    gamma: cast_param(&self.query.ln.gamma),
                    beta: cast_param(&self.query.ln.beta),
                },
            },
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ffn: cast_swiglu(&l.ffn),
                    ln: LayerNormParams {
                        gamma: cast_param(&l.ln.gamma),
                        beta: cast_param(&l.ln.beta),
                    },
                    attn: AttentionParams {
                        wq: l.attn.wq.iter().map(cast_param).collect(),
                        wk: l.attn.wk.iter().map(cast_param).collect(),
                        wv: l.attn.wv.iter().map(cast_param).collect(),
                        wo: cast_param(&l.attn.wo),
                    },
                    fusion: l.fusion.as_ref().map(|f| FusionParams {
                        wc: cast_param(&f.wc),
                        ffn: cast_swiglu(&f.ffn),
                        ln: LayerNormParams {
                            gamma: cast_param(&f.ln.gamma),
                            beta: cast_param(&f.ln.beta),
                        },
                    }),
                })
                .collect(),
            head: HeadParams {
                wz: cast_param(&self.head.wz),
                ffn: cast_swiglu(&self.head.ffn),
                mixer_w1: cast_param(&self.head.mixer_w1),
                mixer_w2: cast_param(&self.head.mixer_w2),
                w: cast_param(&self.head.w),
                b: cast_param(&self.head.b),
            },
        }
    }
}

fn cast_param<T: Real, U: Real>(p: &ParamWithGrad<T>) -> ParamWithGrad<U> {
    ParamWithGrad::new(p.name.clone(), p.value.cast())
}

fn cast_swiglu<T: Real, U: Real>(s: &SwigluParams<T>) -> SwigluParams<U> {
    SwigluParams {
        wu: cast_param(&s.wu),
        wv: cast_param(&s.wv),
        wo: cast_param(&s.wo),
    }
}
