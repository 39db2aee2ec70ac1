//! Stacked target-to-history cross-attention encoder.
//!
//! The candidate item is the sole attention query over the user's history,
//! so per-layer cost is linear in history length. Layers are stacked with
//! target-conditioned query fusion, and the head compresses all layer
//! summaries with the target before a small token mixer produces the
//! predicted finish probability.

mod attention;
mod backward;
mod checkpoint;
mod config;
mod forward;
mod params;

pub use attention::{
    attention_backward, cross_attention_layer, cross_attention_layer_reordered, reordered_cached,
    AttentionCache, AttnScratch, HeadCache, KeysView,
};
pub(crate) use attention::reordered_segment;
pub use backward::{backward_shared, backward_target, SharedGrad};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{time_delta_bucket, HistoryEvent, StcaConfig, TargetItem};
pub use forward::{
    bce_grad_logit, bce_loss, bce_loss_from_logit, encode_history, forward_shared, forward_target,
    fuse_query, stca_forward, FusionCache, LayerSummaries, RowFeatures, SharedHistory, SharedLayer,
    StcaOutput, TargetPass,
};
pub use params::{
    AttentionParams, EmbeddingParams, FusionParams, HeadParams, LayerNormParams, LayerParams,
    QueryPathParams, StcaParams, SwigluParams,
};
