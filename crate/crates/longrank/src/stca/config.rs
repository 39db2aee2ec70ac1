//! Model hyperparameters and input record types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One interaction in a user's watch history.
///
/// `position` is the ordinal within the full history and must be strictly
/// increasing; `timestamp` feeds the time-delta side feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEvent {
    pub video_id: u32,
    pub action_type: u32,
    pub position: u32,
    pub timestamp: i64,
}

/// The candidate item to score against a history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetItem {
    pub video_id: u32,
    pub request_time: i64,
}

/// Hyperparameters of the cross-attention encoder.
///
/// `d` must be divisible by `heads`; the per-head width is `d / heads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StcaConfig {
    /// Embedding dimensionality d.
    pub d: usize,
    /// Attention head count h.
    pub heads: usize,
    /// Feed-forward expansion ratio r.
    pub expansion: usize,
    /// Stacked cross-attention layer count M.
    pub layers: usize,
    pub video_vocab: usize,
    pub action_vocab: usize,
    /// Recency positions with dedicated embeddings; older events share the last slot.
    pub position_vocab: usize,
    /// Log2-second buckets for request-time minus event-timestamp.
    pub time_delta_buckets: usize,
    pub user_token_vocab: usize,
    /// Auxiliary user-side tokens K fed to the mixer.
    pub user_tokens: usize,
    /// Auxiliary candidate-side tokens C fed to the mixer.
    pub candidate_tokens: usize,
    pub use_position: bool,
    pub use_time_delta: bool,
    pub use_query_fusion: bool,
    /// Uniform init half-range for embedding tables. Billion-row tables want
    /// tiny init; at desk vocab the gated feed-forward needs O(1) inputs to
    /// pass signal, so the desk preset widens it.
    #[serde(default = "default_embedding_init")]
    pub embedding_init: f64,
}

fn default_embedding_init() -> f64 {
    0.01
}

impl Default for StcaConfig {
    fn default() -> Self {
        StcaConfig::desk()
    }
}

impl StcaConfig {
    /// Operating point small enough that every experiment runs in minutes on one CPU.
    pub fn desk() -> Self {
        StcaConfig {
            d: 32,
            heads: 4,
            expansion: 2,
            layers: 2,
            video_vocab: 1000,
            action_vocab: 4,
            position_vocab: 256,
            time_delta_buckets: 32,
            user_token_vocab: 64,
            user_tokens: 2,
            candidate_tokens: 2,
            use_position: true,
            use_time_delta: true,
            use_query_fusion: true,
            embedding_init: 0.25,
        }
    }

    /// Tiny dims for f64 gradient-check oracles.
    pub fn toy() -> Self {
        StcaConfig {
            d: 8,
            heads: 2,
            expansion: 2,
            layers: 2,
            video_vocab: 12,
            action_vocab: 3,
            position_vocab: 16,
            time_delta_buckets: 8,
            user_token_vocab: 6,
            user_tokens: 2,
            candidate_tokens: 2,
            use_position: true,
            use_time_delta: true,
            use_query_fusion: true,
            embedding_init: 0.25,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Token count entering the mixer: the fused summary plus aux tokens.
    pub fn mixer_tokens(&self) -> usize {
        1 + self.user_tokens + self.candidate_tokens
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "d={} must be a positive multiple of heads={}",
                self.d, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.expansion == 0 {
            return Err(Error::Config("expansion ratio must be >= 1".into()));
        }
        if self.video_vocab == 0 || self.action_vocab == 0 {
            return Err(Error::Config("vocab sizes must be positive".into()));
        }
        if self.use_position && self.position_vocab == 0 {
            return Err(Error::Config("position_vocab must be positive".into()));
        }
        if self.use_time_delta && self.time_delta_buckets == 0 {
            return Err(Error::Config("time_delta_buckets must be positive".into()));
        }
        if self.user_tokens > 0 && self.user_token_vocab == 0 {
            return Err(Error::Config("user_token_vocab must be positive".into()));
        }
        Ok(())
    }
}

/// Bucket index for a time delta in seconds: floor(log2(delta)), clamped.
///
/// Delta 3600s lands in bucket 11 (2^11 <= 3600 < 2^12); non-positive deltas
/// share bucket 0.
pub fn time_delta_bucket(delta_seconds: i64, buckets: usize) -> usize {
    if delta_seconds <= 0 {
        return 0;
    }
    let b = 63 - (delta_seconds as u64).leading_zeros() as usize;
    b.min(buckets.saturating_sub(1))
}
