//! Long-sequence ranking at desk scale.
//!
//! The stack couples three pieces: a single-query target-to-history
//! cross-attention encoder whose per-layer cost is linear in history length,
//! request-level batching that encodes each user history once and reuses it
//! across every target of the request, and a stochastic-length training
//! regimen that trains on short sampled windows while serving much longer
//! histories. An analytic cost model accounts for FLOPs and payload bytes,
//! and a verification suite cross-checks every equivalence the design relies
//! on (dual attention paths, ragged vs. padded batching, request-level vs.
//! flat objectives, hand-derived gradients vs. finite differences).
//!
//! Start with the runnable examples: `attention_paths`, `ragged_batching`,
//! `request_batching`, `length_sampling`, `flops_model`, `gradient_check`,
//! and `train_extrapolate`.

pub mod costmodel;
pub mod error;
pub mod extrapolation;
pub mod harness;
pub mod numerics;
pub mod ragged;
pub mod rlb;
pub mod stca;
pub mod verify;

pub use error::{Error, Result};
