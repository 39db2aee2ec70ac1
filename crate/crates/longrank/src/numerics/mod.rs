//! Minimal dense linear algebra with paired forward/backward kernels.
//!
//! All ops are pure functions over immutable inputs. Gradient accumulation
//! goes through an explicit [`ParamWithGrad`] sink, so forward passes are
//! freely shareable across threads while training serializes accumulation.

pub mod counter;
mod matrix;
mod ops;
mod param;
mod real;

pub use matrix::Matrix;
pub use ops::{
    layer_norm, layer_norm_backward, layer_norm_cached, matmul, matmul_backward, rms_norm_backward,
    rms_norm_cached, softmax_backward, softmax_row, swigluffn_backward, swigluffn_forward,
    swigluffn_forward_cached, LayerNormCache, LayerNormGrads, RmsNormCache, SwigluCache,
    SwigluGrads,
};
pub(crate) use ops::softmax_in_place;
pub use param::ParamWithGrad;
pub use real::Real;

/// LayerNorm epsilon used across the model, inside the variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;
