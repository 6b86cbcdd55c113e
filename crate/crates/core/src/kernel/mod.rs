//! Dense numeric kernels.
//!
//! Everything in the crate computes on two carriers: [`Tensor`], an
//! N-dimensional row-major `f64` array, and [`FeatureMap`], a rank-3
//! `channels x height x width` tensor tagged with the modality it came from.
//! The free functions in [`ops`] implement the primitive operations
//! (convolution, pooling, softmax, linear projection, normalisation) as
//! straightforward reference loops: the scales involved are small enough that
//! clarity and exactness win over blocking or SIMD.

pub mod ops;
pub mod params;
pub mod tensor;

pub use ops::{
    add, avg_pool2d, batch_norm_infer, conv2d, gelu, global_avg_pool, layer_norm, linear, matmul,
    mul, sigmoid, softmax, softmax_slice, spatial_softmax,
};
pub use params::{BatchNormParams, ConvParams, LinearParams};
pub use tensor::{FeatureMap, Modality, Tensor};
