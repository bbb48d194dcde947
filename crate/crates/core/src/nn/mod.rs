//! Minimal differentiable layer library.
//!
//! Every layer is a pair of free functions (forward, backward) over caller
//! owned buffers, generic over [`Scalar`] so the same code runs in `f32` for
//! the model and `f64` for gradient checks.

pub mod activation;
pub mod conv;
pub mod lif;
pub mod norm;
pub mod pool;
mod scalar;
mod tensor;

pub use activation::{relu, relu_backward_inplace, relu_inplace};
pub use conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward,
    depthwise_conv2d_kernel_grad, pointwise_conv2d, pointwise_conv2d_backward,
};
pub use lif::{
    dense_backward, dense_forward, surrogate_grad, LifGrads, LifLayer, LifState, LifTrace,
};
pub use norm::{instance_norm, instance_norm_backward, Normalized, INSTANCE_NORM_EPS};
pub use pool::{avg_pool, avg_pool_backward, pooled_dims};
pub use scalar::Scalar;
pub use tensor::Tensor4;
