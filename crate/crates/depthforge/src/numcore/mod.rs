//! Dense n-dimensional f64 arrays with reverse-mode automatic
//! differentiation, the layer primitives both networks need, and Adam.
//!
//! Every operation records its inputs into a backward graph when any
//! input tracks gradients. `Tensor::backward` walks that graph once and
//! accumulates gradients into the tracked leaves; the graph itself is
//! freed as soon as the tensors referencing it drop. All math is 64-bit.

mod adam;
mod conv;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamState, ParamSet};
pub use gradcheck::gradient_check;
pub use ops::{
    add, add_channel_bias, add_scalar, average, concat, conv2d, embedding_lookup, leaky_relu,
    log_softmax_channels, matmul, mean, minibatch_stddev, modulated_conv2d, mul, pixel_norm,
    reshape, scale, softmax_channels, sum, upsample2x_bilinear,
};
pub use tensor::{NumError, Result, Tensor};
