//! Minimal dense-tensor substrate: layer primitives with analytic backward
//! passes, a finite-difference checker, and AdamW.

mod adamw;
mod bilinear;
mod gemm;
mod gradcheck;
mod ops;
mod params;
mod tensor;

pub use adamw::AdamW;
pub(crate) use bilinear::cell;
pub use bilinear::{bilinear_backward, bilinear_sample};
pub use gradcheck::{finite_diff_gradcheck, piecewise_gradcheck, relative_error, GradCheckReport, GroupCheck, DEFAULT_STEP};
pub use ops::{
    bce_with_logits, conv2d_backward, conv2d_forward, conv_output_size, linear_backward, linear_backward_acc, linear_forward, relu,
    relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, softmax, softmax_cross_entropy, ConvGrads, LinearGrads,
};
pub use params::{glorot_uniform, Gradients, Param, ParamId, ParamStore};
pub use tensor::Tensor;
