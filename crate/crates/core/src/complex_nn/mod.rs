//! Complex-valued neural primitives: convolution, transposed convolution,
//! depthwise-separable convolution, split leaky activation and layer norm,
//! each with an analytic backward pass.

mod activation;
pub mod conv;
mod layers;
mod norm;
mod tensor;

pub use activation::{complex_activation, complex_activation_backward, sigmoid, LEAKY_SLOPE};
pub use conv::ConvGeometry;
pub use layers::{
    param_count_conv, param_count_dsc, ComplexConv2d, ComplexConvTranspose2d, DscConv2d, DscConvTranspose2d,
    SpatialConv, SpatialConvTranspose,
};
pub use norm::{ComplexLayerNorm, NormCache, NORM_EPS};
pub use tensor::ComplexTensor;

crate::impl_parameters!(ComplexTensor { re, im });
