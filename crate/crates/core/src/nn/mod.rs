//! Minimal layer-wise reverse-mode network core: convolution, dense,
//! softplus, Kaiming initialization and Adam.

mod activation;
mod adam;
mod conv;
mod dense;
mod gemm;
pub mod gradcheck;
mod init;
pub(crate) mod simd;
mod tensor;

pub use activation::{softplus, softplus_grad, Softplus};
pub use adam::{Adam, AdamConfig};
pub use conv::Conv2d;
pub use dense::Dense;
pub use init::kaiming_normal;
pub use tensor::{Param, Tensor};
