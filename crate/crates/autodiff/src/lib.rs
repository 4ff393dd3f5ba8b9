//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s; calling
//! [`Graph::backward`] walks the tape in reverse and returns the gradients of
//! all leaves that were created as trainable. The operation set is the one a
//! convolutional encoder/decoder, a patch discriminator and contrastive
//! projection heads need: strided and transposed 2-D convolutions, mirror and
//! zero padding, instance normalisation, per-channel affine modulation, dense
//! matrix products and row-wise softmax utilities.
//!
//! Everything is generic over [`Real`] so the same model code can run in `f32`
//! for training and in `f64` when gradients are checked numerically.

mod error;
mod graph;
pub mod ops;
mod optim;
mod params;
mod real;
mod tensor;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, Var};
pub use ops::conv::{conv_out_size, ConvParams};
pub use ops::spatial::Pad4;
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use real::{gemm, Real};
pub use tensor::Tensor;
