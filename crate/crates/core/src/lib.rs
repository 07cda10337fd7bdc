//! Block compressive sensing with learned sampling matrices, MMSE initial
//! reconstruction and an octave-convolution U-net, together with classical
//! block reconstruction (MMSE, IHT, IRLS), sensing-matrix analysis (coherence,
//! spark, RIP) and image-quality metrics.
//!
//! The tensor engine and the network are generic over [`Scalar`] (`f32`/`f64`);
//! everything gradient-checked runs in `f64`.

pub mod autobcs_net;
pub mod classic_recon;
pub mod cli_io;
pub mod error;
pub mod image;
pub mod matrix_analysis;
pub mod metrics;
pub mod scalar;
pub mod sensing;
pub mod tensor;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use scalar::Scalar;

/// Double-precision tensor, the default for analysis and gradient checks.
pub type Tensor = tensor::Tensor4<f64>;
pub type TensorF32 = tensor::Tensor4<f32>;
pub type AutoBcs = autobcs_net::AutoBcsModel<f64>;
pub type AutoBcsF32 = autobcs_net::AutoBcsModel<f32>;
