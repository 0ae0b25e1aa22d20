//! Multiresolution fully convolutional network for removing moiré patterns
//! from photographs of screens, plus the tooling needed to build training
//! data for it.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`tensor`]: dense 4-D tensors with hand-derived forward/backward passes
//!   for convolution, transposed convolution and ReLU.
//! - [`optim`]: Adam with coupled L2 weight decay.
//! - [`net`]: the multi-branch network, its published variants, parameter
//!   counting, branch inspection and the checkpoint container.
//! - [`train`]: the patch L2 loss, crop sampling, plateau learning-rate
//!   schedule and the training loop.
//! - [`align`]: framed-display synthesis, corner detection and cleaning,
//!   homography estimation, warping, intensity correction and PSNR gating.
//! - [`synth`]: a screen/sensor interference simulator producing aligned
//!   contaminated/reference pairs and dataset manifests.
//! - [`metrics`]: PSNR, SSIM and MSE.
//!
//! Work that fans out over independent items (batch samples, image pairs,
//! registration trials) goes through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Reductions are always performed in item order so results do not depend on
//! the thread count.

pub mod align;
pub mod dataset;
pub mod error;
pub mod image;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod par;
pub mod seed;
pub mod synth;

pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use image::Image;
pub use tensor::{Scalar, Shape, Tensor4};
