//! Zero-shot style transfer for 3D Gaussian splat scenes.
//!
//! The pipeline has three stages that all operate on per-Gaussian data with
//! the scene geometry held fixed:
//!
//! 1. [`embed`] distills image features into the Gaussians by rendering a
//!    low-dimensional feature and lifting it with a learned affine map.
//! 2. [`style`] re-normalizes the per-Gaussian features to the channel
//!    statistics of a style image.
//! 3. [`decoder`] turns the transformed features into RGB with a
//!    convolution over each Gaussian's K nearest neighbors.
//!
//! Stylized colors live on the Gaussians, so any number of views can be
//! rendered with [`render`] after a single transfer.

pub mod counters;
pub mod decoder;
pub mod embed;
pub mod error;
pub mod extractor;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod render;
pub mod scene;
pub mod style;
pub mod tensor;
pub mod toy;
pub mod train;

pub use error::{Error, Result};

/// Crate version, echoed by the serving layer's health endpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
