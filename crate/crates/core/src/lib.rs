//! Optimal-transport cycleGAN deconvolution microscopy at desk scale.
//!
//! The crate bundles everything needed to reproduce the pipeline end to end
//! on a workstation: Born & Wolf PSF generation ([`optics`]), the forward
//! blur-and-noise model with synthetic phantoms ([`simulate`]), a minimal
//! reverse-mode autodiff engine ([`tensor`]), the single-deep-generator
//! cycleGAN with a linear blur kernel plus reference trainers ([`models`],
//! [`training`]), classical deconvolution baselines ([`baselines`]), and
//! image-quality metrics ([`metrics`]).

pub mod baselines;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod models;
pub mod optics;
pub mod rng;
pub mod simulate;
pub mod tensor;
pub mod training;

pub use error::{CoreError, Result};
pub use simulate::volume::Volume;
pub use tensor::Tensor;

/// Toolkit version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
