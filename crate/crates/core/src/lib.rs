//! Image denoising with a linear-interpolation diffusion process.
//!
//! The forward process blends a clean image `x0` into its real noisy
//! counterpart `xT` along `x_t = (1 - t/T) x0 + (t/T) xT`. A small
//! convolutional encoder-decoder learns to recover `x0` from any `x_t`, and
//! three samplers (origin, improve, direct) walk back from the observed
//! noisy image.
//!
//! Modules:
//! - [`image`] and [`augment`]: the image carrier, PNG I/O, patches, D4 augmentations
//! - [`diffusion`]: the interpolation schedule
//! - [`denoiser`]: the trainable network, its checkpoint format, and synthetic oracles
//! - [`training`]: losses, Adam, and the training loop
//! - [`sampler`]: the reverse-process algorithms
//! - [`error_sim`]: Monte-Carlo study of sampler robustness to denoiser error
//! - [`metrics`]: PSNR and SSIM
//! - [`synth`]: synthetic clean/noisy pair generation

pub mod augment;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod error_sim;
pub mod image;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod training;

pub use augment::AugmentOp;
pub use denoiser::{Denoiser, DenoiserParams, DenoiserSpec, OracleDenoiser, OracleKind};
pub use diffusion::Schedule;
pub use error::{Error, Result};
pub use image::Image;
pub use sampler::{SampleTrace, SamplerKind};
pub use training::{LossKind, NoisyPair, OptimizerState, TrainConfig};
