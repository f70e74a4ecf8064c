//! The denoiser `S(x_t, t)`: a trainable network and synthetic oracles.

pub mod checkpoint;
pub mod layers;
pub mod oracle;
pub mod unet;

pub use checkpoint::Checkpoint;
pub use layers::time_embed;
pub use oracle::{OracleDenoiser, OracleKind};
pub use unet::{backward, forward, DenoiserParams, DenoiserSpec, ParamSlice, Unet};

use crate::error::Result;
use crate::image::Image;

/// Anything that maps `(x_t, t)` to an estimate of the clean image.
pub trait Denoiser {
    fn estimate(&mut self, x_t: &Image, t: usize, horizon: usize) -> Result<Image>;

    fn name(&self) -> &str {
        "denoiser"
    }
}

/// A trained network bound to its parameters.
#[derive(Clone, Debug)]
pub struct NetDenoiser {
    net: Unet,
    params: DenoiserParams,
}

impl NetDenoiser {
    pub fn new(net: Unet, params: DenoiserParams) -> Result<Self> {
        if params.len() != net.param_count() {
            return Err(crate::Error::LengthMismatch { expected: net.param_count(), actual: params.len() });
        }
        Ok(Self { net, params })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        Self::new(Unet::new(ck.spec)?, ck.params)
    }

    pub fn net(&self) -> &Unet {
        &self.net
    }

    pub fn params(&self) -> &DenoiserParams {
        &self.params
    }
}

impl Denoiser for NetDenoiser {
    fn estimate(&mut self, x_t: &Image, t: usize, horizon: usize) -> Result<Image> {
        self.net.forward(&self.params.values, x_t, t, horizon)
    }

    fn name(&self) -> &str {
        "unet"
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &mut D {
    fn estimate(&mut self, x_t: &Image, t: usize, horizon: usize) -> Result<Image> {
        (**self).estimate(x_t, t, horizon)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
