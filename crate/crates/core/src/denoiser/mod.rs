//! Denoisers predict the drift target `x_t - x` from the state, a scalar time
//! label and both endpoints.

mod adam;
mod mlp;
mod oracle;

pub use adam::{adam_step, AdamState};
pub use mlp::{Activation, ForwardCache, MlpDenoiser, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use oracle::{
    oracle_gaussian, oracle_midpoint, GaussianOracle, KnownTargetOracle, MidpointOracle,
};

use crate::error::{invalid, Result};
use crate::latent::LatentPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserInput {
    pub x_t: LatentPoint,
    /// Process-time label scaled by `1/(2T)`, in `[0, 1]`.
    pub label: f64,
    pub y: LatentPoint,
    pub z: LatentPoint,
}

impl DenoiserInput {
    pub fn new(x_t: LatentPoint, label: f64, y: LatentPoint, z: LatentPoint) -> Result<Self> {
        y.ensure_dim(x_t.dim())?;
        z.ensure_dim(x_t.dim())?;
        if !(0.0..=1.0).contains(&label) {
            return Err(invalid("label", format!("must lie in [0, 1], got {label}")));
        }
        Ok(Self { x_t, label, y, z })
    }

    pub fn dim(&self) -> usize {
        self.x_t.dim()
    }
}

pub trait Denoiser: Send + Sync {
    /// Estimate of `x_t - x`.
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        (**self).predict(input)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        (**self).predict(input)
    }
}
