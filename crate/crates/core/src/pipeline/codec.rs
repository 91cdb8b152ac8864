use crate::denoiser::Denoiser;
use crate::error::Result;
use crate::latent::LatentPoint;
use crate::rng::RngStream;
use crate::schedule::BridgeSchedule;

use super::sampler::{sample, SampleOptions};

/// Maps frames to latents and back.
pub trait Codec {
    fn encode(&self, frame: &[f64]) -> Result<LatentPoint>;
    fn decode(&self, latent: &LatentPoint) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl Codec for IdentityCodec {
    fn encode(&self, frame: &[f64]) -> Result<LatentPoint> {
        LatentPoint::new(frame.to_vec())
    }

    fn decode(&self, latent: &LatentPoint) -> Vec<f64> {
        latent.as_slice().to_vec()
    }
}

/// Encodes both neighbors, estimates the middle latent and decodes it.
pub fn interpolate<C: Codec + ?Sized, D: Denoiser + ?Sized>(
    codec: &C,
    den: &D,
    prev_frame: &[f64],
    next_frame: &[f64],
    sched: &BridgeSchedule,
    opts: &SampleOptions,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let y = codec.encode(prev_frame)?;
    let z = codec.encode(next_frame)?;
    let report = sample(den, &y, &z, sched, opts, rng)?;
    Ok(codec.decode(&report.combined))
}
