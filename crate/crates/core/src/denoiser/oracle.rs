use nalgebra::DMatrix;

use super::{Denoiser, DenoiserInput};
use crate::bridge::{bridge_variance, decode_scaled_label};
use crate::error::{invalid, Result};
use crate::gaussian::{condition, GaussianMoments};
use crate::latent::{BridgeSide, LatentPoint};
use crate::schedule::BridgeSchedule;

/// Exact predictor for tasks with `x = (y + z)/2`. Ignores the label.
#[derive(Debug, Clone, Copy, Default)]
pub struct MidpointOracle;

pub fn oracle_midpoint() -> MidpointOracle {
    MidpointOracle
}

impl Denoiser for MidpointOracle {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        let mid = input.y.lin_comb(0.5, &input.z, 0.5);
        Ok(input.x_t.sub(&mid))
    }
}

/// Predicts `x_t - x` for one known ground truth.
#[derive(Debug, Clone)]
pub struct KnownTargetOracle {
    pub x: LatentPoint,
}

impl Denoiser for KnownTargetOracle {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        self.x.ensure_dim(input.dim())?;
        Ok(input.x_t.sub(&self.x))
    }
}

/// Bayes-optimal predictor `x_t - E[x | x_t, y, z]` for a jointly Gaussian task.
///
/// `task` is the joint law of `(y, x, z)` stacked in that order (dimension `3d`).
/// The posterior is computed in two conditioning passes: first on the endpoints,
/// then on `x_t = a·x + b·e + sqrt(v)·ξ` with the bridge coefficients recovered
/// from the label.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    task: GaussianMoments,
    dim: usize,
    horizon: f64,
}

pub fn oracle_gaussian(task: GaussianMoments, sched: &BridgeSchedule) -> Result<GaussianOracle> {
    if task.dim() == 0 || !task.dim().is_multiple_of(3) {
        return Err(invalid(
            "task",
            format!("joint law must have dimension 3d, got {}", task.dim()),
        ));
    }
    Ok(GaussianOracle {
        dim: task.dim() / 3,
        task,
        horizon: sched.horizon(),
    })
}

impl GaussianOracle {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `E[x | x_t, y, z]` and its covariance.
    pub fn posterior(&self, input: &DenoiserInput) -> Result<GaussianMoments> {
        let d = self.dim;
        input.x_t.ensure_dim(d)?;
        let observed: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
        let vals: Vec<f64> = input
            .y
            .as_slice()
            .iter()
            .chain(input.z.as_slice())
            .copied()
            .collect();
        let given_ends = condition(&self.task, &observed, &vals)?;

        let (side, t) = decode_scaled_label(input.label, self.horizon);
        let b = t / self.horizon;
        let a = 1.0 - b;
        if a == 0.0 {
            // x_t is the endpoint itself and carries no information about x.
            return Ok(given_ends);
        }
        let v = bridge_variance(t, self.horizon);
        let e = match side {
            BridgeSide::Prev => &input.y,
            BridgeSide::Next => &input.z,
        };
        let m = given_ends.mean();
        let s = given_ends.cov();
        let mut mean = m.iter().copied().collect::<Vec<_>>();
        mean.extend(m.iter().zip(e.as_slice()).map(|(mi, ei)| a * mi + b * ei));
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                let sij = s[(i, j)];
                cov[(i, j)] = sij;
                cov[(i, d + j)] = a * sij;
                cov[(d + i, j)] = a * sij;
                cov[(d + i, d + j)] = a * a * sij + if i == j { v } else { 0.0 };
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let joint = GaussianMoments::new(mean, cov)?;
        let obs: Vec<usize> = (d..2 * d).collect();
        condition(&joint, &obs, input.x_t.as_slice())
    }
}

impl Denoiser for GaussianOracle {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        let post = self.posterior(input)?;
        let mean = LatentPoint::new(post.mean_vec())?;
        Ok(input.x_t.sub(&mean))
    }
}
