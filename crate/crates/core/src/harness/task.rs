//! Synthetic triplet tasks.
//!
//! All tasks share a common factor `c ~ N(0, I)` so the two endpoints are
//! close, the way consecutive frames are:
//!
//! - `Midpoint`: `y, z = c + σξ`, `x = (y + z)/2`
//! - `JointGaussian`: `y, x, z = c + σξ` with independent `ξ`
//! - `NonlinearArc`: `y` uniform on the unit sphere, `z` a perturbation of `y`
//!   projected back onto it, and `x` the arc midpoint `(y + z)/‖y + z‖`

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::GaussianMoments;
use crate::latent::{LatentPoint, Triplet};
use crate::rng::{substream, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Midpoint,
    JointGaussian,
    NonlinearArc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dim: usize,
    pub noise_scale: f64,
    pub count: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if self.count == 0 {
            return Err(invalid("count", "must be at least 1"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(invalid("noise_scale", "must be finite and non-negative"));
        }
        if self.kind == TaskKind::NonlinearArc && self.dim < 2 {
            return Err(invalid("dim", "the arc task needs at least two dimensions"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TaskSet {
    pub triplets: Vec<Triplet>,
    /// Exact joint law of `(y, x, z)` when the task is Gaussian.
    pub moments: Option<GaussianMoments>,
}

/// Joint law of `(y, x, z)` stacked in that order, for the Gaussian tasks.
pub fn task_moments(kind: TaskKind, dim: usize, noise_scale: f64) -> Option<GaussianMoments> {
    let s2 = noise_scale * noise_scale;
    let d = dim;
    let mut c = DMatrix::zeros(3 * d, 3 * d);
    match kind {
        TaskKind::NonlinearArc => return None,
        TaskKind::Midpoint => {
            for i in 0..d {
                let (y, x, z) = (i, d + i, 2 * d + i);
                c[(y, y)] = 1.0 + s2;
                c[(z, z)] = 1.0 + s2;
                c[(y, z)] = 1.0;
                c[(z, y)] = 1.0;
                c[(x, x)] = 1.0 + s2 / 2.0;
                for e in [y, z] {
                    c[(x, e)] = 1.0 + s2 / 2.0;
                    c[(e, x)] = 1.0 + s2 / 2.0;
                }
            }
        }
        TaskKind::JointGaussian => {
            for i in 0..d {
                let idx = [i, d + i, 2 * d + i];
                for &p in &idx {
                    for &q in &idx {
                        c[(p, q)] = if p == q { 1.0 + s2 } else { 1.0 };
                    }
                }
            }
        }
    }
    Some(GaussianMoments::new(vec![0.0; 3 * d], c).expect("task covariance is PSD by construction"))
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-12).then(|| v.iter().map(|x| x / n).collect())
}

/// Draws one triplet of the given kind.
pub fn draw_triplet(
    kind: TaskKind,
    dim: usize,
    noise_scale: f64,
    rng: &mut RngStream,
) -> Result<Triplet> {
    let pt = LatentPoint::new;
    match kind {
        TaskKind::Midpoint | TaskKind::JointGaussian => {
            let c = rng.normal_vec(dim);
            let around = |rng: &mut RngStream| -> Vec<f64> {
                c.iter()
                    .map(|v| v + noise_scale * rng.standard_normal())
                    .collect()
            };
            let y = around(rng);
            let z = around(rng);
            let x = if kind == TaskKind::Midpoint {
                y.iter().zip(&z).map(|(a, b)| 0.5 * (a + b)).collect()
            } else {
                around(rng)
            };
            Triplet::new(pt(y)?, pt(x)?, pt(z)?)
        }
        TaskKind::NonlinearArc => {
            if dim < 2 {
                return Err(invalid("dim", "the arc task needs at least two dimensions"));
            }
            loop {
                let Some(y) = normalize(&rng.normal_vec(dim)) else {
                    continue;
                };
                let g = rng.normal_vec(dim);
                let pert: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + noise_scale * b).collect();
                let Some(z) = normalize(&pert) else { continue };
                let sum: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
                let Some(x) = normalize(&sum) else { continue };
                return Triplet::new(pt(y)?, pt(x)?, pt(z)?);
            }
        }
    }
}

/// Triplet `i` is drawn from the stream `(spec.seed, i)`.
pub fn generate_triplets(spec: &TaskSpec) -> Result<TaskSet> {
    spec.validate()?;
    let triplets = (0..spec.count)
        .map(|i| {
            draw_triplet(
                spec.kind,
                spec.dim,
                spec.noise_scale,
                &mut substream(spec.seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSet {
        triplets,
        moments: task_moments(spec.kind, spec.dim, spec.noise_scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TaskKind, dim: usize, count: usize) -> TaskSpec {
        TaskSpec {
            kind,
            dim,
            noise_scale: 0.5,
            count,
            seed: 1,
        }
    }

    #[test]
    fn midpoint_is_exact() {
        let set = generate_triplets(&spec(TaskKind::Midpoint, 2, 3)).unwrap();
        assert_eq!(set.triplets.len(), 3);
        for t in &set.triplets {
            assert_eq!(t.x, t.y.lin_comb(0.5, &t.z, 0.5));
        }
    }

    #[test]
    fn arc_midpoint_lies_on_sphere_and_bisects() {
        let set = generate_triplets(&spec(TaskKind::NonlinearArc, 3, 50)).unwrap();
        assert!(set.moments.is_none());
        for t in &set.triplets {
            let norm = |p: &LatentPoint| p.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm(&t.x) - 1.0).abs() < 1e-12);
            assert!((t.x.squared_distance(&t.y) - t.x.squared_distance(&t.z)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_triplets(&spec(TaskKind::Midpoint, 2, 0)).is_err());
        assert!(generate_triplets(&spec(TaskKind::Midpoint, 0, 2)).is_err());
        assert!(generate_triplets(&spec(TaskKind::NonlinearArc, 1, 2)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_triplets(&spec(TaskKind::JointGaussian, 4, 5)).unwrap();
        let b = generate_triplets(&spec(TaskKind::JointGaussian, 4, 5)).unwrap();
        assert_eq!(a.triplets, b.triplets);
    }
}
