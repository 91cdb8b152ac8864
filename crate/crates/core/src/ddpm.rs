//! DDPM reference formulas and the cumulative-variance lower bound.

use serde::Serialize;

use crate::bridge::IsoGaussian;
use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::schedule::DdpmSchedule;

/// Variance accumulated along a sampling trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceLedger {
    pub initial_prior_var: f64,
    pub per_step_injected: Vec<f64>,
    pub total: f64,
}

impl VarianceLedger {
    pub fn new(initial_prior_var: f64) -> Self {
        Self {
            initial_prior_var,
            per_step_injected: Vec::new(),
            total: initial_prior_var,
        }
    }

    pub fn push(&mut self, injected: f64) {
        debug_assert!(injected >= 0.0);
        self.per_step_injected.push(injected);
        self.total += injected;
    }
}

fn check_index(t: usize, sched: &DdpmSchedule) -> Result<()> {
    if t == 0 || t > sched.steps() {
        return Err(Error::IndexOutOfRange {
            index: t,
            max: sched.steps(),
        });
    }
    Ok(())
}

/// `q(x_t | x_0) = N(sqrt(ᾱ_t)·x_0, (1 - ᾱ_t)·I)`.
pub fn ddpm_forward_marginal(
    x0: &LatentPoint,
    t: usize,
    sched: &DdpmSchedule,
) -> Result<IsoGaussian> {
    check_index(t, sched)?;
    let a = sched.alpha_bar(t);
    Ok(IsoGaussian {
        mean: x0.lin_comb(a.sqrt(), x0, 0.0),
        var: 1.0 - a,
    })
}

/// `q(x_{t-1} | x_0, x_t)`; at `t = 1` this is a point mass at `x_0`.
pub fn ddpm_posterior(
    x0: &LatentPoint,
    x_t: &LatentPoint,
    t: usize,
    sched: &DdpmSchedule,
) -> Result<IsoGaussian> {
    check_index(t, sched)?;
    x_t.ensure_dim(x0.dim())?;
    let beta = sched.beta(t);
    let a_t = sched.alpha_bar(t);
    let a_prev = sched.alpha_bar(t - 1);
    let c0 = a_prev.sqrt() * beta / (1.0 - a_t);
    let ct = (1.0 - beta).sqrt() * (1.0 - a_prev) / (1.0 - a_t);
    Ok(IsoGaussian {
        mean: x0.lin_comb(c0, x_t, ct),
        var: sched.posterior_var(t),
    })
}

/// Posterior mean written through the noise: `(x_t - β_t/sqrt(1-ᾱ_t)·ε) / sqrt(1-β_t)`.
pub fn ddpm_reparam_mean(
    x_t: &LatentPoint,
    eps: &LatentPoint,
    t: usize,
    sched: &DdpmSchedule,
) -> Result<LatentPoint> {
    check_index(t, sched)?;
    eps.ensure_dim(x_t.dim())?;
    let beta = sched.beta(t);
    let scale = 1.0 / (1.0 - beta).sqrt();
    let k = beta / (1.0 - sched.alpha_bar(t)).sqrt();
    Ok(x_t.lin_comb(scale, eps, -scale * k))
}

/// `‖ε_pred - ε‖²`.
pub fn ddpm_objective_value(eps_pred: &LatentPoint, eps: &LatentPoint) -> Result<f64> {
    eps.ensure_dim(eps_pred.dim())?;
    Ok(eps_pred.squared_distance(eps))
}

/// Lower bound `1 + Σ_{t ≥ 2} β̃_t` on the variance a conditional DDPM sampler accumulates.
///
/// Steps are recorded in sampling order (`t = steps` down to `2`). The final
/// step `t = 1` injects nothing under `ᾱ_0 = 1`.
pub fn ddpm_cumulative_variance(sched: &DdpmSchedule) -> VarianceLedger {
    let mut ledger = VarianceLedger::new(1.0);
    for t in (2..=sched.steps()).rev() {
        ledger.push(sched.posterior_var(t));
    }
    ledger
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{condition, GaussianMoments};
    use crate::rng::substream;
    use nalgebra::DMatrix;

    fn linear() -> DdpmSchedule {
        DdpmSchedule::linear(1e-4, 0.02, 1000).unwrap()
    }

    #[test]
    fn forward_marginal_cases() {
        let s = linear();
        let x0 = LatentPoint::new(vec![1.0, -2.0]).unwrap();
        let g = ddpm_forward_marginal(&x0, 1000, &s).unwrap();
        assert!(s.alpha_bar(1000).sqrt() < 0.01);
        assert!(g.mean.as_slice().iter().all(|m| m.abs() < 0.02));

        let one = DdpmSchedule::linear(0.5, 0.5, 1).unwrap();
        let g = ddpm_forward_marginal(&LatentPoint::scalar(2.0), 1, &one).unwrap();
        assert!((g.mean.as_slice()[0] - 0.5f64.sqrt() * 2.0).abs() < 1e-15);
        assert_eq!(g.var, 0.5);

        let zero = LatentPoint::zeros(3);
        for t in [1, 10, 999] {
            let g = ddpm_forward_marginal(&zero, t, &s).unwrap();
            assert_eq!(g.mean, zero);
            assert_eq!(g.var, 1.0 - s.alpha_bar(t));
        }
        assert!(ddpm_forward_marginal(&zero, 0, &s).is_err());
        assert!(ddpm_forward_marginal(&zero, 1001, &s).is_err());
    }

    /// Posterior via the generic oracle: joint law of (x_{t-1}, x_t) given x_0, then condition.
    #[test]
    fn posterior_matches_gaussian_conditioning() {
        let s = linear();
        let x0 = 0.7;
        for t in [2, 10, 500, 1000] {
            let a_prev = s.alpha_bar(t - 1);
            let b = s.beta(t);
            let v_prev = 1.0 - a_prev;
            let joint = GaussianMoments::new(
                vec![a_prev.sqrt() * x0, (1.0 - b).sqrt() * a_prev.sqrt() * x0],
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        v_prev,
                        (1.0 - b).sqrt() * v_prev,
                        (1.0 - b).sqrt() * v_prev,
                        (1.0 - b) * v_prev + b,
                    ],
                ),
            )
            .unwrap();
            let x_t = -0.3;
            let oracle = condition(&joint, &[1], &[x_t]).unwrap();
            let post =
                ddpm_posterior(&LatentPoint::scalar(x0), &LatentPoint::scalar(x_t), t, &s).unwrap();
            assert!(
                (oracle.mean()[0] - post.mean.as_slice()[0]).abs() < 1e-10,
                "t={t}"
            );
            assert!((oracle.cov()[(0, 0)] - post.var).abs() < 1e-10, "t={t}");
        }
    }

    /// Law of total mean/variance: composing the posterior with q(x_t|x_0) gives q(x_{t-1}|x_0).
    #[test]
    fn posterior_composes_to_previous_marginal() {
        let s = linear();
        let x0 = LatentPoint::scalar(1.3);
        for t in 2..=1000 {
            let a_t = s.alpha_bar(t);
            let a_prev = s.alpha_bar(t - 1);
            let b = s.beta(t);
            let ct = (1.0 - b).sqrt() * (1.0 - a_prev) / (1.0 - a_t);
            let post_at_mean =
                ddpm_posterior(&x0, &LatentPoint::scalar(a_t.sqrt() * 1.3), t, &s).unwrap();
            let total_var = ct * ct * (1.0 - a_t) + post_at_mean.var;
            assert!((post_at_mean.mean.as_slice()[0] - a_prev.sqrt() * 1.3).abs() < 1e-10);
            assert!((total_var - (1.0 - a_prev)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn posterior_boundary_and_ratio() {
        let s = linear();
        assert_eq!(s.posterior_var(1), 0.0);
        let x0 = LatentPoint::scalar(0.4);
        let g = ddpm_posterior(&x0, &LatentPoint::scalar(9.0), 1, &s).unwrap();
        assert!((g.mean.as_slice()[0] - 0.4).abs() < 1e-12);
        let r = s.posterior_var(500) / s.beta(500);
        assert!(r > 0.99 && r < 1.0, "ratio {r}");
    }

    #[test]
    fn reparam_mean_matches_posterior_with_true_noise() {
        let s = linear();
        let mut rng = substream(3, 0);
        for t in [1, 2, 50, 700, 1000] {
            let x0 = LatentPoint::new(rng.normal_vec(4)).unwrap();
            let eps = LatentPoint::new(rng.normal_vec(4)).unwrap();
            let a = s.alpha_bar(t);
            let x_t = x0.lin_comb(a.sqrt(), &eps, (1.0 - a).sqrt());
            let via_eps = ddpm_reparam_mean(&x_t, &eps, t, &s).unwrap();
            let direct = ddpm_posterior(&x0, &x_t, t, &s).unwrap().mean;
            assert!(via_eps.max_abs_diff(&direct) < 1e-12 * 1e3, "t={t}");
        }
    }

    #[test]
    fn reparam_scalar_arithmetic() {
        let s = DdpmSchedule::linear(0.5, 0.5, 1).unwrap();
        let m =
            ddpm_reparam_mean(&LatentPoint::scalar(1.0), &LatentPoint::scalar(1.0), 1, &s).unwrap();
        // (1/√0.5)(1 − 0.5/√0.5) = √2 − 1
        assert!((m.as_slice()[0] - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let tiny = DdpmSchedule::linear(1e-15, 1e-15, 1).unwrap();
        let m = ddpm_reparam_mean(
            &LatentPoint::scalar(3.0),
            &LatentPoint::scalar(0.0),
            1,
            &tiny,
        )
        .unwrap();
        assert!((m.as_slice()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn objective_values() {
        let p = |v: &[f64]| LatentPoint::new(v.to_vec()).unwrap();
        assert_eq!(
            ddpm_objective_value(&p(&[1.0, 2.0]), &p(&[1.0, 2.0])).unwrap(),
            0.0
        );
        assert_eq!(ddpm_objective_value(&p(&[1.0]), &p(&[0.0])).unwrap(), 1.0);
        assert_eq!(
            ddpm_objective_value(&p(&[1.0, 1.0]), &p(&[0.0, 0.0])).unwrap(),
            2.0
        );
        assert!(ddpm_objective_value(&p(&[1.0]), &p(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn cumulative_variance_cases() {
        let l = ddpm_cumulative_variance(&linear());
        assert!((l.total - 11.036).abs() < 0.01, "total {}", l.total);
        assert_eq!(l.per_step_injected.len(), 999);

        let one = ddpm_cumulative_variance(&DdpmSchedule::linear(0.3, 0.3, 1).unwrap());
        assert_eq!(one.total, 1.0);

        // independent summation with the closed form for constant beta
        let s = DdpmSchedule::linear(0.01, 0.01, 100).unwrap();
        let l = ddpm_cumulative_variance(&s);
        let mut expect = 1.0;
        for t in 2..=100 {
            let a_t = 0.99f64.powi(t);
            let a_prev = 0.99f64.powi(t - 1);
            expect += (1.0 - a_prev) / (1.0 - a_t) * 0.01;
        }
        assert!((l.total - expect).abs() < 1e-12);
        let sum: f64 = l.initial_prior_var + l.per_step_injected.iter().sum::<f64>();
        assert!((l.total - sum).abs() < 1e-12);
        assert!(l.total > 1.0);
    }
}
