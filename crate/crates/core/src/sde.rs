//! Brownian bridge as an SDE, `dx = (e - x)/(T - t) dt + dw`, and its time
//! reversal with the pinned-law score.

use serde::Serialize;

use crate::bridge::pinned_bridge;
use crate::error::{invalid, Error, Result};
use crate::latent::LatentPoint;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub start: LatentPoint,
    pub endpoint: LatentPoint,
    /// Scales the Brownian increment; `0` gives the ODE limit.
    pub noise_scale: f64,
}

impl SdeConfig {
    pub fn new(
        horizon: f64,
        n_steps: usize,
        start: LatentPoint,
        endpoint: LatentPoint,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        endpoint.ensure_dim(start.dim())?;
        Ok(Self {
            horizon,
            n_steps,
            start,
            endpoint,
            noise_scale: 1.0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub state: Vec<f64>,
}

/// `(endpoint - x_t)/(T - t)`, defined for `t < T`.
pub fn bridge_drift(
    x_t: &LatentPoint,
    t: f64,
    endpoint: &LatentPoint,
    horizon: f64,
) -> Result<LatentPoint> {
    endpoint.ensure_dim(x_t.dim())?;
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: horizon,
        });
    }
    Ok(endpoint.lin_comb(1.0 / (horizon - t), x_t, -1.0 / (horizon - t)))
}

/// Euler–Maruyama from `start` at `t = 0` to `endpoint` at `t = T`.
///
/// The drift is singular at `T`, so the last step is replaced by the exact
/// pinned conditional, which is a point mass on the endpoint.
pub fn euler_maruyama(cfg: &SdeConfig, rng: &mut RngStream) -> Result<Vec<PathPoint>> {
    let mut path = Vec::with_capacity(cfg.n_steps + 1);
    let mut x = cfg.start.clone();
    path.push(PathPoint {
        t: 0.0,
        state: x.as_slice().to_vec(),
    });
    for k in 0..cfg.n_steps - 1 {
        let t = cfg.time(k);
        let dt = cfg.time(k + 1) - t;
        let drift = bridge_drift(&x, t, &cfg.endpoint, cfg.horizon)?;
        x = x.add_scaled(dt, drift.as_slice());
        if cfg.noise_scale != 0.0 {
            let xi = rng.normal_vec(x.dim());
            x = x.add_scaled(cfg.noise_scale * dt.sqrt(), &xi);
        }
        path.push(PathPoint {
            t: cfg.time(k + 1),
            state: x.as_slice().to_vec(),
        });
    }
    path.push(PathPoint {
        t: cfg.horizon,
        state: cfg.endpoint.as_slice().to_vec(),
    });
    Ok(path)
}

/// Score of the pinned law at `t`: `-(x_t - μ_t)/σ_t²`, for `0 < t < T`.
pub fn analytic_score(
    x_t: &LatentPoint,
    t: f64,
    start: &LatentPoint,
    endpoint: &LatentPoint,
    horizon: f64,
) -> Result<LatentPoint> {
    if !(t > 0.0 && t < horizon) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: horizon,
        });
    }
    x_t.ensure_dim(start.dim())?;
    let law = pinned_bridge(start, endpoint, t, horizon)?;
    Ok(x_t.lin_comb(-1.0 / law.var, &law.mean, 1.0 / law.var))
}

/// Generic backward Euler–Maruyama step for `dx = [f - score] dt + dw̄`:
/// `x_{t-Δ} = x_t - (f - score)·Δ + sqrt(Δ)·ξ`.
pub fn reverse_step_with(
    x_t: &LatentPoint,
    drift: &LatentPoint,
    score: &LatentPoint,
    dt: f64,
    noise: &[f64],
) -> LatentPoint {
    x_t.lin_comb(1.0, drift, -dt)
        .add_scaled(dt, score.as_slice())
        .add_scaled(dt.sqrt(), noise)
}

/// One reverse-time step of the bridge SDE from `t` to `t - dt`.
pub fn reverse_sde_step(
    x_t: &LatentPoint,
    t: f64,
    dt: f64,
    start: &LatentPoint,
    endpoint: &LatentPoint,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<LatentPoint> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(t - dt >= 0.0) {
        return Err(Error::TimeOutOfRange {
            t: t - dt,
            lo: 0.0,
            hi: t,
        });
    }
    let drift = bridge_drift(x_t, t, endpoint, horizon)?;
    let score = analytic_score(x_t, t, start, endpoint, horizon)?;
    let xi = rng.normal_vec(x_t.dim());
    Ok(reverse_step_with(x_t, &drift, &score, dt, &xi))
}

/// Integrates the reverse SDE from `t_from` down to `t_to` in `n_steps` equal steps.
#[allow(clippy::too_many_arguments)]
pub fn reverse_integrate(
    x: &LatentPoint,
    t_from: f64,
    t_to: f64,
    n_steps: usize,
    start: &LatentPoint,
    endpoint: &LatentPoint,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<LatentPoint> {
    if !(t_to > 0.0 && t_to < t_from && t_from < horizon) {
        return Err(invalid(
            "interval",
            format!("need 0 < {t_to} < {t_from} < {horizon}"),
        ));
    }
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    let dt = (t_from - t_to) / n_steps as f64;
    let mut state = x.clone();
    for k in 0..n_steps {
        let t = t_from - dt * k as f64;
        state = reverse_sde_step(&state, t, dt, start, endpoint, horizon, rng)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn s(v: f64) -> LatentPoint {
        LatentPoint::scalar(v)
    }

    #[test]
    fn drift_cases() {
        let e = LatentPoint::new(vec![1.0, -2.0]).unwrap();
        assert!(bridge_drift(&e, 0.7, &e, 2.0)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| *v == 0.0));
        assert_eq!(
            bridge_drift(&s(0.0), 0.0, &s(1.0), 2.0).unwrap().as_slice(),
            &[0.5]
        );
        let a = bridge_drift(&s(0.0), 0.0, &s(1.0), 2.0).unwrap().as_slice()[0];
        let b = bridge_drift(&s(0.0), 1.0, &s(1.0), 2.0).unwrap().as_slice()[0];
        assert_eq!(b, 2.0 * a);
        assert!(bridge_drift(&s(0.0), 2.0, &s(1.0), 2.0).is_err());
    }

    #[test]
    fn one_step_lands_on_endpoint() {
        let cfg = SdeConfig::new(2.0, 1, s(0.3), s(-4.0)).unwrap();
        let path = euler_maruyama(&cfg, &mut substream(0, 0)).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path[1].state, vec![-4.0]);
        assert_eq!(path[1].t, 2.0);
    }

    #[test]
    fn noiseless_path_is_the_straight_line() {
        let mut cfg = SdeConfig::new(2.0, 400, s(1.0), s(3.0)).unwrap();
        cfg.noise_scale = 0.0;
        let path = euler_maruyama(&cfg, &mut substream(0, 0)).unwrap();
        for p in &path {
            let line = 1.0 + (3.0 - 1.0) * p.t / 2.0;
            assert!((p.state[0] - line).abs() < 1e-12, "t {}", p.t);
        }
    }

    #[test]
    fn score_cases() {
        let (a, b) = (s(0.0), s(1.0));
        assert_eq!(
            analytic_score(&s(0.5), 1.0, &a, &b, 2.0)
                .unwrap()
                .as_slice(),
            &[0.0]
        );
        for x in [-1.0, 0.2, 3.0] {
            let sc = analytic_score(&s(x), 1.0, &a, &b, 2.0).unwrap().as_slice()[0];
            assert!((sc + (x - 0.5) / 0.5).abs() < 1e-14);
        }
        assert!(analytic_score(&s(0.0), 0.0, &a, &b, 2.0).is_err());
        assert!(analytic_score(&s(0.0), 2.0, &a, &b, 2.0).is_err());
    }

    #[test]
    fn score_matches_finite_difference_of_log_density() {
        let (a, b) = (s(-0.4), s(1.3));
        let horizon = 2.0;
        for (x, t) in [(0.1, 0.3), (-1.0, 0.9), (0.5, 1.0), (2.0, 1.4), (0.0, 1.9)] {
            let law = pinned_bridge(&a, &b, t, horizon).unwrap();
            let mu = law.mean.as_slice()[0];
            let logp = |v: f64| {
                -0.5 * (v - mu).powi(2) / law.var
                    - 0.5 * (2.0 * std::f64::consts::PI * law.var).ln()
            };
            let h = 1e-5;
            let fd = (logp(x + h) - logp(x - h)) / (2.0 * h);
            let sc = analytic_score(&s(x), t, &a, &b, horizon)
                .unwrap()
                .as_slice()[0];
            assert!(
                (fd - sc).abs() <= 1e-6 * sc.abs().max(1.0),
                "x {x} t {t}: fd {fd} score {sc}"
            );
        }
    }

    #[test]
    fn score_is_affine_with_constant_jacobian() {
        let (a, b) = (
            LatentPoint::new(vec![0.0, 1.0]).unwrap(),
            LatentPoint::new(vec![2.0, -1.0]).unwrap(),
        );
        for t in [0.2, 0.7, 1.0, 1.6] {
            let var = t * (2.0 - t) / 2.0;
            let base = LatentPoint::new(vec![0.3, 0.4]).unwrap();
            let s0 = analytic_score(&base, t, &a, &b, 2.0).unwrap();
            for j in 0..2 {
                let mut bumped = base.as_slice().to_vec();
                bumped[j] += 0.7;
                let s1 =
                    analytic_score(&LatentPoint::new(bumped).unwrap(), t, &a, &b, 2.0).unwrap();
                for i in 0..2 {
                    let jac = (s1.as_slice()[i] - s0.as_slice()[i]) / 0.7;
                    let expect = if i == j { -1.0 / var } else { 0.0 };
                    assert!((jac - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_score_zero_noise_is_pure_drift() {
        let x = s(1.0);
        let drift = s(0.5);
        let out = reverse_step_with(&x, &drift, &s(0.0), 0.1, &[0.0]);
        assert!((out.as_slice()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn tiny_step_scaling() {
        let (a, b) = (s(0.0), s(1.0));
        let mut rng = substream(3, 0);
        for dt in [1e-2, 1e-4] {
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let x = s(0.4);
                let out = reverse_sde_step(&x, 1.0, dt, &a, &b, 2.0, &mut rng).unwrap();
                let change = (out.as_slice()[0] - 0.4).abs();
                worst = worst.max(change / (dt + dt.sqrt()));
            }
            // |ξ| ≤ 5 over 200 draws with overwhelming probability; drift terms are O(1)
            assert!(worst < 6.0, "dt {dt}: ratio {worst}");
        }
    }

    #[test]
    fn reverse_rejects_bad_times() {
        let (a, b) = (s(0.0), s(1.0));
        let mut rng = substream(0, 0);
        assert!(reverse_sde_step(&s(0.0), 1.0, 0.0, &a, &b, 2.0, &mut rng).is_err());
        assert!(reverse_sde_step(&s(0.0), 1.0, 1.5, &a, &b, 2.0, &mut rng).is_err());
        assert!(reverse_sde_step(&s(0.0), 0.0, 0.1, &a, &b, 2.0, &mut rng).is_err());
        assert!(reverse_sde_step(&s(0.0), 2.0, 0.1, &a, &b, 2.0, &mut rng).is_err());
    }
}
