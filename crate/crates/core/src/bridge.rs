//! Consecutive Brownian bridge math.
//!
//! Time convention: bridge time `t ∈ [0, T]` measures distance from the ground
//! truth `x`, so `t = 0` pins `x` and `t = T` pins the chosen endpoint. The
//! forward marginal on either side is
//!
//! ```text
//! X_t ~ N((1 - t/T)·x + (t/T)·e, t(T - t)/T · I),   e ∈ {y, z}
//! ```
//!
//! The whole process, read along one axis, runs `y → x → z` over `[0, 2T]`.
//! A point at bridge time `t` sits at process time `T - t` on the `y` side and
//! `T + t` on the `z` side; that process time is also the scalar label fed to
//! the denoiser.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{condition, wiener_cov, GaussianMoments};
use crate::latent::{BridgeSide, LatentPoint, Triplet};
use crate::schedule::BridgeSchedule;

/// Isotropic Gaussian `N(mean, var·I)` over a latent space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoGaussian {
    pub mean: LatentPoint,
    pub var: f64,
}

impl IsoGaussian {
    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn to_moments(&self) -> GaussianMoments {
        GaussianMoments::isotropic(self.mean.as_slice().to_vec(), self.var)
            .expect("isotropic law with finite non-negative variance")
    }

    /// Draws `mean + sqrt(var)·noise`.
    pub fn sample_with(&self, noise: &[f64]) -> LatentPoint {
        self.mean.add_scaled(self.var.sqrt(), noise)
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: horizon,
        });
    }
    Ok(())
}

/// `t(T - t)/T`, the pinned-bridge variance at distance `t` from a pin.
pub fn bridge_variance(t: f64, horizon: f64) -> f64 {
    t * (horizon - t) / horizon
}

/// Brownian bridge from `a` (at 0) to `b` (at `horizon`), observed at `t`.
pub fn pinned_bridge(
    a: &LatentPoint,
    b: &LatentPoint,
    t: f64,
    horizon: f64,
) -> Result<IsoGaussian> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    b.ensure_dim(a.dim())?;
    check_time(t, horizon)?;
    let w = t / horizon;
    Ok(IsoGaussian {
        mean: a.lin_comb(1.0 - w, b, w),
        var: bridge_variance(t, horizon),
    })
}

/// Law of the state at bridge time `t` on `side`, given the whole triplet.
pub fn forward_marginal(
    trip: &Triplet,
    side: BridgeSide,
    t: f64,
    sched: &BridgeSchedule,
) -> Result<IsoGaussian> {
    pinned_bridge(&trip.x, trip.endpoint(side), t, sched.horizon())
}

/// Closed-form step from bridge time `t` back to `s < t`, given an estimate of `x`.
///
/// Mean `x_t - ((t - s)/t)(x_t - x_hat)`, variance `s(t - s)/t`. Neither depends on
/// the far endpoint or on the horizon.
pub fn backward_transition(
    x_t: &LatentPoint,
    t: f64,
    s: f64,
    x_hat: &LatentPoint,
) -> Result<IsoGaussian> {
    x_hat.ensure_dim(x_t.dim())?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if !(s >= 0.0 && s < t) {
        return Err(Error::TimeOutOfRange {
            t: s,
            lo: 0.0,
            hi: t,
        });
    }
    let frac = (t - s) / t;
    Ok(IsoGaussian {
        mean: x_t.lin_comb(1.0 - frac, x_hat, frac),
        var: s * (t - s) / t,
    })
}

/// Process-time label: `t` on the `y` side, `2T - t` on the `z` side.
pub fn time_label(side: BridgeSide, t: f64, horizon: f64) -> f64 {
    match side {
        BridgeSide::Prev => t,
        BridgeSide::Next => 2.0 * horizon - t,
    }
}

/// Label normalized to `[0, 1]` for network input.
pub fn scaled_label(side: BridgeSide, t: f64, horizon: f64) -> f64 {
    time_label(side, t, horizon) / (2.0 * horizon)
}

/// Inverse of [`scaled_label`]. The label `1/2` (both endpoints) resolves to the `y` side.
pub fn decode_scaled_label(label: f64, horizon: f64) -> (BridgeSide, f64) {
    let u = label * 2.0 * horizon;
    if u <= horizon {
        (BridgeSide::Prev, u.max(0.0))
    } else {
        (BridgeSide::Next, (2.0 * horizon - u).max(0.0))
    }
}

/// min-SNR-γ weight `min(1/δ_t, γ)` with `δ_t = t(T - t)/T`; `γ` where `δ_t = 0`.
pub fn snr_weight(t: f64, sched: &BridgeSchedule) -> f64 {
    let delta = bridge_variance(t, sched.horizon());
    if delta <= 0.0 {
        sched.gamma()
    } else {
        (1.0 / delta).min(sched.gamma())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub three_point_mean: f64,
    pub three_point_var: f64,
    pub two_point_mean: f64,
    pub two_point_var: f64,
    pub mean_diff: f64,
    pub var_diff: f64,
    /// Sensitivity of the three-pin conditional mean to the far pin value.
    pub far_pin_coefficient: f64,
}

/// Conditions `W_s` on `{W_t, W_h}` and on `{W_t}` alone for `0 < s < t < h`.
pub fn split_property_check(times: (f64, f64, f64), pins: (f64, f64)) -> Result<SplitReport> {
    let (s, t, h) = times;
    if !(0.0 < s && s < t && t < h) {
        return Err(invalid(
            "times",
            format!("need 0 < s < t < h, got ({s}, {t}, {h})"),
        ));
    }
    let (v_t, v_h) = pins;
    let three = wiener_cov(&[s, t, h])?;
    let c3 = condition(&three, &[1, 2], &[v_t, v_h])?;
    let c3_bumped = condition(&three, &[1, 2], &[v_t, v_h + 1.0])?;
    let two = wiener_cov(&[s, t])?;
    let c2 = condition(&two, &[1], &[v_t])?;
    let (m3, var3) = (c3.mean()[0], c3.cov()[(0, 0)]);
    let (m2, var2) = (c2.mean()[0], c2.cov()[(0, 0)]);
    Ok(SplitReport {
        three_point_mean: m3,
        three_point_var: var3,
        two_point_mean: m2,
        two_point_var: var2,
        mean_diff: (m3 - m2).abs(),
        var_diff: (var3 - var2).abs(),
        far_pin_coefficient: c3_bumped.mean()[0] - m3,
    })
}

/// Discrete BBDM quantities at step `t_idx` of `steps`, with variance scale `s_bb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BbdmCoefficients {
    pub m_t: f64,
    pub m_prev: f64,
    pub delta_t: f64,
    pub delta_prev: f64,
    /// `δ_t - δ_{t-1}·(1 - m_t)²/(1 - m_{t-1})²`
    pub delta_cond: f64,
    /// `None` at the terminal index where `δ_t = 0` and the posterior is degenerate.
    pub posterior: Option<BbdmPosterior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BbdmPosterior {
    pub c_xt: f64,
    pub c_yt: f64,
    pub c_et: f64,
    /// `δ_{t|t-1}·δ_{t-1}/δ_t`
    pub var: f64,
}

pub fn bbdm_coefficients(t_idx: usize, steps: usize, s_bb: f64) -> Result<BbdmCoefficients> {
    if steps == 0 || t_idx == 0 || t_idx > steps {
        return Err(Error::IndexOutOfRange {
            index: t_idx,
            max: steps,
        });
    }
    if !(s_bb > 0.0 && s_bb.is_finite()) {
        return Err(invalid("s_bb", "must be positive"));
    }
    let m = |k: usize| k as f64 / steps as f64;
    let delta = |mk: f64| 2.0 * s_bb * (mk - mk * mk);
    let m_t = m(t_idx);
    let m_prev = m(t_idx - 1);
    let delta_t = delta(m_t);
    let delta_prev = delta(m_prev);
    let ratio = (1.0 - m_t) / (1.0 - m_prev);
    let delta_cond = delta_t - delta_prev * ratio * ratio;
    let posterior = (delta_t > 0.0).then(|| BbdmPosterior {
        c_xt: delta_prev / delta_t * ratio + delta_cond / delta_t * (1.0 - m_prev),
        c_yt: m_prev - m_t * ratio * delta_prev / delta_t,
        c_et: (1.0 - m_prev) * delta_cond / delta_t,
        var: delta_cond * delta_prev / delta_t,
    });
    Ok(BbdmCoefficients {
        m_t,
        m_prev,
        delta_t,
        delta_prev,
        delta_cond,
        posterior,
    })
}

/// BBDM one-step posterior `q(x_{t-1} | x_0, x_t, y)`, with mean
/// `c_xt·x_t + c_yt·y - c_et·(m_t(y - x_0) + sqrt(δ_t)·ε)`.
///
/// The noise term equals `x_t - x_0` exactly, so it is substituted as such.
pub fn bbdm_posterior(
    coeffs: &BbdmCoefficients,
    x0: &LatentPoint,
    x_t: &LatentPoint,
    y: &LatentPoint,
) -> Result<IsoGaussian> {
    x0.ensure_dim(x_t.dim())?;
    y.ensure_dim(x_t.dim())?;
    let p = coeffs
        .posterior
        .ok_or_else(|| invalid("t_idx", "posterior is degenerate at the terminal index"))?;
    let mean: Vec<f64> = x_t
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(x0.as_slice())
        .map(|((xt, yv), x0v)| p.c_xt * xt + p.c_yt * yv - p.c_et * (xt - x0v))
        .collect();
    Ok(IsoGaussian {
        mean: LatentPoint::new(mean)?,
        var: p.var,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BbdmCrossCheckReport {
    pub grid: usize,
    pub s_bb: f64,
    pub comparisons: usize,
    pub max_mean_dev: f64,
    pub max_var_dev: f64,
}

/// Compares the discrete BBDM posterior with [`backward_transition`] on the
/// continuous clock `T = 2·s_bb`, at every interior grid index.
pub fn bbdm_cross_check(grid: usize, s_bb: f64) -> Result<BbdmCrossCheckReport> {
    if grid < 2 {
        return Err(invalid("grid", "need at least two steps"));
    }
    let horizon = 2.0 * s_bb;
    let x0 = LatentPoint::new(vec![0.3, -1.2, 2.0])?;
    let y = LatentPoint::new(vec![1.5, 0.4, -0.7])?;
    let probes = [
        LatentPoint::new(vec![0.9, -0.4, 0.6])?,
        LatentPoint::new(vec![-2.0, 3.1, 0.0])?,
    ];
    let mut max_mean_dev: f64 = 0.0;
    let mut max_var_dev: f64 = 0.0;
    let mut comparisons = 0;
    for t_idx in 1..grid {
        let c = bbdm_coefficients(t_idx, grid, s_bb)?;
        let t = c.m_t * horizon;
        let s = c.m_prev * horizon;
        for x_t in &probes {
            let disc = bbdm_posterior(&c, &x0, x_t, &y)?;
            let cont = backward_transition(x_t, t, s, &x0)?;
            max_mean_dev = max_mean_dev.max(disc.mean.max_abs_diff(&cont.mean));
            max_var_dev = max_var_dev.max((disc.var - cont.var).abs());
            comparisons += 1;
        }
    }
    Ok(BbdmCrossCheckReport {
        grid,
        s_bb,
        comparisons,
        max_mean_dev,
        max_var_dev,
    })
}
