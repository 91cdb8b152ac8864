//! Time discretizations for the bridge process and the DDPM baseline.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_HORIZON: f64 = 2.0;
pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_SAMPLE_STEPS: usize = 50;
pub const DEFAULT_GAMMA: f64 = 5.0;

/// Horizon, training/sampling discretizations and the SNR clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSchedule {
    horizon: f64,
    train_steps: usize,
    sample_steps: usize,
    gamma: f64,
}

impl BridgeSchedule {
    pub fn new(horizon: f64, train_steps: usize, sample_steps: usize, gamma: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(
                "horizon",
                format!("must be finite and > 0, got {horizon}"),
            ));
        }
        if train_steps == 0 {
            return Err(invalid("train_steps", "must be at least 1"));
        }
        if sample_steps == 0 {
            return Err(invalid("sample_steps", "must be at least 1"));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid(
                "gamma",
                format!("must be finite and > 0, got {gamma}"),
            ));
        }
        Ok(Self {
            horizon,
            train_steps,
            sample_steps,
            gamma,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn sample_steps(&self) -> usize {
        self.sample_steps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_sample_steps(&self, sample_steps: usize) -> Result<Self> {
        Self::new(self.horizon, self.train_steps, sample_steps, self.gamma)
    }

    /// Uniform grid point `T·k/steps`; computed as a single rounding of the exact rational.
    fn grid_point(&self, k: usize, steps: usize) -> f64 {
        debug_assert!(k <= steps);
        if k == steps {
            self.horizon
        } else {
            self.horizon * k as f64 / steps as f64
        }
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        self.grid_point(k, self.sample_steps)
    }

    pub fn train_time(&self, k: usize) -> f64 {
        self.grid_point(k, self.train_steps)
    }

    /// `t_0 = 0, …, t_N = T` for the sampling discretization.
    pub fn sample_grid(&self) -> Vec<f64> {
        (0..=self.sample_steps)
            .map(|k| self.sample_time(k))
            .collect()
    }

    pub fn sample_dt(&self) -> f64 {
        self.horizon / self.sample_steps as f64
    }
}

impl Default for BridgeSchedule {
    fn default() -> Self {
        Self::new(
            DEFAULT_HORIZON,
            DEFAULT_TRAIN_STEPS,
            DEFAULT_SAMPLE_STEPS,
            DEFAULT_GAMMA,
        )
        .expect("default schedule is valid")
    }
}

/// Discrete DDPM noise schedule, 1-based in `t` at the API surface.
///
/// `alpha_bar(0)` is defined as 1, which makes the posterior variance at `t = 1` zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpmSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_vars: Vec<f64>,
}

impl DdpmSchedule {
    /// Linearly spaced betas from `beta_start` to `beta_end` inclusive.
    pub fn linear(beta_start: f64, beta_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start < 1.0) {
            return Err(invalid(
                "beta_start",
                format!("must lie in (0, 1), got {beta_start}"),
            ));
        }
        if !(beta_end >= beta_start && beta_end < 1.0) {
            return Err(invalid(
                "beta_end",
                format!("must lie in [beta_start, 1), got {beta_end}"),
            ));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps)
                .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("betas", "schedule must have at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(invalid(
                "betas",
                format!("every beta must lie in (0, 1), got {b}"),
            ));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut running = 1.0;
        for b in &betas {
            running *= 1.0 - b;
            alpha_bars.push(running);
        }
        let posterior_vars = betas
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bars[i]) * b
            })
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            posterior_vars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// Running product of `1 - beta` up to `t`; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn posterior_var(&self, t: usize) -> f64 {
        self.posterior_vars[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn posterior_vars(&self) -> &[f64] {
        &self.posterior_vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_schedule_defaults_and_validation() {
        let s = BridgeSchedule::default();
        assert_eq!(
            (s.horizon(), s.train_steps(), s.sample_steps(), s.gamma()),
            (2.0, 1000, 50, 5.0)
        );
        assert!(BridgeSchedule::new(1.0, 1, 1, 1.0).is_ok());
        assert!(BridgeSchedule::new(0.0, 1000, 50, 5.0).is_err());
        assert!(BridgeSchedule::new(2.0, 0, 50, 5.0).is_err());
        assert!(BridgeSchedule::new(2.0, 1000, 0, 5.0).is_err());
        assert!(BridgeSchedule::new(2.0, 1000, 50, -1.0).is_err());
        assert!(BridgeSchedule::new(f64::NAN, 1000, 50, 5.0).is_err());
    }

    #[test]
    fn one_step_grid() {
        let s = BridgeSchedule::new(1.0, 1, 1, 1.0).unwrap();
        assert_eq!(s.sample_grid(), vec![0.0, 1.0]);
    }

    #[test]
    fn ddpm_linear_reaches_near_zero_signal() {
        let s = DdpmSchedule::linear(1e-4, 0.02, 1000).unwrap();
        // independent evaluation of the running product
        let mut prod = 1.0;
        for i in 0..1000 {
            prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        assert!((s.alpha_bar(1000) - prod).abs() < 1e-15);
        assert!(s.alpha_bar(1000) < 1e-4);
        assert!(s.alpha_bar(1000) > 0.0);
    }

    #[test]
    fn ddpm_single_step_and_errors() {
        let s = DdpmSchedule::linear(0.5, 0.5, 1).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.posterior_var(1), 0.0);
        assert!(DdpmSchedule::linear(0.2, 0.1, 10).is_err());
        assert!(DdpmSchedule::linear(0.0, 0.1, 10).is_err());
        assert!(DdpmSchedule::linear(0.1, 1.0, 10).is_err());
        assert!(DdpmSchedule::linear(0.1, 0.2, 0).is_err());
    }

    #[test]
    fn ddpm_alpha_bar_strictly_decreasing_and_posterior_below_beta() {
        let s = DdpmSchedule::linear(1e-4, 0.02, 1000).unwrap();
        for t in 1..=1000 {
            let a = s.alpha_bar(t);
            assert!(a > 0.0 && a < 1.0);
            assert!(a < s.alpha_bar(t - 1));
            assert!(s.posterior_var(t) >= 0.0);
            assert!(s.posterior_var(t) <= s.beta(t));
        }
    }
}
