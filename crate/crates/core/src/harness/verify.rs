//! Verification suites: closed forms against Gaussian-conditioning oracles,
//! the variance ledgers, and Monte Carlo checks of the bridge SDE.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{
    backward_transition, bbdm_cross_check, forward_marginal, pinned_bridge, split_property_check,
    IsoGaussian,
};
use crate::ddpm::ddpm_cumulative_variance;
use crate::denoiser::{oracle_midpoint, Denoiser, KnownTargetOracle};
use crate::error::{invalid, Result};
use crate::gaussian::{condition, moment_test, wiener_cov, GaussianMoments, MomentTestReport};
use crate::latent::{BridgeSide, LatentPoint, Triplet};
use crate::pipeline::{sample, SampleOptions};
use crate::rng::{substream, RngStream};
use crate::schedule::{BridgeSchedule, DdpmSchedule};
use crate::sde::{euler_maruyama, reverse_integrate, SdeConfig};

/// Joint law of `d` independent Wiener coordinates at `times`, laid out
/// time-major: index `j·d + i` is coordinate `i` at `times[j]`.
fn wiener_block(times: &[f64], d: usize) -> Result<GaussianMoments> {
    let w = wiener_cov(times)?;
    let m = times.len() * d;
    let cov = DMatrix::from_fn(m, m, |r, c| {
        if r % d == c % d {
            w.cov()[(r / d, c / d)]
        } else {
            0.0
        }
    });
    GaussianMoments::new(vec![0.0; m], cov)
}

/// Conditions the Wiener block on whole-vector values at some time slots and
/// returns the law at the single remaining slot.
fn pin_and_query(
    times: &[f64],
    pins: &[(usize, &LatentPoint)],
    d: usize,
) -> Result<GaussianMoments> {
    let joint = wiener_block(times, d)?;
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (slot, p) in pins {
        p.ensure_dim(d)?;
        for i in 0..d {
            idx.push(slot * d + i);
            vals.push(p.as_slice()[i]);
        }
    }
    condition(&joint, &idx, &vals)
}

/// Consecutive-bridge marginal by conditioning one Wiener process pinned to
/// `y`, `x`, `z` at process times `1`, `1 + T`, `1 + 2T`.
pub fn oracle_forward_marginal(
    trip: &Triplet,
    side: BridgeSide,
    t: f64,
    horizon: f64,
) -> Result<GaussianMoments> {
    if !(t > 0.0 && t < horizon) {
        return Err(invalid("t", "oracle needs an interior time"));
    }
    let q = match side {
        BridgeSide::Prev => 1.0 + horizon - t,
        BridgeSide::Next => 1.0 + horizon + t,
    };
    let (a, b, c) = (1.0, 1.0 + horizon, 1.0 + 2.0 * horizon);
    let (times, pins) = match side {
        BridgeSide::Prev => ([a, q, b, c], [(0, &trip.y), (2, &trip.x), (3, &trip.z)]),
        BridgeSide::Next => ([a, b, q, c], [(0, &trip.y), (1, &trip.x), (3, &trip.z)]),
    };
    pin_and_query(&times, &pins, trip.dim())
}

/// Law of `X_s` given `X_0 = x_hat`, `X_t = x_t` and `X_T = endpoint`. At
/// `t = T` the state `x_t` is the endpoint pin.
pub fn oracle_backward_transition(
    x_t: &LatentPoint,
    t: f64,
    s: f64,
    x_hat: &LatentPoint,
    endpoint: &LatentPoint,
    horizon: f64,
) -> Result<GaussianMoments> {
    if !(0.0 < s && s < t && t <= horizon) {
        return Err(invalid("times", "oracle needs 0 < s < t <= T"));
    }
    let d = x_t.dim();
    if t == horizon {
        pin_and_query(&[1.0, 1.0 + s, 1.0 + horizon], &[(0, x_hat), (2, x_t)], d)
    } else {
        pin_and_query(
            &[1.0, 1.0 + s, 1.0 + t, 1.0 + horizon],
            &[(0, x_hat), (2, x_t), (3, endpoint)],
            d,
        )
    }
}

fn iso_dev(closed: &IsoGaussian, oracle: &GaussianMoments) -> f64 {
    closed.to_moments().max_dev(oracle)
}

fn random_point(rng: &mut RngStream, d: usize, scale: f64) -> Result<LatentPoint> {
    LatentPoint::new(rng.normal_vec(d).into_iter().map(|v| scale * v).collect())
}

/// Worst deviation of [`forward_marginal`] from its oracle over `t = T·k/10`,
/// `k = 1..9`, on both sides.
pub fn eq14_max_deviation(trip: &Triplet, sched: &BridgeSchedule) -> Result<f64> {
    let h = sched.horizon();
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let t = h * k as f64 / 10.0;
        for side in BridgeSide::BOTH {
            let closed = forward_marginal(trip, side, t, sched)?;
            worst = worst.max(iso_dev(
                &closed,
                &oracle_forward_marginal(trip, side, t, h)?,
            ));
        }
    }
    Ok(worst)
}

/// Worst deviation of [`backward_transition`] from its oracle over all pairs
/// `s < t` from `{T·k/9 : k = 1..9}`.
pub fn eq15_max_deviation(
    x_hat: &LatentPoint,
    endpoint: &LatentPoint,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<(f64, usize)> {
    let grid: Vec<f64> = (1..=9).map(|k| horizon * k as f64 / 9.0).collect();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (j, &t) in grid.iter().enumerate() {
        for &s in &grid[..j] {
            let x_t = if j == grid.len() - 1 {
                endpoint.clone()
            } else {
                let law = pinned_bridge(x_hat, endpoint, t, horizon)?;
                law.sample_with(&rng.normal_vec(x_hat.dim()))
            };
            let closed = backward_transition(&x_t, t, s, x_hat)?;
            let oracle = oracle_backward_transition(&x_t, t, s, x_hat, endpoint, horizon)?;
            worst = worst.max(iso_dev(&closed, &oracle));
            count += 1;
        }
    }
    Ok((worst, count))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub eq14_max_dev: f64,
    pub eq15_max_dev: f64,
    pub eq15_pairs: usize,
    pub bbdm_max_dev: f64,
    pub split_far_coefficient: f64,
    pub split_mean_diff: f64,
    pub split_var_diff: f64,
    pub sampler_oracle_max_err: f64,
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
}

/// Worst final error of the sampler driven by an exact denoiser, over step
/// counts `{1, 5, 50, 200}`, with and without noise.
pub fn sampler_oracle_max_error(trip: &Triplet, seed: u64) -> Result<f64> {
    let known = KnownTargetOracle { x: trip.x.clone() };
    let mid = LatentPoint::lin_comb(&trip.y, 0.5, &trip.z, 0.5);
    let dens: [(&dyn Denoiser, &LatentPoint); 2] = [(&known, &trip.x), (&oracle_midpoint(), &mid)];
    let mut worst: f64 = 0.0;
    for (chain, steps) in [1usize, 5, 50, 200].into_iter().enumerate() {
        let sched = BridgeSchedule::default().with_sample_steps(steps)?;
        for stochastic in [true, false] {
            let opts = SampleOptions {
                stochastic,
                ..SampleOptions::default()
            };
            for (den, truth) in dens {
                let r = sample(
                    den,
                    &trip.y,
                    &trip.z,
                    &sched,
                    &opts,
                    &mut substream(seed, chain as u64),
                )?;
                worst = worst
                    .max(r.y_chain.output.max_abs_diff(truth))
                    .max(r.z_chain.output.max_abs_diff(truth));
            }
        }
    }
    Ok(worst)
}

/// The oracle-equivalence, BBDM, split-property and sampler-exactness suite.
pub fn run_verify(seed: u64) -> Result<VerifyReport> {
    const TOL: f64 = 1e-10;
    let sched = BridgeSchedule::default();
    let mut rng = substream(seed, 0);
    let d = 3;
    let trip = Triplet::new(
        random_point(&mut rng, d, 2.0)?,
        random_point(&mut rng, d, 2.0)?,
        random_point(&mut rng, d, 2.0)?,
    )?;
    let eq14 = eq14_max_deviation(&trip, &sched)?;
    let (eq15, eq15_pairs) = eq15_max_deviation(&trip.x, &trip.z, sched.horizon(), &mut rng)?;
    let bbdm = bbdm_cross_check(1000, 1.0)?;
    let bbdm_dev = bbdm.max_mean_dev.max(bbdm.max_var_dev);
    let split = split_property_check(
        (0.7, 1.3, 2.9),
        (rng.standard_normal(), rng.standard_normal()),
    )?;
    let sampler = sampler_oracle_max_error(&trip, seed)?;

    let checks = vec![
        CheckResult::at_most("eq14_oracle", eq14, TOL),
        CheckResult::at_most("eq15_oracle", eq15, TOL),
        CheckResult::at_most("bbdm_reduction", bbdm_dev, TOL),
        CheckResult::at_most(
            "split_far_coefficient",
            split.far_pin_coefficient.abs(),
            1e-12,
        ),
        CheckResult::at_most("split_mean", split.mean_diff, 1e-12),
        CheckResult::at_most("split_var", split.var_diff, 1e-12),
        CheckResult::at_most("sampler_oracle_exact", sampler, 1e-9),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        seed,
        eq14_max_dev: eq14,
        eq15_max_dev: eq15,
        eq15_pairs,
        bbdm_max_dev: bbdm_dev,
        split_far_coefficient: split.far_pin_coefficient,
        split_mean_diff: split.mean_diff,
        split_var_diff: split.var_diff,
        sampler_oracle_max_err: sampler,
        checks,
        all_pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CbbLedgerRow {
    pub steps: usize,
    /// Sum of the variances the stochastic sampler actually injects.
    pub total: f64,
    /// `T - Δ·H_N` with `H_N` the N-th harmonic number.
    pub closed_form: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub ddpm_schedule: String,
    pub ddpm_bound: f64,
    pub horizon: f64,
    pub cbb_total_50steps: f64,
    pub cbb_rows: Vec<CbbLedgerRow>,
}

pub const LEDGER_STEP_COUNTS: [usize; 5] = [5, 20, 50, 100, 200];

/// Injected-variance total of one sampler chain run with `steps` steps.
pub fn cbb_ledger_total(horizon: f64, steps: usize) -> Result<f64> {
    let sched = BridgeSchedule::default();
    let sched = BridgeSchedule::new(horizon, sched.train_steps(), steps, sched.gamma())?;
    let p = LatentPoint::scalar(0.0);
    let r = sample(
        &oracle_midpoint(),
        &p,
        &p,
        &sched,
        &SampleOptions::default(),
        &mut substream(0, 0),
    )?;
    Ok(r.y_chain.ledger.total)
}

pub fn cbb_ledger_closed_form(horizon: f64, steps: usize) -> f64 {
    let dt = horizon / steps as f64;
    let harmonic: f64 = (1..=steps).map(|k| 1.0 / k as f64).sum();
    horizon - dt * harmonic
}

pub fn variance_report(horizon: f64) -> Result<VarianceReport> {
    let ddpm = DdpmSchedule::linear(1e-4, 0.02, 1000)?;
    let cbb_rows = LEDGER_STEP_COUNTS
        .iter()
        .map(|&steps| {
            Ok(CbbLedgerRow {
                steps,
                total: cbb_ledger_total(horizon, steps)?,
                closed_form: cbb_ledger_closed_form(horizon, steps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceReport {
        ddpm_schedule: "linear(1e-4, 0.02, 1000)".into(),
        ddpm_bound: ddpm_cumulative_variance(&ddpm).total,
        horizon,
        cbb_total_50steps: cbb_ledger_total(horizon, 50)?,
        cbb_rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeReport {
    pub seed: u64,
    pub n_paths: usize,
    pub steps: usize,
    pub start: Vec<f64>,
    pub endpoint: Vec<f64>,
    /// Euler–Maruyama marginal at `T/2` against the pinned law.
    pub forward: MomentTestReport,
    /// Worst absolute moment error at `T/2` with 50 steps and with `steps` steps.
    pub forward_error_coarse: f64,
    pub forward_error_fine: f64,
    /// Reverse integration from `3T/4` down to `T/4`.
    pub reverse: MomentTestReport,
    pub all_pass: bool,
}

/// Worst absolute difference of sample mean or variance from the target, per coordinate.
pub fn moment_error(samples: &[Vec<f64>], target: &IsoGaussian) -> f64 {
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &mu) in target.mean.as_slice().iter().enumerate() {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        worst = worst.max((mean - mu).abs()).max((var - target.var).abs());
    }
    worst
}

/// States at `T/2` of `n_paths` Euler–Maruyama paths; path `i` uses stream `(seed, i)`.
pub fn em_midpoint_states(cfg: &SdeConfig, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !cfg.n_steps.is_multiple_of(2) {
        return Err(invalid(
            "steps",
            "T/2 must be a grid point, so steps must be even",
        ));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = euler_maruyama(cfg, &mut substream(seed, i as u64))?;
            Ok(path[cfg.n_steps / 2].state.clone())
        })
        .collect()
}

const SDE_HORIZON: f64 = 2.0;

/// The two-dimensional bridge with `T = 2` used by [`sde_suite`]; its forward
/// path `i` is driven by stream `(seed, i)`.
pub fn sde_suite_config(steps: usize) -> Result<SdeConfig> {
    SdeConfig::new(
        SDE_HORIZON,
        steps,
        LatentPoint::new(vec![0.5, -1.0])?,
        LatentPoint::new(vec![1.5, 0.25])?,
    )
}

/// Forward and reverse Monte Carlo checks on [`sde_suite_config`].
pub fn sde_suite(n_paths: usize, steps: usize, seed: u64) -> Result<SdeReport> {
    const HORIZON: f64 = SDE_HORIZON;
    let fine = sde_suite_config(steps)?;
    let coarse = sde_suite_config(50)?;
    let (start, endpoint) = (fine.start.clone(), fine.endpoint.clone());
    let k_sigma = crate::gaussian::DEFAULT_K_SIGMA;

    let mid = pinned_bridge(&start, &endpoint, HORIZON / 2.0, HORIZON)?;
    let fine_states = em_midpoint_states(&fine, n_paths, seed)?;
    let coarse_states = em_midpoint_states(&coarse, n_paths, seed)?;
    let forward = moment_test(&fine_states, &mid.to_moments(), k_sigma)?;

    let (t_from, t_to) = (0.75 * HORIZON, 0.25 * HORIZON);
    let rev_steps = ((steps as f64) * (t_from - t_to) / HORIZON)
        .round()
        .max(1.0) as usize;
    let init = pinned_bridge(&start, &endpoint, t_from, HORIZON)?;
    let target = pinned_bridge(&start, &endpoint, t_to, HORIZON)?;
    let rev_seed = seed ^ 0x5d3e_0001;
    let reversed = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(rev_seed, i as u64);
            let x0 = init.sample_with(&rng.normal_vec(start.dim()));
            let x = reverse_integrate(
                &x0, t_from, t_to, rev_steps, &start, &endpoint, HORIZON, &mut rng,
            )?;
            Ok(x.into_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let reverse = moment_test(&reversed, &target.to_moments(), k_sigma)?;

    let all_pass = forward.pass && reverse.pass;
    Ok(SdeReport {
        seed,
        n_paths,
        steps,
        start: start.into_vec(),
        endpoint: endpoint.into_vec(),
        forward,
        forward_error_coarse: moment_error(&coarse_states, &mid),
        forward_error_fine: moment_error(&fine_states, &mid),
        reverse,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_passes() {
        let r = run_verify(7).unwrap();
        assert!(r.all_pass, "{r:#?}");
        assert_eq!(r.eq15_pairs, 36);
    }

    #[test]
    fn ledger_matches_closed_form() {
        for steps in LEDGER_STEP_COUNTS {
            let a = cbb_ledger_total(2.0, steps).unwrap();
            assert!((a - cbb_ledger_closed_form(2.0, steps)).abs() < 1e-12);
            assert!(a < 2.0);
        }
        assert!((cbb_ledger_closed_form(2.0, 50) - 1.820031786).abs() < 1e-9);
    }

    #[test]
    fn oracle_rejects_boundary_times() {
        let p = LatentPoint::scalar(0.0);
        let trip = Triplet::new(p.clone(), p.clone(), p.clone()).unwrap();
        assert!(oracle_forward_marginal(&trip, BridgeSide::Prev, 0.0, 2.0).is_err());
        assert!(oracle_forward_marginal(&trip, BridgeSide::Next, 2.0, 2.0).is_err());
        assert!(oracle_backward_transition(&p, 1.0, 1.0, &p, &p, 2.0).is_err());
    }

    #[test]
    fn small_sde_suite_runs() {
        let r = sde_suite(2000, 40, 3).unwrap();
        assert_eq!(r.forward.n_samples, 2000);
        assert!(r.forward_error_fine.is_finite());
    }
}
