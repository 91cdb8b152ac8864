use serde::{Deserialize, Serialize};

use crate::bridge::scaled_label;
use crate::ddpm::VarianceLedger;
use crate::denoiser::{Denoiser, DenoiserInput};
use crate::error::{invalid, Result};
use crate::latent::{BridgeSide, LatentPoint, Triplet};
use crate::rng::{substream, RngStream};
use crate::schedule::BridgeSchedule;

/// Which chain output(s) form the final estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    YOnly,
    ZOnly,
    #[default]
    Mean,
}

/// Whether the two chains consume one noise draw per step or one each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSharing {
    #[default]
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub mode: CombineMode,
    /// `false` zeroes the injected noise and keeps the mean update.
    pub stochastic: bool,
    pub noise: NoiseSharing,
    pub record_trajectory: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            mode: CombineMode::Mean,
            stochastic: true,
            noise: NoiseSharing::Shared,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: Vec<f64>,
    pub injected_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub side: BridgeSide,
    pub output: LatentPoint,
    pub ledger: VarianceLedger,
    /// Starts at `t = T` (the endpoint) and ends at `t = 0`; empty unless recorded.
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    pub y_chain: ChainReport,
    pub z_chain: ChainReport,
    pub combined: LatentPoint,
    pub mode: CombineMode,
    pub stochastic: bool,
    pub steps: usize,
}

struct Chain {
    side: BridgeSide,
    state: LatentPoint,
    ledger: VarianceLedger,
    trajectory: Vec<TrajectoryPoint>,
}

impl Chain {
    fn into_report(self) -> ChainReport {
        ChainReport {
            side: self.side,
            output: self.state,
            ledger: self.ledger,
            trajectory: self.trajectory,
        }
    }
}

/// Runs both endpoint chains from `t = T` down to `t = 0`:
///
/// ```text
/// x_s = x_t - (Δ/t)·ε̂(x_t, label, y, z) + sqrt(s·Δ/t)·ξ
/// ```
///
/// At the last step `s = 0`, the update returns `x_Δ - ε̂` and no noise survives.
pub fn sample<D: Denoiser + ?Sized>(
    den: &D,
    y: &LatentPoint,
    z: &LatentPoint,
    sched: &BridgeSchedule,
    opts: &SampleOptions,
    rng: &mut RngStream,
) -> Result<SampleReport> {
    z.ensure_dim(y.dim())?;
    let d = y.dim();
    let horizon = sched.horizon();
    let n = sched.sample_steps();
    let mut chains = [BridgeSide::Prev, BridgeSide::Next].map(|side| {
        let start = if side == BridgeSide::Prev { y } else { z };
        let trajectory = if opts.record_trajectory {
            vec![TrajectoryPoint {
                t: horizon,
                state: start.as_slice().to_vec(),
                injected_var: 0.0,
            }]
        } else {
            Vec::new()
        };
        Chain {
            side,
            state: start.clone(),
            ledger: VarianceLedger::new(0.0),
            trajectory,
        }
    });

    for k in (1..=n).rev() {
        let t = sched.sample_time(k);
        let s = sched.sample_time(k - 1);
        let dt = t - s;
        let noise_var = if opts.stochastic { s * dt / t } else { 0.0 };
        let shared = match (opts.stochastic, opts.noise) {
            (true, NoiseSharing::Shared) => Some(rng.normal_vec(d)),
            _ => None,
        };
        for chain in chains.iter_mut() {
            let input = DenoiserInput::new(
                chain.state.clone(),
                scaled_label(chain.side, t, horizon),
                y.clone(),
                z.clone(),
            )?;
            let eps_hat = den.predict(&input)?;
            eps_hat.ensure_dim(d)?;
            let mut next = chain.state.lin_comb(1.0, &eps_hat, -dt / t);
            if opts.stochastic {
                let noise = match &shared {
                    Some(v) => v.clone(),
                    None => rng.normal_vec(d),
                };
                next = next.add_scaled(noise_var.sqrt(), &noise);
            }
            chain.ledger.push(noise_var);
            if opts.record_trajectory {
                chain.trajectory.push(TrajectoryPoint {
                    t: s,
                    state: next.as_slice().to_vec(),
                    injected_var: noise_var,
                });
            }
            chain.state = next;
        }
    }

    let [yc, zc] = chains;
    let combined = match opts.mode {
        CombineMode::YOnly => yc.state.clone(),
        CombineMode::ZOnly => zc.state.clone(),
        CombineMode::Mean => yc.state.lin_comb(0.5, &zc.state, 0.5),
    };
    Ok(SampleReport {
        y_chain: yc.into_report(),
        z_chain: zc.into_report(),
        combined,
        mode: opts.mode,
        stochastic: opts.stochastic,
        steps: n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub stochastic: LatentPoint,
    pub deterministic: LatentPoint,
    pub max_abs_diff: f64,
}

/// Runs the stochastic and the zero-noise sampler on the same inputs.
pub fn sample_deterministic_equivalence<D: Denoiser + ?Sized>(
    den: &D,
    y: &LatentPoint,
    z: &LatentPoint,
    sched: &BridgeSchedule,
    rng: &mut RngStream,
) -> Result<EquivalenceReport> {
    let stoch = sample(den, y, z, sched, &SampleOptions::default(), rng)?;
    let det_opts = SampleOptions {
        stochastic: false,
        ..SampleOptions::default()
    };
    let det = sample(den, y, z, sched, &det_opts, rng)?;
    Ok(EquivalenceReport {
        max_abs_diff: stoch.combined.max_abs_diff(&det.combined),
        stochastic: stoch.combined,
        deterministic: det.combined,
    })
}

/// Root mean squared error over all coordinates of all pairs.
pub fn rmse(estimates: &[LatentPoint], truths: &[LatentPoint]) -> f64 {
    debug_assert_eq!(estimates.len(), truths.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        sum += e.squared_distance(t);
        count += e.dim();
    }
    (sum / count.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub steps: usize,
    pub rmse: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub n_triplets: usize,
    pub rows: Vec<SweepRow>,
}

/// Samples every triplet at each step count. Triplet `i` always uses the
/// stream `(seed, i)`, so rows differ only through the step count.
pub fn step_count_sweep<D: Denoiser + ?Sized>(
    den: &D,
    triplets: &[Triplet],
    counts: &[usize],
    sched: &BridgeSchedule,
    opts: &SampleOptions,
    seed: u64,
) -> Result<SweepReport> {
    if counts.contains(&0) {
        return Err(invalid("counts", "step counts must be at least 1"));
    }
    let truths: Vec<LatentPoint> = triplets.iter().map(|t| t.x.clone()).collect();
    let mut rows = Vec::with_capacity(counts.len());
    for &steps in counts {
        let sch = sched.with_sample_steps(steps)?;
        let estimates = triplets
            .iter()
            .enumerate()
            .map(|(i, trip)| {
                sample(
                    den,
                    &trip.y,
                    &trip.z,
                    &sch,
                    opts,
                    &mut substream(seed, i as u64),
                )
                .map(|r| r.combined)
            })
            .collect::<Result<Vec<_>>>()?;
        let max_abs_err = estimates
            .iter()
            .zip(&truths)
            .map(|(e, t)| e.max_abs_diff(t))
            .fold(0.0, f64::max);
        rows.push(SweepRow {
            steps,
            rmse: rmse(&estimates, &truths),
            max_abs_err,
        });
    }
    Ok(SweepReport {
        seed,
        n_triplets: triplets.len(),
        rows,
    })
}
