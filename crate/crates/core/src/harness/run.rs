//! Orchestration shared by the CLI and the end-to-end tests.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::denoiser::{oracle_gaussian, oracle_midpoint, AdamState, Denoiser, MlpDenoiser};
use crate::error::{Error, Result};
use crate::harness::config::{DenoiserChoice, RunConfig};
use crate::harness::streams;
use crate::harness::task::{draw_triplet, generate_triplets, task_moments, TaskKind};
use crate::latent::{LatentPoint, Triplet};
use crate::pipeline::{
    draw_training_example, rmse, sample, train, weighted_loss, SampleReport, TrainLog,
};
use crate::rng::substream;

/// Trains a fresh MLP as configured. Initialization, data and training noise
/// each come from their own stream derived from `cfg.seed`.
pub fn train_mlp(cfg: &RunConfig) -> Result<(MlpDenoiser, TrainLog)> {
    cfg.validate()?;
    let sched = cfg.schedule()?;
    let mut net = MlpDenoiser::for_latent_dim(cfg.dim, &mut streams::init(cfg.seed))?;
    let mut opt = AdamState::new(net.param_count(), cfg.learning_rate);
    let mut data = streams::train_data(cfg.seed);
    let mut noise = streams::train_noise(cfg.seed);
    let (kind, dim, sigma) = (cfg.task, cfg.dim, cfg.noise_scale);
    let log = train(
        &mut net,
        &mut opt,
        &sched,
        cfg.train_iters,
        cfg.batch_size,
        &mut noise,
        || draw_triplet(kind, dim, sigma, &mut data),
    )?;
    Ok((net, log))
}

/// The closed-form optimal denoiser for the configured task.
pub fn build_oracle(cfg: &RunConfig) -> Result<Box<dyn Denoiser>> {
    match cfg.task {
        TaskKind::Midpoint => Ok(Box::new(oracle_midpoint())),
        TaskKind::JointGaussian => {
            let moments = task_moments(cfg.task, cfg.dim, cfg.noise_scale).expect("Gaussian task");
            Ok(Box::new(oracle_gaussian(moments, &cfg.schedule()?)?))
        }
        TaskKind::NonlinearArc => Err(Error::Config(
            "the arc task has no closed-form oracle; use denoiser = mlp".into(),
        )),
    }
}

pub fn checkpoint_path(cfg: &RunConfig, out_dir: &std::path::Path) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| out_dir.join("checkpoint.json"))
}

pub fn build_denoiser(cfg: &RunConfig, out_dir: &std::path::Path) -> Result<Box<dyn Denoiser>> {
    match cfg.denoiser {
        DenoiserChoice::Oracle => build_oracle(cfg),
        DenoiserChoice::Mlp => {
            let net = MlpDenoiser::load(&checkpoint_path(cfg, out_dir))?;
            if net.latent_dim() != cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: cfg.dim,
                    actual: net.latent_dim(),
                });
            }
            Ok(Box::new(net))
        }
    }
}

pub fn held_out_triplets(cfg: &RunConfig) -> Result<Vec<Triplet>> {
    Ok(generate_triplets(&cfg.task_spec(streams::held_out_seed(cfg.seed)))?.triplets)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub n_triplets: usize,
    pub steps: usize,
    pub rmse: f64,
    pub max_abs_err: f64,
}

/// Samples every held-out triplet; triplet `i` uses chain `i` of the sampling seed.
pub fn sample_set<D: Denoiser + ?Sized>(
    den: &D,
    triplets: &[Triplet],
    cfg: &RunConfig,
) -> Result<(EvalSummary, Vec<SampleReport>)> {
    let sched = cfg.schedule()?;
    let opts = cfg.sample_options();
    let seed = streams::sampling_seed(cfg.seed);
    let reports = triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            sample(
                den,
                &t.y,
                &t.z,
                &sched,
                &opts,
                &mut substream(seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<LatentPoint> = reports.iter().map(|r| r.combined.clone()).collect();
    let truths: Vec<LatentPoint> = triplets.iter().map(|t| t.x.clone()).collect();
    let summary = EvalSummary {
        n_triplets: triplets.len(),
        steps: sched.sample_steps(),
        rmse: rmse(&estimates, &truths),
        max_abs_err: estimates
            .iter()
            .zip(&truths)
            .map(|(e, t)| e.max_abs_diff(t))
            .fold(0.0, f64::max),
    };
    Ok((summary, reports))
}

/// Mean weighted training loss over `draws` independent objective draws per
/// triplet. The draws depend only on `seed`, so two denoisers evaluated with
/// the same seed see identical examples.
pub fn mean_objective<D: Denoiser + ?Sized>(
    den: &D,
    triplets: &[Triplet],
    cfg: &RunConfig,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let sched = cfg.schedule()?;
    let total = triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = substream(seed, i as u64);
            let mut acc = 0.0;
            for _ in 0..draws {
                acc += weighted_loss(den, &draw_training_example(t, &sched, &mut rng)?)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(total / (triplets.len() * draws) as f64)
}

/// RMSE of the best affine predictor `x ≈ A·[y; z; 1]`, fitted by least
/// squares on `fit` and scored on `eval`.
pub fn affine_baseline_rmse(fit: &[Triplet], eval: &[Triplet]) -> Result<f64> {
    use nalgebra::DMatrix;
    let d = fit
        .first()
        .ok_or_else(|| Error::Config("empty fit set".into()))?
        .dim();
    let features = |t: &Triplet| -> Vec<f64> {
        let mut f = t.y.as_slice().to_vec();
        f.extend_from_slice(t.z.as_slice());
        f.push(1.0);
        f
    };
    let p = 2 * d + 1;
    let a = DMatrix::from_fn(fit.len(), p, |r, c| features(&fit[r])[c]);
    let b = DMatrix::from_fn(fit.len(), d, |r, c| fit[r].x.as_slice()[c]);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Config(format!("least squares failed: {e}")))?;
    let preds = eval
        .iter()
        .map(|t| {
            let f = nalgebra::DVector::from_vec(features(t));
            LatentPoint::new((coef.transpose() * f).iter().copied().collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<LatentPoint> = eval.iter().map(|t| t.x.clone()).collect();
    Ok(rmse(&preds, &truths))
}
