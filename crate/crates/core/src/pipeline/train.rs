use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{pinned_bridge, scaled_label, snr_weight};
use crate::denoiser::{adam_step, AdamState, Denoiser, DenoiserInput, MlpDenoiser};
use crate::error::{invalid, Result};
use crate::latent::{BridgeSide, LatentPoint, Triplet};
use crate::rng::RngStream;
use crate::schedule::BridgeSchedule;

/// Examples per gradient-accumulation chunk. Fixed so the summation order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// One draw of the training objective.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    /// Uniform draw on the training grid; distance from the endpoint.
    pub s: f64,
    /// Bridge time `T - s`, distance from `x`.
    pub t: f64,
    pub side: BridgeSide,
    pub weight: f64,
    pub input: DenoiserInput,
    /// `x_t - x`
    pub target: LatentPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainStepRecord {
    pub s: f64,
    pub branch: BridgeSide,
    pub weight: f64,
    /// Weighted loss before the parameter update.
    pub loss: f64,
}

/// Draws `s`, the bridge noise and the branch, in that order, and builds the
/// corresponding state, label and regression target.
///
/// `s` is drawn uniformly from `{0, T/N, …, (N-1)T/N}` with `N` the training
/// discretization, so `t = T - s` ranges over exactly the times the sampler
/// queries.
pub fn draw_training_example(
    trip: &Triplet,
    sched: &BridgeSchedule,
    rng: &mut RngStream,
) -> Result<TrainingExample> {
    let horizon = sched.horizon();
    let k = rng.uniform_int(1, sched.train_steps());
    let t = sched.train_time(k);
    let s = horizon - t;
    let eps = rng.normal_vec(trip.dim());
    let side = if rng.uniform() < 0.5 {
        BridgeSide::Prev
    } else {
        BridgeSide::Next
    };
    let x_t = pinned_bridge(&trip.x, trip.endpoint(side), t, horizon)?.sample_with(&eps);
    let target = x_t.sub(&trip.x);
    let input = DenoiserInput::new(
        x_t,
        scaled_label(side, t, horizon),
        trip.y.clone(),
        trip.z.clone(),
    )?;
    Ok(TrainingExample {
        s,
        t,
        side,
        weight: snr_weight(t, sched),
        input,
        target,
    })
}

/// `w · ‖ε̂ - (x_t - x)‖²`
pub fn weighted_loss<D: Denoiser + ?Sized>(den: &D, ex: &TrainingExample) -> Result<f64> {
    let pred = den.predict(&ex.input)?;
    ex.target.ensure_dim(pred.dim())?;
    Ok(ex.weight * pred.squared_distance(&ex.target))
}

/// One Adam step on the batch-mean weighted loss.
pub fn train_step(
    net: &mut MlpDenoiser,
    opt: &mut AdamState,
    batch: &[Triplet],
    sched: &BridgeSchedule,
    rng: &mut RngStream,
) -> Result<Vec<TrainStepRecord>> {
    if batch.is_empty() {
        return Err(invalid("batch", "must contain at least one triplet"));
    }
    let examples = batch
        .iter()
        .map(|t| draw_training_example(t, sched, rng))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / examples.len() as f64;
    let n_params = net.param_count();
    let frozen: &MlpDenoiser = net;

    let partials = examples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0; n_params];
            let mut losses = Vec::with_capacity(chunk.len());
            for ex in chunk {
                let cache = frozen.forward(&MlpDenoiser::encode_input(&ex.input))?;
                let out = cache.output();
                ex.target.ensure_dim(out.len())?;
                let resid: Vec<f64> = out
                    .iter()
                    .zip(ex.target.as_slice())
                    .map(|(o, t)| o - t)
                    .collect();
                losses.push(ex.weight * resid.iter().map(|r| r * r).sum::<f64>());
                let og: Vec<f64> = resid.iter().map(|r| 2.0 * ex.weight * scale * r).collect();
                frozen.backward_into(&cache, &og, &mut grads)?;
            }
            Ok((grads, losses))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grads = vec![0.0; n_params];
    let mut losses = Vec::with_capacity(examples.len());
    for (g, l) in partials {
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v;
        }
        losses.extend(l);
    }
    adam_step(opt, net.params_mut(), &grads)?;

    Ok(examples
        .iter()
        .zip(losses)
        .map(|(ex, loss)| TrainStepRecord {
            s: ex.s,
            branch: ex.side,
            weight: ex.weight,
            loss,
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    /// Batch-mean weighted loss per step.
    pub losses: Vec<f64>,
}

/// Runs `iters` steps, drawing each batch from `next_triplet`.
pub fn train(
    net: &mut MlpDenoiser,
    opt: &mut AdamState,
    sched: &BridgeSchedule,
    iters: usize,
    batch_size: usize,
    rng: &mut RngStream,
    mut next_triplet: impl FnMut() -> Result<Triplet>,
) -> Result<TrainLog> {
    let mut losses = Vec::with_capacity(iters);
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..iters {
        batch.clear();
        for _ in 0..batch_size {
            batch.push(next_triplet()?);
        }
        let recs = train_step(net, opt, &batch, sched, rng)?;
        losses.push(recs.iter().map(|r| r.loss).sum::<f64>() / recs.len() as f64);
    }
    Ok(TrainLog { losses })
}
