use rayon::prelude::*;

use cbb_core::bridge::forward_marginal;
use cbb_core::bridge::pinned_bridge;
use cbb_core::denoiser::KnownTargetOracle;
use cbb_core::gaussian::moment_test;
use cbb_core::harness::run::{affine_baseline_rmse, held_out_triplets, sample_set, train_mlp};
use cbb_core::harness::verify::{em_midpoint_states, moment_error};
use cbb_core::harness::{generate_triplets, RunConfig, TaskKind, TaskSpec};
use cbb_core::pipeline::{sample, SampleOptions};
use cbb_core::rng::substream;
use cbb_core::sde::SdeConfig;
use cbb_core::{BridgeSchedule, BridgeSide, LatentPoint, Triplet};

#[test]
fn joint_gaussian_task_matches_declared_moments() {
    for kind in [TaskKind::JointGaussian, TaskKind::Midpoint] {
        let spec = TaskSpec {
            kind,
            dim: 2,
            noise_scale: 0.5,
            count: 100_000,
            seed: 11,
        };
        let set = generate_triplets(&spec).unwrap();
        let stacked: Vec<Vec<f64>> = set
            .triplets
            .iter()
            .map(|t| [t.y.as_slice(), t.x.as_slice(), t.z.as_slice()].concat())
            .collect();
        let r = moment_test(&stacked, set.moments.as_ref().unwrap(), 4.0).unwrap();
        assert!(r.pass, "{kind:?}: {r:?}");
    }
}

/// With an exact denoiser the sampler's intermediate states follow the
/// forward marginals of each bridge.
#[test]
fn sampler_trajectories_follow_forward_marginals() {
    const N: usize = 20_000;
    let trip = Triplet::new(
        LatentPoint::new(vec![1.0, -2.0]).unwrap(),
        LatentPoint::new(vec![0.0, 0.5]).unwrap(),
        LatentPoint::new(vec![-1.5, 1.0]).unwrap(),
    )
    .unwrap();
    let sched = BridgeSchedule::default().with_sample_steps(10).unwrap();
    let den = KnownTargetOracle { x: trip.x.clone() };
    let opts = SampleOptions {
        record_trajectory: true,
        ..SampleOptions::default()
    };
    let runs: Vec<_> = (0..N)
        .into_par_iter()
        .map(|i| {
            sample(
                &den,
                &trip.y,
                &trip.z,
                &sched,
                &opts,
                &mut substream(21, i as u64),
            )
            .unwrap()
        })
        .collect();
    for idx in [3usize, 5, 8] {
        let t = runs[0].y_chain.trajectory[idx].t;
        for side in BridgeSide::BOTH {
            let states: Vec<&Vec<f64>> = runs
                .iter()
                .map(|r| match side {
                    BridgeSide::Prev => &r.y_chain.trajectory[idx].state,
                    BridgeSide::Next => &r.z_chain.trajectory[idx].state,
                })
                .collect();
            let target = forward_marginal(&trip, side, t, &sched)
                .unwrap()
                .to_moments();
            let r = moment_test(&states, &target, 4.0).unwrap();
            assert!(r.pass, "t = {t}, {side:?}: {r:?}");
        }
    }
}

#[test]
fn euler_maruyama_error_shrinks_with_steps() {
    let start = LatentPoint::new(vec![0.0, 1.0]).unwrap();
    let end = LatentPoint::new(vec![2.0, -1.0]).unwrap();
    let target = pinned_bridge(&start, &end, 1.0, 2.0).unwrap();
    let err = |steps| {
        let cfg = SdeConfig::new(2.0, steps, start.clone(), end.clone()).unwrap();
        moment_error(&em_midpoint_states(&cfg, 50_000, 31).unwrap(), &target)
    };
    let (coarse, fine) = (err(50), err(400));
    assert!(fine <= coarse, "400 steps {fine} vs 50 steps {coarse}");
}

#[test]
fn mlp_beats_affine_predictor_on_arc_task() {
    let cfg = RunConfig {
        seed: 8,
        task: TaskKind::NonlinearArc,
        dim: 2,
        noise_scale: 1.0,
        count: 500,
        train_iters: 4000,
        ..RunConfig::default()
    };
    let (net, _) = train_mlp(&cfg).unwrap();
    let held = held_out_triplets(&cfg).unwrap();
    let (summary, _) = sample_set(&net, &held, &cfg).unwrap();
    let fit = generate_triplets(&TaskSpec {
        count: 20_000,
        ..cfg.task_spec(99)
    })
    .unwrap()
    .triplets;
    let affine = affine_baseline_rmse(&fit, &held).unwrap();
    assert!(
        summary.rmse < affine,
        "mlp {} vs affine {affine}",
        summary.rmse
    );
}
