use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cbb_core::harness::run::{
    build_denoiser, checkpoint_path, held_out_triplets, sample_set, train_mlp, EvalSummary,
};
use cbb_core::harness::verify::{run_verify, sde_suite, sde_suite_config, variance_report};
use cbb_core::harness::{
    read_config, write_json_report, write_loss_csv, write_path_csv, write_run_metadata,
    write_trajectory_csv, RunConfig,
};
use cbb_core::pipeline::{step_count_sweep, SampleReport, SweepReport};
use cbb_core::rng::substream;
use cbb_core::sde::euler_maruyama;
use cbb_core::{harness::streams, Error};

/// Consecutive Brownian bridge diffusion: verification, training and sampling.
#[derive(Parser, Debug)]
#[command(name = "cbb", version)]
struct Cli {
    /// Output directory for reports [default: cbb-out].
    #[arg(long, global = true, env = "CBB_OUTPUT_DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    /// Config file, `key = value` lines or a JSON object.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed forms against conditioning oracles; exits 1 if any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// DDPM and bridge cumulative-variance ledgers.
    Variance {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Trains the MLP denoiser; writes a checkpoint and a loss CSV.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Samples the held-out set; writes a report and optional trajectory CSVs.
    Sample {
        #[command(flatten)]
        run: RunArgs,
    },
    /// RMSE against ground truth for several sampling step counts.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,20,50,100,200")]
        counts: Vec<usize>,
    },
    /// Monte Carlo checks of the bridge SDE and its reversal; exits 1 on failure.
    Sde {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        /// Also write the first N forward paths as CSV.
        #[arg(long, default_value_t = 0)]
        dump_paths: usize,
    },
}

fn load_config(run: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &run.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("cbb-out"))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a RunConfig,
    checkpoint: String,
    iters: usize,
    final_loss: f64,
    mean_loss_last_100: f64,
}

#[derive(Serialize)]
struct SampleSetReport<'a> {
    config: &'a RunConfig,
    summary: EvalSummary,
    samples: Vec<SampleReport>,
}

#[derive(Serialize)]
struct SweepFileReport<'a> {
    config: &'a RunConfig,
    sweep: SweepReport,
}

fn finish(out: &Path, command: &str, file: &str) -> Result<(), Error> {
    write_run_metadata(out, command)?;
    println!("wrote {}", out.join(file).display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Verify { seed } => {
            let out = out_dir(&cli.out, None);
            let report = run_verify(seed)?;
            for c in &report.checks {
                println!(
                    "{} {} = {:.3e} (tol {:.0e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
            write_json_report("verify", &report, &out.join("verify.json"))?;
            finish(&out, "verify", "verify.json")?;
            Ok(report.all_pass)
        }
        Command::Variance { run } => {
            let cfg = load_config(&run)?;
            let out = out_dir(&cli.out, Some(&cfg));
            let report = variance_report(cfg.horizon)?;
            println!("ddpm_bound = {:.4}", report.ddpm_bound);
            println!("cbb_total_50steps = {:.9}", report.cbb_total_50steps);
            write_json_report("variance", &report, &out.join("variance.json"))?;
            finish(&out, "variance", "variance.json")?;
            Ok(true)
        }
        Command::Train { run } => {
            let cfg = load_config(&run)?;
            let out = out_dir(&cli.out, Some(&cfg));
            let (net, log) = train_mlp(&cfg)?;
            let ckpt = checkpoint_path(&cfg, &out);
            if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            net.save(&ckpt)?;
            write_loss_csv(&log.losses, &out.join("losses.csv"))?;
            let tail = &log.losses[log.losses.len().saturating_sub(100)..];
            let report = TrainReport {
                config: &cfg,
                checkpoint: ckpt.display().to_string(),
                iters: log.losses.len(),
                final_loss: log.losses.last().copied().unwrap_or(f64::NAN),
                mean_loss_last_100: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
            };
            write_json_report("train", &report, &out.join("train.json"))?;
            println!(
                "final loss {:.6}, checkpoint {}",
                report.final_loss, report.checkpoint
            );
            finish(&out, "train", "train.json")?;
            Ok(true)
        }
        Command::Sample { run } => {
            let cfg = load_config(&run)?;
            let out = out_dir(&cli.out, Some(&cfg));
            let den = build_denoiser(&cfg, &out)?;
            let triplets = held_out_triplets(&cfg)?;
            let (summary, samples) = sample_set(den.as_ref(), &triplets, &cfg)?;
            if cfg.record_trajectory {
                for (i, r) in samples.iter().enumerate() {
                    write_trajectory_csv(
                        &r.y_chain.trajectory,
                        &out.join(format!("trajectories/{i:05}_y.csv")),
                    )?;
                    write_trajectory_csv(
                        &r.z_chain.trajectory,
                        &out.join(format!("trajectories/{i:05}_z.csv")),
                    )?;
                }
            }
            println!(
                "rmse {:.6} over {} triplets",
                summary.rmse, summary.n_triplets
            );
            write_json_report(
                "sample",
                &SampleSetReport {
                    config: &cfg,
                    summary,
                    samples,
                },
                &out.join("sample.json"),
            )?;
            finish(&out, "sample", "sample.json")?;
            Ok(true)
        }
        Command::Sweep { run, counts } => {
            let cfg = load_config(&run)?;
            let out = out_dir(&cli.out, Some(&cfg));
            let den = build_denoiser(&cfg, &out)?;
            let triplets = held_out_triplets(&cfg)?;
            let sweep = step_count_sweep(
                den.as_ref(),
                &triplets,
                &counts,
                &cfg.schedule()?,
                &cfg.sample_options(),
                streams::sampling_seed(cfg.seed),
            )?;
            for row in &sweep.rows {
                println!("steps {:>4}  rmse {:.6}", row.steps, row.rmse);
            }
            write_json_report(
                "sweep",
                &SweepFileReport {
                    config: &cfg,
                    sweep,
                },
                &out.join("sweep.json"),
            )?;
            finish(&out, "sweep", "sweep.json")?;
            Ok(true)
        }
        Command::Sde {
            seed,
            paths,
            steps,
            dump_paths,
        } => {
            let out = out_dir(&cli.out, None);
            let report = sde_suite(paths, steps, seed)?;
            let cfg = sde_suite_config(steps)?;
            for i in 0..dump_paths {
                let path = euler_maruyama(&cfg, &mut substream(seed, i as u64))?;
                write_path_csv(&path, &out.join(format!("paths/{i:05}.csv")))?;
            }
            println!(
                "{} forward (mean z {:.2}, var dev {:.4})",
                if report.forward.pass { "PASS" } else { "FAIL" },
                report.forward.max_mean_z,
                report.forward.max_var_ratio_dev
            );
            println!(
                "{} reverse (mean z {:.2}, var dev {:.4})",
                if report.reverse.pass { "PASS" } else { "FAIL" },
                report.reverse.max_mean_z,
                report.reverse.max_var_ratio_dev
            );
            write_json_report("sde", &report, &out.join("sde.json"))?;
            finish(&out, "sde", "sde.json")?;
            Ok(report.all_pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
