//! Synthetic tasks, run configuration, report files and the verification
//! suites behind the `cbb` command line.

pub mod config;
pub mod report;
pub mod run;
pub mod task;
pub mod verify;

pub use config::{read_config, DenoiserChoice, RunConfig};
pub use report::{
    write_json_report, write_loss_csv, write_path_csv, write_run_metadata, write_trajectory_csv,
    SCHEMA_VERSION,
};
pub use task::{generate_triplets, task_moments, TaskKind, TaskSet, TaskSpec};

/// Stream keys derived from a run seed, so each consumer of randomness owns
/// an independent stream.
pub mod streams {
    use crate::rng::RngStream;

    const TRAIN_DATA: u64 = 0x7d1a_0001;
    const TRAIN_NOISE: u64 = 0x7d1a_0002;
    const INIT: u64 = 0x7d1a_0003;
    const SAMPLING: u64 = 0x7d1a_0004;
    const HELD_OUT: u64 = 0x7d1a_0005;

    pub fn train_data(seed: u64) -> RngStream {
        RngStream::new(seed ^ TRAIN_DATA, 0)
    }

    pub fn train_noise(seed: u64) -> RngStream {
        RngStream::new(seed ^ TRAIN_NOISE, 0)
    }

    pub fn init(seed: u64) -> RngStream {
        RngStream::new(seed ^ INIT, 0)
    }

    /// Seed whose chain `i` drives sampling of held-out triplet `i`.
    pub fn sampling_seed(seed: u64) -> u64 {
        seed ^ SAMPLING
    }

    /// Seed of the held-out evaluation set.
    pub fn held_out_seed(seed: u64) -> u64 {
        seed ^ HELD_OUT
    }
}
