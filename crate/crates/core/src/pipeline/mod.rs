//! Training and sampling for the consecutive bridge, plus the codec seam
//! between latent estimation and whatever produces the latents.

mod codec;
mod sampler;
mod train;

pub use codec::{interpolate, Codec, IdentityCodec};
pub use sampler::{
    rmse, sample, sample_deterministic_equivalence, step_count_sweep, ChainReport, CombineMode,
    EquivalenceReport, NoiseSharing, SampleOptions, SampleReport, SweepReport, SweepRow,
    TrajectoryPoint,
};
pub use train::{
    draw_training_example, train, train_step, weighted_loss, TrainLog, TrainStepRecord,
    TrainingExample,
};
