//! Weighted softmax classifier, AdamW training, evaluation, the empirical
//! target-loss decomposition, and two synthetic benchmarks.

mod bound;
mod data;
mod eval;
mod model;
mod optim;
mod train;
mod trials;

pub use bound::{bound_decomposition, BoundDecomposition};
pub use data::{
    generate_noise_benchmark, generate_shift_benchmark, LabeledSet, NoiseBenchmark, NoiseBenchmarkConfig,
    ShiftBenchmark, ShiftBenchmarkConfig, Tag,
};
pub use eval::{calibration, evaluate, macro_f1, BinStat, EvalReport, DEFAULT_BINS};
pub use model::{weighted_ce_grad, Checkpoint, Gradients, ModelParams, Sample, CHECKPOINT_VERSION};
pub use optim::{adamw_step, AdamState, TrainConfig};
pub use train::{fit, mean_loss, sample_losses, train, weighted_set_loss, write_training_log, EpochRecord, Phase, TrainOutcome};
pub use trials::{run_noise_trial, run_shift_trial, NoiseTrial, ShiftTrial};
