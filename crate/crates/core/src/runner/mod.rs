//! Experiment drivers: online training, frozen-query evaluation, behavioral
//! cloning, hindsight-bias analysis and encoder ablations.

mod analysis;
mod bc;
mod eval;
mod train;

pub use analysis::{
    ablation_grid, collect_corpus, fixed_length_buffer, run_ablation, run_bias_analysis, AblationAxis, AblationConfig,
    AblationRow, BiasRow, GridPoint,
};
pub use bc::{build_bc_dataset, check_disjoint, first_action_accuracy, run_bc, BcConfig, BcDataset, BcResult, BcVariant};
pub use eval::{evaluate, frozen_queries, histogram_rows, EvalMode, EvalReport, HistogramRow, QueryOutcome};
pub use train::{
    collect_episode, train, train_with_queries, write_metrics_csv, Collector, MetricsRow, TrainConfig, TrainOutcome, METRICS_HEADER,
};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent RNG streams derived from one run seed.
pub(crate) mod stream {
    pub const ENV: u64 = 1;
    pub const INIT: u64 = 2;
    pub const ACT: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const DATA: u64 = 6;
    pub const ENCODER: u64 = 7;
}

/// ChaCha8 keyed by `seed` on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

/// Mean and population standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
