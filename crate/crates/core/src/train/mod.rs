//! Training, evaluation, experiment sweeps and cost counters.

pub mod config;
pub mod counts;
pub mod eval;
pub mod features;
pub mod fit;
pub mod optim;
pub mod report;
pub mod sweep;

pub use config::{SubsampleConfig, TrainConfig};
pub use counts::{count_macs, count_params, measure_macs, CountRow, MacCount};
pub use eval::{cross_entropy, evaluate, EvalReport};
pub use features::{featurize, featurize_at, Example, FeatureKind, Featurization};
pub use fit::{derive_seed, train, train_subsampled, train_with, EpochRecord, History, SubsampledComparison};
pub use optim::Adam;
pub use report::{
    write_counts_csv, write_history_csv, write_repr_csv, write_subsample_csv, RunManifest, MANIFEST_VERSION,
};
pub use sweep::{mean_std, reduce_input, run_jobs, sweep_repr, sweep_subsample, ReprCell, SubsampleRow};
