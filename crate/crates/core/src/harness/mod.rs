//! Online protocol, optimiser, baselines and experiment runner.

pub mod baselines;
pub mod experiment;
pub mod learner;
pub mod metrics;
pub mod optim;
pub mod protocol;
pub mod reservoir;

pub use baselines::{Er, ErConfig, OnlineTcn};
pub use experiment::{
    build_learner, mean_std, prepare_data, run_cell, run_experiment, CellResult, DataSpec,
    ExperimentConfig, ExperimentSummary, LearnerKind, ModelConfig, PreparedData, SeedResult,
};
pub use learner::{Learner, ParamCounts, StepReport};
pub use metrics::{mse_mae, RunMetrics, StepMetrics, TriggerEvent};
pub use optim::{AdamW, AdamWConfig};
pub use protocol::{online_run, warmup_train, RunAborted, RunOptions};
pub use reservoir::ReservoirBuffer;
