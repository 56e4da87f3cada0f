//! Experiment runner: configuration, the episode loop with offline
//! evaluation, the comparison studies and their CSV/JSON outputs.

mod config;
mod emit;
mod run;

pub use config::{
    ContextSampler, ExperimentConfig, GridSpec, DEFAULT_ACTIVE_EPISODES, DEFAULT_EVAL_PERIOD, DEFAULT_PASSIVE_EPISODES,
};
pub use emit::{emit, long_csv, mean_std, read_run_file, summary_csv, RunFile, LONG_CSV, RUN_JSON, SUMMARY_CSV};
pub use run::{
    active_study, cumulative_online, derive_seed, generalization_study, offline_eval, offline_rewards, run, run_single,
    study, GeneralizationReport, GridEval, GroupMeans, OfflinePoint, ReplayMeta, RunError, RunResult,
};
