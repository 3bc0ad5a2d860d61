//! Experiment orchestration: configuration, training loop, metrics,
//! checkpoints and seed sweeps.

mod config;
mod metrics;
mod report;
mod runner;

pub use config::{AgentSpec, ExperimentConfig, ScenarioConfig, SensingErrorSpec};
pub use metrics::{compute_metrics, IterationMetrics, RateSummary};
pub use report::{write_metrics_csv, write_summary_csv, MetricsWriter, METRICS_HEADER, SUMMARY_HEADER};
pub use runner::{
    build_agent, build_environment, evaluate, load_scenario, replay, restore_agent, run_experiment,
    run_experiment_with, sweep, sweep_seed, Checkpoint, RunResult, Session, CHECKPOINT_FORMAT,
};
