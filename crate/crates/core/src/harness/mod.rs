//! Monte Carlo experiment harness: JSON configs, parallel replicas,
//! aggregated curves and the `pasto` command line.

pub mod cli;
pub mod config;
pub mod emit;
pub mod runner;
pub mod seed;
pub mod stats;

pub use config::{AlgorithmSpec, EnvironmentSpec, ExperimentConfig, OutputFormat, ReplicaSetup};
pub use emit::{csv_string, emit, json_string, CSV_HEADER};
pub use runner::{
    recorded_iterations, run_experiment, run_experiment_with_threads, run_replica, AggregateRow,
    ReplicaSummary, ResultBundle,
};
pub use seed::{derive_seed, replica_seed, SeedStream};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
}
