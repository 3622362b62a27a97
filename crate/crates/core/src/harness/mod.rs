//! Seeded Monte Carlo engine, the power-curve, consistency, decomposition and
//! prior-membership experiments, and their CSV/JSON outputs.
//!
//! Replication i of a run always draws from the generator seeded by
//! mix(seed, i) and counts are reduced by summation, so results depend only
//! on (config, seed), never on the number of worker threads.

mod config;
mod engine;
mod experiments;
mod output;

pub use config::{
    config_hash, AlternativeSpec, CoefficientSpec, ConsistencyConfig, DecompositionConfig, ExperimentConfig,
    InverseSpec, MembershipConfig, MinimaxSpec, TestSpec,
};
pub use engine::{
    configured_alternative, count_events, power_curve, run_monte_carlo, tally, MonteCarloSummary, PowerPoint,
    PreparedTest, Truth,
};
pub use experiments::{
    bayes_membership_experiment, consistency_experiment, coupled_sample_size, maxiset_decomposition_experiment,
    ConsistencyPoint, DecompositionPoint, MembershipSummary,
};
pub use output::{write_csv, write_json, CsvRow, SCHEMA};
