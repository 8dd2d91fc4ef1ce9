//! Configuration, multi-seed experiments and model evaluation.

pub mod config;
mod evaluate;
pub mod experiment;

pub use config::{load_config, load_simulation_config, read_config, Algorithm, ExperimentConfig, SimulationConfig};
pub use evaluate::{evaluate_model, EvaluationReport};
pub use experiment::{mean_std, run_experiment, ExperimentSummary};
