//! Experiment harness: configuration, references, contact model, closed-loop
//! stepping, telemetry and the stiffness sweep.

pub mod config;
pub mod metrics;
pub mod run;
pub mod telemetry;
pub mod trajectory;
pub mod wall;
pub mod zwidth;

pub use config::ExperimentConfig;
pub use run::{run_experiment, RunOutcome, RunSummary, Simulation, StepRecord, TraceSample};
