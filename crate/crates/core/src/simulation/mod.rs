//! Synthetic panels from the clustered factor model and Monte Carlo experiments.

pub mod config;
pub mod dgp;
pub mod experiment;

pub use config::{Calibration, ConfigFile, DgpConfig, MembershipMode, ValidatedDgp};
pub use dgp::{generate, generate_replication, SimulatedPanel, Truth};
pub use experiment::{run_experiment, ExperimentResult, ExperimentSpec, GridCell};
