//! Planning engine for two-subpopulation randomized trials.
//!
//! The crate calibrates efficacy boundaries for an adaptive enrichment design
//! and two standard group sequential designs so that each controls the
//! familywise Type I error rate, and estimates power, expected sample size
//! and expected duration by simulating the asymptotic joint law of the
//! sequential z-statistics.
//!
//! Module map:
//!
//! - [`model`]: population and design parameters, enrollment schedules and
//!   the multivariate normal law of the z-statistics.
//! - [`crossing`]: Monte Carlo boundary-crossing probabilities over a block
//!   of common random numbers.
//! - [`boundary`]: calibration of the proportionality constants and the
//!   per-stage boundary tables.
//! - [`simulator`]: decision rules, durations and performance sweeps.
//! - [`ingest`]: participant-level prior data and parameter estimation.
//! - [`config`]: parameter files and the JSON parameter document.
//! - [`export`]: CSV tables and the static HTML report.

pub mod boundary;
pub mod clock;
pub mod config;
pub mod crossing;
pub mod error;
pub mod export;
pub mod inf_serde;
pub mod ingest;
pub mod model;
pub mod normal;
pub mod simulator;

mod par;

pub use boundary::{
    materialize_boundaries, solve_adaptive, solve_single_stream, AdaptiveBoundaries,
    AdaptiveConstants, BoundaryTable, Calibration, Constants, DesignTables, SolveReport,
    StandardBoundaries,
};
pub use clock::Deadline;
pub use config::{
    load_parameters, save_parameters, EffectGrid, McConfig, ParameterDocument, Parameters,
};
pub use crossing::{crossing_probability, CrnBlock};
pub use error::{Error, Result};
pub use export::TableName;
pub use ingest::{estimate_population, parse_dataset, ParticipantRecord, PopulationEstimate};
pub use model::{
    build_schedule, z_covariance, z_mean_vector, Design, DesignSpec, EnrollmentSchedule,
    PopulationParams, ZJointLaw,
};
pub use simulator::{
    compute_duration, estimate_performance, estimate_performance_with, run_adaptive_rules,
    run_standard_rules, DesignMetrics, Estimate, Futility, PerformanceGrid, RunControl,
    TrialOutcome,
};
