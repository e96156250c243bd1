//! A flight–pause model of human mobility: simulation, likelihood-based
//! inference under missing data, and trajectory imputation.
//!
//! The model describes movement as an alternating sequence of *flights*
//! (one time-step displacements with AR(1)-correlated lengths) and *pauses*
//! (geometric-duration stays), parameterized by
//! `theta = (theta1, theta2, theta3, theta4)`:
//!
//! * `theta1` — probability a flight is followed by a pause;
//! * `theta2` — per-step probability an ongoing pause ends;
//! * `theta3` — AR(1) coefficient linking consecutive flight displacements;
//! * `theta4` — per-coordinate innovation variance of flight displacements.
//!
//! Location-tracking devices record positions at a subset of times. The
//! crate converts a partially observed position sequence back into the
//! increments it certifies ([`trajectory::extract_increments`]), evaluates
//! observed-data likelihoods that either ignore or correct for the
//! duration-selective censoring the mechanism induces ([`inference`]),
//! fills the gaps by a constrained parametric sampler or linear
//! interpolation ([`imputation`]), and scores downstream exposure-type
//! queries on the imputed trajectories ([`exposure`]).
//!
//! Everything is deterministic given explicit seeds; see [`seed`] for the
//! derivation scheme used to decorrelate pipeline stages.

pub mod chain;
pub mod config;
pub mod error;
pub mod exposure;
pub mod imputation;
pub mod inference;
pub mod io;
pub mod mechanisms;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod seed;
pub mod trajectory;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use exposure::{
    center_and_bound, evaluate_exposure, evaluate_exposure_per_trajectory, exposure_time,
    sample_hotspot, BoundingBox, ExposureReport, Hotspot,
};
pub use imputation::{impute_gaps, ImputationOutput, ImputeMethod};
pub use inference::{
    fit, log_likelihood, mnar_adjusted_log_likelihood, moment_initial_guess,
    naive_mar_log_likelihood, FitBounds, FitMode, FitResult,
};
pub use mechanisms::{generate_z, mask_trajectory, MechanismConfig};
pub use model::{
    complete_data_log_likelihood, simulate_motion, validate_motion, Increment, IncrementKind,
    InitialIncrementSpec, Motion, MotionViolation, Theta,
};
pub use pipeline::{run_pipeline, PipelineSummary};
pub use trajectory::{
    effective_sample_size, extract_increments, motion_to_trajectory, BlockStats, ExtractionResult,
    ObservabilityVector, ObservedTrajectory, PauseRun, Trajectory,
};
