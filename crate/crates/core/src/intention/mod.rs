//! Human intention recognition: deviation detection against the assigned path,
//! goal-belief tracking over modulated road distances, and path prediction.

mod deviation;
mod hmm;
mod observation;
mod pipeline;
mod report;
mod shir;

pub use deviation::{DeviationConfig, PathTracker};
pub use hmm::{DecodeMode, GoalHmm, DEFAULT_ALPHA};
pub use observation::{
    alternative_positions, association_vector, modulated_distances, observation_vector,
    AssociationConfig, AssociationVector, ModulatedDistances, ObservationVector,
};
pub use pipeline::{HirConfig, IntentionTracker};
pub use report::{emit_report, CandidatePath, GoalSet, HirReport, KeepThreshold, ReportConfig};
pub use shir::shir_predict;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentionError {
    #[error("worker displacement {0} m is below the update threshold")]
    ZeroDisplacement(f64),
    #[error("observation has {got} components, model has {expected} states")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no road node continues the walk")]
    DeadEnd,
    #[error("goal set needs at least two distinct goals")]
    BadGoalSet,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}
