use std::path::PathBuf;

use thiserror::Error;

use crate::workspace::{ActionSpec, Config};

/// Errors raised by the geometry, belief, planning and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid probe shape: {0}")]
    InvalidProbe(String),

    #[error("invalid object template: {0}")]
    InvalidTemplate(String),

    #[error("action {action} from {start} has no in-bounds waypoint")]
    InvalidAction { start: Config, action: ActionSpec },

    #[error("contact surface at {config} moving {direction} lies entirely outside the grid")]
    EmptySurface { config: Config, direction: String },

    #[error("distance query on an empty voxel set")]
    EmptyInput,

    #[error("collision at {config} contradicts the possibly-occupied set")]
    InconsistentObservation { config: Config },

    #[error("no object pose is consistent with the residual volume and contact history")]
    NoFeasiblePose,

    #[error("probe footprint at {config} already overlaps the object")]
    StartInCollision { config: Config },

    #[error("hypotheses disagree on the docking configuration")]
    AmbiguousGoal,

    #[error("phase {phase} exceeded its step limit")]
    StepLimit { phase: u8 },

    #[error("no valid action from the current belief")]
    DeadEnd,

    #[error("no sampled or enumerated action has positive information gain")]
    NoInformativeAction,

    #[error("record sets of different planners cover different (scenario, seed) pairs")]
    MismatchedScenarioSets,

    #[error("no records to aggregate")]
    EmptyRecords,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
