//! Scripted crafting sessions: a participant who signals when a handover is
//! wanted, a robot driven by the handover policy, and the ground truth needed
//! to label and score both.

mod engine;
mod gesture;
mod score;
mod script;

use thiserror::Error;

pub use engine::{
    generate_session, run_closed_loop, simulate, simulate_study, teleop_trigger, Deadlock, ModelSource, OracleModels,
    SignalRecord, SimGroundTruth, SimRun,
};
pub use gesture::{lean_feature, BodyShape, Gesture, GestureModel, Pose};
pub use score::{score_policy, LatencyStats, PolicyScore, MATCH_WINDOW};
pub use script::{Activity, EpisodePlan, Handedness, InjectedSignal, ParticipantScript, ScriptGenerator, Segment, Stage};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("script: {0}")]
    Script(String),
    #[error("schedule conflict: {0}")]
    ScheduleConflict(String),
    #[error("run does not match ground truth: {0}")]
    MismatchedRun(String),
    #[error(transparent)]
    Session(#[from] crate::session::SessionError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
