//! Sessions, episode logs, tasks and the scripted policies that solve them.

mod action;
mod bench;
mod log;
pub mod policy;
mod session;
mod task;

pub use action::{validate_actions, ActionCommand, ActionError};
pub use bench::{bench, BenchReport};
pub use log::{EpisodeLog, LogError, LogFooter, LogHeader, Marker, StepRecord, LOG_FORMAT_VERSION};
pub use session::{replay, replay_bytes, ReplayError, ReplayReport, Session, SessionError, StepResult};
pub use task::{resolve_scene, TaskError, TaskSpec, DEFAULT_TIME_LIMIT};

/// Seconds per agent action.
pub const ACTION_DT: f64 = 1.0 / 30.0;
/// Seconds per physics substep.
pub const PHYSICS_DT: f64 = 1.0 / 120.0;
pub const SUBSTEPS: usize = 4;
