use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::world::{SceneDoc, WorldError};

pub const DEFAULT_TIME_LIMIT: u64 = 600;

fn default_time_limit() -> u64 {
    DEFAULT_TIME_LIMIT
}

/// A task: a scene, the conditions to sample before the episode and the
/// goal the agent must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    /// Path relative to the task file, or the name of a bundled scene.
    pub scene: String,
    #[serde(default)]
    pub initial: Vec<String>,
    pub goal: Vec<String>,
    #[serde(default = "default_time_limit")]
    pub time_limit: u64,
    /// Name of the scripted policy that solves this task, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed task: {0}")]
    Parse(String),
    #[error("task has an empty goal")]
    EmptyGoal,
    #[error("scene `{0}` not found on disk or among bundled scenes")]
    SceneNotFound(String),
    #[error(transparent)]
    Scene(#[from] WorldError),
}

impl TaskSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, TaskError> {
        let t: TaskSpec = serde_json::from_slice(bytes).map_err(|e| TaskError::Parse(e.to_string()))?;
        if t.goal.is_empty() {
            return Err(TaskError::EmptyGoal);
        }
        Ok(t)
    }

    /// Loads a task file, or a bundled task when `path` names one.
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        match std::fs::read(path) {
            Ok(bytes) => Self::from_json(&bytes),
            Err(e) => match assets::task(&path.to_string_lossy()) {
                Some(text) => Self::from_json(text.as_bytes()),
                None => Err(TaskError::Io { path: path.display().to_string(), reason: e.to_string() }),
            },
        }
    }

    pub fn bundled(name: &str) -> Option<Self> {
        assets::task(name).map(|t| Self::from_json(t.as_bytes()).expect("bundled task parses"))
    }

    /// Resolves the scene next to `task_path` first, then among bundled assets.
    pub fn scene(&self, task_path: Option<&Path>) -> Result<SceneDoc, TaskError> {
        resolve_scene(&self.scene, task_path.and_then(|p| p.parent()))
    }
}

pub fn resolve_scene(scene_ref: &str, base: Option<&Path>) -> Result<SceneDoc, TaskError> {
    let on_disk = base.map_or_else(|| Path::new(scene_ref).to_path_buf(), |b| b.join(scene_ref));
    if let Ok(bytes) = std::fs::read(&on_disk) {
        return Ok(SceneDoc::from_json(&bytes)?);
    }
    match assets::file(scene_ref) {
        Some(text) => Ok(SceneDoc::from_json(text.as_bytes())?),
        None => Err(TaskError::SceneNotFound(scene_ref.to_string())),
    }
}
