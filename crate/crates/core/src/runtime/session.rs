use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::log::{Chain, EpisodeLog, LogError, LogHeader, Marker, StepRecord, LOG_FORMAT_VERSION};
use super::{validate_actions, ActionCommand, ActionError, TaskSpec, ACTION_DT, PHYSICS_DT, SUBSTEPS};
use crate::predicates::{evaluate, satisfied, PredicateError, PredicateEvent, PredicateExpr, PredicateTracker};
use crate::sampling::{sample, SamplingError, DEFAULT_MAX_ATTEMPTS};
use crate::states::{step_states, SliceEvent, ToggleEvent};
use crate::taxonomy::Taxonomy;
use crate::world::{GraspEvent, SceneDoc, World, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("{section} line {line}: {message}")]
    ParseError { section: &'static str, line: usize, message: String },
    #[error("initial line {line}: {error}")]
    SamplingExhausted { line: usize, error: SamplingError },
    #[error("session is finished")]
    SessionFinished,
    #[error(transparent)]
    InvalidAction(#[from] ActionError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub step_index: u64,
    pub digest: [u8; 32],
    pub events: Vec<PredicateEvent>,
    pub grasps: Vec<GraspEvent>,
    pub toggles: Vec<ToggleEvent>,
    pub slices: Vec<SliceEvent>,
    pub cleaned: Vec<u64>,
    pub success: bool,
    pub done: bool,
}

impl StepResult {
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

/// A running episode. Owns its world and generator; `step` is the only
/// way time advances.
#[derive(Debug, Clone)]
pub struct Session {
    world: World,
    seed: u64,
    rng: ChaCha8Rng,
    step_index: u64,
    goal: Vec<PredicateExpr>,
    tracker: PredicateTracker,
    time_limit: u64,
    success_step: Option<u64>,
    header: LogHeader,
    chain: Chain,
    steps: Vec<StepRecord>,
    markers: Vec<Marker>,
}

fn parse_lines(section: &'static str, lines: &[String]) -> Result<Vec<PredicateExpr>, SessionError> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            PredicateExpr::parse(l).map_err(|e| SessionError::ParseError { section, line: i + 1, message: e.to_string() })
        })
        .collect()
}

impl Session {
    pub fn new(scene: &SceneDoc, taxonomy: Arc<Taxonomy>, task: &TaskSpec, seed: u64) -> Result<Self, SessionError> {
        let taxonomy_digest = taxonomy.digest_hex();
        let mut world = World::from_scene(taxonomy, scene)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = parse_lines("initial", &task.initial)?;
        for (i, expr) in initial.iter().enumerate() {
            sample(&mut world, expr, &mut rng, DEFAULT_MAX_ATTEMPTS).map_err(|error| match error {
                SamplingError::Predicate(PredicateError::UnknownInstance(id)) => SessionError::ParseError {
                    section: "initial",
                    line: i + 1,
                    message: format!("unknown instance `{id}`"),
                },
                error => SessionError::SamplingExhausted { line: i + 1, error },
            })?;
        }
        let goal = parse_lines("goal", &task.goal)?;
        for (i, expr) in goal.iter().enumerate() {
            if let Err(e) = evaluate(&world, expr) {
                return Err(SessionError::ParseError { section: "goal", line: i + 1, message: e.to_string() });
            }
        }
        let header = LogHeader {
            format_version: LOG_FORMAT_VERSION,
            seed,
            task: task.name.clone(),
            scene_ref: task.scene.clone(),
            scene_digest: scene.digest_hex(),
            taxonomy_digest,
            initial: task.initial.clone(),
            goal: task.goal.clone(),
            time_limit: task.time_limit,
            initial_digest: world.digest_hex(),
        };
        let mut tracker = PredicateTracker::new(goal.clone());
        tracker.update(&world, 0);
        let chain = Chain::new(&header);
        let mut s = Self {
            world,
            seed,
            rng,
            step_index: 0,
            goal,
            tracker,
            time_limit: task.time_limit,
            success_step: None,
            header,
            chain,
            steps: Vec::new(),
            markers: Vec::new(),
        };
        if s.goal_holds() {
            s.success_step = Some(0);
        }
        Ok(s)
    }

    /// A goal-less session that never finishes; used for benchmarking.
    pub fn idle(scene: &SceneDoc, taxonomy: Arc<Taxonomy>, seed: u64) -> Result<Self, SessionError> {
        let task = TaskSpec { name: "idle".into(), scene: String::new(), initial: vec![], goal: vec![], time_limit: u64::MAX, policy: None };
        Self::new(scene, taxonomy, &task, seed)
    }

    fn goal_holds(&self) -> bool {
        !self.goal.is_empty() && self.goal.iter().all(|g| satisfied(&self.world, g) == Ok(true))
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn goal(&self) -> &[PredicateExpr] {
        &self.goal
    }

    pub fn goal_values(&self) -> &[Option<bool>] {
        self.tracker.values()
    }

    pub fn time_limit(&self) -> u64 {
        self.time_limit
    }

    pub fn success(&self) -> bool {
        self.success_step.is_some()
    }

    pub fn success_step(&self) -> Option<u64> {
        self.success_step
    }

    pub fn done(&self) -> bool {
        self.success() || self.step_index >= self.time_limit
    }

    pub fn digest(&self) -> [u8; 32] {
        self.world.digest()
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    /// Adds a named marker at the current step.
    pub fn mark(&mut self, label: &str) {
        self.markers.push(Marker { step: self.step_index, label: label.to_string() });
    }

    /// The log of everything recorded so far.
    pub fn log(&self) -> EpisodeLog {
        EpisodeLog::new(self.header.clone(), self.steps.clone(), self.success_step, self.markers.clone())
    }

    pub fn step(&mut self, actions: &[ActionCommand]) -> Result<StepResult, SessionError> {
        if self.done() {
            return Err(SessionError::SessionFinished);
        }
        validate_actions(actions, self.world.agent.hands.len())?;
        if let Some(ActionCommand::TeleportBase { x, y }) = actions.iter().find(|a| matches!(a, ActionCommand::TeleportBase { .. })) {
            // Checked up front so a bad target leaves the step unexecuted.
            if self.world.room_at(*x, *y).is_none() {
                return Err(WorldError::TargetOutsideRooms(*x, *y).into());
            }
        }

        for h in &mut self.world.agent.hands {
            h.press_force = 0.0;
        }
        let mut grasps = Vec::new();
        for sub in 0..SUBSTEPS {
            for a in actions {
                match a {
                    ActionCommand::MoveHand { hand, linear, angular, press_force } => {
                        self.world.agent.hands[*hand].press_force = *press_force;
                        self.world.move_hand(*hand, *linear, *angular, PHYSICS_DT)?;
                    }
                    ActionCommand::SetTrigger { hand, fraction } if sub == 0 => {
                        grasps.extend(self.world.set_trigger(*hand, *fraction)?);
                    }
                    ActionCommand::TeleportBase { x, y } if sub == 0 => self.world.teleport_base(*x, *y)?,
                    _ => {}
                }
            }
            grasps.extend(self.world.maintain_grasp());
            self.world.settle_disturbed();
        }
        let states = step_states(&mut self.world, ACTION_DT, &mut self.rng);
        self.step_index += 1;

        let digest = self.world.digest();
        let record = StepRecord { step: self.step_index, actions: actions.to_vec(), state_digest: digest };
        self.chain.push(&record);
        self.steps.push(record);

        let (_, events) = self.tracker.update(&self.world, self.step_index);
        if self.success_step.is_none() && self.goal_holds() {
            self.success_step = Some(self.step_index);
        }
        Ok(StepResult {
            step_index: self.step_index,
            digest,
            events,
            grasps,
            toggles: states.toggles,
            slices: states.slices,
            cleaned: states.cleaned,
            success: self.success(),
            done: self.done(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("digest mismatch at step {step}")]
    DigestMismatch { step: u64 },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub final_digest: String,
    pub step_digests: Vec<String>,
    pub success: bool,
    pub success_step: Option<u64>,
}

/// Re-runs a log against a scene and taxonomy, checking every step digest.
pub fn replay(log: &EpisodeLog, scene: &SceneDoc, taxonomy: Arc<Taxonomy>) -> Result<ReplayReport, ReplayError> {
    let h = &log.header;
    if scene.digest_hex() != h.scene_digest || taxonomy.digest_hex() != h.taxonomy_digest {
        return Err(ReplayError::DigestMismatch { step: 0 });
    }
    let task = TaskSpec {
        name: h.task.clone(),
        scene: h.scene_ref.clone(),
        initial: h.initial.clone(),
        goal: h.goal.clone(),
        time_limit: h.time_limit,
        policy: None,
    };
    let mut session = Session::new(scene, taxonomy, &task, h.seed)?;
    if session.world.digest_hex() != h.initial_digest {
        return Err(ReplayError::DigestMismatch { step: 0 });
    }
    let mut step_digests = Vec::with_capacity(log.steps.len());
    for rec in &log.steps {
        let r = session.step(&rec.actions).map_err(|_| ReplayError::DigestMismatch { step: rec.step })?;
        if r.step_index != rec.step || r.digest != rec.state_digest {
            return Err(ReplayError::DigestMismatch { step: rec.step });
        }
        step_digests.push(r.digest_hex());
    }
    let final_digest = session.world.digest_hex();
    if final_digest != log.footer.final_digest || session.success_step != log.footer.success_step {
        return Err(ReplayError::DigestMismatch { step: session.step_index });
    }
    Ok(ReplayReport { final_digest, step_digests, success: session.success(), success_step: session.success_step })
}

pub fn replay_bytes(bytes: &[u8], scene: &SceneDoc, taxonomy: Arc<Taxonomy>) -> Result<ReplayReport, ReplayError> {
    replay(&EpisodeLog::from_bytes(bytes)?, scene, taxonomy)
}
