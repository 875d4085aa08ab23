//! The mutable scene: object instances, rooms, droplets and the agent.
//!
//! Kinematics are quasi-static. Unsupported objects drop straight down to the
//! first support, hands are clamped at contact instead of being pushed back by
//! forces, and a grasped object follows its hand rigidly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{
    overlap, polygon_bounds, polygon_contains, polygon_is_simple, raycast, sweep_aabb, world_aabb, Aabb, Collider,
    Geometry, Overlap, Pose, Quat, Ray, Sweep, Vec2, Vec3, CONTACT_EPS,
};
use crate::taxonomy::{Link, ObjectModel, ResolvedCategory, Taxonomy, VirtualLinkKind};

pub const ROOM_TEMPERATURE: f64 = 23.0;
pub const GRAVITY: f64 = 9.81;

/// Tunable kernel constants. Part of the hashed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub ambient_temperature: f64,
    pub ambient_rate: f64,
    /// Use `T <- T * (1 + dt*r*(T_src - T))` instead of the additive law.
    pub multiplicative_temperature: bool,
    pub clean_radius: f64,
    pub pour_angle_deg: f64,
    pub droplet_radius: f64,
    pub droplet_jitter: f64,
    pub gravity: f64,
    pub hand_force_budget: f64,
    pub grasp_break_distance: f64,
    pub grasp_threshold: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub reach_distance: f64,
    pub hand_half_extents: Vec3,
    pub finger_length: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            ambient_temperature: ROOM_TEMPERATURE,
            ambient_rate: 0.02,
            multiplicative_temperature: false,
            clean_radius: 0.03,
            pour_angle_deg: 60.0,
            droplet_radius: 0.01,
            droplet_jitter: 0.005,
            gravity: GRAVITY,
            hand_force_budget: 300.0,
            grasp_break_distance: 0.10,
            grasp_threshold: 0.5,
            max_linear_speed: 1.0,
            max_angular_speed: std::f64::consts::PI,
            reach_distance: 2.0,
            hand_half_extents: Vec3::new(0.04, 0.04, 0.02),
            finger_length: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParticleKind {
    Dust,
    Stain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: u64,
    pub kind: ParticleKind,
    pub link: String,
    pub local_point: Vec3,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropletStatus {
    Free,
    ContainedIn(String),
    Absorbed(String),
    Destroyed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Droplet {
    pub id: u64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub status: DropletStatus,
}

/// Counts of droplets that left the live set, plus total emissions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropletLedger {
    pub emitted: u64,
    pub absorbed: u64,
    pub destroyed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DropletCounts {
    pub emitted: u64,
    pub free: u64,
    pub contained: u64,
    pub absorbed: u64,
    pub destroyed: u64,
}

impl DropletCounts {
    pub fn balanced(&self) -> bool {
        self.emitted == self.free + self.contained + self.absorbed + self.destroyed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VisualTag {
    Cooked,
    Burnt,
    Frozen,
    Soaked,
    Dusty,
    Stained,
    On,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    pub model: String,
    pub category: String,
    pub pose: Pose,
    pub joints: BTreeMap<String, f64>,
    pub temperature: f64,
    pub max_temperature: f64,
    pub wetness: u32,
    pub dust: Vec<Particle>,
    pub stains: Vec<Particle>,
    pub initial_dust: u32,
    pub initial_stains: u32,
    pub toggled: bool,
    pub sliced: bool,
    /// A whole that was replaced by its halves. Only `Sliced` may be queried.
    pub retired: bool,
    /// Hand was touching the toggling link at the end of the previous step.
    pub toggle_touching: bool,
    /// Fractional droplets owed by a source.
    pub emit_accumulator: f64,
}

fn level(particles: &[Particle], initial: u32) -> f64 {
    if initial == 0 {
        return 0.0;
    }
    particles.iter().filter(|p| p.active).count() as f64 / initial as f64
}

impl ObjectState {
    pub fn dust_level(&self) -> f64 {
        level(&self.dust, self.initial_dust)
    }

    pub fn stain_level(&self) -> f64 {
        level(&self.stains, self.initial_stains)
    }

    pub fn com(&self) -> Vec3 {
        self.pose.position
    }

    pub fn particles(&self, kind: ParticleKind) -> &[Particle] {
        match kind {
            ParticleKind::Dust => &self.dust,
            ParticleKind::Stain => &self.stains,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub id: String,
    pub kind: String,
    pub floor_polygon: Vec<[f64; 2]>,
    #[serde(default)]
    pub floor_z: f64,
}

impl Room {
    pub fn polygon(&self) -> Vec<Vec2> {
        self.floor_polygon.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        polygon_contains(&self.polygon(), &Vec2::new(x, y))
    }

    fn slab(&self) -> Aabb {
        let (lo, hi) = polygon_bounds(&self.polygon());
        Aabb::new(Vec3::new(lo.x, lo.y, self.floor_z - 1.0), Vec3::new(hi.x, hi.y, self.floor_z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub object: String,
    /// `hand⁻¹ ∘ object` at grasp time.
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hand {
    pub pose: Pose,
    pub trigger: f64,
    pub grasp: Option<Grasp>,
    /// Declared pressing force for the current step.
    pub press_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub hands: Vec<Hand>,
    pub head: Pose,
    pub fov_half_angle: f64,
    pub base: Vec3,
    pub base_room: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum HitTarget {
    Link { object: String, link: String },
    Floor { room: String },
}

impl HitTarget {
    pub fn object(&self) -> Option<&str> {
        match self {
            HitTarget::Link { object, .. } => Some(object),
            HitTarget::Floor { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneHit {
    pub target: HitTarget,
    pub point: Vec3,
    pub normal: Vec3,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contact {
    pub object_a: String,
    pub link_a: String,
    pub object_b: String,
    pub link_b: String,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BreakReason {
    Distance,
    ForceBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraspEvent {
    Grasped { hand: usize, object: String },
    Released { hand: usize, object: String },
    Broken { hand: usize, object: String, reason: BreakReason },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance id `{0}` already in use")]
    DuplicateInstance(String),
    #[error("no support below `{0}`")]
    NoSupportFound(String),
    #[error("`{0}` penetrates another object")]
    PenetrationUnresolvable(String),
    #[error("`{0}` is held by the agent")]
    Grasped(String),
    #[error("target ({0}, {1}) is outside every room")]
    TargetOutsideRooms(f64, f64),
    #[error("no hand with index {0}")]
    UnknownHand(usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

// ---------------------------------------------------------------------------
// Scene document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendedState {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_temperature: Option<f64>,
    pub wetness: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dust: Vec<Particle>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stains: Vec<Particle>,
    pub initial_dust: u32,
    pub initial_stains: u32,
    pub toggled: bool,
    pub sliced: bool,
    pub retired: bool,
    pub toggle_touching: bool,
    pub emit_accumulator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub model: String,
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub joints: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<ExtendedState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandSpec {
    pub pose: Pose,
    #[serde(default)]
    pub trigger: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp: Option<Grasp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub hands: Vec<HandSpec>,
    pub head: Pose,
    #[serde(default = "default_fov")]
    pub fov_half_angle: f64,
    pub base: [f64; 3],
}

fn default_fov() -> f64 {
    std::f64::consts::FRAC_PI_4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub rooms: Vec<Room>,
    pub objects: Vec<SceneObject>,
    pub agent: AgentSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derived_models: Vec<ObjectModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub droplets: Vec<Droplet>,
    #[serde(default)]
    pub ledger: DropletLedger,
    #[serde(default)]
    pub config: WorldConfig,
    /// Next free particle/droplet id; 0 means derive from the contents.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub next_id: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl SceneDoc {
    pub fn from_json(bytes: &[u8]) -> Result<Self, WorldError> {
        serde_json::from_slice(bytes).map_err(|e| WorldError::InvalidScene(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// SHA-256 of the compact canonical JSON form.
    pub fn digest_hex(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("scene serializes")))
    }
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct World {
    taxonomy: Arc<Taxonomy>,
    pub config: WorldConfig,
    objects: BTreeMap<String, ObjectState>,
    derived_models: BTreeMap<String, ObjectModel>,
    rooms: Vec<Room>,
    pub(crate) droplets: Vec<Droplet>,
    pub(crate) ledger: DropletLedger,
    pub agent: Agent,
    pub(crate) disturbed: BTreeSet<String>,
    next_id: u64,
}

#[derive(Serialize)]
struct Canonical<'a> {
    config: &'a WorldConfig,
    objects: &'a BTreeMap<String, ObjectState>,
    derived_models: Vec<(&'a String, String)>,
    rooms: &'a [Room],
    droplets: &'a [Droplet],
    ledger: &'a DropletLedger,
    agent: &'a Agent,
    disturbed: &'a BTreeSet<String>,
    next_id: u64,
}

/// A link placed in the world.
#[derive(Debug, Clone)]
pub struct PlacedLink<'a> {
    pub object: &'a str,
    pub link: &'a Link,
    pub pose: Pose,
    pub aabb: Aabb,
}

impl World {
    pub fn new(taxonomy: Arc<Taxonomy>, rooms: Vec<Room>, agent: Agent) -> Result<Self, WorldError> {
        for r in &rooms {
            if !polygon_is_simple(&r.polygon()) {
                return Err(WorldError::InvalidScene(format!("room `{}` polygon is not simple", r.id)));
            }
        }
        let mut w = Self {
            taxonomy,
            config: WorldConfig::default(),
            objects: BTreeMap::new(),
            derived_models: BTreeMap::new(),
            rooms,
            droplets: Vec::new(),
            ledger: DropletLedger::default(),
            agent,
            disturbed: BTreeSet::new(),
            next_id: 1,
        };
        w.agent.base_room = w.room_at(w.agent.base.x, w.agent.base.y).map(|r| r.id.clone());
        Ok(w)
    }

    /// A single square room with the agent at its center; handy for tests.
    pub fn empty(taxonomy: Arc<Taxonomy>, half_size: f64) -> Self {
        let h = half_size;
        let room = Room {
            id: "room_1".into(),
            kind: "kitchen".into(),
            floor_polygon: vec![[-h, -h], [h, -h], [h, h], [-h, h]],
            floor_z: 0.0,
        };
        Self::new(taxonomy, vec![room], default_agent()).expect("square room is simple")
    }

    pub fn from_scene(taxonomy: Arc<Taxonomy>, scene: &SceneDoc) -> Result<Self, WorldError> {
        let hands = scene
            .agent
            .hands
            .iter()
            .map(|h| Hand { pose: h.pose, trigger: h.trigger, grasp: h.grasp.clone(), press_force: 0.0 })
            .collect();
        let agent = Agent {
            hands,
            head: scene.agent.head,
            fov_half_angle: scene.agent.fov_half_angle,
            base: Vec3::from(scene.agent.base),
            base_room: None,
        };
        let mut w = Self::new(taxonomy, scene.rooms.clone(), agent)?;
        w.config = scene.config.clone();
        for m in &scene.derived_models {
            w.derived_models.insert(m.id.clone(), m.clone());
        }
        let mut max_id = 0;
        for obj in &scene.objects {
            let id = match &obj.id {
                Some(id) => {
                    w.add_object_with_id(id, &obj.model, obj.pose)?;
                    id.clone()
                }
                None => w.add_object(&obj.model, obj.pose)?,
            };
            let model = w.model(&obj.model).expect("just added").clone();
            let o = w.objects.get_mut(&id).expect("just added");
            for (j, q) in &obj.joints {
                let joint = model
                    .joint(j)
                    .ok_or_else(|| WorldError::InvalidScene(format!("`{id}` has no joint `{j}`")))?;
                if !(joint.lower..=joint.upper).contains(q) {
                    return Err(WorldError::InvalidScene(format!("joint `{j}` of `{id}` out of range")));
                }
                o.joints.insert(j.clone(), *q);
            }
            if let Some(s) = &obj.state {
                o.temperature = s.temperature.unwrap_or(ROOM_TEMPERATURE);
                o.max_temperature = s.max_temperature.unwrap_or(o.temperature).max(o.temperature);
                o.wetness = s.wetness;
                o.dust = s.dust.clone();
                o.stains = s.stains.clone();
                o.initial_dust = s.initial_dust;
                o.initial_stains = s.initial_stains;
                o.toggled = s.toggled;
                o.sliced = s.sliced;
                o.retired = s.retired;
                o.toggle_touching = s.toggle_touching;
                o.emit_accumulator = s.emit_accumulator;
                for p in o.dust.iter().chain(&o.stains) {
                    max_id = max_id.max(p.id);
                }
            }
        }
        for d in &scene.droplets {
            max_id = max_id.max(d.id);
        }
        w.droplets = scene.droplets.clone();
        w.ledger = scene.ledger;
        w.next_id = scene.next_id.max(max_id + 1);
        for h in &w.agent.hands {
            if let Some(g) = &h.grasp {
                if !w.objects.contains_key(&g.object) {
                    return Err(WorldError::InvalidScene(format!("grasped object `{}` missing", g.object)));
                }
            }
        }
        Ok(w)
    }

    pub fn to_scene(&self) -> SceneDoc {
        let objects = self
            .objects
            .values()
            .map(|o| SceneObject {
                id: Some(o.id.clone()),
                model: o.model.clone(),
                pose: o.pose,
                joints: o.joints.clone(),
                state: Some(ExtendedState {
                    temperature: Some(o.temperature),
                    max_temperature: Some(o.max_temperature),
                    wetness: o.wetness,
                    dust: o.dust.clone(),
                    stains: o.stains.clone(),
                    initial_dust: o.initial_dust,
                    initial_stains: o.initial_stains,
                    toggled: o.toggled,
                    sliced: o.sliced,
                    retired: o.retired,
                    toggle_touching: o.toggle_touching,
                    emit_accumulator: o.emit_accumulator,
                }),
            })
            .collect();
        SceneDoc {
            rooms: self.rooms.clone(),
            objects,
            agent: AgentSpec {
                hands: self
                    .agent
                    .hands
                    .iter()
                    .map(|h| HandSpec { pose: h.pose, trigger: h.trigger, grasp: h.grasp.clone() })
                    .collect(),
                head: self.agent.head,
                fov_half_angle: self.agent.fov_half_angle,
                base: [self.agent.base.x, self.agent.base.y, self.agent.base.z],
            },
            derived_models: self.derived_models.values().cloned().collect(),
            droplets: self.droplets.clone(),
            ledger: self.ledger,
            config: self.config.clone(),
            next_id: self.next_id,
        }
    }

    pub fn taxonomy(&self) -> &Arc<Taxonomy> {
        &self.taxonomy
    }

    pub fn model(&self, id: &str) -> Option<&ObjectModel> {
        self.derived_models.get(id).or_else(|| self.taxonomy.model(id))
    }

    pub(crate) fn insert_derived_model(&mut self, model: ObjectModel) {
        self.derived_models.insert(model.id.clone(), model);
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    /// First room (in declaration order) whose closed polygon contains the point.
    pub fn room_at(&self, x: f64, y: f64) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains_xy(x, y))
    }

    pub fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    // -- objects ------------------------------------------------------------

    fn new_state(&self, id: &str, model: &ObjectModel, pose: Pose) -> ObjectState {
        let joints = model.joints().map(|(name, j)| (name.to_string(), j.lower)).collect();
        ObjectState {
            id: id.to_string(),
            model: model.id.clone(),
            category: model.category.clone(),
            pose,
            joints,
            temperature: ROOM_TEMPERATURE,
            max_temperature: ROOM_TEMPERATURE,
            wetness: 0,
            dust: Vec::new(),
            stains: Vec::new(),
            initial_dust: 0,
            initial_stains: 0,
            toggled: false,
            sliced: false,
            retired: false,
            toggle_touching: false,
            emit_accumulator: 0.0,
        }
    }

    /// Adds an instance with a generated `<category>_<n>` id.
    pub fn add_object(&mut self, model: &str, pose: Pose) -> Result<String, WorldError> {
        let m = self.model(model).ok_or_else(|| WorldError::UnknownModel(model.to_string()))?;
        let mut n = 1;
        let id = loop {
            let candidate = format!("{}_{n}", m.category);
            if !self.objects.contains_key(&candidate) {
                break candidate;
            }
            n += 1;
        };
        self.add_object_with_id(&id, model, pose)?;
        Ok(id)
    }

    pub fn add_object_with_id(&mut self, id: &str, model: &str, pose: Pose) -> Result<(), WorldError> {
        if !pose.is_finite() {
            return Err(WorldError::InvalidScene(format!("non-finite pose for `{id}`")));
        }
        if self.objects.contains_key(id) {
            return Err(WorldError::DuplicateInstance(id.to_string()));
        }
        let m = self.model(model).ok_or_else(|| WorldError::UnknownModel(model.to_string()))?;
        let state = self.new_state(id, m, pose);
        self.objects.insert(id.to_string(), state);
        Ok(())
    }

    pub fn remove_object(&mut self, id: &str) -> Option<ObjectState> {
        for h in &mut self.agent.hands {
            if h.grasp.as_ref().is_some_and(|g| g.object == id) {
                h.grasp = None;
            }
        }
        self.disturbed.remove(id);
        self.objects.remove(id)
    }

    /// Any instance, including retired wholes.
    pub fn object(&self, id: &str) -> Option<&ObjectState> {
        self.objects.get(id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut ObjectState> {
        self.objects.get_mut(id)
    }

    /// A live (not retired) instance.
    pub fn live(&self, id: &str) -> Result<&ObjectState, WorldError> {
        self.objects
            .get(id)
            .filter(|o| !o.retired)
            .ok_or_else(|| WorldError::UnknownInstance(id.to_string()))
    }

    pub fn live_mut(&mut self, id: &str) -> Result<&mut ObjectState, WorldError> {
        self.objects
            .get_mut(id)
            .filter(|o| !o.retired)
            .ok_or_else(|| WorldError::UnknownInstance(id.to_string()))
    }

    pub fn live_objects(&self) -> impl Iterator<Item = &ObjectState> {
        self.objects.values().filter(|o| !o.retired)
    }

    pub fn all_objects(&self) -> impl Iterator<Item = &ObjectState> {
        self.objects.values()
    }

    pub fn live_ids(&self) -> Vec<String> {
        self.live_objects().map(|o| o.id.clone()).collect()
    }

    pub fn object_count(&self) -> usize {
        self.live_objects().count()
    }

    pub fn category_of(&self, id: &str) -> Result<&ResolvedCategory, WorldError> {
        let o = self.objects.get(id).ok_or_else(|| WorldError::UnknownInstance(id.to_string()))?;
        self.taxonomy.resolve_abilities(&o.category).map_err(|_| WorldError::UnknownModel(o.model.clone()))
    }

    pub fn model_of(&self, id: &str) -> Result<&ObjectModel, WorldError> {
        let o = self.objects.get(id).ok_or_else(|| WorldError::UnknownInstance(id.to_string()))?;
        self.model(&o.model).ok_or_else(|| WorldError::UnknownModel(o.model.clone()))
    }

    pub fn set_pose(&mut self, id: &str, pose: Pose) -> Result<(), WorldError> {
        self.live_mut(id)?.pose = pose;
        Ok(())
    }

    pub fn visual_state(&self, id: &str) -> Vec<VisualTag> {
        let (Some(o), Ok(cat)) = (self.objects.get(id), self.category_of(id)) else {
            return Vec::new();
        };
        use crate::taxonomy::AbilityFlag as A;
        let mut tags = Vec::new();
        let burnt = cat.has(A::Burnable) && cat.t_burnt().is_some_and(|b| o.max_temperature >= b);
        if cat.has(A::Cookable) && !burnt && cat.t_cooked().is_some_and(|c| o.max_temperature >= c) {
            tags.push(VisualTag::Cooked);
        }
        if burnt {
            tags.push(VisualTag::Burnt);
        }
        if cat.has(A::Freezable) && o.temperature <= cat.t_frozen() {
            tags.push(VisualTag::Frozen);
        }
        if cat.has(A::Soakable) && o.wetness as f64 >= cat.w_soaked() {
            tags.push(VisualTag::Soaked);
        }
        if cat.has(A::Dustyable) && o.dust_level() > cat.d_dusty() {
            tags.push(VisualTag::Dusty);
        }
        if cat.has(A::Stainable) && o.stain_level() > cat.s_stained() {
            tags.push(VisualTag::Stained);
        }
        if cat.has(A::Toggleable) && o.toggled {
            tags.push(VisualTag::On);
        }
        if o.sliced {
            tags.push(VisualTag::Sliced);
        }
        tags
    }

    // -- placed geometry ----------------------------------------------------

    /// World placement of every link of an instance (colliding or not).
    pub fn placed_links(&self, id: &str) -> Vec<PlacedLink<'_>> {
        let Some(o) = self.objects.get(id) else { return Vec::new() };
        let Some(m) = self.model(&o.model) else { return Vec::new() };
        m.link_poses(&o.joints)
            .into_iter()
            .zip(&m.links)
            .map(|(local, link)| {
                let pose = o.pose.compose(&local);
                PlacedLink { object: o.id.as_str(), link, pose, aabb: world_aabb(&link.geometry, &pose) }
            })
            .collect()
    }

    /// World position of a surface particle on `id`.
    pub fn particle_position(&self, id: &str, p: &Particle) -> Option<Vec3> {
        self.placed_links(id).iter().find(|l| l.link.id == p.link).map(|l| l.pose.transform_point(&p.local_point))
    }

    pub fn colliding_links(&self, id: &str) -> Vec<PlacedLink<'_>> {
        self.placed_links(id).into_iter().filter(|l| l.link.colliding).collect()
    }

    /// World box of the colliding links (all links when none collide).
    pub fn object_aabb(&self, id: &str) -> Option<Aabb> {
        let links = self.placed_links(id);
        let colliding: Vec<&PlacedLink> = links.iter().filter(|l| l.link.colliding).collect();
        let set: Vec<&PlacedLink> = if colliding.is_empty() { links.iter().collect() } else { colliding };
        set.iter().map(|l| l.aabb).reduce(|a, b| a.union(&b))
    }

    pub fn virtual_link(&self, id: &str, kind: VirtualLinkKind) -> Option<PlacedLink<'_>> {
        let o = self.objects.get(id)?;
        let link = self.model(&o.model)?.virtual_links.get(&kind)?;
        let pose = o.pose.compose(&link.local_pose);
        Some(PlacedLink { object: o.id.as_str(), link, pose, aabb: world_aabb(&link.geometry, &pose) })
    }

    /// Colliding links of every live object not in `exclude`.
    pub fn all_colliding_links(&self, exclude: &[&str]) -> Vec<PlacedLink<'_>> {
        self.live_objects()
            .filter(|o| !exclude.contains(&o.id.as_str()))
            .flat_map(|o| self.colliding_links(&o.id))
            .collect()
    }

    pub fn world_bounds(&self) -> Aabb {
        let mut b: Option<Aabb> = None;
        for r in &self.rooms {
            let s = r.slab();
            b = Some(b.map_or(s, |x| x.union(&s)));
        }
        for o in self.live_objects() {
            if let Some(a) = self.object_aabb(&o.id) {
                b = Some(b.map_or(a, |x| x.union(&a)));
            }
        }
        b.unwrap_or_else(|| Aabb::from_center_half_extents(Vec3::zeros(), Vec3::repeat(1.0)))
    }

    pub fn world_diameter(&self) -> f64 {
        self.world_bounds().diagonal().max(1.0)
    }

    /// All hits on colliding links of live objects and (for rays with a
    /// downward component) on room floors.
    pub fn raycast(&self, ray: &Ray, exclude: &[&str]) -> Vec<SceneHit> {
        let links = self.all_colliding_links(exclude);
        let colliders: Vec<Collider<(&str, &str)>> = links
            .iter()
            .map(|l| Collider { key: (l.object, l.link.id.as_str()), geometry: &l.link.geometry, pose: l.pose })
            .collect();
        let mut hits: Vec<SceneHit> = raycast(&colliders, ray)
            .into_iter()
            .map(|h| SceneHit {
                target: HitTarget::Link { object: h.key.0.to_string(), link: h.key.1.to_string() },
                point: h.point,
                normal: h.normal,
                distance: h.distance,
            })
            .collect();
        if ray.direction.z < 0.0 {
            for r in &self.rooms {
                let t = (r.floor_z - ray.origin.z) / ray.direction.z;
                if t >= 0.0 && t <= ray.max_dist {
                    let p = ray.at(t);
                    if r.contains_xy(p.x, p.y) {
                        hits.push(SceneHit {
                            target: HitTarget::Floor { room: r.id.clone() },
                            point: Vec3::new(p.x, p.y, r.floor_z),
                            normal: Vec3::z(),
                            distance: t,
                        });
                    }
                }
            }
            hits.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        }
        hits
    }

    /// Object ids hit by a ray from the COM along +z (`up`) or −z, nearest first.
    pub fn vertical_axis_objs(&self, id: &str, up: bool) -> Vec<String> {
        let Some(o) = self.objects.get(id) else { return Vec::new() };
        let dir = if up { Vec3::z() } else { -Vec3::z() };
        let ray = Ray::new(o.com(), dir, self.world_diameter()).expect("unit ray");
        unique_objects(self.raycast(&ray, &[id]))
    }

    pub const HORIZONTAL_RAYS: usize = 16;

    /// Objects hit by radial rays in the horizontal plane through the COM.
    pub fn horizontal_plane_objs(&self, id: &str) -> Vec<String> {
        let Some(o) = self.objects.get(id) else { return Vec::new() };
        let reach = self.world_diameter();
        let mut out = BTreeSet::new();
        for k in 0..Self::HORIZONTAL_RAYS {
            let a = k as f64 * std::f64::consts::TAU / Self::HORIZONTAL_RAYS as f64;
            let ray = Ray::new(o.com(), Vec3::new(a.cos(), a.sin(), 0.0), reach).expect("unit ray");
            out.extend(unique_objects(self.raycast(&ray, &[id])));
        }
        out.into_iter().collect()
    }

    // -- contacts -----------------------------------------------------------

    fn press_force_on(&self, id: &str) -> f64 {
        self.agent
            .hands
            .iter()
            .filter(|h| h.grasp.as_ref().is_some_and(|g| g.object == id))
            .map(|h| h.press_force)
            .fold(0.0, f64::max)
    }

    /// Link pairs in contact, listed in both orders.
    pub fn contacts(&self) -> Vec<Contact> {
        let objs: Vec<(&str, Vec<PlacedLink>)> =
            self.live_objects().map(|o| (o.id.as_str(), self.colliding_links(&o.id))).collect();
        let mut out = Vec::new();
        for i in 0..objs.len() {
            for j in (i + 1)..objs.len() {
                let (a, la) = &objs[i];
                let (b, lb) = &objs[j];
                let force = self.press_force_on(a).max(self.press_force_on(b));
                for x in la {
                    for y in lb {
                        if overlap(&x.aabb, &y.aabb).in_contact() {
                            out.push(Contact {
                                object_a: a.to_string(),
                                link_a: x.link.id.clone(),
                                object_b: b.to_string(),
                                link_b: y.link.id.clone(),
                                force,
                            });
                            out.push(Contact {
                                object_a: b.to_string(),
                                link_a: y.link.id.clone(),
                                object_b: a.to_string(),
                                link_b: x.link.id.clone(),
                                force,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn in_contact(&self, a: &str, b: &str) -> bool {
        if a == b {
            return false;
        }
        let la = self.colliding_links(a);
        let lb = self.colliding_links(b);
        la.iter().any(|x| lb.iter().any(|y| overlap(&x.aabb, &y.aabb).in_contact()))
    }

    /// Object base touches the floor of `room` and its footprint center lies inside.
    pub fn on_floor(&self, id: &str, room: &Room) -> bool {
        let Some(a) = self.object_aabb(id) else { return false };
        let c = a.center();
        a.min.z <= room.floor_z + CONTACT_EPS && a.max.z >= room.floor_z - CONTACT_EPS && room.contains_xy(c.x, c.y)
    }

    /// Something below touches the object's base (or it rests on a floor).
    pub fn is_supported(&self, id: &str) -> bool {
        let Some(a) = self.object_aabb(id) else { return false };
        let c = a.center();
        if self.rooms.iter().any(|r| r.contains_xy(c.x, c.y) && a.min.z <= r.floor_z + CONTACT_EPS) {
            return true;
        }
        let own = self.colliding_links(id);
        let held_with: Vec<&str> = vec![id];
        self.all_colliding_links(&held_with).iter().any(|l| {
            let o = l.aabb.axis_overlaps(&a);
            o.x > CONTACT_EPS
                && o.y > CONTACT_EPS
                && l.aabb.max.z <= a.min.z + CONTACT_EPS
                && own.iter().any(|x| overlap(&x.aabb, &l.aabb).in_contact())
        })
    }

    // -- settle -------------------------------------------------------------

    /// Drops an object along −z onto the highest support under it.
    pub fn settle(&mut self, id: &str) -> Result<Pose, WorldError> {
        let o = self.live(id)?;
        if self.grasping_hands(id).next().is_some() {
            return Err(WorldError::Grasped(id.to_string()));
        }
        let pose = o.pose;
        let own = self.colliding_links(id);
        let Some(a) = self.object_aabb(id) else { return Ok(pose) };
        let others = self.all_colliding_links(&[id]);
        for x in &own {
            for y in &others {
                if let Overlap::Penetrating { .. } = overlap(&x.aabb, &y.aabb) {
                    return Err(WorldError::PenetrationUnresolvable(id.to_string()));
                }
            }
        }
        let mut target: Option<f64> = None;
        for l in &others {
            let ov = l.aabb.axis_overlaps(&a);
            if ov.x > CONTACT_EPS && ov.y > CONTACT_EPS && l.aabb.max.z <= a.min.z + CONTACT_EPS {
                target = Some(target.map_or(l.aabb.max.z, |t: f64| t.max(l.aabb.max.z)));
            }
        }
        let c = a.center();
        for r in &self.rooms {
            if r.contains_xy(c.x, c.y) && r.floor_z <= a.min.z + CONTACT_EPS {
                target = Some(target.map_or(r.floor_z, |t: f64| t.max(r.floor_z)));
            }
        }
        let Some(top) = target else {
            return Err(WorldError::NoSupportFound(id.to_string()));
        };
        let drop = a.min.z - top;
        if drop.abs() <= CONTACT_EPS {
            return Ok(pose);
        }
        let mut new_pose = pose;
        new_pose.position.z -= drop;
        self.live_mut(id)?.pose = new_pose;
        Ok(new_pose)
    }

    /// Settles the given objects bottom-up; returns the ones that failed.
    pub fn settle_all(&mut self, ids: &[String]) -> Vec<(String, WorldError)> {
        let mut order: Vec<(f64, String)> = ids
            .iter()
            .filter_map(|id| self.object_aabb(id).map(|a| (a.min.z, id.clone())))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut failed = Vec::new();
        for (_, id) in order {
            if let Err(e) = self.settle(&id) {
                failed.push((id, e));
            }
        }
        failed
    }

    /// Settles everything flagged as disturbed since the last call.
    pub fn settle_disturbed(&mut self) {
        let ids: Vec<String> = std::mem::take(&mut self.disturbed)
            .into_iter()
            .filter(|id| self.live(id).is_ok() && self.grasping_hands(id).next().is_none())
            .collect();
        self.settle_all(&ids);
    }

    pub fn mark_disturbed(&mut self, id: &str) {
        self.disturbed.insert(id.to_string());
    }

    // -- agent --------------------------------------------------------------

    pub fn hand(&self, i: usize) -> Result<&Hand, WorldError> {
        self.agent.hands.get(i).ok_or(WorldError::UnknownHand(i))
    }

    pub fn hand_geometry(&self) -> Geometry {
        Geometry::Box { half_extents: self.config.hand_half_extents }
    }

    pub fn hand_aabb(&self, i: usize) -> Aabb {
        world_aabb(&self.hand_geometry(), &self.agent.hands[i].pose)
    }

    /// Center of the palm face (the hand's local −z face).
    pub fn palm_center(&self, i: usize) -> Vec3 {
        self.agent.hands[i].pose.transform_point(&Vec3::new(0.0, 0.0, -self.config.hand_half_extents.z))
    }

    pub fn grasping_hands<'a>(&'a self, id: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.agent
            .hands
            .iter()
            .enumerate()
            .filter(move |(_, h)| h.grasp.as_ref().is_some_and(|g| g.object == id))
            .map(|(i, _)| i)
    }

    pub fn is_grasped(&self, id: &str) -> bool {
        self.grasping_hands(id).next().is_some()
    }

    /// The lowest-index hand holding `id` moves it.
    fn driven_object(&self, hand: usize) -> Option<String> {
        let g = self.agent.hands[hand].grasp.as_ref()?;
        (self.grasping_hands(&g.object).next() == Some(hand)).then(|| g.object.clone())
    }

    /// Objects crossed by the in-hand rays: 8 palm points laid out as a
    /// cross through the palm center, each cast toward its fingertip and back.
    pub fn objects_in_hand(&self, i: usize) -> Vec<String> {
        let hand = &self.agent.hands[i];
        let he = self.config.hand_half_extents;
        let len = self.config.finger_length;
        let mut found = BTreeSet::new();
        for f in [-0.75, -0.25, 0.25, 0.75] {
            for (fx, fy) in [(f, 0.0), (0.0, f)] {
                // Start just inside the palm so objects resting on it register.
                let back = 2.0 * CONTACT_EPS;
                let palm = hand.pose.transform_point(&Vec3::new(fx * he.x, fy * he.y, -he.z + back));
                let tip = hand.pose.transform_point(&Vec3::new(fx * he.x, fy * he.y, -he.z - len));
                for (from, to) in [(palm, tip), (tip, palm)] {
                    let ray = Ray::new(from, to - from, len + back).expect("finger segment");
                    found.extend(unique_objects(self.raycast(&ray, &[])));
                }
            }
        }
        found.into_iter().collect()
    }

    fn hand_touches(&self, i: usize, id: &str) -> bool {
        let h = self.hand_aabb(i);
        self.colliding_links(id).iter().any(|l| overlap(&h, &l.aabb).in_contact())
    }

    /// Sets the trigger and applies the assistive grasp edge rules.
    pub fn set_trigger(&mut self, i: usize, fraction: f64) -> Result<Option<GraspEvent>, WorldError> {
        self.hand(i)?;
        let fraction = fraction.clamp(0.0, 1.0);
        let threshold = self.config.grasp_threshold;
        let prev = self.agent.hands[i].trigger;
        self.agent.hands[i].trigger = fraction;
        if fraction < threshold {
            if let Some(g) = self.agent.hands[i].grasp.take() {
                if !self.is_grasped(&g.object) {
                    self.disturbed.insert(g.object.clone());
                }
                return Ok(Some(GraspEvent::Released { hand: i, object: g.object }));
            }
            return Ok(None);
        }
        if prev >= threshold || self.agent.hands[i].grasp.is_some() {
            return Ok(None);
        }
        let palm = self.palm_center(i);
        let candidate = self
            .objects_in_hand(i)
            .into_iter()
            .filter(|id| self.hand_touches(i, id))
            .filter_map(|id| self.objects.get(&id).map(|o| ((o.com() - palm).norm(), id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let Some((_, object)) = candidate else { return Ok(None) };
        let offset = self.agent.hands[i].pose.inverse().compose(&self.objects[&object].pose);
        self.agent.hands[i].grasp = Some(Grasp { object: object.clone(), offset });
        self.disturbed.remove(&object);
        Ok(Some(GraspEvent::Grasped { hand: i, object }))
    }

    /// Breaks grasps whose object drifted from the palm or is too heavy for
    /// the hands holding it.
    pub fn maintain_grasp(&mut self) -> Vec<GraspEvent> {
        let mut events = Vec::new();
        for i in 0..self.agent.hands.len() {
            let Some(g) = self.agent.hands[i].grasp.clone() else { continue };
            let Some(o) = self.objects.get(&g.object).filter(|o| !o.retired) else {
                self.agent.hands[i].grasp = None;
                continue;
            };
            if (o.com() - self.palm_center(i)).norm() > self.config.grasp_break_distance {
                self.agent.hands[i].grasp = None;
                events.push(GraspEvent::Broken { hand: i, object: g.object.clone(), reason: BreakReason::Distance });
                if !self.is_grasped(&g.object) {
                    self.disturbed.insert(g.object);
                }
            }
        }
        let held: BTreeSet<String> =
            self.agent.hands.iter().filter_map(|h| h.grasp.as_ref().map(|g| g.object.clone())).collect();
        for id in held {
            let hands: Vec<usize> = self.grasping_hands(&id).collect();
            let Ok(model) = self.model_of(&id) else { continue };
            let weight = model.mass * self.config.gravity;
            if weight > self.config.hand_force_budget * hands.len() as f64 && !self.is_supported(&id) {
                for i in hands {
                    self.agent.hands[i].grasp = None;
                    events.push(GraspEvent::Broken { hand: i, object: id.clone(), reason: BreakReason::ForceBudget });
                }
                self.disturbed.insert(id);
            }
        }
        events
    }

    /// Integrates one hand twist over `dt`, clamped at first contact.
    pub fn move_hand(&mut self, i: usize, linear: Vec3, angular: Vec3, dt: f64) -> Result<(), WorldError> {
        self.hand(i)?;
        let linear = clamp_norm(linear, self.config.max_linear_speed);
        let angular = clamp_norm(angular, self.config.max_angular_speed);
        let driven = self.driven_object(i);
        let held_by_hand: Vec<String> =
            self.agent.hands[i].grasp.iter().map(|g| g.object.clone()).collect();
        let mut exclude: Vec<&str> = held_by_hand.iter().map(|s| s.as_str()).collect();
        if let Some(d) = &driven {
            exclude.push(d);
        }
        let fixed: Vec<Aabb> = self
            .all_colliding_links(&exclude)
            .iter()
            .map(|l| l.aabb)
            .chain(self.rooms.iter().map(|r| r.slab()))
            .collect();
        let hand_geom = self.hand_geometry();
        let offset = self.agent.hands[i].grasp.as_ref().map(|g| g.offset);
        let moving_at = |w: &World, hand_pose: &Pose| -> Vec<Aabb> {
            let mut v = vec![world_aabb(&hand_geom, hand_pose)];
            if let (Some(d), Some(off)) = (&driven, offset) {
                let obj_pose = hand_pose.compose(&off);
                if let Some(o) = w.objects.get(d) {
                    if let Some(m) = w.model(&o.model) {
                        for (local, link) in m.link_poses(&o.joints).into_iter().zip(&m.links) {
                            if link.colliding {
                                v.push(world_aabb(&link.geometry, &obj_pose.compose(&local)));
                            }
                        }
                    }
                }
            }
            v
        };

        let start = self.agent.hands[i].pose;
        let before = moving_at(self, &start);
        let disp = linear * dt;
        let mut frac: f64 = 1.0;
        if disp.norm() > 0.0 {
            for m in &before {
                for f in &fixed {
                    if let Sweep::Contact(t) = sweep_aabb(m, &disp, f, CONTACT_EPS) {
                        frac = frac.min(t);
                    }
                }
            }
        }
        let mut pose = start;
        pose.position += disp * frac;

        let rot_vec = angular * dt;
        if rot_vec.norm() > 0.0 {
            let mut rotated = pose;
            rotated.orientation = Quat::from_scaled_axis(rot_vec) * pose.orientation;
            let after = moving_at(self, &rotated);
            let penetrates = after.iter().zip(&before).any(|(a, b)| {
                fixed.iter().any(|f| {
                    matches!(overlap(a, f), Overlap::Penetrating { .. })
                        && !matches!(overlap(b, f), Overlap::Penetrating { .. })
                })
            });
            if !penetrates {
                pose = rotated;
            }
        }

        if pose == start {
            return Ok(());
        }
        if let Some(d) = &driven {
            let old = self.object_aabb(d);
            if let Some(old) = old {
                let riders: Vec<String> = self
                    .live_objects()
                    .filter(|o| &o.id != d && !self.is_grasped(&o.id))
                    .filter(|o| self.object_aabb(&o.id).is_some_and(|a| overlap(&a, &old).in_contact()))
                    .map(|o| o.id.clone())
                    .collect();
                self.disturbed.extend(riders);
            }
            let obj_pose = pose.compose(&offset.expect("driven implies grasp"));
            self.objects.get_mut(d).expect("driven object exists").pose = obj_pose;
        }
        self.agent.hands[i].pose = pose;
        Ok(())
    }

    /// Translates base, head and hands (and anything held) to a new floor point.
    pub fn teleport_base(&mut self, x: f64, y: f64) -> Result<(), WorldError> {
        let room = self.room_at(x, y).ok_or(WorldError::TargetOutsideRooms(x, y))?.id.clone();
        let delta = Vec3::new(x - self.agent.base.x, y - self.agent.base.y, 0.0);
        self.agent.base += delta;
        self.agent.head.position += delta;
        for i in 0..self.agent.hands.len() {
            self.agent.hands[i].pose.position += delta;
            if let Some(d) = self.driven_object(i) {
                let p = self.agent.hands[i].pose.compose(&self.agent.hands[i].grasp.as_ref().unwrap().offset);
                self.objects.get_mut(&d).unwrap().pose = p;
            }
        }
        self.agent.base_room = Some(room);
        Ok(())
    }

    // -- droplets -----------------------------------------------------------

    pub fn droplets(&self) -> &[Droplet] {
        &self.droplets
    }

    pub fn droplet_ledger(&self) -> DropletLedger {
        self.ledger
    }

    pub fn droplet_counts(&self) -> DropletCounts {
        let mut c = DropletCounts {
            emitted: self.ledger.emitted,
            absorbed: self.ledger.absorbed,
            destroyed: self.ledger.destroyed,
            ..Default::default()
        };
        for d in &self.droplets {
            match d.status {
                DropletStatus::Free => c.free += 1,
                DropletStatus::ContainedIn(_) => c.contained += 1,
                DropletStatus::Absorbed(_) => c.absorbed += 1,
                DropletStatus::Destroyed => c.destroyed += 1,
            }
        }
        c
    }

    /// Adds a free droplet and counts it as emitted.
    pub fn spawn_droplet(&mut self, position: Vec3, velocity: Vec3) -> u64 {
        let id = self.fresh_id();
        self.droplets.push(Droplet { id, position, velocity, status: DropletStatus::Free });
        self.ledger.emitted += 1;
        id
    }

    // -- hashing ------------------------------------------------------------

    /// Exact binary encoding of the whole simulated state.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let derived_models = self
            .derived_models
            .iter()
            .map(|(k, m)| (k, serde_json::to_string(m).expect("model serializes")))
            .collect();
        let c = Canonical {
            config: &self.config,
            objects: &self.objects,
            derived_models,
            rooms: &self.rooms,
            droplets: &self.droplets,
            ledger: &self.ledger,
            agent: &self.agent,
            disturbed: &self.disturbed,
            next_id: self.next_id,
        };
        bincode::serialize(&c).expect("world encodes")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}

pub fn default_agent() -> Agent {
    Agent {
        hands: vec![
            Hand { pose: Pose::from_xyz(0.0, 0.2, 1.2), trigger: 0.0, grasp: None, press_force: 0.0 },
            Hand { pose: Pose::from_xyz(0.0, -0.2, 1.2), trigger: 0.0, grasp: None, press_force: 0.0 },
        ],
        head: Pose::from_xyz(-0.5, 0.0, 1.6),
        fov_half_angle: std::f64::consts::FRAC_PI_4,
        base: Vec3::new(-0.5, 0.0, 0.0),
        base_room: None,
    }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max && n > 0.0 {
        v * (max / n)
    } else {
        v
    }
}

fn unique_objects(hits: Vec<SceneHit>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for h in hits {
        if let Some(o) = h.target.object() {
            if !out.iter().any(|x| x == o) {
                out.push(o.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use approx::assert_relative_eq;

    #[test]
    fn new_objects_start_at_room_temperature() {
        let mut w = World::empty(tax(), 5.0);
        let a = w.add_object("fish_fillet", Pose::from_xyz(0.0, 0.0, 1.0)).unwrap();
        let b = w.add_object("fish_fillet", Pose::from_xyz(1.0, 0.0, 1.0)).unwrap();
        assert_ne!(a, b);
        let o = w.object(&a).unwrap();
        assert_eq!(o.temperature, 23.0);
        assert_eq!(o.max_temperature, 23.0);
        assert_eq!(o.wetness, 0);
        assert!(!o.toggled && !o.sliced);
        assert!(matches!(w.add_object("nope", Pose::identity()), Err(WorldError::UnknownModel(_))));
    }

    #[test]
    fn joints_start_at_lower_limit() {
        let mut w = World::empty(tax(), 5.0);
        let c = w.add_object("cabinet_small", Pose::from_xyz(0.0, 0.0, 0.3)).unwrap();
        let m = w.model_of(&c).unwrap().clone();
        for (name, j) in m.joints() {
            assert_eq!(w.object(&c).unwrap().joints[name], j.lower);
        }
    }

    #[test]
    fn settle_onto_table_top() {
        let mut w = World::empty(tax(), 5.0);
        let table = w.add_object("table_plain", Pose::identity()).unwrap();
        w.settle(&table).unwrap();
        let top = w.object_aabb(&table).unwrap().max.z;
        assert_relative_eq!(top, 0.7, epsilon = 1e-12);
        let b = w.add_object("box_small", Pose::from_xyz(0.0, 0.0, 1.7)).unwrap();
        w.settle(&b).unwrap();
        let base = w.object_aabb(&b).unwrap().min.z;
        assert!((base - 0.7).abs() <= CONTACT_EPS);
        let before = w.object(&b).unwrap().pose;
        assert_eq!(w.settle(&b).unwrap(), before);
        for l in w.colliding_links(&table) {
            for m in w.colliding_links(&b) {
                assert!(overlap(&l.aabb, &m.aabb).penetration() <= CONTACT_EPS);
            }
        }
        assert!(w.in_contact(&b, &table));
        assert!(w.contacts().iter().any(|c| c.object_a == b && c.object_b == table));
    }

    #[test]
    fn settle_to_floor_and_outside_world() {
        let mut w = World::empty(tax(), 1.0);
        let b = w.add_object("box_small", Pose::from_xyz(0.3, 0.2, 2.0)).unwrap();
        w.settle(&b).unwrap();
        assert!(w.object_aabb(&b).unwrap().min.z.abs() <= CONTACT_EPS);
        let far = w.add_object("box_small", Pose::from_xyz(9.0, 9.0, 2.0)).unwrap();
        assert_eq!(w.settle(&far), Err(WorldError::NoSupportFound(far.clone())));
    }

    #[test]
    fn vertical_and_horizontal_queries() {
        let mut w = World::empty(tax(), 5.0);
        let table = w.add_object("table_plain", Pose::identity()).unwrap();
        w.settle(&table).unwrap();
        let book = w.add_object("book_hardcover", Pose::from_xyz(0.0, 0.0, 1.5)).unwrap();
        w.settle(&book).unwrap();
        assert!(w.vertical_axis_objs(&book, false).contains(&table));
        assert!(!w.vertical_axis_objs(&book, true).contains(&table));
        let lone = w.add_object("box_small", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        w.settle(&lone).unwrap();
        assert!(w.vertical_axis_objs(&lone, true).is_empty());

        let a = w.add_object("box_small", Pose::from_xyz(-2.0, 0.0, 0.05)).unwrap();
        let b = w.add_object("box_small", Pose::from_xyz(-1.7, 0.0, 0.05)).unwrap();
        let high = w.add_object("box_small", Pose::from_xyz(-2.0, 0.3, 1.5)).unwrap();
        assert!(w.horizontal_plane_objs(&a).contains(&b));
        assert!(w.horizontal_plane_objs(&b).contains(&a));
        assert!(!w.horizontal_plane_objs(&a).contains(&high));
    }

    #[test]
    fn hand_moves_freely_and_stops_at_walls() {
        let mut w = World::empty(tax(), 5.0);
        let start = w.agent.hands[0].pose;
        w.move_hand(0, Vec3::zeros(), Vec3::zeros(), 1.0).unwrap();
        assert_eq!(w.agent.hands[0].pose, start);
        w.move_hand(0, Vec3::new(0.3, 0.0, 0.0), Vec3::zeros(), 1.0).unwrap();
        assert_relative_eq!(w.agent.hands[0].pose.position.x, start.position.x + 0.3, epsilon = 1e-12);

        let wall = w.add_object("box_large", Pose::from_xyz(1.0, 0.2, 1.2)).unwrap();
        let wall_min = w.object_aabb(&wall).unwrap().min.x;
        w.move_hand(0, Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), 1.0).unwrap();
        let hand_max = w.hand_aabb(0).max.x;
        assert_relative_eq!(hand_max, wall_min, epsilon = 1e-9);
    }

    #[test]
    fn grasp_cycle() {
        let (mut w, book) = book_on_table();
        hand_above(&mut w, 0, &book);
        assert!(matches!(w.set_trigger(0, 0.6).unwrap(), Some(GraspEvent::Grasped { ref object, .. }) if *object == book));
        let offset = w.agent.hands[0].grasp.as_ref().unwrap().offset;
        for _ in 0..10 {
            w.move_hand(0, Vec3::new(0.0, 0.0, 0.3), Vec3::zeros(), 1.0 / 120.0).unwrap();
            assert!(w.maintain_grasp().is_empty());
            let expect = w.agent.hands[0].pose.compose(&offset);
            let got = w.object(&book).unwrap().pose;
            assert!((expect.position - got.position).norm() < 1e-12);
        }
        assert!(matches!(w.set_trigger(0, 0.4).unwrap(), Some(GraspEvent::Released { .. })));
        w.settle_disturbed();
        assert!(w.object_aabb(&book).unwrap().min.z - 0.7 <= CONTACT_EPS);
    }

    #[test]
    fn trigger_in_empty_space_grasps_nothing() {
        let mut w = World::empty(tax(), 5.0);
        assert_eq!(w.set_trigger(0, 0.6).unwrap(), None);
        assert!(w.agent.hands[0].grasp.is_none());
    }

    #[test]
    fn displaced_object_breaks_grasp() {
        let (mut w, book) = book_on_table();
        hand_above(&mut w, 0, &book);
        w.set_trigger(0, 1.0).unwrap();
        let palm = w.palm_center(0);
        let mut p = w.object(&book).unwrap().pose;
        p.position = palm + Vec3::new(0.12, 0.0, 0.0);
        w.set_pose(&book, p).unwrap();
        let ev = w.maintain_grasp();
        assert!(matches!(ev[0], GraspEvent::Broken { reason: BreakReason::Distance, .. }));
    }

    #[test]
    fn teleport_rules() {
        let mut w = World::empty(tax(), 2.0);
        w.teleport_base(1.0, 1.0).unwrap();
        assert_eq!(w.agent.base_room.as_deref(), Some("room_1"));
        w.teleport_base(2.0, 0.0).unwrap();
        assert!(matches!(w.teleport_base(3.0, 0.0), Err(WorldError::TargetOutsideRooms(..))));
    }

    #[test]
    fn scene_round_trip_is_exact() {
        let (w, _) = book_on_table();
        let scene = w.to_scene();
        let text = scene.to_json();
        let back = World::from_scene(w.taxonomy().clone(), &SceneDoc::from_json(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(w.digest(), back.digest());
    }
}
