//! Client-facing world views and the deltas between them.
//!
//! Floats travel as 16-digit hexadecimal IEEE-754 bit patterns so a client
//! folding deltas reproduces the server's snapshot digest bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use oikos_core::geometry::{Pose, Vec3};
use oikos_core::predicates::PredicateEvent;
use oikos_core::world::{DropletStatus, VisualTag, World};

/// An `f64` carried by its bit pattern.
#[derive(Clone, Copy)]
pub struct Hex(pub f64);

impl PartialEq for Hex {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl fmt::Debug for Hex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Hex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0.to_bits()))
    }
}

impl<'de> Deserialize<'de> for Hex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom(format!("expected 16 hex digits, got `{s}`")));
        }
        u64::from_str_radix(&s, 16).map(|b| Hex(f64::from_bits(b))).map_err(serde::de::Error::custom)
    }
}

fn hex3(v: &Vec3) -> [Hex; 3] {
    [Hex(v.x), Hex(v.y), Hex(v.z)]
}

/// Position then quaternion `w, x, y, z`.
fn hex_pose(p: &Pose) -> [Hex; 7] {
    let q = p.orientation.quaternion();
    [Hex(p.position.x), Hex(p.position.y), Hex(p.position.z), Hex(q.w), Hex(q.i), Hex(q.j), Hex(q.k)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub temperature: Hex,
    pub max_temperature: Hex,
    pub wetness: u32,
    pub toggled: bool,
    pub sliced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleView {
    pub id: u64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub model: String,
    pub category: String,
    pub pose: [Hex; 7],
    pub joints: BTreeMap<String, Hex>,
    pub state: StateView,
    pub visual_state: Vec<VisualTag>,
    /// Dust and stain particles, sorted by id.
    pub particles: Vec<ParticleView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletView {
    pub id: u64,
    pub position: [Hex; 3],
    pub status: DropletStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandView {
    pub pose: [Hex; 7],
    pub trigger: Hex,
    pub grasp: Option<String>,
    pub press_force: Hex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    /// Digest of the full kernel state, as logged.
    pub world_digest: String,
    pub objects: BTreeMap<String, ObjectView>,
    /// Sorted by id.
    pub droplets: Vec<DropletView>,
    pub hands: Vec<HandView>,
    pub base: [Hex; 3],
}

impl Snapshot {
    pub fn of(world: &World, step: u64) -> Self {
        let objects = world
            .live_objects()
            .map(|o| {
                let mut particles: Vec<ParticleView> =
                    o.dust.iter().chain(&o.stains).map(|p| ParticleView { id: p.id, active: p.active }).collect();
                particles.sort_by_key(|p| p.id);
                let view = ObjectView {
                    model: o.model.clone(),
                    category: o.category.clone(),
                    pose: hex_pose(&o.pose),
                    joints: o.joints.iter().map(|(k, v)| (k.clone(), Hex(*v))).collect(),
                    state: StateView {
                        temperature: Hex(o.temperature),
                        max_temperature: Hex(o.max_temperature),
                        wetness: o.wetness,
                        toggled: o.toggled,
                        sliced: o.sliced,
                    },
                    visual_state: world.visual_state(&o.id),
                    particles,
                };
                (o.id.clone(), view)
            })
            .collect();
        let mut droplets: Vec<DropletView> =
            world.droplets().iter().map(|d| DropletView { id: d.id, position: hex3(&d.position), status: d.status.clone() }).collect();
        droplets.sort_by_key(|d| d.id);
        let hands = world
            .agent
            .hands
            .iter()
            .map(|h| HandView {
                pose: hex_pose(&h.pose),
                trigger: Hex(h.trigger),
                grasp: h.grasp.as_ref().map(|g| g.object.clone()),
                press_force: Hex(h.press_force),
            })
            .collect();
        Snapshot { step, world_digest: world.digest_hex(), objects, droplets, hands, base: hex3(&world.agent.base) }
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("snapshots serialize")))
    }
}

/// Field-level changes to one object. Absent fields are unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectDelta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<[Hex; 7]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<BTreeMap<String, Hex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_state: Option<Vec<VisualTag>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deactivated: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub from_step: u64,
    pub step: u64,
    pub world_digest: String,
    #[serde(default)]
    pub added: BTreeMap<String, ObjectView>,
    #[serde(default)]
    pub removed: Vec<String>,
    #[serde(default)]
    pub changed: BTreeMap<String, ObjectDelta>,
    /// New or changed droplets.
    #[serde(default)]
    pub droplets: Vec<DropletView>,
    #[serde(default)]
    pub droplets_removed: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hands: Option<Vec<HandView>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<[Hex; 3]>,
    #[serde(default)]
    pub events: Vec<PredicateEvent>,
    /// Snapshot digest after applying this delta.
    pub digest: String,
}

impl Delta {
    /// True when nothing observable changed.
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.changed.is_empty()
            && self.droplets.is_empty()
            && self.droplets_removed.is_empty()
            && self.hands.is_none()
            && self.base.is_none()
            && self.events.is_empty()
    }
}

fn changed<T: PartialEq + Clone>(a: &T, b: &T) -> Option<T> {
    (a != b).then(|| b.clone())
}

fn object_delta(a: &ObjectView, b: &ObjectView) -> Option<ObjectDelta> {
    let active: BTreeMap<u64, bool> = a.particles.iter().map(|p| (p.id, p.active)).collect();
    let mut d = ObjectDelta {
        pose: changed(&a.pose, &b.pose),
        joints: changed(&a.joints, &b.joints),
        state: changed(&a.state, &b.state),
        visual_state: changed(&a.visual_state, &b.visual_state),
        ..Default::default()
    };
    let same_ids = a.particles.len() == b.particles.len() && a.particles.iter().zip(&b.particles).all(|(x, y)| x.id == y.id);
    if !same_ids || a.model != b.model || a.category != b.category {
        // Not expressible as a field update; the caller resends the object.
        return None;
    }
    for p in &b.particles {
        if active[&p.id] != p.active {
            if p.active { d.activated.push(p.id) } else { d.deactivated.push(p.id) }
        }
    }
    Some(d)
}

/// The delta taking `prev` to `cur`. `events` are attached as-is.
pub fn diff(prev: &Snapshot, cur: &Snapshot, events: Vec<PredicateEvent>) -> Delta {
    let mut delta = Delta {
        from_step: prev.step,
        step: cur.step,
        world_digest: cur.world_digest.clone(),
        added: BTreeMap::new(),
        removed: prev.objects.keys().filter(|k| !cur.objects.contains_key(*k)).cloned().collect(),
        changed: BTreeMap::new(),
        droplets: Vec::new(),
        droplets_removed: Vec::new(),
        hands: changed(&prev.hands, &cur.hands),
        base: changed(&prev.base, &cur.base),
        events,
        digest: cur.digest(),
    };
    for (id, view) in &cur.objects {
        match prev.objects.get(id) {
            None => {
                delta.added.insert(id.clone(), view.clone());
            }
            Some(old) if old != view => match object_delta(old, view) {
                Some(d) => {
                    delta.changed.insert(id.clone(), d);
                }
                None => {
                    delta.added.insert(id.clone(), view.clone());
                }
            },
            Some(_) => {}
        }
    }
    let old: BTreeMap<u64, &DropletView> = prev.droplets.iter().map(|d| (d.id, d)).collect();
    let now: BTreeSet<u64> = cur.droplets.iter().map(|d| d.id).collect();
    delta.droplets = cur.droplets.iter().filter(|d| old.get(&d.id) != Some(d)).cloned().collect();
    delta.droplets_removed = old.keys().filter(|id| !now.contains(id)).copied().collect();
    delta
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeltaError {
    #[error("delta starts at step {delta} but the snapshot is at step {snapshot}")]
    WrongBase { snapshot: u64, delta: u64 },
    #[error("delta changes unknown object `{0}`")]
    UnknownObject(String),
    #[error("delta changes unknown particle {0}")]
    UnknownParticle(u64),
    #[error("folded snapshot digest {got} differs from {expected}")]
    DigestMismatch { expected: String, got: String },
}

/// Applies a delta to the snapshot it was computed from and checks the
/// resulting digest.
pub fn apply(prev: &Snapshot, delta: &Delta) -> Result<Snapshot, DeltaError> {
    if prev.step != delta.from_step {
        return Err(DeltaError::WrongBase { snapshot: prev.step, delta: delta.from_step });
    }
    let mut s = prev.clone();
    s.step = delta.step;
    s.world_digest = delta.world_digest.clone();
    for id in &delta.removed {
        s.objects.remove(id);
    }
    for (id, view) in &delta.added {
        s.objects.insert(id.clone(), view.clone());
    }
    for (id, d) in &delta.changed {
        let o = s.objects.get_mut(id).ok_or_else(|| DeltaError::UnknownObject(id.clone()))?;
        if let Some(p) = d.pose {
            o.pose = p;
        }
        if let Some(j) = &d.joints {
            o.joints = j.clone();
        }
        if let Some(st) = &d.state {
            o.state = st.clone();
        }
        if let Some(v) = &d.visual_state {
            o.visual_state = v.clone();
        }
        for (ids, active) in [(&d.deactivated, false), (&d.activated, true)] {
            for pid in ids {
                let p = o.particles.iter_mut().find(|p| p.id == *pid).ok_or(DeltaError::UnknownParticle(*pid))?;
                p.active = active;
            }
        }
    }
    let mut droplets: BTreeMap<u64, DropletView> = s.droplets.drain(..).map(|d| (d.id, d)).collect();
    for id in &delta.droplets_removed {
        droplets.remove(id);
    }
    for d in &delta.droplets {
        droplets.insert(d.id, d.clone());
    }
    s.droplets = droplets.into_values().collect();
    if let Some(h) = &delta.hands {
        s.hands = h.clone();
    }
    if let Some(b) = delta.base {
        s.base = b;
    }
    let got = s.digest();
    if got != delta.digest {
        return Err(DeltaError::DigestMismatch { expected: delta.digest.clone(), got });
    }
    Ok(s)
}
