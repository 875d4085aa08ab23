//! Logical predicates over a world snapshot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Ray, Vec3};
use crate::taxonomy::AbilityFlag;
use crate::world::{HitTarget, World, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredicateName {
    InsideOf,
    OnTopOf,
    NextTo,
    InContactWith,
    Under,
    OnFloor,
    Open,
    Cooked,
    Burnt,
    Frozen,
    Soaked,
    Dusty,
    Stained,
    ToggledOn,
    Sliced,
    InFoVOfAgent,
    InHandOfAgent,
    InReachOfAgent,
    InSameRoomAsAgent,
}

impl PredicateName {
    pub const ALL: [PredicateName; 19] = [
        PredicateName::InsideOf,
        PredicateName::OnTopOf,
        PredicateName::NextTo,
        PredicateName::InContactWith,
        PredicateName::Under,
        PredicateName::OnFloor,
        PredicateName::Open,
        PredicateName::Cooked,
        PredicateName::Burnt,
        PredicateName::Frozen,
        PredicateName::Soaked,
        PredicateName::Dusty,
        PredicateName::Stained,
        PredicateName::ToggledOn,
        PredicateName::Sliced,
        PredicateName::InFoVOfAgent,
        PredicateName::InHandOfAgent,
        PredicateName::InReachOfAgent,
        PredicateName::InSameRoomAsAgent,
    ];

    pub fn arity(self) -> usize {
        use PredicateName::*;
        match self {
            InsideOf | OnTopOf | NextTo | InContactWith | Under | OnFloor => 2,
            _ => 1,
        }
    }

    pub fn is_kinematic(self) -> bool {
        self.arity() == 2
    }

    /// Ability an object needs for this predicate to be meaningful.
    pub fn required_ability(self) -> Option<AbilityFlag> {
        use PredicateName::*;
        Some(match self {
            Open => AbilityFlag::Openable,
            Cooked => AbilityFlag::Cookable,
            Burnt => AbilityFlag::Burnable,
            Frozen => AbilityFlag::Freezable,
            Soaked => AbilityFlag::Soakable,
            Dusty => AbilityFlag::Dustyable,
            Stained => AbilityFlag::Stainable,
            ToggledOn => AbilityFlag::Toggleable,
            Sliced => AbilityFlag::Sliceable,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use PredicateName::*;
        match self {
            InsideOf => "InsideOf",
            OnTopOf => "OnTopOf",
            NextTo => "NextTo",
            InContactWith => "InContactWith",
            Under => "Under",
            OnFloor => "OnFloor",
            Open => "Open",
            Cooked => "Cooked",
            Burnt => "Burnt",
            Frozen => "Frozen",
            Soaked => "Soaked",
            Dusty => "Dusty",
            Stained => "Stained",
            ToggledOn => "ToggledOn",
            Sliced => "Sliced",
            InFoVOfAgent => "InFoVOfAgent",
            InHandOfAgent => "InHandOfAgent",
            InReachOfAgent => "InReachOfAgent",
            InSameRoomAsAgent => "InSameRoomAsAgent",
        }
    }
}

impl fmt::Display for PredicateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredicateName {
    type Err = PredicateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredicateName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| PredicateError::Parse(format!("unknown predicate `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PredicateError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("{name} takes {expected} argument(s), got {got}")]
    ArityMismatch { name: PredicateName, expected: usize, got: usize },
    #[error("{predicate} needs {ability:?}, which `{object}` lacks")]
    AbilityMissing { predicate: PredicateName, object: String, ability: AbilityFlag },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateExpr {
    pub name: PredicateName,
    pub args: Vec<String>,
    pub target: bool,
}

impl PredicateExpr {
    pub fn new(name: PredicateName, args: &[&str], target: bool) -> Result<Self, PredicateError> {
        if args.len() != name.arity() {
            return Err(PredicateError::ArityMismatch { name, expected: name.arity(), got: args.len() });
        }
        Ok(Self { name, args: args.iter().map(|a| a.to_string()).collect(), target })
    }

    /// Parses `Name(a[, b])=true|false`. A missing `=...` means `true`.
    pub fn parse(text: &str) -> Result<Self, PredicateError> {
        let text = text.trim();
        let (call, target) = match text.rsplit_once('=') {
            Some((c, t)) => {
                let target = match t.trim() {
                    "true" => true,
                    "false" => false,
                    other => return Err(PredicateError::Parse(format!("bad truth value `{other}`"))),
                };
                (c.trim(), target)
            }
            None => (text, true),
        };
        let open = call.find('(').ok_or_else(|| PredicateError::Parse(format!("missing `(` in `{text}`")))?;
        if !call.ends_with(')') {
            return Err(PredicateError::Parse(format!("missing `)` in `{text}`")));
        }
        let name: PredicateName = call[..open].trim().parse()?;
        let inner = &call[open + 1..call.len() - 1];
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        if args.iter().any(|a| a.is_empty() || !a.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')) {
            return Err(PredicateError::Parse(format!("bad argument list in `{text}`")));
        }
        Self::new(name, &args, target)
    }

    /// The expression with the opposite target.
    pub fn negated(&self) -> Self {
        Self { target: !self.target, ..self.clone() }
    }
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})={}", self.name, self.args.join(", "), self.target)
    }
}

impl FromStr for PredicateExpr {
    type Err = PredicateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

fn live<'a>(world: &'a World, id: &str) -> Result<&'a crate::world::ObjectState, PredicateError> {
    world.live(id).map_err(|_| PredicateError::UnknownInstance(id.to_string()))
}

fn need(world: &World, name: PredicateName, id: &str) -> Result<(), PredicateError> {
    if let Some(ability) = name.required_ability() {
        let has = world.category_of(id).is_ok_and(|c| c.has(ability));
        if !has {
            return Err(PredicateError::AbilityMissing { predicate: name, object: id.to_string(), ability });
        }
    }
    Ok(())
}

/// Truth value of the predicate part of `expr` (the target is ignored).
pub fn evaluate(world: &World, expr: &PredicateExpr) -> Result<bool, PredicateError> {
    use PredicateName::*;
    if expr.args.len() != expr.name.arity() {
        return Err(PredicateError::ArityMismatch { name: expr.name, expected: expr.name.arity(), got: expr.args.len() });
    }
    let a = expr.args[0].as_str();
    // A retired whole answers only `Sliced`.
    if expr.name == Sliced {
        let o = world.object(a).ok_or_else(|| PredicateError::UnknownInstance(a.to_string()))?;
        need(world, Sliced, a)?;
        return Ok(o.sliced);
    }
    if expr.name == OnFloor {
        live(world, a)?;
        let room = world.room(&expr.args[1]).ok_or_else(|| PredicateError::UnknownInstance(expr.args[1].clone()))?;
        return Ok(world.on_floor(a, room));
    }
    let o = live(world, a)?;
    if expr.name.arity() == 2 {
        let b = expr.args[1].as_str();
        live(world, b)?;
        if a == b {
            return Ok(false);
        }
        return Ok(match expr.name {
            InsideOf => inside_of(world, a, b),
            OnTopOf => on_top_of(world, a, b),
            NextTo => next_to(world, a, b),
            InContactWith => world.in_contact(a, b),
            Under => under(world, a, b),
            _ => unreachable!("binary predicates handled above"),
        });
    }
    need(world, expr.name, a)?;
    let cat = world.category_of(a).map_err(|_| PredicateError::UnknownInstance(a.to_string()))?;
    Ok(match expr.name {
        Open => {
            let model = world.model_of(a).map_err(|_| PredicateError::UnknownInstance(a.to_string()))?;
            model.relevant_joints.iter().any(|j| {
                let q = o.joints.get(j).copied().unwrap_or(f64::NEG_INFINITY);
                model.joint(j).is_some_and(|jt| q > jt.open_threshold())
            })
        }
        Cooked => {
            let c = cat.t_cooked().unwrap_or(f64::INFINITY);
            let b = cat.t_burnt().unwrap_or(f64::INFINITY);
            o.max_temperature >= c && o.max_temperature < b
        }
        Burnt => o.max_temperature >= cat.t_burnt().unwrap_or(f64::INFINITY),
        Frozen => o.temperature <= cat.t_frozen(),
        Soaked => o.wetness as f64 >= cat.w_soaked(),
        Dusty => o.dust_level() > cat.d_dusty(),
        Stained => o.stain_level() > cat.s_stained(),
        ToggledOn => o.toggled,
        InFoVOfAgent => in_fov(world, a),
        InHandOfAgent => world.is_grasped(a),
        InReachOfAgent => (o.com() - world.agent.base).norm() <= world.config.reach_distance,
        InSameRoomAsAgent => {
            let Some(room) = world.agent.base_room.as_deref().and_then(|r| world.room(r)) else {
                return Ok(false);
            };
            let c = world.object_aabb(a).map(|b| b.center()).unwrap_or(o.com());
            room.contains_xy(c.x, c.y)
        }
        _ => unreachable!("unary predicates handled above"),
    })
}

/// Evaluates each expression independently.
pub fn evaluate_all(world: &World, exprs: &[PredicateExpr]) -> Vec<Result<bool, PredicateError>> {
    exprs.iter().map(|e| evaluate(world, e)).collect()
}

/// Whether the expression currently holds at its target value.
pub fn satisfied(world: &World, expr: &PredicateExpr) -> Result<bool, PredicateError> {
    evaluate(world, expr).map(|v| v == expr.target)
}

fn axis_hits(world: &World, a: &str, b: &str, origin: Vec3, dir: Vec3, len: f64) -> bool {
    let ray = Ray::new(origin, dir, len).expect("unit axis");
    world
        .raycast(&ray, &[a])
        .iter()
        .any(|h| matches!(&h.target, HitTarget::Link { object, .. } if object == b))
}

/// At least two of the three world axes through `a`'s COM meet `b` on both
/// sides. Objects in between are ignored.
pub fn inside_of(world: &World, a: &str, b: &str) -> bool {
    let Some(o) = world.object(a) else { return false };
    let c = o.com();
    let len = world.world_diameter().max(1.0) * 2.0;
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    axes.iter()
        .filter(|ax| axis_hits(world, a, b, c, **ax, len) && axis_hits(world, a, b, c, -**ax, len))
        .count()
        >= 2
}

pub fn on_top_of(world: &World, a: &str, b: &str) -> bool {
    let below = world.vertical_axis_objs(a, false);
    let above = world.vertical_axis_objs(a, true);
    below.iter().any(|x| x == b) && !above.iter().any(|x| x == b) && world.in_contact(a, b)
}

pub fn under(world: &World, a: &str, b: &str) -> bool {
    let below = world.vertical_axis_objs(a, false);
    let above = world.vertical_axis_objs(a, true);
    above.iter().any(|x| x == b) && !below.iter().any(|x| x == b)
}

pub fn next_to(world: &World, a: &str, b: &str) -> bool {
    let (Some(ba), Some(bb)) = (world.object_aabb(a), world.object_aabb(b)) else { return false };
    if !world.horizontal_plane_objs(a).iter().any(|x| x == b) {
        return false;
    }
    let factor = world.category_of(a).map(|c| c.next_to_factor()).unwrap_or(0.5);
    ba.distance(&bb) < factor * 0.5 * (ba.diagonal() + bb.diagonal())
}

/// Nine sample points (center and slightly shrunk corners) tested against
/// the head frustum and occlusion rays.
pub fn in_fov(world: &World, id: &str) -> bool {
    let Some(bb) = world.object_aabb(id) else { return false };
    let head = world.agent.head;
    let fwd = head.transform_vector(&Vec3::x()).normalize();
    let c = bb.center();
    let h = bb.half_extents() * 0.99;
    let mut points = vec![c];
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                points.push(c + Vec3::new(sx * h.x, sy * h.y, sz * h.z));
            }
        }
    }
    let cos_half = world.agent.fov_half_angle.cos();
    points.iter().any(|p| {
        let v = p - head.position;
        let d = v.norm();
        if d < 1e-9 {
            return true;
        }
        if v.dot(&fwd) / d < cos_half {
            return false;
        }
        let Ok(ray) = Ray::new(head.position, v, d - 1e-6) else { return false };
        world.raycast(&ray, &[id]).is_empty()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateEvent {
    pub expr: String,
    pub old: bool,
    pub new: bool,
    pub step: u64,
}

/// Remembers the previous truth vector and reports flips.
#[derive(Debug, Clone)]
pub struct PredicateTracker {
    exprs: Vec<PredicateExpr>,
    prev: Vec<Option<bool>>,
}

impl PredicateTracker {
    pub fn new(exprs: Vec<PredicateExpr>) -> Self {
        let n = exprs.len();
        Self { exprs, prev: vec![None; n] }
    }

    pub fn exprs(&self) -> &[PredicateExpr] {
        &self.exprs
    }

    pub fn values(&self) -> &[Option<bool>] {
        &self.prev
    }

    pub fn update(&mut self, world: &World, step: u64) -> (Vec<Result<bool, PredicateError>>, Vec<PredicateEvent>) {
        let values = evaluate_all(world, &self.exprs);
        let mut events = Vec::new();
        for (i, v) in values.iter().enumerate() {
            let now = v.as_ref().ok().copied();
            if let (Some(old), Some(new)) = (self.prev[i], now) {
                if old != new {
                    events.push(PredicateEvent { expr: self.exprs[i].to_string(), old, new, step });
                }
            }
            self.prev[i] = now;
        }
        (values, events)
    }
}

impl From<WorldError> for PredicateError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnknownInstance(id) => PredicateError::UnknownInstance(id),
            other => PredicateError::Parse(other.to_string()),
        }
    }
}
