//! Category hierarchy, ability annotations and object models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{quat_from_wxyz, Geometry, Pose, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbilityFlag {
    Cookable,
    Burnable,
    Freezable,
    Soakable,
    Dustyable,
    Stainable,
    Toggleable,
    Sliceable,
    HeatSourceSink,
    DropletSource,
    DropletSink,
    CleaningTool,
    SlicingTool,
    Openable,
    Receptacle,
}

impl AbilityFlag {
    pub const ALL: [AbilityFlag; 15] = [
        AbilityFlag::Cookable,
        AbilityFlag::Burnable,
        AbilityFlag::Freezable,
        AbilityFlag::Soakable,
        AbilityFlag::Dustyable,
        AbilityFlag::Stainable,
        AbilityFlag::Toggleable,
        AbilityFlag::Sliceable,
        AbilityFlag::HeatSourceSink,
        AbilityFlag::DropletSource,
        AbilityFlag::DropletSink,
        AbilityFlag::CleaningTool,
        AbilityFlag::SlicingTool,
        AbilityFlag::Openable,
        AbilityFlag::Receptacle,
    ];
}

/// Threshold names accepted in category documents.
pub mod thresholds {
    pub const T_COOKED: &str = "T_cooked";
    pub const T_BURNT: &str = "T_burnt";
    pub const T_FROZEN: &str = "T_frozen";
    pub const W_SOAKED: &str = "w_soaked";
    pub const D_DUSTY: &str = "d_dusty";
    pub const S_STAINED: &str = "s_stained";
    pub const F_SLICED: &str = "F_sliced";
    pub const NEXT_TO_FACTOR: &str = "t_NextTo_factor";

    pub const ALL: [&str; 8] = [T_COOKED, T_BURNT, T_FROZEN, W_SOAKED, D_DUSTY, S_STAINED, F_SLICED, NEXT_TO_FACTOR];

    pub const DEFAULT_T_FROZEN: f64 = 0.0;
    pub const DEFAULT_W_SOAKED: f64 = 1.0;
    pub const DEFAULT_D_DUSTY: f64 = 0.5;
    pub const DEFAULT_S_STAINED: f64 = 0.5;
    pub const DEFAULT_F_SLICED: f64 = 10.0;
    pub const DEFAULT_NEXT_TO_FACTOR: f64 = 0.5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatMode {
    Proximity,
    Inside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatProfile {
    pub mode: HeatMode,
    pub source_temp: f64,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub requires_toggled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropletKind {
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropletProfile {
    pub kind: DropletKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_rate: Option<f64>,
    #[serde(default)]
    pub requires_toggled: bool,
}

/// A category as declared in the document (before inheritance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub abilities: BTreeSet<AbilityFlag>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_profile: Option<HeatProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droplet_profile: Option<DropletProfile>,
}

/// Inheritance-merged view of a category.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCategory {
    pub name: String,
    /// Chain from the category itself up to the root.
    pub lineage: Vec<String>,
    pub abilities: BTreeSet<AbilityFlag>,
    pub thresholds: BTreeMap<String, f64>,
    pub heat_profile: Option<HeatProfile>,
    pub droplet_profile: Option<DropletProfile>,
}

impl ResolvedCategory {
    pub fn has(&self, ability: AbilityFlag) -> bool {
        self.abilities.contains(&ability)
    }

    pub fn threshold(&self, name: &str) -> Option<f64> {
        self.thresholds.get(name).copied()
    }

    fn threshold_or(&self, name: &str, default: f64) -> f64 {
        self.threshold(name).unwrap_or(default)
    }

    pub fn t_cooked(&self) -> Option<f64> {
        self.threshold(thresholds::T_COOKED)
    }

    pub fn t_burnt(&self) -> Option<f64> {
        self.threshold(thresholds::T_BURNT)
    }

    pub fn t_frozen(&self) -> f64 {
        self.threshold_or(thresholds::T_FROZEN, thresholds::DEFAULT_T_FROZEN)
    }

    pub fn w_soaked(&self) -> f64 {
        self.threshold_or(thresholds::W_SOAKED, thresholds::DEFAULT_W_SOAKED)
    }

    pub fn d_dusty(&self) -> f64 {
        self.threshold_or(thresholds::D_DUSTY, thresholds::DEFAULT_D_DUSTY)
    }

    pub fn s_stained(&self) -> f64 {
        self.threshold_or(thresholds::S_STAINED, thresholds::DEFAULT_S_STAINED)
    }

    pub fn f_sliced(&self) -> f64 {
        self.threshold_or(thresholds::F_SLICED, thresholds::DEFAULT_F_SLICED)
    }

    pub fn next_to_factor(&self) -> f64 {
        self.threshold_or(thresholds::NEXT_TO_FACTOR, thresholds::DEFAULT_NEXT_TO_FACTOR)
    }

    /// Whether the object carries a temperature state.
    pub fn has_temperature(&self) -> bool {
        self.has(AbilityFlag::Cookable) || self.has(AbilityFlag::Burnable) || self.has(AbilityFlag::Freezable)
    }

    /// Re-expresses the resolved spec as a parentless declaration.
    pub fn as_root_spec(&self) -> CategorySpec {
        CategorySpec {
            name: self.name.clone(),
            parent: None,
            abilities: self.abilities.clone(),
            thresholds: self.thresholds.clone(),
            heat_profile: self.heat_profile.clone(),
            droplet_profile: self.droplet_profile.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Vec3,
    pub lower: f64,
    pub upper: f64,
    pub parent: String,
    /// Point on the rotation axis, in the link's local frame.
    #[serde(default = "zero_vec")]
    pub anchor: Vec3,
}

impl Joint {
    /// Transform contributed by the joint at position `q`.
    pub fn transform(&self, q: f64) -> Pose {
        let axis = nalgebra::Unit::new_normalize(self.axis);
        match self.kind {
            JointKind::Revolute => {
                let rot = Quat::from_axis_angle(&axis, q);
                Pose::new(self.anchor - rot * self.anchor, rot)
            }
            JointKind::Prismatic => Pose::from_position(axis.into_inner() * q),
        }
    }

    /// Opening threshold: 5% of the range above the lower limit.
    pub fn open_threshold(&self) -> f64 {
        self.lower + 0.05 * (self.upper - self.lower)
    }
}

fn zero_vec() -> Vec3 {
    Vec3::zeros()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: String,
    pub geometry: Geometry,
    #[serde(default)]
    pub local_pose: Pose,
    #[serde(default = "default_true")]
    pub colliding: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Joint>,
}

impl Link {
    pub fn fixed(id: &str, geometry: Geometry, local_pose: Pose) -> Self {
        Self { id: id.to_string(), geometry, local_pose, colliding: true, joint: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VirtualLinkKind {
    HeatSourceSinkLink,
    TogglingLink,
    SlicingLink,
    CleaningToolLink,
    DropletSourceLink,
    DropletSinkLink,
    /// Interior volume that captures droplets.
    ReceptacleLink,
}

impl VirtualLinkKind {
    pub fn required_by(ability: AbilityFlag) -> Option<VirtualLinkKind> {
        Some(match ability {
            AbilityFlag::Toggleable => VirtualLinkKind::TogglingLink,
            AbilityFlag::SlicingTool => VirtualLinkKind::SlicingLink,
            AbilityFlag::CleaningTool => VirtualLinkKind::CleaningToolLink,
            AbilityFlag::HeatSourceSink => VirtualLinkKind::HeatSourceSinkLink,
            AbilityFlag::DropletSource => VirtualLinkKind::DropletSourceLink,
            AbilityFlag::DropletSink => VirtualLinkKind::DropletSinkLink,
            AbilityFlag::Receptacle => VirtualLinkKind::ReceptacleLink,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectModel {
    pub id: String,
    pub category: String,
    pub links: Vec<Link>,
    pub mass: f64,
    #[serde(default, with = "quat_list")]
    pub stable_orientations: Vec<Quat>,
    #[serde(default)]
    pub relevant_joints: Vec<String>,
    #[serde(default)]
    pub virtual_links: BTreeMap<VirtualLinkKind, Link>,
}

mod quat_list {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &[Quat], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 4]> = v.iter().map(crate::geometry::quat_to_wxyz).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Quat>, D::Error> {
        let raw: Vec<[f64; 4]> = Vec::deserialize(d)?;
        raw.into_iter().map(|q| quat_from_wxyz(q).map_err(serde::de::Error::custom)).collect()
    }
}

impl ObjectModel {
    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn joint(&self, id: &str) -> Option<&Joint> {
        self.link(id).and_then(|l| l.joint.as_ref())
    }

    pub fn joints(&self) -> impl Iterator<Item = (&str, &Joint)> {
        self.links.iter().filter_map(|l| l.joint.as_ref().map(|j| (l.id.as_str(), j)))
    }

    /// Poses of all links in the object frame for the given joint positions.
    /// Links appear in declaration order, parents before children.
    pub fn link_poses(&self, joints: &BTreeMap<String, f64>) -> Vec<Pose> {
        let mut out: Vec<Pose> = Vec::with_capacity(self.links.len());
        for link in &self.links {
            let pose = match &link.joint {
                None => link.local_pose,
                Some(j) => {
                    let parent = self
                        .links
                        .iter()
                        .position(|l| l.id == j.parent)
                        .map(|i| out[i])
                        .unwrap_or_default();
                    let q = joints.get(&link.id).copied().unwrap_or(j.lower);
                    parent.compose(&link.local_pose).compose(&j.transform(q))
                }
            };
            out.push(pose);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaxonomyError {
    #[error("malformed taxonomy document: {0}")]
    Parse(String),
    #[error("cycle in category hierarchy through `{0}`")]
    CycleInHierarchy(String),
    #[error("category `{category}` names missing parent `{parent}`")]
    MissingParent { category: String, parent: String },
    #[error("category `{0}` declared more than once")]
    DuplicateCategory(String),
    #[error("model `{0}` declared more than once")]
    DuplicateModel(String),
    #[error("category `{category}` lacks required `{what}`")]
    MissingRequiredThreshold { category: String, what: String },
    #[error("model `{model}` lacks virtual link {kind:?}")]
    MissingVirtualLink { model: String, kind: VirtualLinkKind },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("hierarchy must have exactly one root, found {0:?}")]
    RootCount(Vec<String>),
    #[error("category `{category}`: {reason}")]
    InvalidCategory { category: String, reason: String },
    #[error("model `{model}`: {reason}")]
    InvalidModel { model: String, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyDoc {
    categories: Vec<CategorySpec>,
    #[serde(default)]
    models: Vec<ObjectModel>,
}

/// Validated, immutable taxonomy.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    declared: BTreeMap<String, CategorySpec>,
    resolved: BTreeMap<String, ResolvedCategory>,
    models: BTreeMap<String, ObjectModel>,
    digest: [u8; 32],
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.resolved == other.resolved && self.models == other.models
    }
}

pub fn load_taxonomy(document: &[u8]) -> Result<Taxonomy, TaxonomyError> {
    Taxonomy::load(document)
}

impl Taxonomy {
    pub fn load(document: &[u8]) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = serde_json::from_slice(document).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::build(doc.categories, doc.models)
    }

    pub fn from_parts(categories: Vec<CategorySpec>, models: Vec<ObjectModel>) -> Result<Self, TaxonomyError> {
        Self::build(categories, models)
    }

    /// The bundled household taxonomy.
    pub fn builtin() -> Self {
        Self::load(crate::assets::TAXONOMY.as_bytes()).expect("bundled taxonomy is valid")
    }

    fn build(categories: Vec<CategorySpec>, models: Vec<ObjectModel>) -> Result<Self, TaxonomyError> {
        let mut declared = BTreeMap::new();
        for c in categories {
            if declared.contains_key(&c.name) {
                return Err(TaxonomyError::DuplicateCategory(c.name));
            }
            declared.insert(c.name.clone(), c);
        }
        for c in declared.values() {
            if let Some(p) = &c.parent {
                if !declared.contains_key(p) {
                    return Err(TaxonomyError::MissingParent { category: c.name.clone(), parent: p.clone() });
                }
            }
        }
        for name in declared.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = name.as_str();
            loop {
                if !seen.insert(cur) {
                    return Err(TaxonomyError::CycleInHierarchy(cur.to_string()));
                }
                match &declared[cur].parent {
                    Some(p) => cur = p,
                    None => break,
                }
            }
        }
        let roots: Vec<String> = declared.values().filter(|c| c.parent.is_none()).map(|c| c.name.clone()).collect();
        if roots.len() != 1 {
            return Err(TaxonomyError::RootCount(roots));
        }

        let mut resolved = BTreeMap::new();
        for name in declared.keys() {
            let r = resolve_declared(&declared, name);
            validate_category(&r)?;
            resolved.insert(name.clone(), r);
        }

        let mut model_map = BTreeMap::new();
        for m in models {
            let cat = resolved
                .get(&m.category)
                .ok_or_else(|| TaxonomyError::UnknownCategory(m.category.clone()))?;
            validate_model(&m, cat)?;
            if model_map.contains_key(&m.id) {
                return Err(TaxonomyError::DuplicateModel(m.id));
            }
            model_map.insert(m.id.clone(), m);
        }

        let canonical = serde_json::to_vec(&TaxonomyDoc {
            categories: declared.values().cloned().collect(),
            models: model_map.values().cloned().collect(),
        })
        .expect("taxonomy serializes");
        let digest = Sha256::digest(&canonical).into();
        Ok(Self { declared, resolved, models: model_map, digest })
    }

    pub fn resolve_abilities(&self, category: &str) -> Result<&ResolvedCategory, TaxonomyError> {
        self.resolved.get(category).ok_or_else(|| TaxonomyError::UnknownCategory(category.to_string()))
    }

    pub fn declared(&self, category: &str) -> Option<&CategorySpec> {
        self.declared.get(category)
    }

    pub fn categories(&self) -> impl Iterator<Item = &ResolvedCategory> {
        self.resolved.values()
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.resolved.contains_key(category)
    }

    pub fn model(&self, id: &str) -> Option<&ObjectModel> {
        self.models.get(id)
    }

    pub fn models(&self) -> impl Iterator<Item = &ObjectModel> {
        self.models.values()
    }

    /// True when `category` equals `ancestor` or descends from it.
    pub fn is_a(&self, category: &str, ancestor: &str) -> bool {
        self.resolved.get(category).is_some_and(|r| r.lineage.iter().any(|c| c == ancestor))
    }

    /// Models whose category is `category` or one of its descendants, by id.
    pub fn models_of(&self, category: &str) -> Vec<&ObjectModel> {
        self.models.values().filter(|m| self.is_a(&m.category, category)).collect()
    }

    /// SHA-256 of the canonical re-serialization.
    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

fn resolve_declared(declared: &BTreeMap<String, CategorySpec>, name: &str) -> ResolvedCategory {
    let mut lineage = Vec::new();
    let mut cur = Some(name);
    while let Some(c) = cur {
        lineage.push(c.to_string());
        cur = declared[c].parent.as_deref();
    }
    let mut abilities = BTreeSet::new();
    let mut thresholds = BTreeMap::new();
    let mut heat_profile = None;
    let mut droplet_profile = None;
    // Root first so nearer ancestors overwrite.
    for c in lineage.iter().rev() {
        let spec = &declared[c];
        abilities.extend(spec.abilities.iter().copied());
        for (k, v) in &spec.thresholds {
            thresholds.insert(k.clone(), *v);
        }
        if spec.heat_profile.is_some() {
            heat_profile = spec.heat_profile.clone();
        }
        if spec.droplet_profile.is_some() {
            droplet_profile = spec.droplet_profile.clone();
        }
    }
    ResolvedCategory { name: name.to_string(), lineage, abilities, thresholds, heat_profile, droplet_profile }
}

fn invalid(category: &str, reason: impl Into<String>) -> TaxonomyError {
    TaxonomyError::InvalidCategory { category: category.to_string(), reason: reason.into() }
}

fn missing(category: &str, what: &str) -> TaxonomyError {
    TaxonomyError::MissingRequiredThreshold { category: category.to_string(), what: what.to_string() }
}

fn validate_category(r: &ResolvedCategory) -> Result<(), TaxonomyError> {
    let name = r.name.as_str();
    for (k, v) in &r.thresholds {
        if !thresholds::ALL.contains(&k.as_str()) {
            return Err(invalid(name, format!("unknown threshold `{k}`")));
        }
        if !v.is_finite() {
            return Err(invalid(name, format!("threshold `{k}` is not finite")));
        }
    }
    if r.has(AbilityFlag::Cookable) && r.t_cooked().is_none() {
        return Err(missing(name, thresholds::T_COOKED));
    }
    if r.has(AbilityFlag::Burnable) && r.t_burnt().is_none() {
        return Err(missing(name, thresholds::T_BURNT));
    }
    if let (Some(c), Some(b)) = (r.t_cooked(), r.t_burnt()) {
        if c >= b {
            return Err(invalid(name, format!("T_cooked {c} must be below T_burnt {b}")));
        }
    }
    for key in [thresholds::D_DUSTY, thresholds::S_STAINED] {
        if let Some(v) = r.threshold(key) {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("`{key}` must lie in [0,1]")));
            }
        }
    }
    for key in [thresholds::W_SOAKED, thresholds::F_SLICED, thresholds::NEXT_TO_FACTOR] {
        if let Some(v) = r.threshold(key) {
            if v <= 0.0 {
                return Err(invalid(name, format!("`{key}` must be positive")));
            }
        }
    }

    match (&r.heat_profile, r.has(AbilityFlag::HeatSourceSink)) {
        (None, true) => return Err(missing(name, "heat_profile")),
        (Some(_), false) => return Err(invalid(name, "heat_profile without HeatSourceSink ability")),
        (Some(h), true) => {
            if !h.source_temp.is_finite() || !(h.rate > 0.0) || !h.rate.is_finite() {
                return Err(invalid(name, "heat profile needs finite source_temp and positive rate"));
            }
            match (h.mode, h.radius) {
                (HeatMode::Proximity, Some(rad)) if rad > 0.0 && rad.is_finite() => {}
                (HeatMode::Proximity, _) => return Err(missing(name, "heat_profile.radius")),
                (HeatMode::Inside, None) => {}
                (HeatMode::Inside, Some(_)) => return Err(invalid(name, "radius is only valid in Proximity mode")),
            }
            if h.requires_toggled && !r.has(AbilityFlag::Toggleable) {
                return Err(invalid(name, "requires_toggled without Toggleable ability"));
            }
        }
        (None, false) => {}
    }

    let src = r.has(AbilityFlag::DropletSource);
    let sink = r.has(AbilityFlag::DropletSink);
    if src && sink {
        return Err(invalid(name, "a category cannot be both DropletSource and DropletSink"));
    }
    match (&r.droplet_profile, src || sink) {
        (None, true) => return Err(missing(name, "droplet_profile")),
        (Some(_), false) => return Err(invalid(name, "droplet_profile without droplet ability")),
        (Some(p), true) => {
            let expected = if src { DropletKind::Source } else { DropletKind::Sink };
            if p.kind != expected {
                return Err(invalid(name, format!("droplet_profile kind {:?} does not match abilities", p.kind)));
            }
            match (p.kind, p.emit_rate) {
                (DropletKind::Source, Some(rate)) if rate > 0.0 && rate.is_finite() => {}
                (DropletKind::Source, _) => return Err(missing(name, "droplet_profile.emit_rate")),
                (DropletKind::Sink, None) => {}
                (DropletKind::Sink, Some(_)) => return Err(invalid(name, "emit_rate is only valid for sources")),
            }
            if p.requires_toggled && !r.has(AbilityFlag::Toggleable) {
                return Err(invalid(name, "requires_toggled without Toggleable ability"));
            }
        }
        (None, false) => {}
    }
    Ok(())
}

fn validate_model(m: &ObjectModel, cat: &ResolvedCategory) -> Result<(), TaxonomyError> {
    let bad = |reason: String| TaxonomyError::InvalidModel { model: m.id.clone(), reason };
    if !(m.mass > 0.0) || !m.mass.is_finite() {
        return Err(bad(format!("mass {} must be positive", m.mass)));
    }
    if m.links.is_empty() {
        return Err(bad("no links".into()));
    }
    let roots = m.links.iter().filter(|l| l.joint.is_none()).count();
    if roots == 0 {
        return Err(bad("every link is jointed; at least one must be fixed to the body".into()));
    }
    let mut seen = BTreeSet::new();
    for link in &m.links {
        if !seen.insert(link.id.as_str()) {
            return Err(bad(format!("duplicate link `{}`", link.id)));
        }
        if !link.local_pose.is_finite() {
            return Err(bad(format!("link `{}` has a non-finite pose", link.id)));
        }
        if let Some(j) = &link.joint {
            if !(j.lower < j.upper) {
                return Err(bad(format!("joint `{}` needs lower < upper", link.id)));
            }
            if j.axis.norm() < 1e-9 || !j.axis.iter().all(|v| v.is_finite()) {
                return Err(bad(format!("joint `{}` has a degenerate axis", link.id)));
            }
            // Parents must be declared earlier so poses resolve in one pass.
            if !seen.contains(j.parent.as_str()) || j.parent == link.id {
                return Err(bad(format!("joint `{}` parent `{}` must precede it", link.id, j.parent)));
            }
        }
    }
    for j in &m.relevant_joints {
        if m.joint(j).is_none() {
            return Err(bad(format!("relevant joint `{j}` is not a jointed link")));
        }
    }
    for ability in &cat.abilities {
        if let Some(kind) = VirtualLinkKind::required_by(*ability) {
            if !m.virtual_links.contains_key(&kind) {
                return Err(TaxonomyError::MissingVirtualLink { model: m.id.clone(), kind });
            }
        }
    }
    if cat.has(AbilityFlag::Openable) && m.relevant_joints.is_empty() {
        return Err(bad("Openable category needs relevant_joints".into()));
    }
    for (kind, link) in &m.virtual_links {
        if link.joint.is_some() {
            return Err(bad(format!("virtual link {kind:?} cannot carry a joint")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn doc(categories: serde_json::Value, models: serde_json::Value) -> Vec<u8> {
        serde_json::to_vec(&json!({"categories": categories, "models": models})).unwrap()
    }

    /// Independent oracle: walk the parent chain and merge maps child-first.
    fn oracle_thresholds(cats: &[(&str, Option<&str>, &[(&str, f64)])], name: &str) -> BTreeMap<String, f64> {
        let find = |n: &str| cats.iter().find(|c| c.0 == n).unwrap();
        let mut out = BTreeMap::new();
        let mut cur = Some(name);
        while let Some(n) = cur {
            let c = find(n);
            for (k, v) in c.2 {
                out.entry(k.to_string()).or_insert(*v);
            }
            cur = c.1;
        }
        out
    }

    #[test]
    fn single_root_no_abilities() {
        let t = load_taxonomy(&doc(json!([{"name": "thing"}]), json!([]))).unwrap();
        let r = t.resolve_abilities("thing").unwrap();
        assert!(r.abilities.is_empty());
        assert_eq!(t.categories().count(), 1);
    }

    #[test]
    fn child_override_wins() {
        let t = load_taxonomy(&doc(
            json!([
                {"name": "thing"},
                {"name": "food", "parent": "thing", "abilities": ["Cookable"], "thresholds": {"T_cooked": 70.0}},
                {"name": "fish", "parent": "food", "thresholds": {"T_cooked": 63.0}}
            ]),
            json!([]),
        ))
        .unwrap();
        let fish = t.resolve_abilities("fish").unwrap();
        assert_eq!(fish.t_cooked(), Some(63.0));
        assert!(fish.has(AbilityFlag::Cookable));
        let oracle = oracle_thresholds(
            &[("thing", None, &[]), ("food", Some("thing"), &[("T_cooked", 70.0)]), ("fish", Some("food"), &[("T_cooked", 63.0)])],
            "fish",
        );
        assert_eq!(fish.thresholds, oracle);
    }

    #[test]
    fn leaf_inherits_soakable() {
        let t = load_taxonomy(&doc(
            json!([{"name": "thing", "abilities": ["Soakable"]}, {"name": "towel", "parent": "thing"}]),
            json!([]),
        ))
        .unwrap();
        assert_eq!(t.resolve_abilities("towel").unwrap().abilities, BTreeSet::from([AbilityFlag::Soakable]));
    }

    #[test]
    fn three_level_nearest_ancestor() {
        let cats: &[(&str, Option<&str>, &[(&str, f64)])] = &[
            ("a", None, &[("F_sliced", 5.0), ("w_soaked", 2.0)]),
            ("b", Some("a"), &[("F_sliced", 7.0)]),
            ("c", Some("b"), &[]),
        ];
        let t = load_taxonomy(&doc(
            json!([
                {"name": "c", "parent": "b"},
                {"name": "a", "thresholds": {"F_sliced": 5.0, "w_soaked": 2.0}},
                {"name": "b", "parent": "a", "thresholds": {"F_sliced": 7.0}}
            ]),
            json!([]),
        ))
        .unwrap();
        assert_eq!(t.resolve_abilities("c").unwrap().thresholds, oracle_thresholds(cats, "c"));
        assert_eq!(t.resolve_abilities("c").unwrap().f_sliced(), 7.0);
    }

    #[test]
    fn heat_source_without_profile_is_rejected() {
        let err = load_taxonomy(&doc(
            json!([{"name": "thing"}, {"name": "stove", "parent": "thing", "abilities": ["HeatSourceSink"]}]),
            json!([]),
        ))
        .unwrap_err();
        assert!(matches!(err, TaxonomyError::MissingRequiredThreshold { ref category, .. } if category == "stove"));
    }

    #[test]
    fn structural_errors() {
        let cyc = load_taxonomy(&doc(
            json!([{"name": "r"}, {"name": "a", "parent": "b"}, {"name": "b", "parent": "a"}]),
            json!([]),
        ))
        .unwrap_err();
        assert!(matches!(cyc, TaxonomyError::CycleInHierarchy(_)));
        let missing = load_taxonomy(&doc(json!([{"name": "a", "parent": "ghost"}]), json!([]))).unwrap_err();
        assert_eq!(missing, TaxonomyError::MissingParent { category: "a".into(), parent: "ghost".into() });
        let dup = load_taxonomy(&doc(json!([{"name": "a"}, {"name": "a"}]), json!([]))).unwrap_err();
        assert_eq!(dup, TaxonomyError::DuplicateCategory("a".into()));
        let cooked = load_taxonomy(&doc(json!([{"name": "a", "abilities": ["Cookable"]}]), json!([]))).unwrap_err();
        assert!(matches!(cooked, TaxonomyError::MissingRequiredThreshold { .. }));
        let order = load_taxonomy(&doc(
            json!([{"name": "a", "abilities": ["Cookable", "Burnable"], "thresholds": {"T_cooked": 200.0, "T_burnt": 70.0}}]),
            json!([]),
        ))
        .unwrap_err();
        assert!(matches!(order, TaxonomyError::InvalidCategory { .. }));
        assert!(matches!(
            Taxonomy::builtin().resolve_abilities("unicorn"),
            Err(TaxonomyError::UnknownCategory(_))
        ));
    }

    #[test]
    fn toggleable_model_needs_toggling_link() {
        let err = load_taxonomy(&doc(
            json!([{"name": "lamp", "abilities": ["Toggleable"]}]),
            json!([{"id": "lamp_a", "category": "lamp", "mass": 1.0,
                    "links": [{"id": "base", "geometry": {"type": "Box", "half_extents": [0.1, 0.1, 0.1]}}]}]),
        ))
        .unwrap_err();
        assert_eq!(err, TaxonomyError::MissingVirtualLink { model: "lamp_a".into(), kind: VirtualLinkKind::TogglingLink });
    }

    #[test]
    fn builtin_is_valid_and_every_model_has_its_links() {
        let t = Taxonomy::builtin();
        for m in t.models() {
            let cat = t.resolve_abilities(&m.category).unwrap();
            for a in &cat.abilities {
                if let Some(kind) = VirtualLinkKind::required_by(*a) {
                    assert!(m.virtual_links.contains_key(&kind), "{} lacks {kind:?}", m.id);
                }
            }
        }
        assert_eq!(t.resolve_abilities("meat").unwrap().t_cooked(), Some(70.0));
        assert_eq!(t.resolve_abilities("meat").unwrap().t_burnt(), Some(200.0));
    }

    #[test]
    fn revolute_joint_rotates_about_anchor() {
        let j = Joint {
            kind: JointKind::Revolute,
            axis: Vec3::z(),
            lower: 0.0,
            upper: 1.5,
            parent: "body".into(),
            anchor: Vec3::new(-0.2, 0.0, 0.0),
        };
        let p = j.transform(std::f64::consts::FRAC_PI_2);
        let moved = p.transform_point(&Vec3::new(0.2, 0.0, 0.0));
        assert!((moved - Vec3::new(-0.2, 0.4, 0.0)).norm() < 1e-12);
        assert!((p.transform_point(&j.anchor) - j.anchor).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn declaration_order_is_irrelevant(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut cats = vec![
                json!({"name": "thing"}),
                json!({"name": "food", "parent": "thing", "abilities": ["Cookable", "Burnable"], "thresholds": {"T_cooked": 70.0, "T_burnt": 200.0}}),
                json!({"name": "fish", "parent": "food", "thresholds": {"T_cooked": 63.0}}),
                json!({"name": "cloth", "parent": "thing", "abilities": ["Soakable"]}),
                json!({"name": "towel", "parent": "cloth", "thresholds": {"w_soaked": 3.0}}),
            ];
            let a = load_taxonomy(&doc(json!(cats.clone()), json!([]))).unwrap();
            cats.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = load_taxonomy(&doc(json!(cats), json!([]))).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.digest(), b.digest());
        }

        #[test]
        fn resolution_is_idempotent(idx in 0usize..5) {
            let t = Taxonomy::builtin();
            let names: Vec<String> = t.categories().map(|c| c.name.clone()).collect();
            let name = &names[idx * 7 % names.len()];
            let r = t.resolve_abilities(name).unwrap();
            let again = Taxonomy::from_parts(vec![r.as_root_spec()], vec![]).unwrap();
            let rr = again.resolve_abilities(name).unwrap();
            prop_assert_eq!(&rr.abilities, &r.abilities);
            prop_assert_eq!(&rr.thresholds, &r.thresholds);
            prop_assert_eq!(&rr.heat_profile, &r.heat_profile);
            prop_assert_eq!(&rr.droplet_profile, &r.droplet_profile);
        }
    }
}
