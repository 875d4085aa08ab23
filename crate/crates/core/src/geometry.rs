//! Exact geometric primitives: poses, boxes, convex hulls, ray casting and
//! overlap queries.
//!
//! Everything here is a pure function of its inputs. Boxes are oriented in
//! their link frame; axis-aligned bounding boxes are always in world frame.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Separation below which two surfaces are considered in contact.
pub const CONTACT_EPS: f64 = 1e-4;

/// Upper bound on convex hull size; larger shapes must be decomposed.
pub const MAX_HULL_VERTICES: usize = 64;

const PARALLEL_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("convex hull has {0} vertices (limit {MAX_HULL_VERTICES})")]
    HullTooLarge(usize),
    #[error("convex hull is degenerate (needs at least 4 non-coplanar vertices)")]
    DegenerateHull,
    #[error("box half extents must be strictly positive")]
    NonPositiveExtent,
    #[error("invalid ray: {0}")]
    InvalidRay(&'static str),
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vec3::zeros(), orientation: Quat::identity() }
    }

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, orientation: Quat::identity() }
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_position(Vec3::new(x, y, z))
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose { position: -(inv * self.position), orientation: inv }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    pub fn inverse_transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation.inverse() * v
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Angle in radians between the pose's local +z axis and world +z.
    pub fn tilt(&self) -> f64 {
        let up = self.orientation * Vec3::z();
        up.z.clamp(-1.0, 1.0).acos()
    }
}

/// Builds a unit quaternion from `[w, x, y, z]`, rejecting non-unit input.
pub fn quat_from_wxyz(q: [f64; 4]) -> Result<Quat, GeometryError> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("quaternion"));
    }
    let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(GeometryError::NonUnitQuaternion(norm));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

pub fn quat_to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    pos: [f64; 3],
    orn: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            pos: [self.position.x, self.position.y, self.position.z],
            orn: quat_to_wxyz(&self.orientation),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        if repr.pos.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite position"));
        }
        let orientation = quat_from_wxyz(repr.orn).map_err(serde::de::Error::custom)?;
        Ok(Pose { position: Vec3::from(repr.pos), orientation })
    }
}

// ---------------------------------------------------------------------------
// Aabb
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

/// Result of comparing two boxes under the contact tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Overlap {
    Disjoint,
    Touching,
    Penetrating { depth: f64 },
}

impl Overlap {
    pub fn in_contact(&self) -> bool {
        !matches!(self, Overlap::Disjoint)
    }

    pub fn penetration(&self) -> f64 {
        match self {
            Overlap::Penetrating { depth } => *depth,
            _ => 0.0,
        }
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.iter().zip(max.iter()).all(|(a, b)| a <= b));
        Self { min, max }
    }

    pub fn from_center_half_extents(center: Vec3, half: Vec3) -> Self {
        Self { min: center - half, max: center + half }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Self { min, max })
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn half_extents(&self) -> Vec3 {
        self.extents() * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn translated(&self, by: &Vec3) -> Aabb {
        Aabb { min: self.min + by, max: self.max + by }
    }

    pub fn contains_point(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    /// L2 distance between the closest points of two boxes (0 when they intersect).
    pub fn distance(&self, other: &Aabb) -> f64 {
        let mut sq = 0.0;
        for i in 0..3 {
            let gap = (other.min[i] - self.max[i]).max(self.min[i] - other.max[i]).max(0.0);
            sq += gap * gap;
        }
        sq.sqrt()
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        let mut sq = 0.0;
        for i in 0..3 {
            let gap = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            sq += gap * gap;
        }
        sq.sqrt()
    }

    /// Signed overlap along each axis; negative values are gaps.
    pub fn axis_overlaps(&self, other: &Aabb) -> Vec3 {
        Vec3::from_fn(|i, _| self.max[i].min(other.max[i]) - self.min[i].max(other.min[i]))
    }

    /// Horizontal overlap area of the two footprints (0 when disjoint).
    pub fn footprint_overlap(&self, other: &Aabb) -> (f64, f64) {
        let o = self.axis_overlaps(other);
        (o.x, o.y)
    }
}

/// Classifies the relation between two boxes with tolerance [`CONTACT_EPS`].
pub fn overlap(a: &Aabb, b: &Aabb) -> Overlap {
    overlap_with_tolerance(a, b, CONTACT_EPS)
}

pub fn overlap_with_tolerance(a: &Aabb, b: &Aabb, eps: f64) -> Overlap {
    let o = a.axis_overlaps(b);
    let m = o.x.min(o.y).min(o.z);
    if m < -eps {
        Overlap::Disjoint
    } else if m <= eps {
        Overlap::Touching
    } else {
        Overlap::Penetrating { depth: m }
    }
}

/// Outcome of sweeping one box along a straight displacement against another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sweep {
    /// The motion never penetrates beyond tolerance.
    Clear,
    /// Fraction of the displacement after which the boxes are in contact.
    Contact(f64),
    /// The boxes already penetrate beyond tolerance at the start.
    Initially,
}

/// Time of impact of `moving` translated by `displacement` against `fixed`.
///
/// Penetration means all three axis overlaps exceed `eps`. The returned
/// fraction is backed off to the zero-overlap contact on the entry axis, so
/// the moved box ends touching rather than penetrating.
pub fn sweep_aabb(moving: &Aabb, displacement: &Vec3, fixed: &Aabb, eps: f64) -> Sweep {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut entry_axis = None;
    for i in 0..3 {
        let d = displacement[i];
        if moving.max[i] - moving.min[i] <= eps || fixed.max[i] - fixed.min[i] <= eps {
            return Sweep::Clear;
        }
        let a = fixed.min[i] + eps - moving.max[i];
        let b = fixed.max[i] - eps - moving.min[i];
        if d == 0.0 {
            if a < 0.0 && b > 0.0 {
                continue;
            }
            return Sweep::Clear;
        }
        let (t0, t1) = if d > 0.0 { (a / d, b / d) } else { (b / d, a / d) };
        if t0 > lo {
            lo = t0;
            entry_axis = Some(i);
        }
        hi = hi.min(t1);
    }
    if lo >= hi || hi <= 0.0 || lo >= 1.0 {
        return Sweep::Clear;
    }
    match entry_axis {
        None => Sweep::Initially,
        Some(_) if lo < 0.0 => Sweep::Initially,
        Some(axis) => {
            let back = eps / displacement[axis].abs();
            Sweep::Contact((lo - back).max(0.0))
        }
    }
}

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

/// Convex polytope given by its vertices, with cached outward face planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<Vec3>,
    /// Outward unit normal and offset: points satisfy `n·x <= c`.
    planes: Vec<(Vec3, f64)>,
}

impl ConvexHull {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self, GeometryError> {
        if vertices.len() > MAX_HULL_VERTICES {
            return Err(GeometryError::HullTooLarge(vertices.len()));
        }
        if vertices.len() < 4 {
            return Err(GeometryError::DegenerateHull);
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite("hull vertex"));
        }
        let scale = Aabb::from_points(&vertices).map(|b| b.diagonal()).unwrap_or(0.0);
        if scale <= 0.0 {
            return Err(GeometryError::DegenerateHull);
        }
        let tol = 1e-9 * scale;
        let n = vertices.len();
        let mut planes: Vec<(Vec3, f64)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let normal = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                    let len = normal.norm();
                    if len <= tol * scale {
                        continue;
                    }
                    let normal = normal / len;
                    let c = normal.dot(&vertices[i]);
                    let (mut above, mut below) = (false, false);
                    for v in &vertices {
                        let s = normal.dot(v) - c;
                        above |= s > tol;
                        below |= s < -tol;
                    }
                    let plane = match (above, below) {
                        (false, true) => (normal, c),
                        (true, false) => (-normal, -c),
                        _ => continue,
                    };
                    let dup = planes
                        .iter()
                        .any(|(pn, pc)| (pn - plane.0).norm() < 1e-9 && (pc - plane.1).abs() < tol);
                    if !dup {
                        planes.push(plane);
                    }
                }
            }
        }
        if planes.len() < 4 {
            return Err(GeometryError::DegenerateHull);
        }
        Ok(Self { vertices, planes })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn planes(&self) -> &[(Vec3, f64)] {
        &self.planes
    }
}

/// Collision geometry of one link, expressed in the link frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Box { half_extents: Vec3 },
    ConvexHull(ConvexHull),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum GeometryRepr {
    Box { half_extents: [f64; 3] },
    ConvexHull { vertices: Vec<[f64; 3]> },
}

impl Serialize for Geometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Geometry::Box { half_extents } => {
                GeometryRepr::Box { half_extents: [half_extents.x, half_extents.y, half_extents.z] }
            }
            Geometry::ConvexHull(h) => GeometryRepr::ConvexHull {
                vertices: h.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Geometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match GeometryRepr::deserialize(d)? {
            GeometryRepr::Box { half_extents } => {
                Geometry::new_box(Vec3::from(half_extents)).map_err(serde::de::Error::custom)
            }
            GeometryRepr::ConvexHull { vertices } => {
                ConvexHull::new(vertices.into_iter().map(Vec3::from).collect())
                    .map(Geometry::ConvexHull)
                    .map_err(serde::de::Error::custom)
            }
        }
    }
}

impl Geometry {
    pub fn new_box(half_extents: Vec3) -> Result<Self, GeometryError> {
        if half_extents.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("half extents"));
        }
        if half_extents.iter().any(|v| *v <= 0.0) {
            return Err(GeometryError::NonPositiveExtent);
        }
        Ok(Geometry::Box { half_extents })
    }

    pub fn cuboid(hx: f64, hy: f64, hz: f64) -> Self {
        Geometry::Box { half_extents: Vec3::new(hx, hy, hz) }
    }

    /// Box bounding the geometry in its own frame.
    pub fn local_aabb(&self) -> Aabb {
        match self {
            Geometry::Box { half_extents } => Aabb::from_center_half_extents(Vec3::zeros(), *half_extents),
            Geometry::ConvexHull(h) => Aabb::from_points(&h.vertices).expect("hull has vertices"),
        }
    }

    pub fn contains_local_point(&self, p: &Vec3, tol: f64) -> bool {
        match self {
            Geometry::Box { half_extents } => (0..3).all(|i| p[i].abs() <= half_extents[i] + tol),
            Geometry::ConvexHull(h) => h.planes.iter().all(|(n, c)| n.dot(p) <= c + tol),
        }
    }

    pub fn contains_point(&self, pose: &Pose, p: &Vec3, tol: f64) -> bool {
        self.contains_local_point(&pose.inverse_transform_point(p), tol)
    }

    /// Distance from a world point to the geometry (0 inside). Hulls are
    /// measured against their local bounding box.
    pub fn distance_to_point(&self, pose: &Pose, p: &Vec3) -> f64 {
        let local = pose.inverse_transform_point(p);
        match self {
            Geometry::ConvexHull(h) if self.contains_local_point(&local, 0.0) => {
                let _ = h;
                0.0
            }
            _ => self.local_aabb().distance_to_point(&local),
        }
    }

    /// Distance from a local point to the geometry surface.
    pub fn surface_distance_local(&self, p: &Vec3) -> f64 {
        match self {
            Geometry::Box { half_extents } => {
                let outside = Vec3::from_fn(|i, _| (p[i].abs() - half_extents[i]).max(0.0)).norm();
                if outside > 0.0 {
                    outside
                } else {
                    (0..3).map(|i| half_extents[i] - p[i].abs()).fold(f64::INFINITY, f64::min)
                }
            }
            Geometry::ConvexHull(h) => {
                let signed = h.planes.iter().map(|(n, c)| n.dot(p) - c).fold(f64::NEG_INFINITY, f64::max);
                signed.abs()
            }
        }
    }
}

/// Tightest world-frame box containing `geometry` placed at `pose`.
pub fn world_aabb(geometry: &Geometry, pose: &Pose) -> Aabb {
    match geometry {
        Geometry::Box { half_extents } => {
            let rot: Matrix3<f64> = pose.orientation.to_rotation_matrix().into_inner();
            let half = rot.abs() * half_extents;
            Aabb::from_center_half_extents(pose.position, half)
        }
        Geometry::ConvexHull(h) => {
            let pts: Vec<Vec3> = h.vertices.iter().map(|v| pose.transform_point(v)).collect();
            Aabb::from_points(&pts).expect("hull has vertices")
        }
    }
}

// ---------------------------------------------------------------------------
// Rays
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub max_dist: f64,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3, max_dist: f64) -> Result<Self, GeometryError> {
        if origin.iter().chain(direction.iter()).any(|v| !v.is_finite()) || !max_dist.is_finite() {
            return Err(GeometryError::NonFinite("ray"));
        }
        if max_dist <= 0.0 {
            return Err(GeometryError::InvalidRay("max_dist must be positive"));
        }
        let len = direction.norm();
        if len == 0.0 {
            return Err(GeometryError::InvalidRay("zero direction"));
        }
        Ok(Self { origin, direction: direction / len, max_dist })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Intersection of a ray with a single shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeHit {
    pub distance: f64,
    pub point: Vec3,
    pub normal: Vec3,
    /// The ray started inside the shape and this is the exit point.
    pub from_inside: bool,
}

/// Casts a ray against one shape. Rays starting inside report the exit face.
pub fn ray_shape(geometry: &Geometry, pose: &Pose, ray: &Ray) -> Option<ShapeHit> {
    let o = pose.inverse_transform_point(&ray.origin);
    let d = pose.inverse_transform_vector(&ray.direction);
    let (t_enter, n_enter, t_exit, n_exit) = match geometry {
        Geometry::Box { half_extents } => {
            let mut t_enter = f64::NEG_INFINITY;
            let mut t_exit = f64::INFINITY;
            let mut n_enter = Vec3::zeros();
            let mut n_exit = Vec3::zeros();
            for i in 0..3 {
                let h = half_extents[i];
                if d[i].abs() < PARALLEL_EPS {
                    if o[i] < -h || o[i] > h {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d[i];
                let mut t1 = (-h - o[i]) * inv;
                let mut t2 = (h - o[i]) * inv;
                let mut sign = -1.0;
                if t1 > t2 {
                    std::mem::swap(&mut t1, &mut t2);
                    sign = 1.0;
                }
                if t1 > t_enter {
                    t_enter = t1;
                    n_enter = Vec3::zeros();
                    n_enter[i] = sign;
                }
                if t2 < t_exit {
                    t_exit = t2;
                    n_exit = Vec3::zeros();
                    n_exit[i] = -sign;
                }
            }
            (t_enter, n_enter, t_exit, n_exit)
        }
        Geometry::ConvexHull(h) => {
            let mut t_enter = f64::NEG_INFINITY;
            let mut t_exit = f64::INFINITY;
            let mut n_enter = Vec3::zeros();
            let mut n_exit = Vec3::zeros();
            for (n, c) in &h.planes {
                let denom = n.dot(&d);
                let dist = c - n.dot(&o);
                if denom.abs() < PARALLEL_EPS {
                    if dist < 0.0 {
                        return None;
                    }
                    continue;
                }
                let t = dist / denom;
                if denom < 0.0 {
                    if t > t_enter {
                        t_enter = t;
                        n_enter = *n;
                    }
                } else if t < t_exit {
                    t_exit = t;
                    n_exit = *n;
                }
            }
            (t_enter, n_enter, t_exit, n_exit)
        }
    };
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    let (t, n_local, from_inside) = if t_enter >= 0.0 {
        (t_enter, n_enter, false)
    } else {
        (t_exit, n_exit, true)
    };
    if t > ray.max_dist || !t.is_finite() {
        return None;
    }
    Some(ShapeHit {
        distance: t,
        point: ray.at(t),
        normal: pose.transform_vector(&n_local),
        from_inside,
    })
}

/// A shape placed in the world, tagged with a caller-chosen key.
#[derive(Debug, Clone)]
pub struct Collider<'a, K> {
    pub key: K,
    pub geometry: &'a Geometry,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<K> {
    pub key: K,
    pub point: Vec3,
    pub normal: Vec3,
    pub distance: f64,
}

/// All intersections of `ray` with `colliders`, sorted by distance (ties keep
/// input order).
pub fn raycast<K: Clone>(colliders: &[Collider<'_, K>], ray: &Ray) -> Vec<Hit<K>> {
    let mut hits: Vec<Hit<K>> = colliders
        .iter()
        .filter_map(|c| {
            ray_shape(c.geometry, &c.pose, ray).map(|h| Hit {
                key: c.key.clone(),
                point: h.point,
                normal: h.normal,
                distance: h.distance,
            })
        })
        .collect();
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    hits
}

// ---------------------------------------------------------------------------
// Polygons
// ---------------------------------------------------------------------------

/// Point-in-polygon with the boundary counted as inside.
pub fn polygon_contains(polygon: &[Vec2], p: &Vec2) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if point_on_segment(&a, &b, p) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_on_segment(a: &Vec2, b: &Vec2, p: &Vec2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let cross = ab.x * ap.y - ab.y * ap.x;
    let scale = ab.norm().max(1.0);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    let dot = ab.dot(&ap);
    dot >= -1e-12 && dot <= ab.norm_squared() + 1e-12
}

pub fn polygon_area(polygon: &[Vec2]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Simple (no self-intersection) and non-degenerate.
pub fn polygon_is_simple(polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    if n < 3 || polygon_area(polygon).abs() < 1e-12 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (polygon[i], polygon[(i + 1) % n]);
        for j in (i + 1)..n {
            if j == i || (j + 1) % n == i || j == (i + 1) % n {
                continue;
            }
            let (b1, b2) = (polygon[j], polygon[(j + 1) % n]);
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> bool {
    let orient = |a: &Vec2, b: &Vec2, c: &Vec2| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && point_on_segment(q1, q2, p1))
        || (d2 == 0.0 && point_on_segment(q1, q2, p2))
        || (d3 == 0.0 && point_on_segment(p1, p2, q1))
        || (d4 == 0.0 && point_on_segment(p1, p2, q2))
}

pub fn polygon_bounds(polygon: &[Vec2]) -> (Vec2, Vec2) {
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in polygon {
        min = min.inf(p);
        max = max.sup(p);
    }
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn unit_box() -> Geometry {
        Geometry::cuboid(0.5, 0.5, 0.5)
    }

    fn corners_aabb(half: Vec3, pose: &Pose) -> Aabb {
        let mut pts = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pts.push(pose.transform_point(&Vec3::new(sx * half.x, sy * half.y, sz * half.z)));
                }
            }
        }
        Aabb::from_points(&pts).unwrap()
    }

    #[test]
    fn unit_box_at_identity() {
        let aabb = world_aabb(&unit_box(), &Pose::identity());
        assert_eq!(aabb.min, Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(aabb.max, Vec3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn rotated_box_matches_corner_oracle() {
        let pose = Pose::new(Vec3::zeros(), Quat::from_axis_angle(&Vec3::z_axis(), FRAC_PI_4));
        let aabb = world_aabb(&unit_box(), &pose);
        let oracle = corners_aabb(Vec3::new(0.5, 0.5, 0.5), &pose);
        let h = std::f64::consts::SQRT_2 / 2.0;
        assert_relative_eq!(aabb.max, Vec3::new(h, h, 0.5), epsilon = 1e-12);
        assert_relative_eq!(aabb.min, oracle.min, epsilon = 1e-12);
        assert_relative_eq!(aabb.max, oracle.max, epsilon = 1e-12);
    }

    #[test]
    fn translation_shifts_aabb() {
        let aabb = world_aabb(&unit_box(), &Pose::from_xyz(1.0, -2.0, 3.0));
        assert_eq!(aabb.min, Vec3::new(0.5, -2.5, 2.5));
        assert_eq!(aabb.max, Vec3::new(1.5, -1.5, 3.5));
    }

    #[test]
    fn downward_ray_hits_top_face() {
        let g = unit_box();
        let colliders = [Collider { key: 7u32, geometry: &g, pose: Pose::identity() }];
        let ray = Ray::new(Vec3::new(0.0, 0.0, 2.0), -Vec3::z(), 10.0).unwrap();
        let hits = raycast(&colliders, &ray);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].key, 7);
        assert_relative_eq!(hits[0].distance, 1.5);
        assert_relative_eq!(hits[0].point.z, 0.5);
        assert_relative_eq!(hits[0].normal, Vec3::z());
    }

    #[test]
    fn short_ray_misses() {
        let g = unit_box();
        let colliders = [Collider { key: 0u32, geometry: &g, pose: Pose::identity() }];
        let ray = Ray::new(Vec3::new(0.0, 0.0, 2.0), -Vec3::z(), 1.49).unwrap();
        assert!(raycast(&colliders, &ray).is_empty());
    }

    #[test]
    fn ray_from_inside_reports_exit_face() {
        let g = unit_box();
        let ray = Ray::new(Vec3::new(0.1, 0.0, 0.0), Vec3::x(), 5.0).unwrap();
        let hit = ray_shape(&g, &Pose::identity(), &ray).unwrap();
        assert!(hit.from_inside);
        // slab interval on x is [-0.6, 0.4]
        assert_relative_eq!(hit.distance, 0.4, epsilon = 1e-15);
        assert_relative_eq!(hit.normal, Vec3::x());
    }

    #[test]
    fn hull_ray_matches_box_ray() {
        let mut verts = Vec::new();
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    verts.push(Vec3::new(sx, sy, sz));
                }
            }
        }
        let hull = Geometry::ConvexHull(ConvexHull::new(verts).unwrap());
        if let Geometry::ConvexHull(h) = &hull {
            assert_eq!(h.planes().len(), 6);
        }
        let pose = Pose::new(Vec3::new(0.2, 0.1, 0.0), Quat::from_euler_angles(0.3, 0.2, 0.1));
        let ray = Ray::new(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.1, 0.05, -1.0), 10.0).unwrap();
        let a = ray_shape(&hull, &pose, &ray).unwrap();
        let b = ray_shape(&unit_box(), &pose, &ray).unwrap();
        assert_relative_eq!(a.distance, b.distance, epsilon = 1e-12);
        assert_relative_eq!(a.normal, b.normal, epsilon = 1e-12);
    }

    #[test]
    fn hull_rejects_oversize_and_flat() {
        let many: Vec<Vec3> = (0..65).map(|i| Vec3::new(i as f64, (i * i) as f64, (i % 3) as f64)).collect();
        assert_eq!(ConvexHull::new(many), Err(GeometryError::HullTooLarge(65)));
        let flat = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)];
        assert_eq!(ConvexHull::new(flat), Err(GeometryError::DegenerateHull));
    }

    #[test]
    fn overlap_cases() {
        let a = Aabb::from_center_half_extents(Vec3::zeros(), Vec3::repeat(0.5));
        let face = a.translated(&Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(overlap(&a, &face), Overlap::Touching);
        assert_eq!(overlap(&a, &a), Overlap::Penetrating { depth: 1.0 });
        match overlap(&a, &a.translated(&Vec3::new(0.9, 0.0, 0.0))) {
            Overlap::Penetrating { depth } => assert_relative_eq!(depth, 0.1, epsilon = 1e-12),
            other => panic!("expected penetration, got {other:?}"),
        }
        assert_eq!(overlap(&a, &a.translated(&Vec3::new(1.1, 0.0, 0.0))), Overlap::Disjoint);
        let near = a.translated(&Vec3::new(1.0 + 0.5 * CONTACT_EPS, 0.0, 0.0));
        assert_eq!(overlap(&a, &near), Overlap::Touching);
    }

    #[test]
    fn sweep_stops_at_contact() {
        let hand = Aabb::from_center_half_extents(Vec3::zeros(), Vec3::repeat(0.05));
        let wall = Aabb::new(Vec3::new(0.5, -1.0, -1.0), Vec3::new(0.6, 1.0, 1.0));
        match sweep_aabb(&hand, &Vec3::new(1.0, 0.0, 0.0), &wall, CONTACT_EPS) {
            Sweep::Contact(t) => assert_relative_eq!(t, 0.45, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        // moving away, or sliding along the face, never collides
        assert_eq!(sweep_aabb(&hand, &Vec3::new(-1.0, 0.0, 0.0), &wall, CONTACT_EPS), Sweep::Clear);
        let touching = hand.translated(&Vec3::new(0.45, 0.0, 0.0));
        assert_eq!(sweep_aabb(&touching, &Vec3::new(0.0, 0.3, 0.0), &wall, CONTACT_EPS), Sweep::Clear);
        assert_eq!(sweep_aabb(&touching, &Vec3::new(0.3, 0.0, 0.0), &wall, CONTACT_EPS), Sweep::Contact(0.0));
        let inside = hand.translated(&Vec3::new(0.55, 0.0, 0.0));
        assert_eq!(sweep_aabb(&inside, &Vec3::new(0.1, 0.0, 0.0), &wall, CONTACT_EPS), Sweep::Initially);
    }

    #[test]
    fn polygon_boundary_is_inside() {
        let square = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0)];
        assert!(polygon_contains(&square, &Vec2::new(1.0, 1.0)));
        assert!(polygon_contains(&square, &Vec2::new(2.0, 1.0)));
        assert!(polygon_contains(&square, &Vec2::new(0.0, 0.0)));
        assert!(!polygon_contains(&square, &Vec2::new(2.0001, 1.0)));
        assert!(polygon_is_simple(&square));
        let bowtie = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!(!polygon_is_simple(&bowtie));
    }

    fn arb_quat() -> impl Strategy<Value = Quat> {
        (-3.2f64..3.2, -3.2f64..3.2, -3.2f64..3.2).prop_map(|(r, p, y)| Quat::from_euler_angles(r, p, y))
    }

    fn arb_vec(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn hull_aabb_matches_vertex_bruteforce(
            verts in prop::collection::vec(arb_vec(1.0), 8..32),
            q in arb_quat(),
            t in arb_vec(5.0),
        ) {
            let Ok(hull) = ConvexHull::new(verts.clone()) else { return Ok(()); };
            let pose = Pose::new(t, q);
            let aabb = world_aabb(&Geometry::ConvexHull(hull), &pose);
            let mut min = Vec3::repeat(f64::INFINITY);
            let mut max = Vec3::repeat(f64::NEG_INFINITY);
            for v in &verts {
                let w = pose.transform_point(v);
                min = min.inf(&w);
                max = max.sup(&w);
            }
            prop_assert!((aabb.min - min).norm() < 1e-12);
            prop_assert!((aabb.max - max).norm() < 1e-12);
        }

        #[test]
        fn box_aabb_matches_corners(half in (0.01f64..2.0, 0.01f64..2.0, 0.01f64..2.0), q in arb_quat(), t in arb_vec(5.0)) {
            let half = Vec3::new(half.0, half.1, half.2);
            let pose = Pose::new(t, q);
            let a = world_aabb(&Geometry::Box { half_extents: half }, &pose);
            let b = corners_aabb(half, &pose);
            prop_assert!((a.min - b.min).norm() < 1e-12 && (a.max - b.max).norm() < 1e-12);
        }

        #[test]
        fn overlap_is_symmetric(c1 in arb_vec(1.0), c2 in arb_vec(1.0), h1 in arb_vec(1.0), h2 in arb_vec(1.0)) {
            let a = Aabb::from_center_half_extents(c1, h1.abs());
            let b = Aabb::from_center_half_extents(c2, h2.abs());
            prop_assert_eq!(overlap(&a, &b), overlap(&b, &a));
        }

        #[test]
        fn raycast_sorted_and_on_surface(
            boxes in prop::collection::vec((arb_vec(3.0), (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0), arb_quat()), 1..8),
            origin in arb_vec(5.0),
            dir in arb_vec(1.0),
        ) {
            prop_assume!(dir.norm() > 1e-3);
            let geoms: Vec<Geometry> = boxes.iter().map(|(_, h, _)| Geometry::cuboid(h.0, h.1, h.2)).collect();
            let colliders: Vec<Collider<usize>> = boxes
                .iter()
                .zip(&geoms)
                .enumerate()
                .map(|(i, ((c, _, q), g))| Collider { key: i, geometry: g, pose: Pose::new(*c, *q) })
                .collect();
            let ray = Ray::new(origin, dir, 20.0).unwrap();
            let hits = raycast(&colliders, &ray);
            for w in hits.windows(2) {
                prop_assert!(w[0].distance <= w[1].distance);
            }
            for h in &hits {
                prop_assert!(h.distance >= 0.0 && h.distance <= ray.max_dist);
                let c = &colliders[h.key];
                let local = c.pose.inverse_transform_point(&h.point);
                prop_assert!(c.geometry.surface_distance_local(&local) < 1e-6);
            }
        }
    }
}
