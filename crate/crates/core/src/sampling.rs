//! Generative side of the predicates: mutate a world so that a predicate
//! takes a requested value.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::geometry::{overlap, raycast, world_aabb, Aabb, Collider, Pose, Quat, Ray, Vec3, CONTACT_EPS};
use crate::predicates::{evaluate, PredicateError, PredicateExpr, PredicateName};
use crate::states::slice_object;
use crate::world::{HitTarget, Particle, ParticleKind, World, WorldError};

pub const DEFAULT_MAX_ATTEMPTS: usize = 100;
pub const PARTICLE_COUNT: usize = 20;
/// Maximum tilt of a support surface normal.
pub const FLATNESS_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("no sampler for `{0}`")]
    UnsupportedSampler(String),
    #[error("no valid placement for `{expr}` after {attempts} attempts")]
    SamplingExhausted { expr: String, attempts: usize },
    #[error("`{0}` cannot be made to hold")]
    Unsatisfiable(String),
    #[error("no surface found on `{0}`")]
    SurfaceNotFound(String),
    #[error("sampled `{0}` but it does not evaluate to its target")]
    PostconditionFailed(String),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    OnTopOf,
    InsideOf,
    Under,
    OnFloor,
}

impl Relation {
    pub fn from_predicate(name: PredicateName) -> Option<Self> {
        Some(match name {
            PredicateName::OnTopOf => Relation::OnTopOf,
            PredicateName::InsideOf => Relation::InsideOf,
            PredicateName::Under => Relation::Under,
            PredicateName::OnFloor => Relation::OnFloor,
            _ => return None,
        })
    }
}

/// Makes `expr` hold at its target value.
pub fn sample<R: Rng>(world: &mut World, expr: &PredicateExpr, rng: &mut R, max_attempts: usize) -> Result<(), SamplingError> {
    use PredicateName::*;
    let a = expr.args[0].clone();
    let unsupported = || SamplingError::UnsupportedSampler(expr.to_string());
    match expr.name {
        NextTo | InContactWith | InFoVOfAgent | InHandOfAgent | InReachOfAgent | InSameRoomAsAgent => {
            return Err(unsupported())
        }
        _ => {}
    }
    let relation = Relation::from_predicate(expr.name);
    if relation.is_some() && !expr.target {
        return Err(unsupported());
    }
    // Validates instances and abilities.
    let current = evaluate(world, expr)?;
    if let Some(rel) = relation {
        return sample_relation(world, expr, rel, rng, max_attempts);
    }

    if expr.name == Sliced {
        return match (expr.target, current) {
            (true, true) | (false, false) => Ok(()),
            (true, false) => slice_object(world, &a).map(|_| ()).map_err(Into::into),
            (false, true) => Err(SamplingError::Unsatisfiable(expr.to_string())),
        };
    }

    let cat = world.category_of(&a)?.clone();
    match expr.name {
        Open => {
            let model = world.model_of(&a)?.clone();
            let joints: Vec<_> =
                model.relevant_joints.iter().filter_map(|j| model.joint(j).map(|jt| (j.clone(), jt.clone()))).collect();
            if joints.is_empty() {
                return Err(SamplingError::Unsatisfiable(expr.to_string()));
            }
            let mut values = Vec::new();
            if expr.target {
                let mut chosen: Vec<bool> = joints.iter().map(|_| rng.gen_bool(0.5)).collect();
                if !chosen.iter().any(|c| *c) {
                    let k = rng.gen_range(0..joints.len());
                    chosen[k] = true;
                }
                for ((name, jt), pick) in joints.iter().zip(chosen) {
                    if pick {
                        let th = jt.open_threshold();
                        // Uniform on (th, upper].
                        let u: f64 = rng.gen();
                        values.push((name.clone(), jt.upper - u * (jt.upper - th)));
                    }
                }
            } else {
                for (name, jt) in &joints {
                    values.push((name.clone(), rng.gen_range(jt.lower..=jt.open_threshold())));
                }
            }
            let o = world.live_mut(&a)?;
            for (n, q) in values {
                o.joints.insert(n, q);
            }
        }
        Cooked | Burnt => {
            let t_c = cat.t_cooked();
            let t_b = cat.t_burnt();
            let o = world.live_mut(&a)?;
            let th = if expr.name == Cooked { t_c } else { t_b }.expect("ability checked");
            if expr.target {
                o.max_temperature = o.max_temperature.max(th);
                // An already burnt object is brought back into the cooked band.
                if expr.name == Cooked {
                    if let Some(b) = t_b {
                        if o.max_temperature >= b {
                            o.max_temperature = th;
                        }
                    }
                }
            } else {
                o.max_temperature = o.max_temperature.min(th - 1.0);
            }
            o.temperature = o.temperature.min(o.max_temperature);
        }
        Frozen => {
            let tf = cat.t_frozen();
            let t = if expr.target { rng.gen_range(tf - 50.0..=tf - 10.0) } else { tf + 1.0 };
            let o = world.live_mut(&a)?;
            o.temperature = t;
            o.max_temperature = o.max_temperature.max(t);
        }
        Soaked => {
            let w = if expr.target { cat.w_soaked().ceil() as u32 } else { 0 };
            world.live_mut(&a)?.wetness = w;
        }
        Dusty | Stained => {
            let kind = if expr.name == Dusty { ParticleKind::Dust } else { ParticleKind::Stain };
            if expr.target {
                let particles = make_particles(world, &a, kind, PARTICLE_COUNT, rng)?;
                let o = world.live_mut(&a)?;
                match kind {
                    ParticleKind::Dust => {
                        o.dust = particles;
                        o.initial_dust = PARTICLE_COUNT as u32;
                    }
                    ParticleKind::Stain => {
                        o.stains = particles;
                        o.initial_stains = PARTICLE_COUNT as u32;
                    }
                }
            } else {
                let o = world.live_mut(&a)?;
                match kind {
                    ParticleKind::Dust => {
                        o.dust.clear();
                        o.initial_dust = 0;
                    }
                    ParticleKind::Stain => {
                        o.stains.clear();
                        o.initial_stains = 0;
                    }
                }
            }
        }
        ToggledOn => world.live_mut(&a)?.toggled = expr.target,
        _ => return Err(unsupported()),
    }
    check(world, expr)
}

fn check(world: &World, expr: &PredicateExpr) -> Result<(), SamplingError> {
    if evaluate(world, expr)? == expr.target {
        Ok(())
    } else {
        Err(SamplingError::PostconditionFailed(expr.to_string()))
    }
}

fn sample_relation<R: Rng>(
    world: &mut World,
    expr: &PredicateExpr,
    rel: Relation,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(), SamplingError> {
    let a = expr.args[0].clone();
    let b = expr.args[1].clone();
    if a == b {
        return Err(SamplingError::Unsatisfiable(expr.to_string()));
    }
    let original = world.live(&a)?.pose;
    for i in 0..world.agent.hands.len() {
        if world.agent.hands[i].grasp.as_ref().is_some_and(|g| g.object == a) {
            world.agent.hands[i].grasp = None;
        }
    }
    let mut used = 0;
    while used < max_attempts {
        let (pose, spent) = match sample_pose_counted(world, &a, rel, &b, rng, max_attempts - used) {
            Ok(x) => x,
            Err(_) => break,
        };
        used += spent;
        world.set_pose(&a, pose)?;
        if evaluate(world, expr)? {
            return Ok(());
        }
    }
    world.set_pose(&a, original)?;
    Err(SamplingError::SamplingExhausted { expr: expr.to_string(), attempts: max_attempts })
}

/// Finds a resting, penetration-free pose for `o1` in `relation` to `o2`
/// (an instance, or a room for `OnFloor`). Does not mutate the world.
pub fn sample_pose<R: Rng>(
    world: &World,
    o1: &str,
    relation: Relation,
    o2: &str,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Pose, SamplingError> {
    sample_pose_counted(world, o1, relation, o2, rng, max_attempts).map(|(p, _)| p)
}

fn sample_pose_counted<R: Rng>(
    world: &World,
    o1: &str,
    relation: Relation,
    o2: &str,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(Pose, usize), SamplingError> {
    let obj = world.live(o1)?;
    let model = world.model_of(o1)?;
    let exhausted = || SamplingError::SamplingExhausted {
        expr: format!("{relation:?}({o1}, {o2})"),
        attempts: max_attempts,
    };
    let target_box = match relation {
        Relation::OnFloor => {
            let room = world.room(o2).ok_or_else(|| WorldError::UnknownInstance(o2.to_string()))?;
            let (lo, hi) = crate::geometry::polygon_bounds(&room.polygon());
            Aabb::new(Vec3::new(lo.x, lo.y, room.floor_z), Vec3::new(hi.x, hi.y, room.floor_z))
        }
        _ => {
            world.live(o2)?;
            world.object_aabb(o2).ok_or_else(|| WorldError::UnknownInstance(o2.to_string()))?
        }
    };
    let link_poses = model.link_poses(&obj.joints);
    let top_z = world.world_bounds().max.z + 1.0;
    let cos_flat = FLATNESS_DEG.to_radians().cos();

    for attempt in 1..=max_attempts {
        let orientation = model.stable_orientations.choose(rng).copied().unwrap_or_else(Quat::identity);
        let frame = Pose::new(Vec3::zeros(), orientation);
        let local = model
            .links
            .iter()
            .zip(&link_poses)
            .filter(|(l, _)| l.colliding)
            .map(|(l, p)| world_aabb(&l.geometry, &frame.compose(p)))
            .reduce(|x, y| x.union(&y))
            .expect("models have links");
        let half = local.half_extents();
        let (x, y, z0, len) = match relation {
            Relation::OnTopOf => (
                rng.gen_range(target_box.min.x..=target_box.max.x),
                rng.gen_range(target_box.min.y..=target_box.max.y),
                target_box.max.z + 1e-3,
                target_box.extents().z + 2e-3,
            ),
            Relation::InsideOf => {
                let z = rng.gen_range(target_box.min.z..=target_box.max.z);
                (
                    rng.gen_range(target_box.min.x..=target_box.max.x),
                    rng.gen_range(target_box.min.y..=target_box.max.y),
                    z,
                    z - target_box.min.z + 1e-3,
                )
            }
            Relation::Under => {
                let z = rng.gen_range(target_box.min.z..=target_box.max.z);
                (
                    rng.gen_range(target_box.min.x..=target_box.max.x),
                    rng.gen_range(target_box.min.y..=target_box.max.y),
                    z,
                    top_z * 2.0 + z.abs(),
                )
            }
            Relation::OnFloor => {
                let room = world.room(o2).expect("checked");
                let x = rng.gen_range(target_box.min.x..=target_box.max.x);
                let y = rng.gen_range(target_box.min.y..=target_box.max.y);
                if !room.contains_xy(x, y) {
                    continue;
                }
                (x, y, top_z, top_z - room.floor_z + 1.0)
            }
        };
        let ray = Ray::new(Vec3::new(x, y, z0), -Vec3::z(), len).expect("downward ray");
        let hits = world.raycast(&ray, &[o1]);
        let Some(hit) = hits.first() else { continue };
        let on_target = match (&hit.target, relation) {
            (HitTarget::Floor { room }, Relation::OnFloor) => room == o2,
            (HitTarget::Link { object, .. }, Relation::OnTopOf | Relation::InsideOf) => object == o2,
            (HitTarget::Link { object, .. }, Relation::Under) => object != o2,
            (HitTarget::Floor { .. }, Relation::Under) => true,
            _ => false,
        };
        if !on_target || hit.normal.z < cos_flat {
            continue;
        }
        // Base fit: every footprint corner rests on the same support at the same height.
        let fits = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)].iter().all(|(sx, sy)| {
            let c = Vec3::new(x + sx * half.x * 0.99, y + sy * half.y * 0.99, hit.point.z + 1e-3);
            let r = Ray::new(c, -Vec3::z(), 2e-3).expect("short ray");
            world
                .raycast(&r, &[o1])
                .first()
                .is_some_and(|h| h.target == hit.target && (h.point.z - hit.point.z).abs() <= 1e-6 && h.normal.z >= cos_flat)
        });
        if !fits {
            continue;
        }
        let centre = local.center();
        let position = Vec3::new(x - centre.x, y - centre.y, hit.point.z - local.min.z);
        let pose = Pose::new(position, orientation);
        if penetrates(world, o1, &pose) {
            continue;
        }
        return Ok((pose, attempt));
    }
    Err(exhausted())
}

/// Whether `id` placed at `pose` would sink more than the contact tolerance
/// into any other live object.
pub fn penetrates(world: &World, id: &str, pose: &Pose) -> bool {
    let Ok(obj) = world.live(id) else { return false };
    let Ok(model) = world.model_of(id) else { return false };
    let mine: Vec<Aabb> = model
        .links
        .iter()
        .zip(model.link_poses(&obj.joints))
        .filter(|(l, _)| l.colliding)
        .map(|(l, p)| world_aabb(&l.geometry, &pose.compose(&p)))
        .collect();
    world
        .all_colliding_links(&[id])
        .iter()
        .any(|l| mine.iter().any(|m| overlap(m, &l.aabb).penetration() > CONTACT_EPS))
}

fn make_particles<R: Rng>(
    world: &mut World,
    id: &str,
    kind: ParticleKind,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Particle>, SamplingError> {
    let placed: Vec<(String, Vec3, Pose)> = {
        let links = world.colliding_links(id);
        if links.is_empty() {
            return Err(SamplingError::SurfaceNotFound(id.to_string()));
        }
        let colliders: Vec<Collider<usize>> =
            links.iter().enumerate().map(|(i, l)| Collider { key: i, geometry: &l.link.geometry, pose: l.pose }).collect();
        let bb = world.object_aabb(id).ok_or_else(|| SamplingError::SurfaceNotFound(id.to_string()))?;
        let reach = bb.diagonal() + 0.2;
        let mut out = Vec::new();
        let mut tries = 0;
        while out.len() < count {
            tries += 1;
            if tries > count * 50 + 50 {
                return Err(SamplingError::SurfaceNotFound(id.to_string()));
            }
            let ray = if rng.gen_bool(0.5) {
                let x = rng.gen_range(bb.min.x..=bb.max.x);
                let y = rng.gen_range(bb.min.y..=bb.max.y);
                Ray::new(Vec3::new(x, y, bb.max.z + 0.1), -Vec3::z(), reach)
            } else {
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                let dir = Vec3::new(th.cos(), th.sin(), 0.0);
                let side = Vec3::new(-dir.y, dir.x, 0.0);
                let c = bb.center();
                let r = 0.5 * bb.diagonal();
                let origin = c - dir * (r + 0.1)
                    + side * rng.gen_range(-r..=r)
                    + Vec3::new(0.0, 0.0, rng.gen_range(bb.min.z - c.z..=bb.max.z - c.z));
                Ray::new(origin, dir, reach)
            }
            .expect("unit ray");
            if let Some(h) = raycast(&colliders, &ray).first() {
                let l = &links[h.key];
                out.push((l.link.id.clone(), l.pose.inverse_transform_point(&h.point), l.pose));
            }
        }
        out.into_iter().map(|(l, p, _)| (l, p, Pose::identity())).collect()
    };
    Ok(placed
        .into_iter()
        .map(|(link, local_point, _)| Particle { id: world.fresh_id(), kind, link, local_point, active: true })
        .collect())
}

/// Attaches `count` fresh particles of `kind` to the surface of `id`,
/// replacing existing ones. Returns the new ids.
pub fn sample_particles<R: Rng>(
    world: &mut World,
    id: &str,
    kind: ParticleKind,
    count: usize,
    rng: &mut R,
) -> Result<Vec<u64>, SamplingError> {
    world.live(id)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let particles = make_particles(world, id, kind, count, rng)?;
    let ids = particles.iter().map(|p| p.id).collect();
    let o = world.live_mut(id)?;
    match kind {
        ParticleKind::Dust => {
            o.dust = particles;
            o.initial_dust = count as u32;
        }
        ParticleKind::Stain => {
            o.stains = particles;
            o.initial_stains = count as u32;
        }
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {error}")]
pub struct ConditionError {
    pub line: usize,
    pub error: SamplingError,
}

/// Parses condition text: one predicate per line, `#` comments and blank
/// lines ignored. Line numbers are 1-based.
pub fn parse_conditions(text: &str) -> Result<Vec<(usize, PredicateExpr)>, ConditionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            PredicateExpr::parse(l)
                .map(|e| (i + 1, e))
                .map_err(|e| ConditionError { line: i + 1, error: e.into() })
        })
        .collect()
}

/// Applies conditions top to bottom; the first failure aborts.
pub fn apply_conditions<R: Rng>(
    world: &mut World,
    conditions: &[(usize, PredicateExpr)],
    rng: &mut R,
    max_attempts: usize,
) -> Result<(), ConditionError> {
    for (line, expr) in conditions {
        sample(world, expr, rng, max_attempts).map_err(|error| ConditionError { line: *line, error })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn e(s: &str) -> PredicateExpr {
        PredicateExpr::parse(s).unwrap()
    }

    #[test]
    fn book_on_table_rests_on_top() {
        let mut w = world_with_table();
        let book = w.add_object("book_hardcover", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        sample(&mut w, &e(&format!("OnTopOf({book}, table_1)=true")), &mut rng(4), 100).unwrap();
        let base = w.object_aabb(&book).unwrap().min.z;
        assert!((base - 0.7).abs() <= CONTACT_EPS);
        let before = w.object(&book).unwrap().pose;
        w.settle(&book).unwrap();
        assert_eq!(w.object(&book).unwrap().pose, before);
    }

    #[test]
    fn same_seed_same_pose() {
        let w0 = {
            let mut w = world_with_table();
            w.add_object("book_hardcover", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
            w
        };
        let a = sample_pose(&w0, "book_1", Relation::OnTopOf, "table_1", &mut rng(9), 100).unwrap();
        let b = sample_pose(&w0, "book_1", Relation::OnTopOf, "table_1", &mut rng(9), 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_big_for_the_container() {
        let mut w = world_with_table();
        let cab = w.add_object("cabinet_small", Pose::from_xyz(1.5, 0.0, 1.0)).unwrap();
        w.settle(&cab).unwrap();
        let big = w.add_object("box_large", Pose::from_xyz(-2.0, 2.0, 0.5)).unwrap();
        let err = sample(&mut w, &e(&format!("InsideOf({big}, {cab})=true")), &mut rng(1), 100).unwrap_err();
        assert!(matches!(err, SamplingError::SamplingExhausted { .. }));
        assert_eq!(w.object(&big).unwrap().pose, Pose::from_xyz(-2.0, 2.0, 0.5));
    }

    #[test]
    fn unsupported_samplers() {
        let (mut w, book) = book_on_table();
        for s in [
            format!("NextTo({book}, table_1)=true"),
            format!("InContactWith({book}, table_1)=true"),
            format!("OnTopOf({book}, table_1)=false"),
            format!("InHandOfAgent({book})=true"),
        ] {
            assert!(matches!(sample(&mut w, &e(&s), &mut rng(0), 10), Err(SamplingError::UnsupportedSampler(_))), "{s}");
        }
    }

    #[test]
    fn frozen_changes_only_temperature() {
        let mut w = world_with_table();
        let m = w.add_object("milk_carton", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        let mut before = w.to_scene();
        sample(&mut w, &e(&format!("Frozen({m})=true")), &mut rng(2), 100).unwrap();
        let t = w.object(&m).unwrap().temperature;
        assert!((-50.0..=-10.0).contains(&t));
        let mut after = w.to_scene();
        for s in [&mut before, &mut after] {
            for o in &mut s.objects {
                if let Some(st) = &mut o.state {
                    st.temperature = None;
                }
            }
        }
        assert_eq!(before.to_json(), after.to_json());
    }

    #[test]
    fn cooked_false_clamps_below_both() {
        let mut w = world_with_table();
        let f = w.add_object("fish_fillet", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        w.object_mut(&f).unwrap().max_temperature = 300.0;
        sample(&mut w, &e(&format!("Cooked({f})=false")), &mut rng(0), 1).unwrap();
        let tc = w.category_of(&f).unwrap().t_cooked().unwrap();
        assert_eq!(w.object(&f).unwrap().max_temperature, tc - 1.0);
        assert!(!evaluate(&w, &e(&format!("Burnt({f})"))).unwrap());
        w.object_mut(&f).unwrap().max_temperature = 300.0;
        sample(&mut w, &e(&format!("Cooked({f})=true")), &mut rng(0), 1).unwrap();
        assert!(evaluate(&w, &e(&format!("Cooked({f})"))).unwrap());
    }

    #[test]
    fn dust_sampling_places_twenty_on_surfaces() {
        let mut w = world_with_table();
        let s = w.add_object("shelf_plank", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        sample(&mut w, &e(&format!("Dusty({s})=true")), &mut rng(7), 100).unwrap();
        let o = w.object(&s).unwrap();
        assert_eq!(o.dust.iter().filter(|p| p.active).count(), 20);
        assert_eq!(o.dust_level(), 1.0);
        let model = w.model_of(&s).unwrap();
        for p in &o.dust {
            let g = &model.link(&p.link).unwrap().geometry;
            assert!(g.surface_distance_local(&p.local_point).abs() <= 1e-4);
        }
        sample(&mut w, &e(&format!("Dusty({s})=false")), &mut rng(7), 100).unwrap();
        assert!(!evaluate(&w, &e(&format!("Dusty({s})"))).unwrap());
        assert!(sample_particles(&mut w, &s, ParticleKind::Stain, 0, &mut rng(1)).unwrap().is_empty());
        assert!(!evaluate(&w, &e(&format!("Stained({s})"))).unwrap());
    }

    #[test]
    fn thin_wall_gets_side_particles() {
        let mut w = world_with_table();
        let wall = w.add_object("panel_thin", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        let ids = sample_particles(&mut w, &wall, ParticleKind::Dust, 20, &mut rng(3)).unwrap();
        assert_eq!(ids.len(), 20);
        let he = match &w.model_of(&wall).unwrap().links[0].geometry {
            crate::geometry::Geometry::Box { half_extents } => *half_extents,
            _ => unreachable!(),
        };
        let on_sides = w
            .object(&wall)
            .unwrap()
            .dust
            .iter()
            .filter(|p| (p.local_point.x.abs() - he.x).abs() < 1e-6 || (p.local_point.y.abs() - he.y).abs() < 1e-6)
            .count();
        assert!(on_sides > 0);
    }

    #[test]
    fn slicing_sampler() {
        let mut w = world_with_table();
        let f = w.add_object("apple_red", Pose::from_xyz(2.0, 2.0, 0.5)).unwrap();
        assert!(sample(&mut w, &e(&format!("Sliced({f})=false")), &mut rng(0), 1).is_ok());
        sample(&mut w, &e(&format!("Sliced({f})=true")), &mut rng(0), 1).unwrap();
        assert!(evaluate(&w, &e(&format!("Sliced({f})"))).unwrap());
        assert!(matches!(sample(&mut w, &e(&format!("Sliced({f})=false")), &mut rng(0), 1), Err(SamplingError::Unsatisfiable(_))));
    }

    #[test]
    fn conditions_parse_with_line_numbers() {
        let text = "# setup\nCooked(meat_1)=false\n\nBogus(x)=true\n";
        let err = parse_conditions(text).unwrap_err();
        assert_eq!(err.line, 4);
        let ok = parse_conditions("# c\nSoaked(t)=true\n").unwrap();
        assert_eq!(ok[0].0, 2);
    }
}
