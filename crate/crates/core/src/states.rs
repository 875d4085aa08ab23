//! Per-step update rules for temperature, droplets, cleaning, toggling and
//! slicing. The pipeline order is fixed: droplets, cleaning, toggle, slicing,
//! temperature.

use rand::Rng;
use serde::Serialize;

use crate::geometry::{overlap, raycast, Aabb, Collider, Geometry, Pose, Ray, Vec3};
use crate::predicates;
use crate::taxonomy::{AbilityFlag, DropletKind, Link, ObjectModel, VirtualLinkKind};
use crate::world::{DropletStatus, Particle, World, WorldError};

/// One temperature update toward `target`. The additive form moves a
/// fraction `min(dt*rate, 1)` of the gap and never overshoots; the literal
/// form is the multiplicative recurrence, kept for comparison.
pub fn temperature_update(current: f64, target: f64, rate: f64, dt: f64, literal: bool) -> f64 {
    if literal {
        return current * (1.0 + dt * rate * (target - current));
    }
    let k = (dt * rate).min(1.0);
    if k >= 1.0 || current == target {
        return target;
    }
    let next = current + k * (target - current);
    if (next - target).signum() != (current - target).signum() && next != target {
        return target;
    }
    if next == current {
        // Gap below rounding resolution: advance one ulp so the approach stays strict.
        return step_toward(current, target);
    }
    next
}

fn step_toward(x: f64, target: f64) -> f64 {
    if x == target {
        return x;
    }
    let bits = x.to_bits();
    let up = target > x;
    let next = if x == 0.0 {
        if up {
            f64::from_bits(1)
        } else {
            -f64::from_bits(1)
        }
    } else if (x > 0.0) == up {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    };
    next
}

pub fn step_temperature(world: &mut World, dt: f64) {
    let literal = world.config.multiplicative_temperature;
    let ambient = world.config.ambient_temperature;
    let ambient_rate = world.config.ambient_rate;
    let sources: Vec<(String, crate::taxonomy::HeatProfile)> = world
        .live_objects()
        .filter_map(|o| {
            let cat = world.category_of(&o.id).ok()?;
            let prof = cat.heat_profile.clone()?;
            (!prof.requires_toggled || o.toggled).then(|| (o.id.clone(), prof))
        })
        .collect();
    let targets: Vec<String> = world
        .live_objects()
        .filter(|o| world.category_of(&o.id).is_ok_and(|c| c.has_temperature()))
        .map(|o| o.id.clone())
        .collect();
    for id in targets {
        let mut t = world.object(&id).expect("live").temperature;
        let mut affected = false;
        for (sid, prof) in &sources {
            if *sid == id {
                continue;
            }
            let applies = match prof.mode {
                crate::taxonomy::HeatMode::Proximity => {
                    let (Some(a), Some(link)) =
                        (world.object_aabb(&id), world.virtual_link(sid, VirtualLinkKind::HeatSourceSinkLink))
                    else {
                        continue;
                    };
                    a.distance(&link.aabb) <= prof.radius.unwrap_or(0.0)
                }
                crate::taxonomy::HeatMode::Inside => predicates::inside_of(world, &id, sid),
            };
            if applies {
                t = temperature_update(t, prof.source_temp, prof.rate, dt, literal);
                affected = true;
            }
        }
        if !affected {
            t = temperature_update(t, ambient, ambient_rate, dt, literal);
        }
        let o = world.object_mut(&id).expect("live");
        o.temperature = t;
        o.max_temperature = o.max_temperature.max(t);
    }
}

// ---------------------------------------------------------------------------
// Droplets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DropKey<'a> {
    // Variant order is the tie-break priority.
    Sink,
    Receptacle(&'a str),
    Soak(&'a str),
    Solid,
}

fn receptacle_open(world: &World, id: &str) -> Option<(Pose, Geometry, bool)> {
    let link = world.virtual_link(id, VirtualLinkKind::ReceptacleLink)?;
    let upright = link.pose.tilt() <= world.config.pour_angle_deg.to_radians();
    Some((link.pose, link.link.geometry.clone(), upright))
}

pub fn step_droplets<R: Rng>(world: &mut World, dt: f64, rng: &mut R) {
    let radius = world.config.droplet_radius;
    let jitter = world.config.droplet_jitter;

    // Emission.
    let sources: Vec<(String, f64)> = world
        .live_objects()
        .filter_map(|o| {
            let cat = world.category_of(&o.id).ok()?;
            let p = cat.droplet_profile.as_ref()?;
            (p.kind == DropletKind::Source && (!p.requires_toggled || o.toggled))
                .then(|| (o.id.clone(), p.emit_rate.unwrap_or(0.0)))
        })
        .collect();
    for (id, rate) in sources {
        let Some(nozzle) = world.virtual_link(&id, VirtualLinkKind::DropletSourceLink).map(|l| l.aabb) else {
            continue;
        };
        let o = world.object_mut(&id).expect("live source");
        o.emit_accumulator += rate * dt;
        let n = o.emit_accumulator.floor();
        o.emit_accumulator -= n;
        let c = nozzle.center();
        for _ in 0..n as u64 {
            let dx = rng.gen_range(-jitter..=jitter);
            let dy = rng.gen_range(-jitter..=jitter);
            world.spawn_droplet(Vec3::new(c.x + dx, c.y + dy, nozzle.min.z - radius), Vec3::zeros());
        }
    }

    // Contained droplets follow their receptacle and pour out when tipped.
    let pour = world.config.pour_angle_deg.to_radians();
    for i in 0..world.droplets.len() {
        let DropletStatus::ContainedIn(c) = world.droplets[i].status.clone() else { continue };
        let Some(link) = world.live(&c).ok().and(world.virtual_link(&c, VirtualLinkKind::ReceptacleLink)) else {
            world.droplets[i].status = DropletStatus::Free;
            continue;
        };
        let pose = link.pose;
        let half = match &link.link.geometry {
            Geometry::Box { half_extents } => *half_extents,
            g => g.local_aabb().half_extents(),
        };
        if pose.tilt() > pour {
            let normal = pose.transform_vector(&Vec3::z());
            let opening = pose.transform_point(&Vec3::new(0.0, 0.0, half.z));
            let d = &mut world.droplets[i];
            d.position = opening + normal * (0.02 + radius);
            d.velocity = Vec3::zeros();
            d.status = DropletStatus::Free;
        } else {
            world.droplets[i].position = pose.position;
        }
    }

    // Ballistic motion of free droplets.
    let g = Vec3::new(0.0, 0.0, -world.config.gravity);
    let floor_limit = world.world_bounds().min.z - 1.0;
    let mut updates: Vec<(usize, Vec3, Vec3, DropletStatus)> = Vec::new();
    {
        let links: Vec<(DropKey, Geometry, Pose)> = collect_drop_targets(world);
        let colliders: Vec<Collider<DropKey>> =
            links.iter().map(|(k, geom, pose)| Collider { key: *k, geometry: geom, pose: *pose }).collect();
        for (i, d) in world.droplets.iter().enumerate() {
            if d.status != DropletStatus::Free {
                continue;
            }
            // Already inside a sink or an upright receptacle.
            if let Some(k) = colliders
                .iter()
                .filter(|c| matches!(c.key, DropKey::Sink | DropKey::Receptacle(_)))
                .find(|c| c.geometry.contains_point(&c.pose, &d.position, 0.0))
                .map(|c| c.key)
            {
                updates.push((i, d.position, Vec3::zeros(), terminal_status(k)));
                continue;
            }
            let v = d.velocity + g * dt;
            let disp = v * dt;
            let len = disp.norm();
            if len == 0.0 {
                updates.push((i, d.position, v, DropletStatus::Free));
                continue;
            }
            let ray = Ray::new(d.position, disp, len + radius).expect("non-zero displacement");
            let mut hits = raycast(&colliders, &ray);
            hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.key.cmp(&b.key)));
            let floor_hit = world
                .rooms()
                .iter()
                .filter_map(|r| {
                    if ray.direction.z >= 0.0 {
                        return None;
                    }
                    let t = (r.floor_z - ray.origin.z) / ray.direction.z;
                    let p = ray.at(t);
                    (t >= 0.0 && t <= ray.max_dist && r.contains_xy(p.x, p.y)).then_some(t)
                })
                .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
            let first = hits.first().map(|h| (h.distance, h.key, h.point));
            match (first, floor_hit) {
                (Some((dist, key, point)), f) if f.is_none_or(|ft| dist <= ft) => {
                    updates.push((i, point, Vec3::zeros(), terminal_status(key)));
                }
                (_, Some(ft)) => updates.push((i, ray.at(ft), Vec3::zeros(), DropletStatus::Destroyed)),
                _ => {
                    let p = d.position + disp;
                    let status = if p.z < floor_limit { DropletStatus::Destroyed } else { DropletStatus::Free };
                    updates.push((i, p, v, status));
                }
            }
        }
    }
    for (i, p, v, status) in updates {
        if let DropletStatus::Absorbed(o) = &status {
            if let Some(obj) = world.object_mut(o) {
                obj.wetness += 1;
            }
        }
        let d = &mut world.droplets[i];
        d.position = p;
        d.velocity = v;
        d.status = status;
    }

    // Terminal droplets leave the live set and go to the ledger.
    let mut kept = Vec::with_capacity(world.droplets.len());
    for d in std::mem::take(&mut world.droplets) {
        match d.status {
            DropletStatus::Absorbed(_) => world.ledger.absorbed += 1,
            DropletStatus::Destroyed => world.ledger.destroyed += 1,
            _ => kept.push(d),
        }
    }
    world.droplets = kept;
}

fn terminal_status(key: DropKey) -> DropletStatus {
    match key {
        DropKey::Sink | DropKey::Solid => DropletStatus::Destroyed,
        DropKey::Receptacle(o) => DropletStatus::ContainedIn(o.to_string()),
        DropKey::Soak(o) => DropletStatus::Absorbed(o.to_string()),
    }
}

fn collect_drop_targets(world: &World) -> Vec<(DropKey<'_>, Geometry, Pose)> {
    let mut out = Vec::new();
    for o in world.live_objects() {
        let Ok(cat) = world.category_of(&o.id) else { continue };
        let soak = cat.has(AbilityFlag::Soakable);
        for l in world.colliding_links(&o.id) {
            let key = if soak { DropKey::Soak(o.id.as_str()) } else { DropKey::Solid };
            out.push((key, l.link.geometry.clone(), l.pose));
        }
        if cat.has(AbilityFlag::DropletSink) {
            if let Some(l) = world.virtual_link(&o.id, VirtualLinkKind::DropletSinkLink) {
                out.push((DropKey::Sink, l.link.geometry.clone(), l.pose));
            }
        }
        if cat.has(AbilityFlag::Receptacle) {
            if let Some((pose, geom, true)) = receptacle_open(world, &o.id) {
                out.push((DropKey::Receptacle(o.id.as_str()), geom, pose));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

/// Deactivates particles within reach of a cleaning tool link. Stains need a
/// soaked tool. Returns the ids of removed particles.
pub fn step_cleaning(world: &mut World) -> Vec<u64> {
    let clean_r = world.config.clean_radius;
    let tools: Vec<(String, Geometry, Pose, bool)> = world
        .live_objects()
        .filter_map(|o| {
            let cat = world.category_of(&o.id).ok()?;
            if !cat.has(AbilityFlag::CleaningTool) {
                return None;
            }
            let link = world.virtual_link(&o.id, VirtualLinkKind::CleaningToolLink)?;
            let soaked = cat.has(AbilityFlag::Soakable) && o.wetness as f64 >= cat.w_soaked();
            Some((o.id.clone(), link.link.geometry.clone(), link.pose, soaked))
        })
        .collect();
    if tools.is_empty() {
        return Vec::new();
    }
    let mut removed = Vec::new();
    let ids: Vec<String> = world
        .live_objects()
        .filter(|o| o.dust.iter().chain(&o.stains).any(|p| p.active))
        .map(|o| o.id.clone())
        .collect();
    for id in ids {
        let link_poses: Vec<(String, Pose)> =
            world.placed_links(&id).iter().map(|l| (l.link.id.clone(), l.pose)).collect();
        let o = world.object_mut(&id).expect("live");
        for p in o.dust.iter_mut().chain(o.stains.iter_mut()) {
            if !p.active {
                continue;
            }
            let Some((_, lp)) = link_poses.iter().find(|(l, _)| *l == p.link) else { continue };
            let point = lp.transform_point(&p.local_point);
            let stain = p.kind == crate::world::ParticleKind::Stain;
            let hit = tools.iter().any(|(tid, geom, pose, soaked)| {
                *tid != id && (!stain || *soaked) && geom.distance_to_point(pose, &point) <= clean_r
            });
            if hit {
                p.active = false;
                removed.push(p.id);
            }
        }
    }
    removed
}

// ---------------------------------------------------------------------------
// Toggling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToggleEvent {
    pub object: String,
    pub toggled: bool,
}

pub fn step_toggle(world: &mut World) -> Vec<ToggleEvent> {
    let hands: Vec<Aabb> = (0..world.agent.hands.len()).map(|i| world.hand_aabb(i)).collect();
    let mut events = Vec::new();
    let ids: Vec<String> = world
        .live_objects()
        .filter(|o| world.category_of(&o.id).is_ok_and(|c| c.has(AbilityFlag::Toggleable)))
        .map(|o| o.id.clone())
        .collect();
    for id in ids {
        let Some(link) = world.virtual_link(&id, VirtualLinkKind::TogglingLink).map(|l| l.aabb) else { continue };
        let touching = hands.iter().any(|h| overlap(h, &link).in_contact());
        let o = world.object_mut(&id).expect("live");
        if touching && !o.toggle_touching {
            o.toggled = !o.toggled;
            events.push(ToggleEvent { object: id.clone(), toggled: o.toggled });
        }
        o.toggle_touching = touching;
    }
    events
}

// ---------------------------------------------------------------------------
// Slicing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceEvent {
    pub whole: String,
    pub halves: [String; 2],
}

/// Slices every sliceable object touched by a slicing link with enough force.
pub fn step_slicing(world: &mut World) -> Vec<SliceEvent> {
    let knives: Vec<(String, Aabb, f64)> = world
        .live_objects()
        .filter(|o| world.category_of(&o.id).is_ok_and(|c| c.has(AbilityFlag::SlicingTool)))
        .filter_map(|o| {
            let link = world.virtual_link(&o.id, VirtualLinkKind::SlicingLink)?;
            let force = world
                .agent
                .hands
                .iter()
                .filter(|h| h.grasp.as_ref().is_some_and(|g| g.object == o.id))
                .map(|h| h.press_force)
                .fold(0.0, f64::max);
            Some((o.id.clone(), link.aabb, force))
        })
        .collect();
    let mut victims = Vec::new();
    for o in world.live_objects() {
        let Ok(cat) = world.category_of(&o.id) else { continue };
        if !cat.has(AbilityFlag::Sliceable) || o.sliced {
            continue;
        }
        let links = world.colliding_links(&o.id);
        let cut = knives.iter().any(|(kid, blade, force)| {
            *kid != o.id && *force >= cat.f_sliced() && links.iter().any(|l| overlap(blade, &l.aabb).in_contact())
        });
        if cut {
            victims.push(o.id.clone());
        }
    }
    victims.into_iter().filter_map(|id| slice_object(world, &id).ok()).collect()
}

fn project_to_box_surface(p: Vec3, half: Vec3) -> Vec3 {
    let mut q = Vec3::from_fn(|i, _| p[i].clamp(-half[i], half[i]));
    let inside = (0..3).all(|i| p[i].abs() < half[i]);
    if inside {
        let (axis, _) = (0..3)
            .map(|i| (i, half[i] - p[i].abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("three axes");
        q[axis] = if p[axis] >= 0.0 { half[axis] } else { -half[axis] };
    }
    q
}

/// Replaces a whole with two box halves split through the COM along the
/// longest horizontal extent. The whole is kept as a retired record.
pub fn slice_object(world: &mut World, id: &str) -> Result<SliceEvent, WorldError> {
    let whole = world.live(id)?.clone();
    let model = world.model_of(id)?.clone();
    let aabb = world.object_aabb(id).ok_or_else(|| WorldError::UnknownInstance(id.to_string()))?;
    let ext = aabb.extents();
    let axis = if ext.x >= ext.y { 0 } else { 1 };
    let mut cut = whole.com()[axis];
    if !(cut > aabb.min[axis] && cut < aabb.max[axis]) {
        cut = aabb.center()[axis];
    }
    let mut parts = [aabb, aabb];
    parts[0].max[axis] = cut;
    parts[1].min[axis] = cut;

    let particle_world = |list: &[Particle]| -> Vec<(Particle, Vec3)> {
        let placed = world.placed_links(id);
        list.iter()
            .filter_map(|p| {
                let l = placed.iter().find(|l| l.link.id == p.link)?;
                Some((p.clone(), l.pose.transform_point(&p.local_point)))
            })
            .collect()
    };
    let dust = particle_world(&whole.dust);
    let stains = particle_world(&whole.stains);

    for i in 0..world.agent.hands.len() {
        if world.agent.hands[i].grasp.as_ref().is_some_and(|g| g.object == id) {
            world.agent.hands[i].grasp = None;
        }
    }
    let total = aabb.volume();
    let mut names = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        let suffix = ["a", "b"][k];
        let half = part.half_extents();
        let model_id = format!("{}__half_{suffix}", whole.id);
        world.insert_derived_model(ObjectModel {
            id: model_id.clone(),
            category: model.category.clone(),
            links: vec![Link::fixed("body", Geometry::Box { half_extents: half }, Pose::identity())],
            mass: model.mass * part.volume() / total,
            stable_orientations: vec![crate::geometry::Quat::identity()],
            relevant_joints: Vec::new(),
            virtual_links: Default::default(),
        });
        let inst = format!("{}_part_{suffix}", whole.id);
        let pose = Pose::from_position(part.center());
        world.add_object_with_id(&inst, &model_id, pose)?;
        // Each particle goes to the half on its side of the cut.
        let relink = |w: &mut World, src: &[(Particle, Vec3)]| -> Vec<Particle> {
            src.iter()
                .filter(|(_, wp)| (wp[axis] < cut) == (k == 0))
                .map(|(p, wp)| Particle {
                    id: w.fresh_id(),
                    kind: p.kind,
                    link: "body".into(),
                    local_point: project_to_box_surface(pose.inverse_transform_point(wp), half),
                    active: p.active,
                })
                .collect()
        };
        let d = relink(world, &dust);
        let s = relink(world, &stains);
        let o = world.object_mut(&inst).expect("just added");
        o.temperature = whole.temperature;
        o.max_temperature = whole.max_temperature;
        o.wetness = whole.wetness;
        o.dust = d;
        o.stains = s;
        o.initial_dust = if whole.initial_dust == 0 { 0 } else { o.dust.len() as u32 };
        o.initial_stains = if whole.initial_stains == 0 { 0 } else { o.stains.len() as u32 };
        o.toggled = whole.toggled;
        o.sliced = true;
        names.push(inst);
    }
    let w = world.object_mut(id).expect("whole");
    w.sliced = true;
    w.retired = true;
    world.disturbed.remove(id);
    Ok(SliceEvent { whole: id.to_string(), halves: [names[0].clone(), names[1].clone()] })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StateEvents {
    pub cleaned: Vec<u64>,
    pub toggles: Vec<ToggleEvent>,
    pub slices: Vec<SliceEvent>,
}

/// Runs the extended-state pipeline once.
pub fn step_states<R: Rng>(world: &mut World, dt: f64, rng: &mut R) -> StateEvents {
    step_droplets(world, dt, rng);
    let cleaned = step_cleaning(world);
    let toggles = step_toggle(world);
    let slices = step_slicing(world);
    step_temperature(world, dt);
    StateEvents { cleaned, toggles, slices }
}

/// Checks the half-volume identity used by tests and the acceptance suite.
pub fn halves_volume(world: &World, event: &SliceEvent) -> f64 {
    event
        .halves
        .iter()
        .filter_map(|h| world.object_aabb(h))
        .map(|a| a.volume())
        .sum()
}
