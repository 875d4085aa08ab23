//! Agents that produce actions: phase scripts for the shipped tasks and a
//! seeded random policy for stress tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionCommand, ACTION_DT};
use crate::geometry::Vec3;
use crate::world::{ParticleKind, World};

pub trait Policy: Send {
    fn phase_index(&self) -> usize {
        0
    }
    fn act(&mut self, world: &World) -> Vec<ActionCommand>;
}

type TargetFn = Box<dyn Fn(&World) -> Vec<(usize, Vec3)> + Send>;
type SeekFn = Box<dyn Fn(&World) -> Option<Vec<(usize, Vec3)>> + Send>;
type CondFn = Box<dyn Fn(&World) -> bool + Send>;

pub enum Phase {
    /// Drive hands to targets computed when the phase starts. A hand that
    /// stops making progress (blocked by contact) counts as arrived.
    Move(TargetFn),
    /// Like `Move`, but asks for a fresh target after each arrival until the
    /// function returns `None` or the visit budget runs out.
    Seek(SeekFn, usize),
    Trigger(Vec<(usize, f64)>),
    /// Push down with a declared force for a number of steps.
    Press { hand: usize, force: f64, steps: u64 },
    WaitUntil(CondFn, u64),
    Idle,
}

const SPEED: f64 = 0.6;
const ARRIVED: f64 = 1e-5;

pub struct Script {
    phases: Vec<Phase>,
    idx: usize,
    targets: Option<Vec<(usize, Vec3)>>,
    last: Vec<(usize, Vec3)>,
    stalls: Vec<u32>,
    counter: u64,
    visits: usize,
}

impl Script {
    pub fn new(mut phases: Vec<Phase>) -> Self {
        phases.push(Phase::Idle);
        Self { phases, idx: 0, targets: None, last: Vec::new(), stalls: Vec::new(), counter: 0, visits: 0 }
    }

    pub fn finished(&self) -> bool {
        matches!(self.phases[self.idx], Phase::Idle)
    }

    fn advance(&mut self) {
        self.idx = (self.idx + 1).min(self.phases.len() - 1);
        self.targets = None;
        self.last.clear();
        self.counter = 0;
        self.visits = 0;
    }

    fn set_targets(&mut self, t: Vec<(usize, Vec3)>) {
        self.stalls = vec![0; t.len()];
        self.last.clear();
        self.targets = Some(t);
    }

    /// Commands toward the current targets, or `None` when all have arrived.
    fn drive(&mut self, world: &World) -> Option<Vec<ActionCommand>> {
        let targets = self.targets.clone().expect("targets set");
        for (k, (hand, _)) in targets.iter().enumerate() {
            let pos = world.agent.hands[*hand].pose.position;
            if let Some((_, prev)) = self.last.iter().find(|(h, _)| h == hand) {
                if (pos - prev).norm() < 1e-7 {
                    self.stalls[k] += 1;
                } else {
                    self.stalls[k] = 0;
                }
            }
        }
        self.last.clear();
        let mut cmds = Vec::new();
        for (k, (hand, target)) in targets.iter().enumerate() {
            let pos = world.agent.hands[*hand].pose.position;
            let d = target - pos;
            if d.norm() < ARRIVED || self.stalls[k] >= 2 {
                continue;
            }
            let mut v = d / ACTION_DT;
            if v.norm() > SPEED {
                v *= SPEED / v.norm();
            }
            self.last.push((*hand, pos));
            cmds.push(ActionCommand::move_hand(*hand, v));
        }
        (!cmds.is_empty()).then_some(cmds)
    }
}

impl Policy for Script {
    fn phase_index(&self) -> usize {
        self.idx
    }

    fn act(&mut self, world: &World) -> Vec<ActionCommand> {
        loop {
            match &self.phases[self.idx] {
                Phase::Move(f) => {
                    if self.targets.is_none() {
                        let t = f(world);
                        self.set_targets(t);
                    }
                    match self.drive(world) {
                        Some(c) => return c,
                        None => self.advance(),
                    }
                }
                Phase::Seek(f, budget) => {
                    if self.targets.is_none() {
                        let budget = *budget;
                        match f(world) {
                            Some(t) if self.visits < budget => {
                                self.visits += 1;
                                self.set_targets(t);
                            }
                            _ => {
                                self.advance();
                                continue;
                            }
                        }
                    }
                    match self.drive(world) {
                        Some(c) => return c,
                        None => self.targets = None,
                    }
                }
                Phase::Trigger(list) => {
                    let cmds = list.iter().map(|&(hand, fraction)| ActionCommand::SetTrigger { hand, fraction }).collect();
                    self.advance();
                    return cmds;
                }
                Phase::Press { hand, force, steps } => {
                    let cmd = ActionCommand::MoveHand {
                        hand: *hand,
                        linear: Vec3::new(0.0, 0.0, -0.05),
                        angular: Vec3::zeros(),
                        press_force: *force,
                    };
                    self.counter += 1;
                    if self.counter >= *steps {
                        self.advance();
                    }
                    return vec![cmd];
                }
                Phase::WaitUntil(cond, max) => {
                    if cond(world) || self.counter >= *max {
                        self.advance();
                        continue;
                    }
                    self.counter += 1;
                    return vec![ActionCommand::Noop];
                }
                Phase::Idle => return vec![ActionCommand::Noop],
            }
        }
    }
}

// -- helpers for the shipped scripts -----------------------------------------

fn hand_half_z(w: &World) -> f64 {
    w.config.hand_half_extents.z
}

fn center(w: &World, id: &str) -> Vec3 {
    w.object_aabb(id).map(|a| a.center()).unwrap_or_else(Vec3::zeros)
}

fn top(w: &World, id: &str) -> f64 {
    w.object_aabb(id).map_or(0.0, |a| a.max.z)
}

fn hand_pos(w: &World, hand: usize) -> Vec3 {
    w.agent.hands[hand].pose.position
}

/// Hover above an object, come down onto it and close the hand.
fn pick(hand: usize, id: &'static str, dx: f64) -> Vec<Phase> {
    vec![
        Phase::Move(Box::new(move |w| {
            let c = center(w, id);
            vec![(hand, Vec3::new(c.x + dx, c.y, top(w, id) + hand_half_z(w) + 0.1))]
        })),
        Phase::Move(Box::new(move |w| {
            let c = center(w, id);
            vec![(hand, Vec3::new(c.x + dx, c.y, top(w, id) - 0.05))]
        })),
        Phase::Trigger(vec![(hand, 1.0)]),
    ]
}

fn lift_to(hand: usize, z: f64) -> Phase {
    Phase::Move(Box::new(move |w| {
        let p = hand_pos(w, hand);
        vec![(hand, Vec3::new(p.x, p.y, z))]
    }))
}

fn grasping_book() -> Script {
    let mut p = pick(0, "book_1", 0.0);
    p.push(Phase::Move(Box::new(|w| vec![(0, hand_pos(w, 0) + Vec3::new(0.0, 0.0, 0.3))])));
    Script::new(p)
}

fn soaking_towel() -> Script {
    let mut p = pick(0, "towel_1", 0.0);
    p.push(lift_to(0, 0.95));
    // Hold the towel under the nozzle, offset so its edge clears the faucet body.
    p.push(Phase::Move(Box::new(|w| {
        let n = w
            .virtual_link("faucet_1", crate::taxonomy::VirtualLinkKind::DropletSourceLink)
            .map(|l| l.aabb.center())
            .unwrap_or_else(Vec3::zeros);
        vec![(0, Vec3::new(n.x + 0.1, n.y, 0.95))]
    })));
    p.push(Phase::WaitUntil(
        Box::new(|w| w.object("towel_1").is_some_and(|o| o.wetness as f64 >= w.category_of("towel_1").map_or(1.0, |c| c.w_soaked()))),
        400,
    ));
    Script::new(p)
}

fn cleaning_stained_shelf() -> Script {
    const SHELF: &str = "shelf_1";
    const RAG: &str = "rag_1";
    let mut p = pick(0, RAG, 0.0);
    p.push(lift_to(0, 0.9));
    // Carry the rag in a plane just above the shelf top.
    let hover = |w: &World| top(w, SHELF) + 0.002 + (top(w, RAG) - w.object_aabb(RAG).map_or(0.0, |a| a.min.z)) + hand_half_z(w);
    p.push(Phase::Move(Box::new(|w| {
        let c = center(w, SHELF);
        vec![(0, Vec3::new(c.x, c.y, 0.9))]
    })));
    p.push(Phase::Move(Box::new(move |w| {
        let c = center(w, SHELF);
        vec![(0, Vec3::new(c.x, c.y, hover(w)))]
    })));
    p.push(Phase::Seek(
        Box::new(move |w| {
            let o = w.object(SHELF)?;
            let s = o.particles(ParticleKind::Stain).iter().find(|s| s.active)?;
            let at = w.particle_position(SHELF, s)?;
            Some(vec![(0, Vec3::new(at.x, at.y, hover(w)))])
        }),
        200,
    ));
    Script::new(p)
}

fn cooking_meat() -> Script {
    let mut p = pick(0, "meat_1", 0.0);
    p.push(lift_to(0, 1.05));
    p.push(Phase::Move(Box::new(|w| {
        let b = w
            .virtual_link("stove_1", crate::taxonomy::VirtualLinkKind::HeatSourceSinkLink)
            .map(|l| l.aabb.center())
            .unwrap_or_else(Vec3::zeros);
        vec![(0, Vec3::new(b.x, b.y, 1.05))]
    })));
    p.push(Phase::Move(Box::new(|w| vec![(0, hand_pos(w, 0) - Vec3::new(0.0, 0.0, 0.3))])));
    p.push(Phase::Trigger(vec![(0, 0.0)]));
    p.push(lift_to(0, 1.2));
    Script::new(p)
}

fn slicing_fruit() -> Script {
    // Grab the knife by its handle, which sits 0.05 behind the model origin.
    let mut p = pick(0, "knife_1", 0.0);
    p.splice(
        0..2,
        [
            Phase::Move(Box::new(|w| {
                let h = handle(w);
                vec![(0, Vec3::new(h.x, h.y, top(w, "knife_1") + hand_half_z(w) + 0.1))]
            })),
            Phase::Move(Box::new(|w| {
                let h = handle(w);
                vec![(0, Vec3::new(h.x, h.y, top(w, "knife_1") - 0.05))]
            })),
        ],
    );
    p.push(lift_to(0, 0.95));
    p.push(Phase::Move(Box::new(|w| {
        let a = center(w, "apple_1");
        let k = w.object("knife_1").map(|o| o.pose).unwrap_or_default();
        let edge = w
            .virtual_link("knife_1", crate::taxonomy::VirtualLinkKind::SlicingLink)
            .map(|l| l.aabb.center())
            .unwrap_or(k.position);
        let off = hand_pos(w, 0) - edge;
        vec![(0, Vec3::new(a.x + off.x, a.y + off.y, 0.95))]
    })));
    p.push(Phase::Move(Box::new(|w| vec![(0, hand_pos(w, 0) - Vec3::new(0.0, 0.0, 0.3))])));
    p.push(Phase::Press { hand: 0, force: 12.0, steps: 5 });
    Script::new(p)
}

fn handle(w: &World) -> Vec3 {
    w.placed_links("knife_1")
        .iter()
        .find(|l| l.link.id == "handle")
        .map(|l| l.aabb.center())
        .unwrap_or_else(|| center(w, "knife_1"))
}

fn bimanual_pick_and_place() -> Script {
    const C: &str = "cauldron_1";
    let side = |w: &World, sign: f64| {
        let a = w.object_aabb(C).expect("cauldron");
        let c = a.center();
        // Hands are turned so their palms face the cauldron along x.
        Vec3::new(c.x + sign * (a.half_extents().x + 0.05), c.y, c.z)
    };
    let p = vec![
        Phase::Move(Box::new(move |w| vec![(0, side(w, -1.0)), (1, side(w, 1.0))])),
        Phase::Move(Box::new(move |w| {
            let c = center(w, C);
            vec![(0, Vec3::new(c.x, c.y, c.z)), (1, Vec3::new(c.x, c.y, c.z))]
        })),
        Phase::Trigger(vec![(0, 1.0), (1, 1.0)]),
        Phase::Move(Box::new(|w| vec![(0, hand_pos(w, 0) + Vec3::new(0.0, 0.0, 0.85)), (1, hand_pos(w, 1) + Vec3::new(0.0, 0.0, 0.85))])),
        Phase::Move(Box::new(|w| {
            let dx = center(w, "table_1").x - center(w, C).x;
            vec![(0, hand_pos(w, 0) + Vec3::new(dx, 0.0, 0.0)), (1, hand_pos(w, 1) + Vec3::new(dx, 0.0, 0.0))]
        })),
        Phase::Move(Box::new(|w| {
            let drop = w.object_aabb(C).map_or(0.0, |a| a.min.z) - top(w, "table_1");
            let d = Vec3::new(0.0, 0.0, drop);
            vec![(0, hand_pos(w, 0) - d), (1, hand_pos(w, 1) - d)]
        })),
        Phase::Trigger(vec![(0, 0.0), (1, 0.0)]),
        Phase::Move(Box::new(|w| vec![(0, hand_pos(w, 0) - Vec3::new(0.2, 0.0, 0.0)), (1, hand_pos(w, 1) + Vec3::new(0.2, 0.0, 0.0))])),
    ];
    Script::new(p)
}

/// The scripted policy that solves a shipped task.
pub fn scripted(name: &str) -> Option<Script> {
    Some(match name {
        "grasping_book" => grasping_book(),
        "soaking_towel" => soaking_towel(),
        "cleaning_stained_shelf" => cleaning_stained_shelf(),
        "cooking_meat" => cooking_meat(),
        "slicing_fruit" => slicing_fruit(),
        "bimanual_pick_and_place" => bimanual_pick_and_place(),
        _ => return None,
    })
}

/// Uniform random commands from a seeded generator.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, world: &World) -> Vec<ActionCommand> {
        let r = &mut self.rng;
        let mut out = Vec::new();
        for hand in 0..world.agent.hands.len() {
            let roll: f64 = r.gen();
            if roll < 0.65 {
                let mut v = || Vec3::new(r.gen_range(-0.6..0.6), r.gen_range(-0.6..0.6), r.gen_range(-0.6..0.6));
                let linear = v();
                let angular = v();
                let press_force = if r.gen_bool(0.2) { r.gen_range(0.0..20.0) } else { 0.0 };
                out.push(ActionCommand::MoveHand { hand, linear, angular, press_force });
            } else if roll < 0.85 {
                out.push(ActionCommand::SetTrigger { hand, fraction: r.gen_range(0.0..=1.0) });
            }
        }
        if r.gen_bool(0.02) {
            if let Some(room) = world.rooms().first() {
                let (lo, hi) = crate::geometry::polygon_bounds(&room.polygon());
                let (x, y) = (r.gen_range(lo.x..hi.x), r.gen_range(lo.y..hi.y));
                if room.contains_xy(x, y) {
                    out.push(ActionCommand::TeleportBase { x, y });
                }
            }
        }
        if out.is_empty() {
            out.push(ActionCommand::Noop);
        }
        out
    }
}
