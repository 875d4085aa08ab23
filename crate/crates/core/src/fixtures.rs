//! Small ready-made worlds shared by tests, examples and benchmarks.

use std::sync::{Arc, OnceLock};

use crate::geometry::{Aabb, Pose, Vec3};
use crate::taxonomy::Taxonomy;
use crate::world::{Grasp, World};

/// The bundled taxonomy, parsed once.
pub fn tax() -> Arc<Taxonomy> {
    static TAX: OnceLock<Arc<Taxonomy>> = OnceLock::new();
    TAX.get_or_init(|| Arc::new(Taxonomy::builtin())).clone()
}

/// A 10 m square kitchen with `table_1` resting on the floor at the origin.
pub fn world_with_table() -> World {
    let mut w = World::empty(tax(), 5.0);
    let t = w.add_object("table_plain", Pose::from_xyz(0.0, 0.0, 1.0)).expect("model exists");
    w.settle(&t).expect("floor below");
    w
}

/// A hardcover book resting at the middle of the table.
pub fn book_on_table() -> (World, String) {
    let mut w = world_with_table();
    let b = w.add_object("book_hardcover", Pose::from_xyz(0.0, 0.0, 1.0)).expect("model exists");
    w.settle(&b).expect("table below");
    (w, b)
}

/// Puts the hand's palm just above the top face of `id`, palm down.
pub fn hand_above(w: &mut World, hand: usize, id: &str) {
    let bb = w.object_aabb(id).expect("live object");
    let c = bb.center();
    let hz = w.config.hand_half_extents.z;
    w.agent.hands[hand].pose = Pose::from_xyz(c.x, c.y, bb.max.z + hz + 1e-5);
}

/// Puts the hand's palm on the top face of a box.
pub fn touch_hand_to(w: &mut World, hand: usize, target: &Aabb) {
    let c = target.center();
    let hz = w.config.hand_half_extents.z;
    w.agent.hands[hand].pose = Pose::from_xyz(c.x, c.y, target.max.z + hz);
}

pub fn stove_only() -> (World, String) {
    let mut w = World::empty(tax(), 4.0);
    let s = w.add_object("stove_basic", Pose::from_xyz(1.0, 0.0, 1.0)).expect("model exists");
    w.settle(&s).expect("floor below");
    (w, s)
}

/// Meat resting on the burner of a stove (stove off).
pub fn meat_on_stove() -> (World, String, String) {
    let (mut w, s) = stove_only();
    let top = w.object_aabb(&s).expect("live").max.z;
    let m = w.add_object("meat_steak", Pose::from_xyz(1.0, 0.0, top + 0.2)).expect("model exists");
    w.settle(&m).expect("stove below");
    (w, m, s)
}

/// A sink on the floor with a faucet whose nozzle hangs over the basin. The
/// faucet starts off.
pub fn sink_scene() -> (World, String, String) {
    let mut w = World::empty(tax(), 4.0);
    let sink = w.add_object("sink_basin", Pose::from_xyz(1.0, 0.0, 1.0)).expect("model exists");
    w.settle(&sink).expect("floor below");
    let top = w.object_aabb(&sink).expect("live").max.z;
    let faucet = w.add_object("faucet_basic", Pose::from_xyz(0.75, 0.0, 1.0)).expect("model exists");
    let fb = w.object_aabb(&faucet).expect("live");
    let mut p = w.object(&faucet).expect("live").pose;
    p.position.z += top + 0.3 - fb.min.z;
    w.set_pose(&faucet, p).expect("live");
    (w, faucet, sink)
}

/// An apple on the table with a knife, held by hand 0, resting its edge on
/// the apple's top face.
pub fn knife_over_fruit() -> (World, String, String) {
    let mut w = world_with_table();
    let fruit = w.add_object("apple_red", Pose::from_xyz(0.0, 0.0, 1.0)).expect("model exists");
    w.settle(&fruit).expect("table below");
    let top = w.object_aabb(&fruit).expect("live").max.z;
    let knife = w.add_object("knife_chef", Pose::from_xyz(-0.06, 0.0, top + 0.02)).expect("model exists");
    let hz = w.config.hand_half_extents.z;
    let hand = Pose::from_xyz(-0.11, 0.0, top + 0.04 + hz);
    w.agent.hands[0].pose = hand;
    let offset = hand.inverse().compose(&w.object(&knife).expect("live").pose);
    w.agent.hands[0].trigger = 1.0;
    w.agent.hands[0].grasp = Some(Grasp { object: knife.clone(), offset });
    (w, knife, fruit)
}

/// Vector helper for tests written against plain tuples.
pub fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}
