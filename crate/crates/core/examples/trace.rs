use oikos_core::fixtures::tax;
use oikos_core::runtime::policy::{scripted, Policy};
use oikos_core::runtime::{Session, TaskSpec};

fn main() {
    let name = std::env::args().nth(1).unwrap();
    let every: u64 = std::env::args().nth(2).map_or(10, |s| s.parse().unwrap());
    let task = TaskSpec::bundled(&name).unwrap();
    let scene = task.scene(None).unwrap();
    let mut s = Session::new(&scene, tax(), &task, 1).unwrap();
    let mut p = scripted(&name).unwrap();
    while !s.done() {
        let a = p.act(s.world());
        let r = s.step(&a).unwrap();
        if r.step_index % every == 0 || !r.grasps.is_empty() || !r.slices.is_empty() || !r.events.is_empty() {
            let w = s.world();
            let h: Vec<String> = w.agent.hands.iter().map(|h| format!("{:.4?} g={:?}", h.pose.position.as_slice(), h.grasp.as_ref().map(|g| &g.object))).collect();
            println!("{} phase={} {:?} {:?} {:?} {:?}", r.step_index, p.phase_index(), h, a, r.grasps, r.events);
        }
    }
    println!("success={}", s.success());
}
