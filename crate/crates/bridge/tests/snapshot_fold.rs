use oikos_bridge::snapshot::{apply, diff, Hex, Snapshot};
use oikos_core::fixtures::tax;
use oikos_core::runtime::policy::{Policy, RandomPolicy};
use oikos_core::runtime::{Session, TaskSpec};
use proptest::prelude::*;

/// Folds the delta stream of a random run; returns how many deltas were non-empty.
fn fold_run(task: &str, seed: u64, steps: usize) -> usize {
    let task = TaskSpec::bundled(task).unwrap();
    let scene = task.scene(None).unwrap();
    let mut s = Session::new(&scene, tax(), &task, seed).unwrap();
    let mut policy = RandomPolicy::new(seed ^ 0x5eed);
    let start = Snapshot::of(s.world(), 0);
    let mut prev = start.clone();
    let mut folded = start;
    let mut nonempty = 0;
    for _ in 0..steps {
        if s.done() {
            break;
        }
        let r = s.step(&policy.act(s.world())).unwrap();
        let cur = Snapshot::of(s.world(), r.step_index);
        // Deltas travel as JSON; fold the decoded copy.
        let wire = serde_json::to_string(&diff(&prev, &cur, r.events)).unwrap();
        let d = serde_json::from_str(&wire).unwrap();
        folded = apply(&folded, &d).unwrap();
        nonempty += !d.is_empty() as usize;
        prev = cur;
    }
    assert_eq!(folded, prev);
    assert_eq!(folded.digest(), prev.digest());
    assert_eq!(folded.world_digest, s.world().digest_hex());
    nonempty
}

#[test]
fn fifty_random_steps_fold_to_the_final_snapshot() {
    for (task, seed) in [("cooking_meat", 1), ("soaking_towel", 2), ("cleaning_stained_shelf", 3), ("bimanual_pick_and_place", 4)] {
        assert!(fold_run(task, seed, 50) > 0);
    }
}

#[test]
fn folding_across_a_slice_adds_and_removes_objects() {
    use oikos_core::fixtures::knife_over_fruit;
    use oikos_core::states::step_states;
    use rand::SeedableRng;
    let (mut w, _, fruit) = knife_over_fruit();
    let a = Snapshot::of(&w, 0);
    w.agent.hands[0].press_force = 12.0;
    step_states(&mut w, 1.0 / 30.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    let b = Snapshot::of(&w, 1);
    let d = diff(&a, &b, vec![]);
    assert_eq!(d.removed, vec![fruit]);
    assert_eq!(d.added.len(), 2);
    assert_eq!(apply(&a, &d).unwrap(), b);
}

#[test]
fn droplet_and_particle_changes_fold() {
    // The soaking scene emits droplets as soon as the faucet runs.
    assert!(fold_run("soaking_towel", 11, 120) > 0);
}

proptest! {
    #[test]
    fn hex_floats_round_trip(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        let s = serde_json::to_string(&Hex(x)).unwrap();
        let back: Hex = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back.0.to_bits(), bits);
    }

    #[test]
    fn random_runs_fold(seed in 0u64..1000, steps in 1usize..40) {
        fold_run("cooking_meat", seed, steps);
    }
}
