//! Rule-based scene population: scatter small objects into containers of a
//! furnished scene.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicates::{evaluate, PredicateExpr, PredicateName};
use crate::sampling::{sample, DEFAULT_MAX_ATTEMPTS};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleRelation {
    OnTopOf,
    InsideOf,
}

impl RuleRelation {
    fn predicate(self) -> PredicateName {
        match self {
            RuleRelation::OnTopOf => PredicateName::OnTopOf,
            RuleRelation::InsideOf => PredicateName::InsideOf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationRule {
    pub object_category: String,
    pub relation: RuleRelation,
    pub container_category: String,
    pub room_kind: String,
    pub probability: f64,
    /// Inclusive range of instances per activated container.
    pub count: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulateError {
    #[error("rules reference unknown category `{0}`")]
    UnknownCategoryInRules(String),
    #[error("rule {index}: {reason}")]
    InvalidRule { index: usize, reason: String },
    #[error("malformed rules file: {0}")]
    Parse(String),
}

pub fn parse_rules(bytes: &[u8]) -> Result<Vec<PopulationRule>, PopulateError> {
    serde_json::from_slice(bytes).map_err(|e| PopulateError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    pub rule: usize,
    pub object: String,
    pub container: String,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skip {
    pub rule: usize,
    pub container: String,
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RuleReport {
    pub candidates: usize,
    pub activated: usize,
    pub placed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PopulationReport {
    /// Rule indices in the order they were applied.
    pub order: Vec<usize>,
    pub rules: Vec<RuleReport>,
    pub placements: Vec<Placement>,
    pub skips: Vec<Skip>,
    pub object_delta: i64,
    /// Placements whose predicate no longer held after the final settle.
    pub post_check_failures: Vec<String>,
}

fn validate(world: &World, rules: &[PopulationRule]) -> Result<(), PopulateError> {
    let tax = world.taxonomy();
    for (i, r) in rules.iter().enumerate() {
        for c in [&r.object_category, &r.container_category] {
            if !tax.has_category(c) {
                return Err(PopulateError::UnknownCategoryInRules(c.clone()));
            }
        }
        if !(0.0..=1.0).contains(&r.probability) {
            return Err(PopulateError::InvalidRule { index: i, reason: format!("probability {} outside [0,1]", r.probability) });
        }
        if r.count[0] > r.count[1] {
            return Err(PopulateError::InvalidRule { index: i, reason: "count range is reversed".into() });
        }
        if tax.models_of(&r.object_category).is_empty() {
            return Err(PopulateError::InvalidRule { index: i, reason: format!("no models of `{}`", r.object_category) });
        }
    }
    Ok(())
}

/// Applies the rules in a shuffled order. Each container of the rule's
/// category in a room of the rule's kind is activated with the rule
/// probability and then receives a uniform number of new instances.
pub fn populate<R: Rng>(world: &mut World, rules: &[PopulationRule], rng: &mut R) -> Result<PopulationReport, PopulateError> {
    validate(world, rules)?;
    let start = world.live_objects().count() as i64;
    let mut order: Vec<usize> = (0..rules.len()).collect();
    order.shuffle(rng);
    let mut report = PopulationReport { order: order.clone(), rules: vec![RuleReport::default(); rules.len()], ..Default::default() };
    let tax = world.taxonomy().clone();

    for &ri in &order {
        let rule = &rules[ri];
        let containers: Vec<String> = world
            .live_objects()
            .filter(|o| tax.is_a(&o.category, &rule.container_category))
            .filter(|o| {
                world.object_aabb(&o.id).is_some_and(|b| {
                    let c = b.center();
                    world.room_at(c.x, c.y).is_some_and(|room| room.kind == rule.room_kind)
                })
            })
            .map(|o| o.id.clone())
            .collect();
        report.rules[ri].candidates = containers.len();
        let models: Vec<String> = tax.models_of(&rule.object_category).iter().map(|m| m.id.clone()).collect();
        for container in containers {
            if !rng.gen_bool(rule.probability) {
                continue;
            }
            report.rules[ri].activated += 1;
            let n = rng.gen_range(rule.count[0]..=rule.count[1]);
            for _ in 0..n {
                let model = models.choose(rng).expect("validated").clone();
                // Parked far below the scene until the sampler places it.
                let park = world.world_bounds().min.z - 10.0;
                let id = match world.add_object(&model, crate::geometry::Pose::from_xyz(0.0, 0.0, park)) {
                    Ok(id) => id,
                    Err(e) => {
                        report.skips.push(Skip { rule: ri, container: container.clone(), model, reason: e.to_string() });
                        report.rules[ri].skipped += 1;
                        continue;
                    }
                };
                let expr = PredicateExpr::new(rule.relation.predicate(), &[&id, &container], true).expect("binary");
                match sample(world, &expr, rng, DEFAULT_MAX_ATTEMPTS) {
                    Ok(()) => {
                        report.placements.push(Placement {
                            rule: ri,
                            object: id,
                            container: container.clone(),
                            predicate: expr.to_string(),
                        });
                        report.rules[ri].placed += 1;
                    }
                    Err(e) => {
                        world.remove_object(&id);
                        report.skips.push(Skip { rule: ri, container: container.clone(), model, reason: e.to_string() });
                        report.rules[ri].skipped += 1;
                    }
                }
            }
        }
    }

    let placed: Vec<String> = report.placements.iter().map(|p| p.object.clone()).collect();
    world.settle_all(&placed);
    for p in &report.placements {
        let expr = PredicateExpr::parse(&p.predicate).expect("printed by us");
        if evaluate(world, &expr) != Ok(true) {
            report.post_check_failures.push(p.predicate.clone());
        }
    }
    report.object_delta = world.live_objects().count() as i64 - start;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::geometry::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kitchen_with_fridge() -> (World, String) {
        let mut w = World::empty(tax(), 4.0);
        let f = w.add_object("fridge_small", Pose::from_xyz(1.0, 1.0, 1.0)).unwrap();
        w.settle(&f).unwrap();
        (w, f)
    }

    fn rule(p: f64, lo: u32, hi: u32) -> PopulationRule {
        PopulationRule {
            object_category: "beer".into(),
            relation: RuleRelation::InsideOf,
            container_category: "fridge".into(),
            room_kind: "kitchen".into(),
            probability: p,
            count: [lo, hi],
        }
    }

    #[test]
    fn two_beers_in_the_fridge() {
        let (mut w, f) = kitchen_with_fridge();
        let r = populate(&mut w, &[rule(1.0, 2, 2)], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(r.placements.len(), 2);
        assert_eq!(r.object_delta, 2);
        assert!(r.post_check_failures.is_empty());
        for p in &r.placements {
            assert!(evaluate(&w, &PredicateExpr::parse(&format!("InsideOf({}, {f})", p.object)).unwrap()).unwrap());
        }
    }

    #[test]
    fn zero_probability_and_missing_containers() {
        let (mut w, _) = kitchen_with_fridge();
        let r = populate(&mut w, &[rule(0.0, 1, 3)], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(r.placements.is_empty());
        let mut other = rule(1.0, 1, 1);
        other.container_category = "cabinet".into();
        let r = populate(&mut w, &[other], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(r.rules[0].candidates, 0);
        let mut bad = rule(1.0, 1, 1);
        bad.object_category = "unicorn".into();
        assert_eq!(populate(&mut w, &[bad], &mut ChaCha8Rng::seed_from_u64(5)), Err(PopulateError::UnknownCategoryInRules("unicorn".into())));
    }

    #[test]
    fn same_seed_same_scene() {
        let run = || {
            let (mut w, _) = kitchen_with_fridge();
            populate(&mut w, &[rule(1.0, 1, 3), rule(0.5, 0, 2)], &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
            w.digest()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn existing_objects_untouched() {
        let (mut w, f) = kitchen_with_fridge();
        let before = w.object(&f).unwrap().clone();
        populate(&mut w, &[rule(1.0, 3, 3)], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(w.object(&f).unwrap(), &before);
    }
}
