//! Data files bundled into the binary.

pub const TAXONOMY: &str = include_str!("../assets/taxonomy.json");

const FILES: &[(&str, &str)] = &[
    ("scenes/kitchen_book.json", include_str!("../assets/scenes/kitchen_book.json")),
    ("scenes/kitchen_faucet.json", include_str!("../assets/scenes/kitchen_faucet.json")),
    ("scenes/kitchen_shelf.json", include_str!("../assets/scenes/kitchen_shelf.json")),
    ("scenes/kitchen_stove.json", include_str!("../assets/scenes/kitchen_stove.json")),
    ("scenes/kitchen_knife.json", include_str!("../assets/scenes/kitchen_knife.json")),
    ("scenes/kitchen_cauldron.json", include_str!("../assets/scenes/kitchen_cauldron.json")),
    ("scenes/apartment.json", include_str!("../assets/scenes/apartment.json")),
    ("tasks/grasping_book.json", include_str!("../assets/tasks/grasping_book.json")),
    ("tasks/soaking_towel.json", include_str!("../assets/tasks/soaking_towel.json")),
    ("tasks/cleaning_stained_shelf.json", include_str!("../assets/tasks/cleaning_stained_shelf.json")),
    ("tasks/cooking_meat.json", include_str!("../assets/tasks/cooking_meat.json")),
    ("tasks/slicing_fruit.json", include_str!("../assets/tasks/slicing_fruit.json")),
    ("tasks/bimanual_pick_and_place.json", include_str!("../assets/tasks/bimanual_pick_and_place.json")),
    ("rules/apartment.json", include_str!("../assets/rules/apartment.json")),
    ("conditions_example.txt", include_str!("../assets/conditions_example.txt")),
];

/// The six shipped tasks, in their canonical order.
pub const TASK_NAMES: [&str; 6] = [
    "grasping_book",
    "soaking_towel",
    "cleaning_stained_shelf",
    "cooking_meat",
    "slicing_fruit",
    "bimanual_pick_and_place",
];

fn normalize(path: &str) -> &str {
    let mut p = path;
    loop {
        if let Some(rest) = p.strip_prefix("../").or_else(|| p.strip_prefix("./")) {
            p = rest;
        } else {
            return p;
        }
    }
}

/// Looks up a bundled file by relative path (leading `./` and `../` ignored).
pub fn file(path: &str) -> Option<&'static str> {
    let p = normalize(path);
    FILES.iter().find(|(k, _)| *k == p).map(|(_, v)| *v)
}

/// A bundled task by name (`cooking_meat`) or path (`tasks/cooking_meat.json`).
pub fn task(name: &str) -> Option<&'static str> {
    file(name).or_else(|| file(&format!("tasks/{name}.json")))
}

pub fn scene(name: &str) -> Option<&'static str> {
    file(name).or_else(|| file(&format!("scenes/{name}.json")))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(k, _)| *k)
}
