//! Object-centric household simulation kernel.
//!
//! A [`world::World`] holds object instances with extended physical state
//! (temperature, wetness, dust and stains, toggled, sliced). The
//! [`states`] pipeline advances that state, [`predicates`] read it as logic,
//! [`sampling`] writes it back from logic, and [`runtime`] wraps everything
//! in a deterministic, replayable session.

pub mod assets;
pub mod fixtures;
pub mod geometry;
pub mod populate;
pub mod predicates;
pub mod runtime;
pub mod sampling;
pub mod states;
pub mod taxonomy;
pub mod world;

pub use geometry::{Pose, Quat, Vec3};
pub use predicates::{evaluate, PredicateExpr, PredicateName};
pub use taxonomy::Taxonomy;
pub use world::World;
