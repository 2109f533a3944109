//! Grid shape-formation swarm built on digital-pheromone coordination.
//!
//! Independent agents sense a shared pheromone map, pick attractors, compete
//! for action opportunities through a local priority exchange and learn
//! through synchronous gradient averaging. The crate also carries the
//! comparison methods (joint/independent learners, hand-tuned DC and CS
//! controllers, and a greedy Oracle) plus the experiment harness.

pub mod agent;
pub mod baselines;
pub mod coordination;
pub mod grid;
pub mod harness;
pub mod medium;
pub mod neuralcore;
pub mod perception;
pub mod rng;
pub mod swarm;
pub mod trainer;
pub mod world;

pub use grid::Cell;
pub use medium::{MediumConfig, PheromoneMap};
pub use world::{Action, TargetShape, WorldState};
