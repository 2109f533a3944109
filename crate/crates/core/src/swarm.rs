//! The shared swarm step: observe, pick who acts, act, update the medium.
//!
//! Observation happens on a snapshot of the world and medium; acting agents
//! then move one at a time in ascending index order, each updating the
//! medium at its new cell. Occupied cells decay once all movers are done.

use crate::agent::{medium_reward, DiscountConfig};
use crate::baselines::{origin_reward, OriginRewardTable};
use crate::coordination::CoordinationRange;
use crate::grid::Cell;
use crate::medium::{MediumError, PheromoneMap};
use crate::perception::{
    attractor_views, build_coordinate_state, build_local_state, select_attractor, AttractorView,
    DistanceWeight, LocalState, PerceptionError, STATE_LEN,
};
use crate::rng::agent_stream;
use crate::world::{Action, WorldState};
use serde::{Deserialize, Serialize};

pub const SALT_ATTRACTOR: u64 = 1;
pub const SALT_NEXT_ATTRACTOR: u64 = 2;
pub const SALT_ACTION: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Distance gained on the attractor selected before the move.
    Medium,
    /// Label-transition table with the global reward folded in.
    Origin,
}

/// How a learning method observes, is rewarded and coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerProfile {
    /// Pheromone map active; otherwise observations carry coordinates.
    pub stigmergy: bool,
    /// Observation cascades the Moore neighbours' local states.
    pub joint: bool,
    pub reward: RewardKind,
    /// Evaluation Module trained and used for priorities.
    pub evaluation: bool,
    /// Coordination range while training the Behavior Module.
    pub train_range: CoordinationRange,
    /// Coordination range at test time.
    pub test_range: CoordinationRange,
}

impl LearnerProfile {
    pub fn input_width(&self) -> usize {
        if self.joint {
            STATE_LEN * 9
        } else {
            STATE_LEN
        }
    }
}

/// One observation pass over every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub selected: Vec<Option<AttractorView>>,
    pub states: Vec<LocalState>,
    /// Network inputs (own state, or own plus neighbours when joint).
    pub inputs: Vec<Vec<f64>>,
}

/// Per-mover result of one action phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveRecord {
    pub agent: usize,
    pub action: Action,
    pub moved: bool,
    pub from: Cell,
    pub to: Cell,
    pub was_labeled: bool,
    pub is_labeled: bool,
    /// Distances to the pre-move attractor, if any.
    pub attractor_distance: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub moves: Vec<MoveRecord>,
    pub global_reward: f64,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub world: WorldState,
    pub medium: PheromoneMap,
    pub weight: DistanceWeight,
    pub stigmergy: bool,
    seed: u64,
    clock: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SwarmError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Medium(#[from] MediumError),
}

impl Swarm {
    pub fn new(
        world: WorldState,
        medium: PheromoneMap,
        weight: DistanceWeight,
        stigmergy: bool,
        seed: u64,
        clock: u64,
    ) -> Self {
        Swarm {
            world,
            medium,
            weight,
            stigmergy,
            seed,
            clock,
        }
    }

    /// Global step counter used to key per-agent random streams.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick(&mut self) {
        self.clock += 1;
    }

    /// Attractor choice for `agent` under the current map.
    pub fn choose_attractor(&self, agent: usize, salt: u64) -> Result<Option<AttractorView>, SwarmError> {
        if !self.stigmergy {
            return Ok(None);
        }
        let views = attractor_views(&self.medium, self.world.position(agent))?;
        let mut rng = agent_stream(self.seed, agent, self.clock, salt);
        Ok(select_attractor(&views, &self.weight, &mut rng)?)
    }

    pub fn observe(&self, joint: bool, salt: u64) -> Result<Observations, SwarmError> {
        let n = self.world.agent_count();
        let radius = self.medium.config().sense_radius;
        let mut selected = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for i in 0..n {
            if self.stigmergy {
                let a = self.choose_attractor(i, salt)?;
                states.push(build_local_state(&self.world, i, a.as_ref(), radius));
                selected.push(a);
            } else {
                states.push(build_coordinate_state(&self.world, i));
                selected.push(None);
            }
        }
        let inputs = (0..n)
            .map(|i| {
                if joint {
                    let mut v = Vec::with_capacity(STATE_LEN * 9);
                    v.extend_from_slice(states[i].as_slice());
                    for slot in self.world.moore_slots(i) {
                        match slot {
                            Some(j) => v.extend_from_slice(states[j].as_slice()),
                            None => v.extend_from_slice(&[0.0; STATE_LEN]),
                        }
                    }
                    v
                } else {
                    states[i].as_slice().to_vec()
                }
            })
            .collect();
        Ok(Observations {
            selected,
            states,
            inputs,
        })
    }

    /// Moves `movers` in the given order, updating the medium after each
    /// move, then decays occupied cells.
    pub fn act(
        &mut self,
        movers: &[(usize, Action)],
        selected: &[Option<AttractorView>],
    ) -> Result<PhaseOutcome, SwarmError> {
        let before = self.world.labeled_count();
        let mut moves = Vec::with_capacity(movers.len());
        for &(agent, action) in movers {
            let from = self.world.position(agent);
            let moved = self.world.apply_action(agent, action);
            let to = self.world.position(agent);
            let shape = self.world.shape();
            let (was_labeled, is_labeled) = (shape.is_labeled(from), shape.is_labeled(to));
            if self.stigmergy {
                self.medium.deposit(to, is_labeled)?;
            }
            let attractor_distance = selected
                .get(agent)
                .copied()
                .flatten()
                .map(|a| (from.euclidean(a.cell), to.euclidean(a.cell)));
            moves.push(MoveRecord {
                agent,
                action,
                moved,
                from,
                to,
                was_labeled,
                is_labeled,
                attractor_distance,
            });
        }
        if self.stigmergy {
            let occupied: Vec<Cell> = self.world.positions().to_vec();
            self.medium.decay_occupied(occupied)?;
        }
        let after = self.world.labeled_count();
        let global_reward = (after as f64 - before as f64) / self.world.agent_count() as f64;
        Ok(PhaseOutcome {
            moves,
            global_reward,
        })
    }
}

/// Individual reward for one move under the given scheme.
pub fn individual_reward(
    kind: RewardKind,
    m: &MoveRecord,
    global_reward: f64,
    discount: &DiscountConfig,
    origin: &OriginRewardTable,
) -> f64 {
    match kind {
        RewardKind::Medium => m
            .attractor_distance
            .map_or(0.0, |(prev, now)| medium_reward(prev, now, discount)),
        RewardKind::Origin => origin_reward(m.was_labeled, m.is_labeled, global_reward, origin),
    }
}
