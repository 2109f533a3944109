//! Grid environment: target shape, agent occupancy and movement.

use crate::grid::{Cell, MOORE_OFFSETS, VON_NEUMANN_OFFSETS};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("shape has no labeled cells")]
    EmptyShape,
    #[error("shape dimensions {width}x{height} do not match {cells} cells")]
    Dimensions {
        width: usize,
        height: usize,
        cells: usize,
    },
    #[error("expected {expected} agent positions, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("agent position {0} outside grid")]
    OutOfGrid(Cell),
    #[error("two agents placed on {0}")]
    Collision(Cell),
    #[error("world states refer to different shapes")]
    ShapeMismatch,
    #[error("cannot place {agents} agents on {cells} cells")]
    Overcrowded { agents: usize, cells: usize },
}

/// The five individual actions, in network output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Right,
    Down,
    Left,
    Stop,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Right,
        Action::Down,
        Action::Left,
        Action::Stop,
    ];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Right, Action::Down, Action::Left];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Unit displacement; `Up` decrements `y`.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Right => (1, 0),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Stop => (0, 0),
        }
    }
}

/// Labeled cells of the formation target. The number of labeled cells is
/// the number of agents in the swarm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetShape {
    width: usize,
    height: usize,
    labeled: Vec<bool>,
    count: usize,
}

impl TargetShape {
    pub fn new(width: usize, height: usize, labeled: Vec<bool>) -> Result<Self, WorldError> {
        if width == 0 || height == 0 || labeled.len() != width * height {
            return Err(WorldError::Dimensions {
                width,
                height,
                cells: labeled.len(),
            });
        }
        let count = labeled.iter().filter(|&&l| l).count();
        if count == 0 {
            return Err(WorldError::EmptyShape);
        }
        Ok(TargetShape {
            width,
            height,
            labeled,
            count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Required agent count N.
    pub fn agent_count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn is_labeled(&self, cell: Cell) -> bool {
        self.contains(cell) && self.labeled[cell.y * self.width + cell.x]
    }

    pub fn labeled_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.labeled
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .map(move |(i, _)| Cell::new(i % self.width, i / self.width))
    }

    pub fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy) = (0.0, 0.0);
        for c in self.labeled_cells() {
            sx += c.x as f64;
            sy += c.y as f64;
        }
        (sx / self.count as f64, sy / self.count as f64)
    }
}

impl fmt::Display for TargetShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.labeled.chunks(self.width) {
            for &l in row {
                f.write_str(if l { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Agent positions on a target shape, with an occupancy index kept in
/// lock-step.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    shape: Arc<TargetShape>,
    positions: Vec<Cell>,
    occupancy: Vec<Option<usize>>,
    on_labeled: usize,
}

impl WorldState {
    pub fn from_positions(shape: Arc<TargetShape>, positions: Vec<Cell>) -> Result<Self, WorldError> {
        if positions.len() != shape.agent_count() {
            return Err(WorldError::AgentCount {
                expected: shape.agent_count(),
                got: positions.len(),
            });
        }
        let mut occupancy = vec![None; shape.width * shape.height];
        let mut on_labeled = 0;
        for (i, &p) in positions.iter().enumerate() {
            if !shape.contains(p) {
                return Err(WorldError::OutOfGrid(p));
            }
            let slot = &mut occupancy[p.y * shape.width + p.x];
            if slot.is_some() {
                return Err(WorldError::Collision(p));
            }
            *slot = Some(i);
            if shape.is_labeled(p) {
                on_labeled += 1;
            }
        }
        Ok(WorldState {
            shape,
            positions,
            occupancy,
            on_labeled,
        })
    }

    /// Uniformly random placement on distinct cells of the whole grid.
    pub fn random<R: Rng + ?Sized>(shape: Arc<TargetShape>, rng: &mut R) -> Result<Self, WorldError> {
        let cells = shape.width * shape.height;
        let n = shape.agent_count();
        if n > cells {
            return Err(WorldError::Overcrowded { agents: n, cells });
        }
        let w = shape.width;
        let positions = sample(rng, cells, n)
            .into_iter()
            .map(|i| Cell::new(i % w, i / w))
            .collect();
        WorldState::from_positions(shape, positions)
    }

    pub fn shape(&self) -> &Arc<TargetShape> {
        &self.shape
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    pub fn position(&self, agent: usize) -> Cell {
        self.positions[agent]
    }

    pub fn occupant(&self, cell: Cell) -> Option<usize> {
        if self.shape.contains(cell) {
            self.occupancy[cell.y * self.shape.width + cell.x]
        } else {
            None
        }
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupant(cell).is_some()
    }

    pub fn on_labeled(&self, agent: usize) -> bool {
        self.shape.is_labeled(self.positions[agent])
    }

    /// Number of agents standing on labeled cells.
    pub fn labeled_count(&self) -> usize {
        self.on_labeled
    }

    /// Fraction of agents on labeled cells.
    pub fn similarity(&self) -> f64 {
        self.on_labeled as f64 / self.positions.len() as f64
    }

    /// Cell an action would lead to, if it stays on the grid.
    pub fn target_cell(&self, agent: usize, act: Action) -> Option<Cell> {
        let (dx, dy) = act.delta();
        self.positions[agent].offset(dx, dy, self.shape.width, self.shape.height)
    }

    /// Moves `agent` one cell if the destination is in-grid and free.
    /// Returns whether the agent moved.
    pub fn apply_action(&mut self, agent: usize, act: Action) -> bool {
        if act == Action::Stop {
            return false;
        }
        let Some(dest) = self.target_cell(agent, act) else {
            return false;
        };
        if self.is_occupied(dest) {
            return false;
        }
        let from = self.positions[agent];
        let w = self.shape.width;
        self.occupancy[from.y * w + from.x] = None;
        self.occupancy[dest.y * w + dest.x] = Some(agent);
        self.positions[agent] = dest;
        match (self.shape.is_labeled(from), self.shape.is_labeled(dest)) {
            (false, true) => self.on_labeled += 1,
            (true, false) => self.on_labeled -= 1,
            _ => {}
        }
        true
    }

    /// Occupancy of the Up, Right, Down and Left cells. Off-grid reports
    /// `false`.
    pub fn neighbors4(&self, agent: usize) -> [bool; 4] {
        let p = self.positions[agent];
        VON_NEUMANN_OFFSETS.map(|(dx, dy)| {
            p.offset(dx, dy, self.shape.width, self.shape.height)
                .is_some_and(|c| self.is_occupied(c))
        })
    }

    /// Agents in the eight surrounding cells, in row-major offset order.
    pub fn moore8(&self, agent: usize) -> Vec<usize> {
        self.moore_slots(agent).into_iter().flatten().collect()
    }

    /// Occupant of each Moore offset (NW, N, NE, W, E, SW, S, SE).
    pub fn moore_slots(&self, agent: usize) -> [Option<usize>; 8] {
        let p = self.positions[agent];
        MOORE_OFFSETS.map(|(dx, dy)| {
            p.offset(dx, dy, self.shape.width, self.shape.height)
                .and_then(|c| self.occupant(c))
        })
    }

    /// Free labeled cells.
    pub fn vacancies(&self) -> Vec<Cell> {
        self.shape
            .labeled_cells()
            .filter(|&c| !self.is_occupied(c))
            .collect()
    }

    /// Graymap frame: agents 255, free labeled cells 128, the rest 0.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "P2")?;
        writeln!(out, "{} {}", self.shape.width, self.shape.height)?;
        writeln!(out, "255")?;
        for y in 0..self.shape.height {
            let line: Vec<&str> = (0..self.shape.width)
                .map(|x| {
                    let c = Cell::new(x, y);
                    if self.is_occupied(c) {
                        "255"
                    } else if self.shape.is_labeled(c) {
                        "128"
                    } else {
                        "0"
                    }
                })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Change in similarity between two states over the same shape.
pub fn global_reward(before: &WorldState, after: &WorldState) -> Result<f64, WorldError> {
    if !Arc::ptr_eq(&before.shape, &after.shape) && before.shape != after.shape {
        return Err(WorldError::ShapeMismatch);
    }
    if before.agent_count() != after.agent_count() {
        return Err(WorldError::AgentCount {
            expected: before.agent_count(),
            got: after.agent_count(),
        });
    }
    let delta = after.labeled_count() as f64 - before.labeled_count() as f64;
    Ok(delta / after.agent_count() as f64)
}
