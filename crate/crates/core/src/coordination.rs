//! Conflict avoidance: an agent acts only when its priority beats every
//! neighbour inside the coordination range.

use crate::grid::{MOORE_OFFSETS, VON_NEUMANN_OFFSETS};
use crate::world::WorldState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CoordinationError {
    #[error("{got} priorities for {agents} agents")]
    Count { agents: usize, got: usize },
    #[error("agent {0} reported a non-finite priority")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationRange {
    /// Eight surrounding cells.
    Moore8,
    /// Four orthogonal cells.
    VonNeumann4,
    /// Every agent acts.
    Disabled,
}

impl CoordinationRange {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            CoordinationRange::Moore8 => &MOORE_OFFSETS,
            CoordinationRange::VonNeumann4 => &VON_NEUMANN_OFFSETS,
            CoordinationRange::Disabled => &[],
        }
    }
}

/// `true` when `(pa, a)` outranks `(pb, b)`: higher priority, ties to the
/// lower index.
fn outranks(pa: f64, a: usize, pb: f64, b: usize) -> bool {
    pa > pb || (pa == pb && a < b)
}

/// Agents that outrank all neighbours within `range`, ascending.
pub fn decide_winners(
    priorities: &[f64],
    world: &WorldState,
    range: CoordinationRange,
) -> Result<Vec<usize>, CoordinationError> {
    let n = world.agent_count();
    if priorities.len() != n {
        return Err(CoordinationError::Count {
            agents: n,
            got: priorities.len(),
        });
    }
    if let Some(i) = priorities.iter().position(|p| !p.is_finite()) {
        return Err(CoordinationError::NonFinite(i));
    }
    let (w, h) = (world.shape().width(), world.shape().height());
    let winners = (0..n)
        .filter(|&i| {
            let p = world.position(i);
            range.offsets().iter().all(|&(dx, dy)| {
                match p.offset(dx, dy, w, h).and_then(|c| world.occupant(c)) {
                    Some(j) => outranks(priorities[i], i, priorities[j], j),
                    None => true,
                }
            })
        })
        .collect();
    Ok(winners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::world::TargetShape;
    use std::sync::Arc;

    fn row_world(cells: &[Cell], w: usize, h: usize) -> WorldState {
        let mut lab = vec![false; w * h];
        lab[..cells.len()].fill(true);
        let shape = Arc::new(TargetShape::new(w, h, lab).unwrap());
        WorldState::from_positions(shape, cells.to_vec()).unwrap()
    }

    #[test]
    fn isolated_agents_all_win() {
        let w = row_world(&[Cell::new(0, 0), Cell::new(3, 0), Cell::new(0, 3)], 5, 5);
        assert_eq!(
            decide_winners(&[0.1, 0.5, -2.0], &w, CoordinationRange::Moore8).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn strict_dominance() {
        let w = row_world(&[Cell::new(1, 1), Cell::new(2, 2)], 4, 4);
        assert_eq!(
            decide_winners(&[2.0, 1.0], &w, CoordinationRange::Moore8).unwrap(),
            vec![0]
        );
        // diagonal neighbours are out of von Neumann range
        assert_eq!(
            decide_winners(&[2.0, 1.0], &w, CoordinationRange::VonNeumann4).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn equal_priorities_in_a_row() {
        let w = row_world(&[Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0)], 4, 2);
        // agent 2 only sees agent 1 (higher index loses to 1)
        assert_eq!(
            decide_winners(&[1.0, 1.0, 1.0], &w, CoordinationRange::Moore8).unwrap(),
            vec![0]
        );
        let w = row_world(&[Cell::new(1, 0), Cell::new(0, 0), Cell::new(2, 0)], 4, 2);
        assert_eq!(
            decide_winners(&[1.0, 1.0, 1.0], &w, CoordinationRange::Moore8).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn disabled_mode_lets_everyone_act() {
        let w = row_world(&[Cell::new(0, 0), Cell::new(1, 0), Cell::new(1, 1)], 3, 3);
        assert_eq!(
            decide_winners(&[3.0, 2.0, 1.0], &w, CoordinationRange::Disabled).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn errors() {
        let w = row_world(&[Cell::new(0, 0), Cell::new(1, 0)], 3, 3);
        assert!(matches!(
            decide_winners(&[1.0], &w, CoordinationRange::Moore8),
            Err(CoordinationError::Count { .. })
        ));
        assert_eq!(
            decide_winners(&[1.0, f64::NAN], &w, CoordinationRange::Moore8),
            Err(CoordinationError::NonFinite(1))
        );
    }
}
