//! Attractor selection over the sensed pheromone field and the
//! seven-element local observation.

use crate::grid::Cell;
use crate::medium::{MediumError, PheromoneMap};
use crate::world::WorldState;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("attractor at {cell} has non-positive pheromone amount {amount}")]
    NonPositiveAmount { cell: Cell, amount: f64 },
    #[error("attractor at {cell} has non-positive distance {distance}")]
    NonPositiveDistance { cell: Cell, distance: f64 },
    #[error(transparent)]
    Medium(#[from] MediumError),
}

/// Gaussian distance weighting `peak * exp(-(d - mean)^2 / (2 std^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceWeight {
    pub peak: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for DistanceWeight {
    fn default() -> Self {
        DistanceWeight {
            peak: 1.0,
            mean: 0.0,
            std_dev: 0.25,
        }
    }
}

impl DistanceWeight {
    pub fn eval(&self, d: f64) -> f64 {
        self.peak * (-(d - self.mean).powi(2) / (2.0 * self.std_dev * self.std_dev)).exp()
    }

    /// `ln D(d)`; finite even where `D(d)` itself underflows.
    pub fn ln_eval(&self, d: f64) -> f64 {
        self.peak.ln() - (d - self.mean).powi(2) / (2.0 * self.std_dev * self.std_dev)
    }
}

/// One candidate attractor as seen from an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorView {
    pub cell: Cell,
    pub amount: f64,
    pub distance: f64,
}

/// Candidate attractors around `pos`: every sensed positive cell other than
/// `pos` itself.
pub fn attractor_views(map: &PheromoneMap, pos: Cell) -> Result<Vec<AttractorView>, PerceptionError> {
    Ok(map
        .sense(pos)?
        .into_iter()
        .map(|(cell, amount)| AttractorView {
            cell,
            amount,
            distance: pos.euclidean(cell),
        })
        .collect())
}

/// Selection probabilities `D(d_j) e_j / sum_k D(d_k) e_k`, evaluated in
/// log space with max subtraction.
pub fn attractor_probabilities(
    views: &[AttractorView],
    weight: &DistanceWeight,
) -> Result<Vec<f64>, PerceptionError> {
    let mut logits = Vec::with_capacity(views.len());
    for v in views {
        if !(v.amount > 0.0) {
            return Err(PerceptionError::NonPositiveAmount {
                cell: v.cell,
                amount: v.amount,
            });
        }
        if !(v.distance > 0.0) {
            return Err(PerceptionError::NonPositiveDistance {
                cell: v.cell,
                distance: v.distance,
            });
        }
        logits.push(weight.ln_eval(v.distance) + v.amount.ln());
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Samples an index from a normalized distribution.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn select_attractor<R: Rng + ?Sized>(
    views: &[AttractorView],
    weight: &DistanceWeight,
    rng: &mut R,
) -> Result<Option<AttractorView>, PerceptionError> {
    if views.is_empty() {
        return Ok(None);
    }
    let probs = attractor_probabilities(views, weight)?;
    Ok(Some(views[sample_index(&probs, rng)]))
}

pub const STATE_LEN: usize = 7;

/// `[n_up, n_right, n_down, n_left, dx, dy, on_labeled]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalState(pub [f64; STATE_LEN]);

impl LocalState {
    pub const ZERO: LocalState = LocalState([0.0; STATE_LEN]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn neighbours(&self) -> [bool; 4] {
        [self.0[0], self.0[1], self.0[2], self.0[3]].map(|v| v != 0.0)
    }

    pub fn offset(&self) -> (f64, f64) {
        (self.0[4], self.0[5])
    }

    pub fn on_labeled(&self) -> bool {
        self.0[6] != 0.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Local state of `agent` with the offset to `selected` clamped to the
/// sensing radius and scaled into [-1, 1].
pub fn build_local_state(
    world: &WorldState,
    agent: usize,
    selected: Option<&AttractorView>,
    sense_radius: usize,
) -> LocalState {
    let n = world.neighbors4(agent);
    let (dx, dy) = match selected {
        Some(v) => {
            let (dx, dy) = world.position(agent).delta_to(v.cell);
            let r = sense_radius as isize;
            (
                dx.clamp(-r, r) as f64 / r as f64,
                dy.clamp(-r, r) as f64 / r as f64,
            )
        }
        None => (0.0, 0.0),
    };
    LocalState([
        flag(n[0]),
        flag(n[1]),
        flag(n[2]),
        flag(n[3]),
        dx,
        dy,
        flag(world.on_labeled(agent)),
    ])
}

/// Observation variant carrying the agent's normalized grid coordinates in
/// place of an attractor offset; used when stigmergy is switched off.
pub fn build_coordinate_state(world: &WorldState, agent: usize) -> LocalState {
    let n = world.neighbors4(agent);
    let p = world.position(agent);
    let scale = |v: usize, extent: usize| {
        if extent > 1 {
            2.0 * v as f64 / (extent - 1) as f64 - 1.0
        } else {
            0.0
        }
    };
    LocalState([
        flag(n[0]),
        flag(n[1]),
        flag(n[2]),
        flag(n[3]),
        scale(p.x, world.shape().width()),
        scale(p.y, world.shape().height()),
        flag(world.on_labeled(agent)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::MediumConfig;
    use crate::rng::seeded;
    use crate::world::TargetShape;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn view(x: usize, amount: f64, distance: f64) -> AttractorView {
        AttractorView {
            cell: Cell::new(x, 0),
            amount,
            distance,
        }
    }

    /// Direct evaluation of the selection rule, no log-space tricks.
    fn direct(views: &[AttractorView], w: &DistanceWeight) -> Vec<f64> {
        let raw: Vec<f64> = views.iter().map(|v| w.eval(v.distance) * v.amount).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|r| r / s).collect()
    }

    #[test]
    fn gaussian_values() {
        let w = DistanceWeight::default();
        assert_eq!(w.eval(0.0), 1.0);
        assert!((w.eval(1.0) - (-8.0f64).exp()).abs() < 1e-18);
        assert!((w.eval(1.0) - 3.3546e-4).abs() < 1e-8);
        assert!(w.eval(1.0) > w.eval(2.0));
    }

    #[test]
    fn single_and_empty() {
        let w = DistanceWeight::default();
        assert_eq!(select_attractor(&[], &w, &mut seeded(0)).unwrap(), None);
        let v = view(1, 0.3, 2.0);
        for s in 0..20 {
            assert_eq!(select_attractor(&[v], &w, &mut seeded(s)).unwrap(), Some(v));
        }
    }

    #[test]
    fn equal_distance_ratio() {
        let w = DistanceWeight::default();
        let p = attractor_probabilities(&[view(1, 2.0, 1.5), view(2, 1.0, 1.5)], &w).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_space_balance() {
        // e^-8 * 1 == e^-16 * e^8
        let w = DistanceWeight::default();
        let p = attractor_probabilities(
            &[view(1, 1.0, 1.0), view(2, 8f64.exp(), 2f64.sqrt())],
            &w,
        )
        .unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contract_violations() {
        let w = DistanceWeight::default();
        assert!(matches!(
            attractor_probabilities(&[view(1, 0.0, 1.0)], &w),
            Err(PerceptionError::NonPositiveAmount { .. })
        ));
        assert!(matches!(
            attractor_probabilities(&[view(1, 1.0, 0.0)], &w),
            Err(PerceptionError::NonPositiveDistance { .. })
        ));
    }

    #[test]
    fn far_attractors_still_normalize() {
        let w = DistanceWeight::default();
        let views = [view(1, 1.0, 9.0), view(2, 3.0, 10.0)];
        assert_eq!(w.eval(10.0), 0.0);
        let p = attractor_probabilities(&views, &w).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
    }

    fn world_with(agent: Cell, others: &[Cell], labeled: &[Cell]) -> WorldState {
        let mut cells = vec![false; 64];
        for c in labeled {
            cells[c.y * 8 + c.x] = true;
        }
        let n = others.len() + 1;
        // pad labeled cells so the agent count matches
        let mut extra = 0;
        while cells.iter().filter(|&&l| l).count() < n {
            if !cells[63 - extra] {
                cells[63 - extra] = true;
            }
            extra += 1;
        }
        while cells.iter().filter(|&&l| l).count() > n {
            let i = cells.iter().rposition(|&l| l).unwrap();
            cells[i] = false;
        }
        let shape = Arc::new(TargetShape::new(8, 8, cells).unwrap());
        let mut pos = vec![agent];
        pos.extend_from_slice(others);
        WorldState::from_positions(shape, pos).unwrap()
    }

    #[test]
    fn state_for_isolated_agent() {
        let w = world_with(Cell::new(2, 2), &[Cell::new(6, 6)], &[Cell::new(7, 7), Cell::new(7, 6)]);
        assert!(!w.on_labeled(0));
        assert_eq!(build_local_state(&w, 0, None, 3), LocalState::ZERO);
    }

    #[test]
    fn state_offsets_are_scaled() {
        let w = world_with(Cell::new(3, 3), &[Cell::new(3, 2)], &[Cell::new(3, 3), Cell::new(4, 4)]);
        assert!(w.on_labeled(0));
        let a = AttractorView {
            cell: Cell::new(5, 2),
            amount: 1.0,
            distance: 5f64.sqrt(),
        };
        let s = build_local_state(&w, 0, Some(&a), 3);
        assert_eq!(s.neighbours(), [true, false, false, false]);
        assert!((s.0[4] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.0[5] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.0[6], 1.0);
    }

    #[test]
    fn coordinate_state_range() {
        let w = world_with(Cell::new(0, 7), &[Cell::new(7, 0)], &[Cell::new(1, 1), Cell::new(2, 2)]);
        let s = build_coordinate_state(&w, 0);
        assert_eq!(s.offset(), (-1.0, 1.0));
        let s = build_coordinate_state(&w, 1);
        assert_eq!(s.offset(), (1.0, -1.0));
    }

    #[test]
    fn sensed_offsets_bounded() {
        let cfg = MediumConfig::default();
        let mut m = PheromoneMap::new(8, 8, cfg.clone()).unwrap();
        for i in 0..64 {
            m.set_amount(Cell::new(i % 8, i / 8), 1.0 + i as f64).unwrap();
        }
        let w = world_with(Cell::new(4, 4), &[Cell::new(0, 0)], &[Cell::new(1, 1), Cell::new(2, 2)]);
        for v in attractor_views(&m, w.position(0)).unwrap() {
            let s = build_local_state(&w, 0, Some(&v), cfg.sense_radius);
            assert!(s.0[4].abs() <= 1.0 && s.0[5].abs() <= 1.0);
        }
    }

    fn views_strategy(max_d: f64) -> impl Strategy<Value = Vec<AttractorView>> {
        prop::collection::vec((1e-3..=max_d, 1e-3..1e3f64), 1..30).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (d, a))| view(i, a, d))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn probabilities_normalize(views in views_strategy(10.0)) {
            let p = attractor_probabilities(&views, &DistanceWeight::default()).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn log_space_matches_direct(v in prop::collection::vec((0.5..=3.0f64, 0.1..=10.0f64), 1..10)) {
            let views: Vec<_> = v.into_iter().enumerate().map(|(i, (d, a))| view(i, a, d)).collect();
            let w = DistanceWeight::default();
            let p = attractor_probabilities(&views, &w).unwrap();
            let q = direct(&views, &w);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
