//! Hand-built comparison controllers and the fixed reward tables used by
//! the coordinate-observing learners.
//!
//! DC and CS share a motion rule that approaches the selected attractor but
//! circles the labeled region clockwise when the direct step is blocked or
//! when an outside agent already sits on the region's rim. The geometry of
//! that circular path is an approximation: only its intent is pinned down.

use crate::coordination::{decide_winners, CoordinationRange};
use crate::grid::{Cell, VON_NEUMANN_OFFSETS};
use crate::swarm::{Swarm, SwarmError, SALT_ATTRACTOR};
use crate::world::{Action, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("neighbour count {0} exceeds 4")]
    NeighbourCount(usize),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
}

/// Label-transition rewards for the coordinate-observing learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OriginRewardTable {
    /// Reward for entering the labeled area.
    pub enter: f64,
    /// Multiplier on the positive global reward while staying labeled.
    pub stay_scale: f64,
}

impl Default for OriginRewardTable {
    fn default() -> Self {
        OriginRewardTable {
            enter: 10.0,
            stay_scale: 100.0,
        }
    }
}

pub fn origin_reward(was_labeled: bool, is_labeled: bool, delta_si: f64, tbl: &OriginRewardTable) -> f64 {
    match (was_labeled, is_labeled) {
        (false, false) => 0.0,
        (false, true) => tbl.enter,
        (true, false) => 0.0,
        (true, true) => tbl.stay_scale * delta_si.max(0.0),
    }
}

/// One row of the DC reward table; `labeled == None` matches either flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcRow {
    pub neighbours: usize,
    pub labeled: Option<bool>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcRewardTable {
    pub rows: Vec<DcRow>,
}

impl Default for DcRewardTable {
    fn default() -> Self {
        let row = |neighbours, labeled, reward| DcRow {
            neighbours,
            labeled,
            reward,
        };
        DcRewardTable {
            rows: vec![
                row(4, None, 0.0),
                row(3, Some(true), 4.0),
                row(3, Some(false), 12.0),
                row(2, None, 8.0),
                row(1, Some(true), 8.0),
                row(1, Some(false), 12.0),
                row(0, None, 12.0),
            ],
        }
    }
}

pub fn dc_reward(neighbours: usize, in_labeled: bool, tbl: &DcRewardTable) -> Result<f64, BaselineError> {
    if neighbours > 4 {
        return Err(BaselineError::NeighbourCount(neighbours));
    }
    tbl.rows
        .iter()
        .find(|r| r.neighbours == neighbours && r.labeled.is_none_or(|l| l == in_labeled))
        .map(|r| r.reward)
        .ok_or(BaselineError::NeighbourCount(neighbours))
}

fn rewards_for(world: &WorldState, tbl: &DcRewardTable) -> Result<Vec<f64>, BaselineError> {
    (0..world.agent_count())
        .map(|i| {
            let n = world.neighbors4(i).iter().filter(|&&b| b).count();
            dc_reward(n, world.on_labeled(i), tbl)
        })
        .collect()
}

fn free(world: &WorldState, agent: usize, act: Action) -> Option<Cell> {
    world.target_cell(agent, act).filter(|&c| !world.is_occupied(c))
}

fn adjacent_to_label(world: &WorldState, cell: Cell) -> bool {
    let s = world.shape();
    VON_NEUMANN_OFFSETS.iter().any(|&(dx, dy)| {
        cell.offset(dx, dy, s.width(), s.height())
            .is_some_and(|c| s.is_labeled(c))
    })
}

/// Moves ordered by how much they shorten the distance to `goal`; ties keep
/// action order. Only strictly improving moves are returned.
fn approach_moves(from: Cell, goal: (f64, f64)) -> Vec<Action> {
    let d0 = dist(from, goal);
    let mut scored: Vec<(f64, Action)> = Action::MOVES
        .iter()
        .map(|&a| {
            let (dx, dy) = a.delta();
            let x = from.x as f64 + dx as f64;
            let y = from.y as f64 + dy as f64;
            (((x - goal.0).powi(2) + (y - goal.1).powi(2)).sqrt(), a)
        })
        .filter(|(d, _)| *d < d0)
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().map(|(_, a)| a).collect()
}

fn dist(c: Cell, p: (f64, f64)) -> f64 {
    ((c.x as f64 - p.0).powi(2) + (c.y as f64 - p.1).powi(2)).sqrt()
}

/// Cardinal moves ranked by alignment with the clockwise tangent around
/// the labeled centroid (screen coordinates, y down).
fn clockwise_moves(from: Cell, centre: (f64, f64)) -> [Action; 4] {
    let rx = from.x as f64 - centre.0;
    let ry = from.y as f64 - centre.1;
    let (tx, ty) = (-ry, rx);
    let mut ranked = Action::MOVES;
    ranked.sort_by(|a, b| {
        let (ax, ay) = a.delta();
        let (bx, by) = b.delta();
        let da = ax as f64 * tx + ay as f64 * ty;
        let db = bx as f64 * tx + by as f64 * ty;
        db.total_cmp(&da)
    });
    ranked
}

/// Circular-path motion step for one agent.
pub fn circular_move(world: &WorldState, agent: usize, attractor: Option<Cell>) -> Action {
    let pos = world.position(agent);
    let shape = world.shape();
    let centre = shape.centroid();
    let goal = attractor.map_or(centre, |c| (c.x as f64, c.y as f64));
    let on_rim = !shape.is_labeled(pos) && adjacent_to_label(world, pos);
    if let Some(&a) = approach_moves(pos, goal).first() {
        if let Some(dest) = free(world, agent, a) {
            if !on_rim || shape.is_labeled(dest) {
                return a;
            }
        }
    }
    if shape.is_labeled(pos) && attractor.is_none() {
        return Action::Stop;
    }
    clockwise_moves(pos, centre)
        .into_iter()
        .filter(|&a| a != Action::Stop)
        .find(|&a| free(world, agent, a).is_some_and(|d| !shape.is_labeled(pos) || shape.is_labeled(d)))
        .unwrap_or(Action::Stop)
}

/// Agents with the highest table reward within their Moore neighbourhood.
pub fn dc_winners(world: &WorldState, tbl: &DcRewardTable) -> Result<Vec<usize>, BaselineError> {
    let r = rewards_for(world, tbl)?;
    Ok(decide_winners(&r, world, CoordinationRange::Moore8).expect("table rewards are finite"))
}

/// `k` agents with the highest table reward, ties to the lower index.
pub fn cs_selected(world: &WorldState, tbl: &DcRewardTable, k: usize) -> Result<Vec<usize>, BaselineError> {
    let r = rewards_for(world, tbl)?;
    let mut order: Vec<usize> = (0..world.agent_count()).collect();
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    order.truncate(k.clamp(1, world.agent_count()));
    order.sort_unstable();
    Ok(order)
}

fn move_selected(swarm: &mut Swarm, movers: &[usize]) -> Result<(), BaselineError> {
    let n = swarm.world.agent_count();
    let mut selected = vec![None; n];
    let mut plan = Vec::with_capacity(movers.len());
    for &i in movers {
        selected[i] = swarm.choose_attractor(i, SALT_ATTRACTOR)?;
    }
    for &i in movers {
        plan.push((i, circular_move(&swarm.world, i, selected[i].map(|a| a.cell))));
    }
    swarm.act(&plan, &selected)?;
    swarm.tick();
    Ok(())
}

/// One decentralized step: local reward maxima move.
pub fn dc_step(swarm: &mut Swarm, tbl: &DcRewardTable) -> Result<Vec<usize>, BaselineError> {
    let winners = dc_winners(&swarm.world, tbl)?;
    move_selected(swarm, &winners)?;
    Ok(winners)
}

/// One centralized-selection step: the top `k` agents move.
pub fn cs_step(swarm: &mut Swarm, tbl: &DcRewardTable, k: usize) -> Result<Vec<usize>, BaselineError> {
    let chosen = cs_selected(&swarm.world, tbl, k)?;
    move_selected(swarm, &chosen)?;
    Ok(chosen)
}

/// Greedy full-information filler: the closest (vacancy, outside agent)
/// pair is served first, one cell per step along a shortest free path.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    assignment: Option<(Cell, usize)>,
    pub steps: usize,
}

impl Oracle {
    pub fn new() -> Self {
        Oracle::default()
    }

    fn pick(world: &WorldState) -> Option<(Cell, usize, Vec<Cell>)> {
        let vacancies = world.vacancies();
        let mut pairs: Vec<(f64, Cell, usize)> = Vec::new();
        for &v in &vacancies {
            for i in 0..world.agent_count() {
                if !world.on_labeled(i) {
                    pairs.push((world.position(i).euclidean(v), v, i));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        pairs
            .into_iter()
            .find_map(|(_, v, i)| shortest_path(world, world.position(i), v).map(|p| (v, i, p)))
    }

    /// Vacancy walled in by settled agents: slides one settled neighbour
    /// into it, moving the hole toward cells the outside agents can reach.
    /// Labeled to labeled, so similarity is unchanged.
    fn shift(world: &mut WorldState) -> Option<()> {
        let (w, h) = (world.shape().width(), world.shape().height());
        let outside: Vec<usize> = (0..world.agent_count()).filter(|&i| !world.on_labeled(i)).collect();
        if outside.is_empty() {
            return None;
        }
        // cells the outside agents reach through free cells
        let mut reach = vec![false; w * h];
        let mut queue: VecDeque<Cell> = outside.iter().map(|&i| world.position(i)).collect();
        for c in &queue {
            reach[c.y * w + c.x] = true;
        }
        while let Some(c) = queue.pop_front() {
            for (dx, dy) in VON_NEUMANN_OFFSETS {
                if let Some(n) = c.offset(dx, dy, w, h) {
                    if !reach[n.y * w + n.x] && !world.is_occupied(n) {
                        reach[n.y * w + n.x] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        let touches_reach = |c: Cell| {
            VON_NEUMANN_OFFSETS
                .iter()
                .any(|&(dx, dy)| c.offset(dx, dy, w, h).is_some_and(|n| reach[n.y * w + n.x]))
        };
        for v in world.vacancies() {
            // BFS from the vacancy through settled agents
            let mut first: Vec<Option<Cell>> = vec![None; w * h];
            let mut seen = vec![false; w * h];
            seen[v.y * w + v.x] = true;
            let mut queue = VecDeque::new();
            for (dx, dy) in VON_NEUMANN_OFFSETS {
                if let Some(n) = v.offset(dx, dy, w, h) {
                    if world.occupant(n).is_some_and(|j| world.on_labeled(j)) {
                        seen[n.y * w + n.x] = true;
                        first[n.y * w + n.x] = Some(n);
                        queue.push_back(n);
                    }
                }
            }
            while let Some(c) = queue.pop_front() {
                if touches_reach(c) {
                    let start = first[c.y * w + c.x].expect("seeded from a neighbour");
                    let agent = world.occupant(start).expect("settled agent");
                    let act = step_toward(start, v, w, h);
                    world.apply_action(agent, act);
                    return Some(());
                }
                for (dx, dy) in VON_NEUMANN_OFFSETS {
                    if let Some(n) = c.offset(dx, dy, w, h) {
                        if !seen[n.y * w + n.x] && world.occupant(n).is_some_and(|j| world.on_labeled(j)) {
                            seen[n.y * w + n.x] = true;
                            first[n.y * w + n.x] = first[c.y * w + c.x];
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        None
    }

    /// Advances one move. Returns `false` once nothing can be improved.
    pub fn step(&mut self, world: &mut WorldState) -> bool {
        loop {
            let (vacancy, agent, path) = match self.assignment {
                Some((v, i)) if !world.is_occupied(v) => match shortest_path(world, world.position(i), v) {
                    Some(p) => (v, i, p),
                    None => {
                        self.assignment = None;
                        continue;
                    }
                },
                _ => match Oracle::pick(world) {
                    Some(p) => p,
                    None => {
                        self.assignment = None;
                        return Oracle::shift(world).is_some_and(|()| {
                            self.steps += 1;
                            true
                        });
                    }
                },
            };
            let act = step_toward(world.position(agent), path[1], world.shape().width(), world.shape().height());
            let moved = world.apply_action(agent, act);
            debug_assert!(moved);
            self.steps += 1;
            // an agent crossing any free labeled cell settles there
            self.assignment = if world.on_labeled(agent) {
                None
            } else {
                Some((vacancy, agent))
            };
            return true;
        }
    }
}

/// The move that takes `from` onto the orthogonally adjacent `to`.
fn step_toward(from: Cell, to: Cell, w: usize, h: usize) -> Action {
    Action::MOVES
        .into_iter()
        .find(|a| {
            let (dx, dy) = a.delta();
            from.offset(dx, dy, w, h) == Some(to)
        })
        .expect("cells are orthogonal neighbours")
}

/// BFS over free cells; the returned path includes both endpoints.
fn shortest_path(world: &WorldState, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    let (w, h) = (world.shape().width(), world.shape().height());
    let mut prev: Vec<Option<Cell>> = vec![None; w * h];
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    seen[from.y * w + from.x] = true;
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        if c == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(p) = prev[cur.y * w + cur.x] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for (dx, dy) in VON_NEUMANN_OFFSETS {
            if let Some(n) = c.offset(dx, dy, w, h) {
                let k = n.y * w + n.x;
                if !seen[k] && (n == to || !world.is_occupied(n)) {
                    seen[k] = true;
                    prev[k] = Some(c);
                    queue.push_back(n);
                }
            }
        }
    }
    None
}
