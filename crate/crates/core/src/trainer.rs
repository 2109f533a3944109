//! Federated training: per-agent gradients are averaged by a virtual agent,
//! applied with momentum and broadcast back to every agent.
//!
//! A training round draws one starting sample and runs two sessions on it.
//! The evaluation session trains the priority network while the Behavior
//! Module acts greedily and stays frozen; the behavior session trains the
//! policy and its value network on the agents that won the priority
//! exchange while the Evaluation Module stays frozen. Either session stops
//! early, without an update, on the first step that raises the similarity.

use crate::agent::{ActionMode, AgentBrain, DiscountConfig};
use crate::baselines::OriginRewardTable;
use crate::coordination::{decide_winners, CoordinationError};
use crate::medium::{MediumConfig, MediumError, PheromoneMap};
use crate::neuralcore::{GradSet, Mlp, NeuralError};
use crate::perception::{attractor_views, select_attractor, DistanceWeight};
use crate::rng::{agent_stream, mix_seed, seeded, SimRng};
use crate::swarm::{
    individual_reward, LearnerProfile, Swarm, SwarmError, SALT_ACTION, SALT_ATTRACTOR,
    SALT_NEXT_ATTRACTOR,
};
use crate::world::{Action, TargetShape, WorldError, WorldState};
use crate::Cell;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("gradient has {got} entries, optimizer holds {expected}")]
    GradientShape { expected: usize, got: usize },
    #[error("sample set is empty")]
    NoSamples,
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error("no agent won the priority exchange")]
    NoWinners,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
}

/// The virtual agent's copy of one network plus its momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FederalOptimizer {
    params: Vec<f64>,
    velocity: Vec<f64>,
    pub momentum: f64,
    pub learning_rate: f64,
    steps: u64,
}

impl FederalOptimizer {
    pub fn new(params: &[f64], momentum: f64, learning_rate: f64) -> Self {
        FederalOptimizer {
            params: params.to_vec(),
            velocity: vec![0.0; params.len()],
            momentum,
            learning_rate,
            steps: 0,
        }
    }

    pub fn for_network(net: &Mlp, momentum: f64, learning_rate: f64) -> Self {
        FederalOptimizer::new(net.params(), momentum, learning_rate)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `v <- momentum * v - lr * mean(grads)`, `params <- params + v`.
    /// An empty gradient list leaves everything untouched and returns
    /// `false`.
    pub fn step(&mut self, grads: &[GradSet]) -> Result<bool, TrainerError> {
        if grads.is_empty() {
            return Ok(false);
        }
        for g in grads {
            if g.len() != self.params.len() {
                return Err(TrainerError::GradientShape {
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
        }
        // running mean: exact when every contribution is identical
        let mut mean = grads[0].0.clone();
        for (k, g) in grads.iter().enumerate().skip(1) {
            let w = (k + 1) as f64;
            for (m, &x) in mean.iter_mut().zip(&g.0) {
                *m += (x - *m) / w;
            }
        }
        for ((p, v), m) in self.params.iter_mut().zip(&mut self.velocity).zip(&mean) {
            *v = self.momentum * *v - self.learning_rate * m;
            *p += *v;
        }
        self.steps += 1;
        Ok(true)
    }
}

/// Alias matching the operation name used across the docs.
pub fn federal_step(opt: &mut FederalOptimizer, grads: &[GradSet]) -> Result<bool, TrainerError> {
    opt.step(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Maximum steps per session.
    pub t_max: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Optimizer steps between target-network copies.
    pub target_period: u64,
    pub hidden: Vec<usize>,
    pub discount: DiscountConfig,
    pub origin: OriginRewardTable,
    /// Size of the generated starting-sample set.
    pub samples: usize,
    /// Random-walk length before the sample generator restarts.
    pub sample_episode: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            t_max: 20,
            rounds: 1000,
            learning_rate: 1e-3,
            momentum: 0.9,
            target_period: 100,
            hidden: vec![64, 64],
            discount: DiscountConfig::default(),
            origin: OriginRewardTable::default(),
            samples: 7500,
            sample_episode: 100,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.t_max == 0 {
            return Err(TrainerError::Config("t_max must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainerError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainerError::Config("momentum must lie in [0, 1)".into()));
        }
        if self.target_period == 0 {
            return Err(TrainerError::Config("target_period must be at least 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(TrainerError::Config("hidden layers must be non-empty".into()));
        }
        if self.samples == 0 || self.sample_episode == 0 {
            return Err(TrainerError::Config("sample counts must be positive".into()));
        }
        self.discount.validate().map_err(TrainerError::Config)
    }
}

/// Starting positions for training sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub shape: Arc<TargetShape>,
    pub samples: Vec<Vec<Cell>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn world(&self, i: usize) -> Result<WorldState, WorldError> {
        WorldState::from_positions(self.shape.clone(), self.samples[i].clone())
    }
}

/// Records swarm position distributions along pheromone-guided random
/// walks that restart from a uniform placement every `episode` steps.
pub fn generate_samples(
    shape: Arc<TargetShape>,
    count: usize,
    episode: usize,
    medium: &MediumConfig,
    weight: &DistanceWeight,
    rng: &mut SimRng,
) -> Result<SampleSet, TrainerError> {
    if count == 0 || episode == 0 {
        return Err(TrainerError::Config("sample count and episode must be positive".into()));
    }
    let mut samples = Vec::with_capacity(count);
    'outer: loop {
        let mut world = WorldState::random(shape.clone(), rng)?;
        let mut map = PheromoneMap::new(shape.width(), shape.height(), medium.clone())?;
        for _ in 0..episode {
            for i in 0..world.agent_count() {
                let views = attractor_views(&map, world.position(i)).map_err(SwarmError::from)?;
                let target = select_attractor(&views, weight, rng).map_err(SwarmError::from)?;
                let act = biased_move(&world, i, target.map(|a| a.cell), rng);
                world.apply_action(i, act);
                let p = world.position(i);
                map.deposit(p, shape.is_labeled(p))?;
            }
            map.decay_occupied(world.positions().to_vec())?;
            samples.push(world.positions().to_vec());
            if samples.len() == count {
                break 'outer;
            }
        }
    }
    Ok(SampleSet { shape, samples })
}

/// Random move, three times as likely along directions that close in on
/// the attractor.
fn biased_move(world: &WorldState, agent: usize, target: Option<Cell>, rng: &mut SimRng) -> Action {
    let pos = world.position(agent);
    let weights: Vec<f64> = Action::MOVES
        .iter()
        .map(|&a| match target {
            Some(t) => {
                let (dx, dy) = a.delta();
                let nx = pos.x as f64 + dx as f64;
                let ny = pos.y as f64 + dy as f64;
                let d = ((nx - t.x as f64).powi(2) + (ny - t.y as f64).powi(2)).sqrt();
                if d < pos.euclidean(t) {
                    3.0
                } else {
                    1.0
                }
            }
            None => 1.0,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (a, w) in Action::MOVES.iter().zip(&weights) {
        if u < *w {
            return *a;
        }
        u -= w;
    }
    Action::Left
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Evaluation,
    Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub actors: usize,
    pub mode: ActionMode,
    pub global_reward: f64,
    pub updated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub kind: SessionKind,
    pub steps: Vec<StepRecord>,
    pub si_start: f64,
    pub si_end: f64,
    /// Ended on a similarity gain rather than the step limit.
    pub broke: bool,
    pub optimizer_steps: usize,
    /// Mean value-network loss over all updates in the session.
    pub value_loss: f64,
    /// Mean policy loss (behavior session only).
    pub policy_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub sample: usize,
    pub sessions: Vec<SessionTrace>,
}

/// Owns every agent's brain plus the virtual agent's optimizers.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub profile: LearnerProfile,
    pub cfg: TrainerConfig,
    pub medium: MediumConfig,
    pub weight: DistanceWeight,
    pub brains: Vec<AgentBrain>,
    eval_opt: FederalOptimizer,
    policy_opt: FederalOptimizer,
    value_opt: FederalOptimizer,
    /// Pheromone map shared by every session; created with the first
    /// session and kept across rounds.
    map: Option<PheromoneMap>,
    seed: u64,
    rng: SimRng,
    clock: u64,
    round: usize,
}

impl Trainer {
    pub fn new(
        profile: LearnerProfile,
        cfg: TrainerConfig,
        medium: MediumConfig,
        weight: DistanceWeight,
        agents: usize,
        seed: u64,
    ) -> Result<Self, TrainerError> {
        cfg.validate()?;
        medium.validate()?;
        let mut init_rng = seeded(mix_seed(&[seed, 0x1A17]));
        let brain = AgentBrain::new(profile.input_width(), &cfg.hidden, &mut init_rng)?;
        Ok(Trainer::with_brain(profile, cfg, medium, weight, agents, seed, brain))
    }

    /// Starts every agent (and the virtual agent) from `brain`.
    pub fn with_brain(
        profile: LearnerProfile,
        cfg: TrainerConfig,
        medium: MediumConfig,
        weight: DistanceWeight,
        agents: usize,
        seed: u64,
        brain: AgentBrain,
    ) -> Self {
        let eval_opt = FederalOptimizer::for_network(&brain.eval_value, cfg.momentum, cfg.learning_rate);
        let policy_opt = FederalOptimizer::for_network(&brain.policy, cfg.momentum, cfg.learning_rate);
        let value_opt = FederalOptimizer::for_network(&brain.behav_value, cfg.momentum, cfg.learning_rate);
        Trainer {
            profile,
            cfg,
            medium,
            weight,
            brains: vec![brain; agents],
            eval_opt,
            policy_opt,
            value_opt,
            map: None,
            seed,
            rng: seeded(mix_seed(&[seed, 0x5A3B])),
            clock: 0,
            round: 0,
        }
    }

    pub fn brain(&self) -> &AgentBrain {
        &self.brains[0]
    }

    pub fn eval_optimizer(&self) -> &FederalOptimizer {
        &self.eval_opt
    }

    pub fn policy_optimizer(&self) -> &FederalOptimizer {
        &self.policy_opt
    }

    pub fn value_optimizer(&self) -> &FederalOptimizer {
        &self.value_opt
    }

    pub fn pheromone(&self) -> Option<&PheromoneMap> {
        self.map.as_ref()
    }

    fn session_swarm(&mut self, world: WorldState) -> Result<Swarm, TrainerError> {
        let shape = world.shape().clone();
        let map = match self.map.take() {
            Some(m) if m.width() == shape.width() && m.height() == shape.height() => m,
            _ => PheromoneMap::new(shape.width(), shape.height(), self.medium.clone())?,
        };
        Ok(Swarm::new(
            world,
            map,
            self.weight,
            self.profile.stigmergy,
            self.seed,
            self.clock,
        ))
    }

    fn end_session(&mut self, swarm: Swarm) {
        self.clock = swarm.clock();
        self.map = Some(swarm.medium);
    }

    fn broadcast_eval(&mut self) {
        let p = self.eval_opt.params().to_vec();
        let sync = self.eval_opt.steps().is_multiple_of(self.cfg.target_period);
        for b in &mut self.brains {
            b.eval_value.params_mut().copy_from_slice(&p);
            if sync {
                b.eval_target.params_mut().copy_from_slice(&p);
            }
        }
    }

    fn broadcast_behavior(&mut self) {
        let pp = self.policy_opt.params().to_vec();
        let vp = self.value_opt.params().to_vec();
        let sync = self.value_opt.steps().is_multiple_of(self.cfg.target_period);
        for b in &mut self.brains {
            b.policy.params_mut().copy_from_slice(&pp);
            b.behav_value.params_mut().copy_from_slice(&vp);
            if sync {
                b.behav_target.params_mut().copy_from_slice(&vp);
            }
        }
    }

    /// Trains the priority network with the Behavior Module frozen.
    pub fn run_evaluation_session(&mut self, start: WorldState) -> Result<SessionTrace, TrainerError> {
        let mut swarm = self.session_swarm(start)?;
        let n = swarm.world.agent_count();
        let si_start = swarm.world.similarity();
        let mut trace = SessionTrace {
            kind: SessionKind::Evaluation,
            steps: Vec::new(),
            si_start,
            si_end: si_start,
            broke: false,
            optimizer_steps: 0,
            value_loss: 0.0,
            policy_loss: 0.0,
        };
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for t in 0..self.cfg.t_max {
            let obs = swarm.observe(self.profile.joint, SALT_ATTRACTOR)?;
            let mut plan = Vec::with_capacity(n);
            for i in 0..n {
                let mut rng = agent_stream(self.seed, i, swarm.clock(), SALT_ACTION);
                let a = self.brains[i].select_action(&obs.inputs[i], ActionMode::Greedy, &mut rng)?;
                plan.push((i, a));
            }
            let out = swarm.act(&plan, &obs.selected)?;
            let mut record = StepRecord {
                actors: n,
                mode: ActionMode::Greedy,
                global_reward: out.global_reward,
                updated: false,
            };
            if out.global_reward > 0.0 {
                trace.steps.push(record);
                trace.broke = true;
                swarm.tick();
                break;
            }
            let terminal = t + 1 == self.cfg.t_max;
            let next = if !terminal && self.cfg.discount.gamma2 != 0.0 {
                Some(swarm.observe(self.profile.joint, SALT_NEXT_ATTRACTOR)?)
            } else {
                None
            };
            let mut grads = Vec::with_capacity(n);
            for m in &out.moves {
                let i = m.agent;
                let r = individual_reward(
                    self.profile.reward,
                    m,
                    out.global_reward,
                    &self.cfg.discount,
                    &self.cfg.origin,
                );
                let next_s = next.as_ref().map(|o| o.inputs[i].as_slice());
                let target = self.brains[i].deterministic_return(r, next_s, &self.cfg.discount)?;
                let (loss, g) = self.brains[i].eval_value.value_loss_grad(&obs.inputs[i], target)?;
                loss_sum += loss;
                loss_count += 1;
                grads.push(g);
            }
            if self.eval_opt.step(&grads)? {
                self.broadcast_eval();
                trace.optimizer_steps += 1;
                record.updated = true;
            }
            trace.steps.push(record);
            swarm.tick();
        }
        trace.si_end = swarm.world.similarity();
        trace.value_loss = mean(loss_sum, loss_count);
        self.end_session(swarm);
        Ok(trace)
    }

    /// Trains the policy and its value network on the priority winners with
    /// the Evaluation Module frozen.
    pub fn run_behavior_session(&mut self, start: WorldState) -> Result<SessionTrace, TrainerError> {
        let mut swarm = self.session_swarm(start)?;
        let n = swarm.world.agent_count();
        let si_start = swarm.world.similarity();
        let mut trace = SessionTrace {
            kind: SessionKind::Behavior,
            steps: Vec::new(),
            si_start,
            si_end: si_start,
            broke: false,
            optimizer_steps: 0,
            value_loss: 0.0,
            policy_loss: 0.0,
        };
        let (mut vsum, mut psum, mut count) = (0.0, 0.0, 0usize);
        for t in 0..self.cfg.t_max {
            let obs = swarm.observe(self.profile.joint, SALT_ATTRACTOR)?;
            let winners: Vec<usize> = if self.profile.evaluation {
                let priorities = (0..n)
                    .map(|i| self.brains[i].action_priority(&obs.inputs[i]))
                    .collect::<Result<Vec<_>, _>>()?;
                decide_winners(&priorities, &swarm.world, self.profile.train_range)?
            } else {
                (0..n).collect()
            };
            if winners.is_empty() {
                return Err(TrainerError::NoWinners);
            }
            let mut plan = Vec::with_capacity(winners.len());
            for &i in &winners {
                let mut rng = agent_stream(self.seed, i, swarm.clock(), SALT_ACTION);
                let a = self.brains[i].select_action(&obs.inputs[i], ActionMode::Stochastic, &mut rng)?;
                plan.push((i, a));
            }
            let out = swarm.act(&plan, &obs.selected)?;
            let mut record = StepRecord {
                actors: winners.len(),
                mode: ActionMode::Stochastic,
                global_reward: out.global_reward,
                updated: false,
            };
            if out.global_reward > 0.0 {
                trace.steps.push(record);
                trace.broke = true;
                swarm.tick();
                break;
            }
            let terminal = t + 1 == self.cfg.t_max;
            let next = if !terminal && self.cfg.discount.gamma1 != 0.0 {
                Some(swarm.observe(self.profile.joint, SALT_NEXT_ATTRACTOR)?)
            } else {
                None
            };
            let mut pgrads = Vec::with_capacity(winners.len());
            let mut vgrads = Vec::with_capacity(winners.len());
            for m in &out.moves {
                let i = m.agent;
                let brain = &self.brains[i];
                let r = individual_reward(
                    self.profile.reward,
                    m,
                    out.global_reward,
                    &self.cfg.discount,
                    &self.cfg.origin,
                );
                let next_s = next.as_ref().map(|o| o.inputs[i].as_slice());
                let ret = brain.stochastic_return(r, next_s, &self.cfg.discount)?;
                let s = &obs.inputs[i];
                let (vloss, vg) = brain.behav_value.value_loss_grad(s, ret)?;
                let baseline = brain.behav_value.value_forward(s)?;
                let (ploss, pg) = brain.policy.policy_loss_grad(s, m.action.index(), ret - baseline)?;
                vsum += vloss;
                psum += ploss;
                count += 1;
                pgrads.push(pg);
                vgrads.push(vg);
            }
            let stepped = self.policy_opt.step(&pgrads)?;
            self.value_opt.step(&vgrads)?;
            if stepped {
                self.broadcast_behavior();
                trace.optimizer_steps += 1;
                record.updated = true;
            }
            trace.steps.push(record);
            swarm.tick();
        }
        trace.si_end = swarm.world.similarity();
        trace.value_loss = mean(vsum, count);
        trace.policy_loss = mean(psum, count);
        self.end_session(swarm);
        Ok(trace)
    }

    /// Draws a sample and runs both sessions on it (the evaluation session
    /// only when the method uses priorities).
    pub fn run_training_round(&mut self, samples: &SampleSet) -> Result<RoundMetrics, TrainerError> {
        if samples.is_empty() {
            return Err(TrainerError::NoSamples);
        }
        let pick = self.rng.gen_range(0..samples.len());
        let mut sessions = Vec::with_capacity(2);
        if self.profile.evaluation {
            sessions.push(self.run_evaluation_session(samples.world(pick)?)?);
        }
        sessions.push(self.run_behavior_session(samples.world(pick)?)?);
        let m = RoundMetrics {
            round: self.round,
            sample: pick,
            sessions,
        };
        self.round += 1;
        Ok(m)
    }

    pub fn train(&mut self, samples: &SampleSet, rounds: usize) -> Result<Vec<RoundMetrics>, TrainerError> {
        (0..rounds).map(|_| self.run_training_round(samples)).collect()
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordination::CoordinationRange;
    use crate::swarm::RewardKind;

    fn sirl() -> LearnerProfile {
        LearnerProfile {
            stigmergy: true,
            joint: false,
            reward: RewardKind::Medium,
            evaluation: true,
            train_range: CoordinationRange::Moore8,
            test_range: CoordinationRange::Moore8,
        }
    }

    fn small_cfg(t_max: usize) -> TrainerConfig {
        TrainerConfig {
            t_max,
            hidden: vec![8],
            samples: 20,
            sample_episode: 5,
            ..TrainerConfig::default()
        }
    }

    fn square_shape() -> Arc<TargetShape> {
        let mut lab = vec![false; 64];
        for y in 3..5 {
            for x in 3..5 {
                lab[y * 8 + x] = true;
            }
        }
        Arc::new(TargetShape::new(8, 8, lab).unwrap())
    }

    fn trainer(t_max: usize, seed: u64) -> Trainer {
        Trainer::new(
            sirl(),
            small_cfg(t_max),
            MediumConfig::default(),
            DistanceWeight::default(),
            4,
            seed,
        )
        .unwrap()
    }

    fn far_world() -> WorldState {
        let cells = vec![Cell::new(0, 0), Cell::new(7, 0), Cell::new(0, 7), Cell::new(7, 7)];
        WorldState::from_positions(square_shape(), cells).unwrap()
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut o = FederalOptimizer::new(&[1.0, -2.0], 0.9, 0.1);
        assert!(o.step(&[GradSet(vec![0.0, 0.0])]).unwrap());
        assert_eq!(o.params(), &[1.0, -2.0]);
    }

    #[test]
    fn plain_descent_when_momentum_off() {
        let mut o = FederalOptimizer::new(&[1.0, -2.0], 0.0, 0.5);
        o.step(&[GradSet(vec![2.0, -4.0])]).unwrap();
        assert_eq!(o.params(), &[0.0, 0.0]);
        o.step(&[GradSet(vec![1.0, 1.0])]).unwrap();
        assert_eq!(o.params(), &[-0.5, -0.5]);
    }

    #[test]
    fn opposite_grads_cancel() {
        let mut o = FederalOptimizer::new(&[0.3], 0.9, 0.1);
        o.step(&[GradSet(vec![5.0]), GradSet(vec![-5.0])]).unwrap();
        assert_eq!(o.params(), &[0.3]);
    }

    #[test]
    fn empty_and_mismatched_grads() {
        let mut o = FederalOptimizer::new(&[0.3, 0.1], 0.9, 0.1);
        assert!(!o.step(&[]).unwrap());
        assert_eq!(o.steps(), 0);
        assert!(matches!(
            o.step(&[GradSet(vec![1.0])]),
            Err(TrainerError::GradientShape { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn momentum_accumulates() {
        let mut o = FederalOptimizer::new(&[0.0], 0.5, 1.0);
        o.step(&[GradSet(vec![1.0])]).unwrap();
        o.step(&[GradSet(vec![1.0])]).unwrap();
        // v1 = -1, v2 = -0.5 - 1
        assert_eq!(o.velocity(), &[-1.5]);
        assert_eq!(o.params(), &[-2.5]);
    }

    #[test]
    fn samples_are_valid() {
        let mut rng = seeded(4);
        let set = generate_samples(square_shape(), 13, 5, &MediumConfig::default(), &DistanceWeight::default(), &mut rng)
            .unwrap();
        assert_eq!(set.len(), 13);
        for i in 0..set.len() {
            set.world(i).unwrap();
        }
        let one = generate_samples(square_shape(), 1, 5, &MediumConfig::default(), &DistanceWeight::default(), &mut rng)
            .unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn single_step_session_updates_once() {
        let mut t = trainer(1, 3);
        let tr = t.run_evaluation_session(far_world()).unwrap();
        assert_eq!(tr.steps.len(), 1);
        assert!(!tr.broke);
        assert_eq!(tr.optimizer_steps, 1);
        assert_eq!(t.eval_optimizer().steps(), 1);
    }

    #[test]
    fn break_on_similarity_gain() {
        // every agent moves Up; only agent 3 can, and it fills the gap
        let mut lab = vec![false; 64];
        for c in [(3, 0), (4, 0), (3, 1), (4, 1)] {
            lab[c.1 * 8 + c.0] = true;
        }
        let shape = Arc::new(TargetShape::new(8, 8, lab).unwrap());
        let cells = vec![Cell::new(3, 0), Cell::new(4, 0), Cell::new(3, 1), Cell::new(4, 2)];
        let world = WorldState::from_positions(shape, cells).unwrap();
        let mut brain = AgentBrain::zeros(7, &[8]).unwrap();
        let out = brain.policy.layer_range(1);
        brain.policy.params_mut()[out.end - 5 + Action::Up.index()] = 10.0;
        let mut t = Trainer::with_brain(sirl(), small_cfg(5), MediumConfig::default(), DistanceWeight::default(), 4, 1, brain);
        let tr = t.run_evaluation_session(world).unwrap();
        assert!(tr.broke);
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.optimizer_steps, 0);
        assert_eq!(tr.si_end, 1.0);
    }

    #[test]
    fn global_rewards_telescope() {
        let mut t = trainer(15, 9);
        for seed in 0..5u64 {
            let mut rng = seeded(seed);
            let w = WorldState::random(square_shape(), &mut rng).unwrap();
            for tr in [
                t.run_evaluation_session(w.clone()).unwrap(),
                t.run_behavior_session(w).unwrap(),
            ] {
                let sum: f64 = tr.steps.iter().map(|s| s.global_reward).sum();
                assert!((sum - (tr.si_end - tr.si_start)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sessions_freeze_the_other_module() {
        let mut t = trainer(6, 2);
        let before = t.brain().clone();
        t.run_evaluation_session(far_world()).unwrap();
        let mid = t.brain().clone();
        assert_eq!(before.policy, mid.policy);
        assert_eq!(before.behav_value, mid.behav_value);
        assert_ne!(before.eval_value, mid.eval_value);
        t.run_behavior_session(far_world()).unwrap();
        let after = t.brain();
        assert_eq!(mid.eval_value, after.eval_value);
        assert_eq!(mid.eval_target, after.eval_target);
        assert_ne!(mid.policy, after.policy);
    }

    #[test]
    fn broadcast_keeps_agents_identical() {
        let mut t = trainer(8, 5);
        let mut rng = seeded(1);
        let set = generate_samples(square_shape(), 10, 5, &t.medium, &t.weight, &mut rng).unwrap();
        t.train(&set, 5).unwrap();
        for b in &t.brains[1..] {
            assert_eq!(b, &t.brains[0]);
        }
        assert_eq!(t.brains[0].policy.params(), t.policy_optimizer().params());
        assert_eq!(t.brains[0].eval_value.params(), t.eval_optimizer().params());
    }

    #[test]
    fn target_sync_period() {
        let mut cfg = small_cfg(1);
        cfg.target_period = 3;
        let mut t = Trainer::new(sirl(), cfg, MediumConfig::default(), DistanceWeight::default(), 4, 7).unwrap();
        let initial = t.brain().eval_target.clone();
        for k in 1..=7u64 {
            t.run_evaluation_session(far_world()).unwrap();
            assert_eq!(t.eval_optimizer().steps(), k);
            let b = t.brain();
            if k % 3 == 0 {
                assert_eq!(b.eval_target, b.eval_value);
            } else if k < 3 {
                assert_eq!(b.eval_target, initial);
            } else {
                assert_ne!(b.eval_target, b.eval_value);
            }
        }
    }

    #[test]
    fn rounds_are_deterministic() {
        let run = || {
            let mut t = trainer(6, 11);
            let mut rng = seeded(2);
            let set = generate_samples(square_shape(), 12, 4, &t.medium, &t.weight, &mut rng).unwrap();
            let m = t.train(&set, 10).unwrap();
            (m, t.brain().clone())
        };
        let (a, ba) = run();
        let (b, bb) = run();
        assert_eq!(a, b);
        assert_eq!(ba, bb);
        for r in &a {
            for s in &r.sessions {
                assert!(s.value_loss.is_finite() && s.policy_loss.is_finite());
            }
        }
    }

    #[test]
    fn zero_nets_complete_a_round() {
        let brain = AgentBrain::zeros(7, &[8]).unwrap();
        let mut t = Trainer::with_brain(sirl(), small_cfg(3), MediumConfig::default(), DistanceWeight::default(), 4, 0, brain);
        let full: Vec<Cell> = square_shape().labeled_cells().collect();
        let set = SampleSet {
            shape: square_shape(),
            samples: vec![full],
        };
        let m = t.run_training_round(&set).unwrap();
        assert_eq!(m.sessions.len(), 2);
        assert!(m.sessions.iter().all(|s| s.si_start == 1.0));
        assert!(matches!(
            t.run_training_round(&SampleSet { shape: square_shape(), samples: vec![] }),
            Err(TrainerError::NoSamples)
        ));
    }
}
