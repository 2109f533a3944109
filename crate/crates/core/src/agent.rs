//! One agent's Evaluation Module (priority network and its target copy) and
//! Behavior Module (policy, value network and target copy).

use crate::neuralcore::{Mlp, MlpCheckpoint, NeuralError, Topology};
use crate::perception::sample_index;
use crate::rng::SimRng;
use crate::world::Action;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscountConfig {
    /// Discount for the stochastic (Behavior Module) return.
    pub gamma1: f64,
    /// Discount for the deterministic (Evaluation Module) return.
    pub gamma2: f64,
    /// Scale of the medium reward.
    pub reward_scale: f64,
}

impl Default for DiscountConfig {
    fn default() -> Self {
        DiscountConfig {
            gamma1: 0.9,
            gamma2: 0.0,
            reward_scale: 1.0,
        }
    }
}

impl DiscountConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(format!("{name} must lie in [0, 1], got {g}"));
            }
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(format!(
                "reward_scale must be positive, got {}",
                self.reward_scale
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Greedy,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentBrain {
    pub eval_value: Mlp,
    pub eval_target: Mlp,
    pub policy: Mlp,
    pub behav_value: Mlp,
    pub behav_target: Mlp,
}

impl AgentBrain {
    /// Freshly initialized brain; target networks start as copies.
    pub fn new(input: usize, hidden: &[usize], rng: &mut SimRng) -> Result<Self, NeuralError> {
        let eval_value = Mlp::init(Topology::value(input, hidden), rng)?;
        let policy = Mlp::init(Topology::policy(input, hidden, Action::ALL.len()), rng)?;
        let behav_value = Mlp::init(Topology::value(input, hidden), rng)?;
        Ok(AgentBrain {
            eval_target: eval_value.clone(),
            behav_target: behav_value.clone(),
            eval_value,
            policy,
            behav_value,
        })
    }

    pub fn zeros(input: usize, hidden: &[usize]) -> Result<Self, NeuralError> {
        let v = Mlp::zeros(Topology::value(input, hidden))?;
        Ok(AgentBrain {
            eval_value: v.clone(),
            eval_target: v.clone(),
            policy: Mlp::zeros(Topology::policy(input, hidden, Action::ALL.len()))?,
            behav_value: v.clone(),
            behav_target: v,
        })
    }

    pub fn input_width(&self) -> usize {
        self.policy.topology().input()
    }

    /// Action priority: the Evaluation Module's state value.
    pub fn action_priority(&self, s: &[f64]) -> Result<f64, NeuralError> {
        self.eval_value.value_forward(s)
    }

    pub fn select_action(
        &self,
        s: &[f64],
        mode: ActionMode,
        rng: &mut impl Rng,
    ) -> Result<Action, NeuralError> {
        let pi = self.policy.policy_forward(s)?;
        let idx = match mode {
            ActionMode::Greedy => argmax(&pi),
            ActionMode::Stochastic => sample_index(&pi, rng),
        };
        Ok(Action::ALL[idx])
    }

    /// `r + gamma2 * V_target_e(next)`, or `r` at a terminal transition.
    pub fn deterministic_return(
        &self,
        reward: f64,
        next: Option<&[f64]>,
        cfg: &DiscountConfig,
    ) -> Result<f64, NeuralError> {
        bootstrap(reward, next, cfg.gamma2, &self.eval_target)
    }

    /// `r + gamma1 * V_target_b(next)`, or `r` at a terminal transition.
    pub fn stochastic_return(
        &self,
        reward: f64,
        next: Option<&[f64]>,
        cfg: &DiscountConfig,
    ) -> Result<f64, NeuralError> {
        bootstrap(reward, next, cfg.gamma1, &self.behav_target)
    }

    pub fn to_checkpoint(&self, discount: DiscountConfig) -> BrainCheckpoint {
        BrainCheckpoint {
            eval_value: self.eval_value.to_checkpoint(),
            eval_target: self.eval_target.to_checkpoint(),
            policy: self.policy.to_checkpoint(),
            behav_value: self.behav_value.to_checkpoint(),
            behav_target: self.behav_target.to_checkpoint(),
            discount,
        }
    }

    pub fn from_checkpoint(c: BrainCheckpoint) -> Result<(Self, DiscountConfig), NeuralError> {
        let brain = AgentBrain {
            eval_value: Mlp::from_checkpoint(c.eval_value)?,
            eval_target: Mlp::from_checkpoint(c.eval_target)?,
            policy: Mlp::from_checkpoint(c.policy)?,
            behav_value: Mlp::from_checkpoint(c.behav_value)?,
            behav_target: Mlp::from_checkpoint(c.behav_target)?,
        };
        if brain.eval_value.topology() != brain.eval_target.topology()
            || brain.behav_value.topology() != brain.behav_target.topology()
        {
            return Err(NeuralError::TopologyMismatch(
                "value network and its target differ".into(),
            ));
        }
        let inputs = [
            brain.eval_value.topology().input(),
            brain.policy.topology().input(),
            brain.behav_value.topology().input(),
        ];
        if inputs.iter().any(|&i| i != inputs[0]) {
            return Err(NeuralError::TopologyMismatch(
                "modules disagree on the observation width".into(),
            ));
        }
        if brain.policy.topology().output() != Action::ALL.len() {
            return Err(NeuralError::TopologyMismatch(format!(
                "policy has {} outputs, expected {}",
                brain.policy.topology().output(),
                Action::ALL.len()
            )));
        }
        c.discount
            .validate()
            .map_err(NeuralError::Checkpoint)?;
        Ok((brain, c.discount))
    }

    pub fn parse_checkpoint(text: &str) -> Result<(Self, DiscountConfig), NeuralError> {
        let c: BrainCheckpoint =
            serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        AgentBrain::from_checkpoint(c)
    }
}

/// Five network checkpoints plus the discount settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrainCheckpoint {
    pub eval_value: MlpCheckpoint,
    pub eval_target: MlpCheckpoint,
    pub policy: MlpCheckpoint,
    pub behav_value: MlpCheckpoint,
    pub behav_target: MlpCheckpoint,
    pub discount: DiscountConfig,
}

fn bootstrap(reward: f64, next: Option<&[f64]>, gamma: f64, target: &Mlp) -> Result<f64, NeuralError> {
    match next {
        Some(s) if gamma != 0.0 => Ok(reward + gamma * target.value_forward(s)?),
        _ => Ok(reward),
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Reward for closing in on the attractor chosen before the move.
pub fn medium_reward(d_prev: f64, d_now: f64, cfg: &DiscountConfig) -> f64 {
    cfg.reward_scale * (d_prev - d_now).max(0.0)
}
