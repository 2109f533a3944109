//! Small fully connected networks with hand-derived gradients.
//!
//! Parameters live in one flat vector, layer by layer: the row-major weight
//! matrix (`out x in`) followed by the bias vector. Hidden layers use `tanh`;
//! the output head is either a softmax (policy) or the identity (value).

use crate::rng::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("network input has {got} values, expected {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("policy assigns zero probability to action {0}")]
    ZeroProbability(usize),
    #[error("action index {index} outside {outputs} policy outputs")]
    ActionIndex { index: usize, outputs: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub sizes: Vec<usize>,
    pub head: Head,
}

impl Topology {
    pub fn policy(input: usize, hidden: &[usize], actions: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(actions);
        Topology {
            sizes,
            head: Head::Softmax,
        }
    }

    pub fn value(input: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Topology {
            sizes,
            head: Head::Linear,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.sizes.len() < 2 {
            return Err(NeuralError::InvalidTopology(
                "need at least an input and an output layer".into(),
            ));
        }
        if self.sizes.contains(&0) {
            return Err(NeuralError::InvalidTopology("zero-width layer".into()));
        }
        if self.head == Head::Linear && *self.sizes.last().unwrap() != 1 {
            return Err(NeuralError::InvalidTopology(
                "value head must have one output".into(),
            ));
        }
        if self.head == Head::Softmax && *self.sizes.last().unwrap() < 2 {
            return Err(NeuralError::InvalidTopology(
                "softmax head needs at least two outputs".into(),
            ));
        }
        let count: u128 = self
            .sizes
            .windows(2)
            .map(|w| (w[0] as u128 + 1) * w[1] as u128)
            .sum();
        if count > (1 << 28) {
            return Err(NeuralError::InvalidTopology(format!(
                "{count} parameters is beyond the supported size"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }
}

/// Per-parameter partial derivatives, laid out like [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet(pub Vec<f64>);

impl GradSet {
    pub fn zeros(len: usize) -> Self {
        GradSet(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    topology: Topology,
    params: Vec<f64>,
}

struct Trace {
    /// Layer activations, input first; the last entry holds output logits.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn zeros(topology: Topology) -> Result<Self, NeuralError> {
        topology.validate()?;
        let n = topology.param_count();
        Ok(Mlp {
            topology,
            params: vec![0.0; n],
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(topology: Topology, rng: &mut SimRng) -> Result<Self, NeuralError> {
        let mut net = Mlp::zeros(topology)?;
        let mut off = 0;
        for w in net.topology.sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[off..off + (fan_in + 1) * fan_out] {
                *p = rng.gen_range(-bound..=bound);
            }
            off += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn from_params(topology: Topology, params: Vec<f64>) -> Result<Self, NeuralError> {
        topology.validate()?;
        if params.len() != topology.param_count() {
            return Err(NeuralError::TopologyMismatch(format!(
                "{} parameters for a topology needing {}",
                params.len(),
                topology.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::Checkpoint("non-finite parameter".into()));
        }
        Ok(Mlp { topology, params })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Copies parameters from a network of identical topology.
    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NeuralError> {
        if params.len() != self.params.len() {
            return Err(NeuralError::TopologyMismatch(format!(
                "{} parameters into a network of {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Range of the flat vector holding layer `l` (weights then biases).
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let mut off = 0;
        for (i, w) in self.topology.sizes.windows(2).enumerate() {
            let len = (w[0] + 1) * w[1];
            if i == l {
                return off..off + len;
            }
            off += len;
        }
        panic!("layer {l} out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.topology.input() {
            return Err(NeuralError::InputWidth {
                expected: self.topology.input(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteInput);
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Result<Trace, NeuralError> {
        self.check_input(x)?;
        let sizes = &self.topology.sizes;
        let layers = sizes.len() - 1;
        let mut acts = Vec::with_capacity(sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + (n_in + 1) * n_out];
            let a = &acts[l];
            let mut z: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
            off += (n_in + 1) * n_out;
        }
        Ok(Trace { acts })
    }

    /// Back-propagates `delta` (gradient of the loss with respect to the
    /// output logits) through a forward trace.
    fn backward(&self, trace: &Trace, delta: Vec<f64>) -> GradSet {
        let sizes = &self.topology.sizes;
        let layers = sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        let mut delta = delta;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let a = &trace.acts[l];
            let (gw, gb) = grad[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            for (j, &d) in delta.iter().enumerate() {
                gb[j] = d;
                for (g, &ai) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(a) {
                    *g = d * ai;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (j, &d) in delta.iter().enumerate() {
                    for (p, &wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += wi * d;
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2
                for (p, &ai) in prev.iter_mut().zip(a) {
                    *p *= 1.0 - ai * ai;
                }
                delta = prev;
            }
        }
        GradSet(grad)
    }

    fn expect_head(&self, head: Head) -> Result<(), NeuralError> {
        if self.topology.head != head {
            return Err(NeuralError::TopologyMismatch(format!(
                "expected a {head:?} head, network has {:?}",
                self.topology.head
            )));
        }
        Ok(())
    }

    /// Action distribution of a softmax-head network.
    pub fn policy_forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.expect_head(Head::Softmax)?;
        let t = self.trace(x)?;
        Ok(softmax(t.acts.last().unwrap()))
    }

    pub fn value_forward(&self, x: &[f64]) -> Result<f64, NeuralError> {
        self.expect_head(Head::Linear)?;
        let t = self.trace(x)?;
        Ok(t.acts.last().unwrap()[0])
    }

    /// `0.5 (target - V(x))^2` and its parameter gradient.
    pub fn value_loss_grad(&self, x: &[f64], target: f64) -> Result<(f64, GradSet), NeuralError> {
        self.expect_head(Head::Linear)?;
        let t = self.trace(x)?;
        let v = t.acts.last().unwrap()[0];
        let err = v - target;
        let g = self.backward(&t, vec![err]);
        Ok((0.5 * err * err, g))
    }

    /// `-ln pi(action | x) * advantage` and its parameter gradient.
    pub fn policy_loss_grad(
        &self,
        x: &[f64],
        action: usize,
        advantage: f64,
    ) -> Result<(f64, GradSet), NeuralError> {
        self.expect_head(Head::Softmax)?;
        let outputs = self.topology.output();
        if action >= outputs {
            return Err(NeuralError::ActionIndex {
                index: action,
                outputs,
            });
        }
        let t = self.trace(x)?;
        let logits = t.acts.last().unwrap();
        let pi = softmax(logits);
        if pi[action] == 0.0 {
            return Err(NeuralError::ZeroProbability(action));
        }
        let log_pi = log_softmax_at(logits, action);
        // d/dz_k [-ln pi_a] = pi_k - 1[k = a]
        let delta: Vec<f64> = pi
            .iter()
            .enumerate()
            .map(|(k, &p)| advantage * (p - if k == action { 1.0 } else { 0.0 }))
            .collect();
        let g = self.backward(&t, delta);
        Ok((-log_pi * advantage, g))
    }

    /// Makes `self` a bit-identical copy of `src`.
    pub fn sync_from(&mut self, src: &Mlp) -> Result<(), NeuralError> {
        if self.topology != src.topology {
            return Err(NeuralError::TopologyMismatch(format!(
                "cannot copy {:?} into {:?}",
                src.topology.sizes, self.topology.sizes
            )));
        }
        self.params.copy_from_slice(&src.params);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            topology: self.topology.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: MlpCheckpoint) -> Result<Self, NeuralError> {
        ckpt.check_header()?;
        Mlp::from_params(ckpt.topology, ckpt.params)
    }

    /// Parses a JSON network checkpoint.
    pub fn parse_checkpoint(text: &str) -> Result<Self, NeuralError> {
        let ckpt: MlpCheckpoint =
            serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        Mlp::from_checkpoint(ckpt)
    }

    pub fn checkpoint_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes")
    }
}

/// Copies `src` into `dst`; topologies must agree.
pub fn sync_target(src: &Mlp, dst: &mut Mlp) -> Result<(), NeuralError> {
    dst.sync_from(src)
}

pub const CHECKPOINT_FORMAT: &str = "stigmergy-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized network: topology plus the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpCheckpoint {
    pub format: String,
    pub version: u32,
    pub topology: Topology,
    pub params: Vec<f64>,
}

impl MlpCheckpoint {
    fn check_header(&self) -> Result<(), NeuralError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!(
                "unknown format tag {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        Ok(())
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax_at(z: &[f64], k: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    z[k] - lse
}
