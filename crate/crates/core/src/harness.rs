//! Experiment plumbing: configuration, shape loading, training and testing
//! runs, CSV metrics and graymap frames.

use crate::agent::{ActionMode, AgentBrain};
use crate::baselines::{cs_step, dc_step, BaselineError, DcRewardTable, Oracle};
use crate::coordination::{decide_winners, CoordinationError, CoordinationRange};
use crate::medium::{MediumConfig, MediumError, PheromoneMap};
use crate::neuralcore::NeuralError;
use crate::perception::DistanceWeight;
use crate::rng::{agent_stream, mix_seed, seeded};
use crate::swarm::{LearnerProfile, RewardKind, Swarm, SwarmError, SALT_ACTION, SALT_ATTRACTOR};
use crate::trainer::{generate_samples, RoundMetrics, Trainer, TrainerConfig, TrainerError};
use crate::world::{TargetShape, WorldError, WorldState};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

const SALT_PLACEMENT: u64 = 0x9_1ACE;
const SALT_SAMPLES: u64 = 0x5A_4D1E;
const IDX_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("IDX data truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad IDX magic {0:#010x}")]
    Magic(u32),
    #[error("IDX image index {index} out of range ({count} images)")]
    Index { index: usize, count: usize },
    #[error("IDX dimensions overflow")]
    Overflow,
    #[error("bitmap line {line}: unexpected character {ch:?}")]
    Character { line: usize, ch: char },
    #[error("bitmap line {line}: width {got}, expected {expected}")]
    Ragged { line: usize, got: usize, expected: usize },
    #[error("bitmap has no rows")]
    Empty,
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Shape {
        path: PathBuf,
        #[source]
        source: ShapeError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("checkpoint expects {got} inputs, method {method} uses {expected}")]
    CheckpointWidth {
        method: Method,
        expected: usize,
        got: usize,
    },
    #[error("method {0} needs a trained checkpoint")]
    MissingBrain(Method),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SIRL")]
    Sirl,
    #[serde(rename = "SIRL-A")]
    SirlA,
    #[serde(rename = "SIRL-WS")]
    SirlWs,
    #[serde(rename = "JL")]
    Jl,
    #[serde(rename = "IRL")]
    Irl,
    #[serde(rename = "JL-O")]
    JlO,
    #[serde(rename = "IRL-O")]
    IrlO,
    #[serde(rename = "CS")]
    Cs,
    #[serde(rename = "DC")]
    Dc,
    #[serde(rename = "Oracle")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Sirl,
        Method::SirlA,
        Method::SirlWs,
        Method::Jl,
        Method::Irl,
        Method::JlO,
        Method::IrlO,
        Method::Cs,
        Method::Dc,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sirl => "SIRL",
            Method::SirlA => "SIRL-A",
            Method::SirlWs => "SIRL-WS",
            Method::Jl => "JL",
            Method::Irl => "IRL",
            Method::JlO => "JL-O",
            Method::IrlO => "IRL-O",
            Method::Cs => "CS",
            Method::Dc => "DC",
            Method::Oracle => "Oracle",
        }
    }

    /// Learning configuration; `None` for the hand-designed methods.
    /// SIRL-A and SIRL-WS train exactly like SIRL and differ only in the
    /// coordination range used at test time.
    pub fn profile(self) -> Option<LearnerProfile> {
        let sirl = LearnerProfile {
            stigmergy: true,
            joint: false,
            reward: RewardKind::Medium,
            evaluation: true,
            train_range: CoordinationRange::Moore8,
            test_range: CoordinationRange::Moore8,
        };
        let independent = LearnerProfile {
            evaluation: false,
            train_range: CoordinationRange::Disabled,
            test_range: CoordinationRange::Disabled,
            ..sirl
        };
        Some(match self {
            Method::Sirl => sirl,
            Method::SirlA => LearnerProfile {
                test_range: CoordinationRange::VonNeumann4,
                ..sirl
            },
            Method::SirlWs => LearnerProfile {
                test_range: CoordinationRange::Disabled,
                ..sirl
            },
            Method::Jl => LearnerProfile {
                joint: true,
                ..independent
            },
            Method::Irl => independent,
            Method::JlO => LearnerProfile {
                stigmergy: false,
                joint: true,
                reward: RewardKind::Origin,
                ..independent
            },
            Method::IrlO => LearnerProfile {
                stigmergy: false,
                reward: RewardKind::Origin,
                ..independent
            },
            Method::Cs | Method::Dc | Method::Oracle => return None,
        })
    }

    /// Method whose trained brain this one tests with.
    pub fn training_method(self) -> Method {
        match self {
            Method::SirlA | Method::SirlWs => Method::Sirl,
            m => m,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSource {
    pub path: PathBuf,
    /// Image index inside an IDX file.
    #[serde(default)]
    pub index: usize,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
}

fn default_threshold() -> u8 {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub method: Method,
    pub seed: Option<u64>,
    /// Testing iterations.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Write a frame every this many test iterations (needs `out`).
    pub frame_every: Option<usize>,
}

fn default_iterations() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsSection {
    /// Agents selected per iteration.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub shape: ShapeSource,
    #[serde(default)]
    pub cs: Option<CsSection>,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub attractor: DistanceWeight,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

impl ExperimentConfig {
    pub fn new(method: Method, shape: impl Into<PathBuf>, seed: u64) -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                method,
                seed: Some(seed),
                iterations: default_iterations(),
                out: None,
                checkpoint: None,
                frame_every: None,
            },
            shape: ShapeSource {
                path: shape.into(),
                index: 0,
                threshold: default_threshold(),
            },
            cs: None,
            medium: MediumConfig::default(),
            attractor: DistanceWeight::default(),
            trainer: TrainerConfig::default(),
        }
    }

    /// Parses TOML text; relative paths stay as written.
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = ExperimentConfig::parse(&text).map_err(|source| HarnessError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.shape.path);
        if let Some(p) = cfg.experiment.out.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.experiment.checkpoint.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.experiment
            .seed
            .ok_or_else(|| HarnessError::Config("a seed is required".into()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.seed()?;
        self.medium.validate()?;
        self.trainer.validate()?;
        if !(self.attractor.peak > 0.0 && self.attractor.std_dev > 0.0) {
            return Err(HarnessError::Config("attractor peak and std_dev must be positive".into()));
        }
        match (self.experiment.method, self.cs) {
            (Method::Cs, None) => {
                return Err(HarnessError::Config("method CS needs [cs] k".into()));
            }
            (Method::Cs, Some(c)) if c.k == 0 => {
                return Err(HarnessError::Config("[cs] k must be at least 1".into()));
            }
            _ => {}
        }
        if self.experiment.frame_every == Some(0) {
            return Err(HarnessError::Config("frame_every must be at least 1".into()));
        }
        if self.experiment.frame_every.is_some() && self.experiment.out.is_none() {
            return Err(HarnessError::Config("frame_every needs an output directory".into()));
        }
        Ok(())
    }
}

/// Reads one image from MNIST-style IDX bytes; pixels at or above
/// `threshold` become labeled cells.
pub fn parse_idx(bytes: &[u8], index: usize, threshold: u8) -> Result<TargetShape, ShapeError> {
    if bytes.len() < 16 {
        return Err(ShapeError::Truncated {
            need: 16,
            have: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let magic = word(0);
    if magic != IDX_MAGIC {
        return Err(ShapeError::Magic(magic));
    }
    let (count, rows, cols) = (word(4) as usize, word(8) as usize, word(12) as usize);
    if index >= count {
        return Err(ShapeError::Index { index, count });
    }
    let image = rows.checked_mul(cols).ok_or(ShapeError::Overflow)?;
    let need = image
        .checked_mul(count)
        .and_then(|n| n.checked_add(16))
        .ok_or(ShapeError::Overflow)?;
    if bytes.len() < need {
        return Err(ShapeError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    let start = 16 + image * index;
    let labeled = bytes[start..start + image].iter().map(|&p| p >= threshold).collect();
    Ok(TargetShape::new(cols, rows, labeled)?)
}

/// Rows of `0`/`1` characters. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_bitmap(text: &str) -> Result<TargetShape, ShapeError> {
    let mut width = None;
    let mut labeled = Vec::new();
    let mut rows = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for ch in line.chars() {
            match ch {
                '0' => labeled.push(false),
                '1' => labeled.push(true),
                _ => return Err(ShapeError::Character { line: n + 1, ch }),
            }
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(ShapeError::Ragged {
                    line: n + 1,
                    got: count,
                    expected: w,
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or(ShapeError::Empty)?;
    Ok(TargetShape::new(width, rows, labeled)?)
}

/// IDX when the file starts with the IDX image magic, text bitmap otherwise.
pub fn load_shape(src: &ShapeSource) -> Result<TargetShape, HarnessError> {
    let bytes = fs::read(&src.path).map_err(io_err(&src.path))?;
    let shape_err = |source| HarnessError::Shape {
        path: src.path.clone(),
        source,
    };
    if bytes.len() >= 4 && bytes[..4] == IDX_MAGIC.to_be_bytes() {
        parse_idx(&bytes, src.index, src.threshold).map_err(shape_err)
    } else {
        let text = String::from_utf8_lossy(&bytes);
        parse_bitmap(&text).map_err(shape_err)
    }
}

/// Uniform random placement keyed on the run seed.
pub fn initial_world(shape: Arc<TargetShape>, seed: u64) -> Result<WorldState, WorldError> {
    WorldState::random(shape, &mut seeded(mix_seed(&[seed, SALT_PLACEMENT])))
}

/// One metrics row per training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub round: usize,
    pub session: String,
    pub steps: usize,
    pub optimizer_steps: usize,
    pub si_start: f64,
    pub si_end: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
}

impl TrainRow {
    pub fn from_round(m: &RoundMetrics) -> Vec<TrainRow> {
        m.sessions
            .iter()
            .map(|s| TrainRow {
                round: m.round,
                session: format!("{:?}", s.kind).to_lowercase(),
                steps: s.steps.len(),
                optimizer_steps: s.optimizer_steps,
                si_start: s.si_start,
                si_end: s.si_end,
                value_loss: s.value_loss,
                policy_loss: s.policy_loss,
            })
            .collect()
    }
}

/// One metrics row per test iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub iteration: usize,
    pub movers: usize,
    pub si: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub brain: AgentBrain,
    pub rounds: Vec<RoundMetrics>,
}

/// Generates samples and runs `cfg.trainer.rounds` training rounds for the
/// configured method (SIRL-A and SIRL-WS train as SIRL).
pub fn train(cfg: &ExperimentConfig, shape: Arc<TargetShape>) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let method = cfg.experiment.method.training_method();
    let profile = method
        .profile()
        .ok_or_else(|| HarnessError::Config(format!("method {method} does not learn")))?;
    let seed = cfg.seed()?;
    let mut rng = seeded(mix_seed(&[seed, SALT_SAMPLES]));
    let samples = generate_samples(
        shape.clone(),
        cfg.trainer.samples,
        cfg.trainer.sample_episode,
        &cfg.medium,
        &cfg.attractor,
        &mut rng,
    )?;
    let mut trainer = Trainer::new(
        profile,
        cfg.trainer.clone(),
        cfg.medium.clone(),
        cfg.attractor,
        shape.agent_count(),
        seed,
    )?;
    let rounds = trainer.train(&samples, cfg.trainer.rounds)?;
    Ok(TrainOutcome {
        brain: trainer.brain().clone(),
        rounds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub si: f64,
    pub initial_si: f64,
    pub rows: Vec<TestRow>,
    pub world: WorldState,
}

/// Runs the testing loop from the seeded initial placement.
pub fn run_test(
    cfg: &ExperimentConfig,
    shape: Arc<TargetShape>,
    brain: Option<&AgentBrain>,
) -> Result<TestOutcome, HarnessError> {
    cfg.validate()?;
    let world = initial_world(shape, cfg.seed()?)?;
    run_test_from(cfg, world, brain)
}

/// Runs the testing loop from a given placement. Every iteration each
/// agent picks an attractor, priorities are exchanged, and the winners act
/// greedily.
pub fn run_test_from(
    cfg: &ExperimentConfig,
    world: WorldState,
    brain: Option<&AgentBrain>,
) -> Result<TestOutcome, HarnessError> {
    let method = cfg.experiment.method;
    let seed = cfg.seed()?;
    let iterations = cfg.experiment.iterations;
    let frames = match (cfg.experiment.frame_every, &cfg.experiment.out) {
        (Some(k), Some(out)) => {
            let dir = out.join("frames");
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            Some((k, dir))
        }
        _ => None,
    };
    let shape = world.shape().clone();
    let map = PheromoneMap::new(shape.width(), shape.height(), cfg.medium.clone())?;
    let stigmergy = method.profile().is_none_or(|p| p.stigmergy);
    let mut swarm = Swarm::new(world, map, cfg.attractor, stigmergy, seed, 0);
    let initial_si = swarm.world.similarity();
    let mut rows = Vec::with_capacity(iterations);
    let mut oracle = Oracle::new();
    let dc = DcRewardTable::default();
    if let Some((_, dir)) = &frames {
        export_frame(&swarm.world, &swarm.medium, &dir.join(frame_name(0)))?;
    }
    let profile = method.profile();
    if let Some(p) = profile {
        let b = brain.ok_or(HarnessError::MissingBrain(method))?;
        if b.input_width() != p.input_width() {
            return Err(HarnessError::CheckpointWidth {
                method,
                expected: p.input_width(),
                got: b.input_width(),
            });
        }
    }
    for it in 1..=iterations {
        let movers = match (method, profile) {
            (Method::Oracle, _) => usize::from(oracle.step(&mut swarm.world)),
            (Method::Dc, _) => dc_step(&mut swarm, &dc)?.len(),
            (Method::Cs, _) => {
                let k = cfg.cs.map_or(1, |c| c.k);
                cs_step(&mut swarm, &dc, k)?.len()
            }
            (_, Some(p)) => {
                let b = brain.ok_or(HarnessError::MissingBrain(method))?;
                learner_step(&mut swarm, &p, b)?
            }
            (_, None) => unreachable!("every learning method has a profile"),
        };
        rows.push(TestRow {
            iteration: it,
            movers,
            si: swarm.world.similarity(),
        });
        if let Some((k, dir)) = &frames {
            if it % k == 0 {
                export_frame(&swarm.world, &swarm.medium, &dir.join(frame_name(it)))?;
            }
        }
    }
    if let Some(out) = &cfg.experiment.out {
        fs::create_dir_all(out).map_err(io_err(out))?;
        write_metrics(&rows, &out.join("test.csv"))?;
    }
    Ok(TestOutcome {
        si: swarm.world.similarity(),
        initial_si,
        rows,
        world: swarm.world,
    })
}

fn frame_name(it: usize) -> String {
    format!("iter_{it:06}.pgm")
}

fn learner_step(swarm: &mut Swarm, p: &LearnerProfile, brain: &AgentBrain) -> Result<usize, HarnessError> {
    let n = swarm.world.agent_count();
    let obs = swarm.observe(p.joint, SALT_ATTRACTOR)?;
    let winners = if p.test_range == CoordinationRange::Disabled {
        (0..n).collect()
    } else {
        let priorities = obs
            .inputs
            .iter()
            .map(|s| brain.action_priority(s))
            .collect::<Result<Vec<_>, _>>()?;
        decide_winners(&priorities, &swarm.world, p.test_range)?
    };
    let mut plan = Vec::with_capacity(winners.len());
    for &i in &winners {
        let mut rng = agent_stream(swarm.seed(), i, swarm.clock(), SALT_ACTION);
        plan.push((i, brain.select_action(&obs.inputs[i], ActionMode::Greedy, &mut rng)?));
    }
    swarm.act(&plan, &obs.selected)?;
    swarm.tick();
    Ok(winners.len())
}

/// Writes the world as a graymap at `path` and the pheromone field next to
/// it with a `.medium.pgm` suffix.
pub fn export_frame(world: &WorldState, medium: &PheromoneMap, path: &Path) -> Result<(), HarnessError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    world.write_pgm(BufWriter::new(f)).map_err(io_err(path))?;
    let mpath = path.with_extension("medium.pgm");
    let f = fs::File::create(&mpath).map_err(io_err(&mpath))?;
    medium.write_pgm(BufWriter::new(f)).map_err(io_err(&mpath))?;
    Ok(())
}

/// Appends rows to a CSV file, writing the header only when the file is new
/// or empty.
pub fn write_metrics<T: Serialize>(rows: &[T], path: &Path) -> Result<(), HarnessError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(f);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn save_checkpoint(brain: &AgentBrain, cfg: &ExperimentConfig, path: &Path) -> Result<(), HarnessError> {
    let ck = brain.to_checkpoint(cfg.trainer.discount);
    let text = serde_json::to_string_pretty(&ck).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<AgentBrain, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(AgentBrain::parse_checkpoint(&text)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cell;

    fn idx(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IDX_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn idx_thresholds_and_indexes() {
        let data = idx(2, 2, 3, &[0, 128, 127, 255, 0, 0, 9, 9, 9, 200, 200, 200]);
        let a = parse_idx(&data, 0, 128).unwrap();
        assert_eq!((a.width(), a.height(), a.agent_count()), (3, 2, 2));
        assert!(a.is_labeled(Cell::new(1, 0)) && a.is_labeled(Cell::new(0, 1)));
        assert_eq!(parse_idx(&data, 1, 128).unwrap().agent_count(), 3);
        assert_eq!(parse_idx(&data, 2, 128), Err(ShapeError::Index { index: 2, count: 2 }));
    }

    #[test]
    fn idx_rejects_bad_input() {
        let mut data = idx(1, 2, 2, &[255; 4]);
        assert!(matches!(parse_idx(&data[..10], 0, 128), Err(ShapeError::Truncated { .. })));
        assert!(matches!(parse_idx(&data[..18], 0, 128), Err(ShapeError::Truncated { .. })));
        data[3] = 1;
        assert_eq!(parse_idx(&data, 0, 128), Err(ShapeError::Magic(0x801)));
        let huge = idx(u32::MAX, u32::MAX, u32::MAX, &[]);
        assert!(parse_idx(&huge, 0, 128).is_err());
        let blank = idx(1, 2, 2, &[0; 4]);
        assert_eq!(
            parse_idx(&blank, 0, 128),
            Err(ShapeError::World(WorldError::EmptyShape))
        );
    }

    #[test]
    fn bitmap_counts() {
        let s = parse_bitmap("# plus\n010\n111\n\n010\n").unwrap();
        assert_eq!((s.width(), s.height(), s.agent_count()), (3, 3, 5));
        assert!(matches!(parse_bitmap("01\n011"), Err(ShapeError::Ragged { line: 2, .. })));
        assert!(matches!(parse_bitmap("0x"), Err(ShapeError::Character { ch: 'x', .. })));
        assert_eq!(parse_bitmap("\n# c\n"), Err(ShapeError::Empty));
        assert_eq!(parse_bitmap("000\n000"), Err(ShapeError::World(WorldError::EmptyShape)));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let t: toml::Value = toml::from_str(&format!("m = \"{}\"", m.name())).unwrap();
            assert_eq!(t["m"].clone().try_into::<Method>().unwrap(), m);
        }
        assert!("sirl-ws".parse::<Method>().is_ok());
        assert!("PPO".parse::<Method>().is_err());
    }

    #[test]
    fn profiles() {
        let s = Method::Sirl.profile().unwrap();
        assert_eq!(Method::SirlA.profile().unwrap().train_range, s.train_range);
        assert_eq!(Method::SirlWs.profile().unwrap().test_range, CoordinationRange::Disabled);
        assert_eq!(Method::Jl.profile().unwrap().input_width(), 63);
        assert!(!Method::IrlO.profile().unwrap().stigmergy);
        assert!(Method::Oracle.profile().is_none());
        assert_eq!(Method::SirlWs.training_method(), Method::Sirl);
    }

    #[test]
    fn config_validation() {
        let text = r#"
[experiment]
method = "CS"
seed = 3

[shape]
path = "x.txt"
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.shape.threshold, 128);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let mut ok = cfg.clone();
        ok.cs = Some(CsSection { k: 2 });
        ok.validate().unwrap();
        let mut unseeded = ok.clone();
        unseeded.experiment.seed = None;
        assert!(unseeded.validate().is_err());
        assert!(ExperimentConfig::parse("[experiment]\nmethod = \"SIRL\"\nbogus = 1\n[shape]\npath = \"a\"").is_err());
    }

    fn plus() -> Arc<TargetShape> {
        Arc::new(parse_bitmap("00000\n00100\n01110\n00100\n00000").unwrap())
    }

    #[test]
    fn zero_iterations_keep_initial_similarity() {
        let mut cfg = ExperimentConfig::new(Method::Dc, "unused", 5);
        cfg.experiment.iterations = 0;
        let out = run_test(&cfg, plus(), None).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.si, out.initial_si);
        assert_eq!(out.si, initial_world(plus(), 5).unwrap().similarity());
    }

    #[test]
    fn oracle_fills_plus() {
        let mut cfg = ExperimentConfig::new(Method::Oracle, "unused", 2);
        cfg.experiment.iterations = 60;
        assert_eq!(run_test(&cfg, plus(), None).unwrap().si, 1.0);
    }

    #[test]
    fn learners_need_matching_brains() {
        let cfg = ExperimentConfig::new(Method::Jl, "unused", 2);
        assert!(matches!(run_test(&cfg, plus(), None), Err(HarnessError::MissingBrain(_))));
        let b = AgentBrain::zeros(7, &[4]).unwrap();
        assert!(matches!(
            run_test(&cfg, plus(), Some(&b)),
            Err(HarnessError::CheckpointWidth { expected: 63, got: 7, .. })
        ));
    }

    #[test]
    fn test_runs_are_reproducible() {
        let mut rng = seeded(1);
        let b = AgentBrain::new(7, &[8], &mut rng).unwrap();
        for m in [Method::Sirl, Method::SirlA, Method::SirlWs, Method::Irl, Method::Cs, Method::Dc] {
            let mut cfg = ExperimentConfig::new(m, "unused", 9);
            cfg.cs = Some(CsSection { k: 2 });
            cfg.experiment.iterations = 25;
            let a = run_test(&cfg, plus(), Some(&b)).unwrap();
            let c = run_test(&cfg, plus(), Some(&b)).unwrap();
            assert_eq!(a, c);
            assert_eq!(a.rows.len(), 25);
        }
    }

    #[test]
    fn metrics_and_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Method::Dc, "unused", 4);
        cfg.experiment.iterations = 6;
        cfg.experiment.out = Some(dir.path().join("run"));
        cfg.experiment.frame_every = Some(3);
        run_test(&cfg, plus(), None).unwrap();
        let csv_path = dir.path().join("run/test.csv");
        let first = fs::read_to_string(&csv_path).unwrap();
        assert_eq!(first.lines().count(), 7);
        assert!(first.starts_with("iteration,movers,si"));
        run_test(&cfg, plus(), None).unwrap();
        let both = fs::read_to_string(&csv_path).unwrap();
        assert_eq!(both.lines().count(), 13);
        assert_eq!(both[first.len()..], first[first.find('\n').unwrap() + 1..]);
        let frame = fs::read_to_string(dir.path().join("run/frames/iter_000003.pgm")).unwrap();
        let mut lines = frame.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("5 5"));
        assert!(dir.path().join("run/frames/iter_000006.medium.pgm").exists());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = seeded(8);
        let b = AgentBrain::new(7, &[5], &mut rng).unwrap();
        let p = dir.path().join("ck/brain.json");
        let cfg = ExperimentConfig::new(Method::Sirl, "unused", 1);
        save_checkpoint(&b, &cfg, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), b);
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing.json")),
            Err(HarnessError::Io { .. })
        ));
    }

    mod decoders {
        use super::*;
        use proptest::prelude::*;

        fn idx_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
            let mut b = Vec::new();
            for w in [IDX_MAGIC, count, rows, cols] {
                b.extend_from_slice(&w.to_be_bytes());
            }
            b.extend_from_slice(pixels);
            b
        }

        proptest! {
            #[test]
            fn idx_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..96), index in 0usize..4, t in any::<u8>()) {
                let _ = parse_idx(&bytes, index, t);
            }

            #[test]
            fn idx_header_fields_are_untrusted(
                count in any::<u32>(),
                rows in any::<u32>(),
                cols in any::<u32>(),
                pixels in proptest::collection::vec(any::<u8>(), 0..64),
                index in any::<usize>(),
            ) {
                if let Ok(s) = parse_idx(&idx_bytes(count, rows, cols, &pixels), index, 1) {
                    prop_assert_eq!(s.width() * s.height(), rows as usize * cols as usize);
                }
            }

            #[test]
            fn bitmap_never_panics(text in "[01# \n\r\tx]{0,80}") {
                let _ = parse_bitmap(&text);
            }

            #[test]
            fn bitmap_round_trips(w in 1usize..8, cells in proptest::collection::vec(any::<bool>(), 1..64)) {
                let h = cells.len().div_ceil(w);
                let mut cells = cells;
                cells.resize(w * h, false);
                if let Ok(shape) = TargetShape::new(w, h, cells) {
                    prop_assert_eq!(parse_bitmap(&shape.to_string()).unwrap(), shape);
                }
            }

            #[test]
            fn config_never_panics(text in "(\\[[a-z]{0,10}\\]\n)?([a-z_]{1,10} = (\"[A-Za-z./-]{0,10}\"|-?[0-9]{1,4}|true)\n){0,6}") {
                if let Ok(cfg) = ExperimentConfig::parse(&text) {
                    let _ = cfg.validate();
                }
            }

            #[test]
            fn checkpoint_never_panics(text in "\\PC{0,80}") {
                let _ = crate::neuralcore::Mlp::parse_checkpoint(&text);
                let _ = AgentBrain::parse_checkpoint(&text);
            }
        }
    }
}
