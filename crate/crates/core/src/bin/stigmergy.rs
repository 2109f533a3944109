use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::sync::Arc;
use stigmergy::harness::{
    self, load_checkpoint, load_shape, save_checkpoint, write_metrics, ExperimentConfig, Method, TrainRow,
};

#[derive(Parser)]
#[command(version, about = "Swarm shape formation with digital pheromones and federated actor-critic training")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learning method and write its checkpoint.
    Train(Common),
    /// Run the testing loop for any method.
    Test(Common),
    /// Train (when the method learns), then test.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let method = self.method.context("--method is required without --config")?;
                let shape = self.shape.clone().context("--shape is required without --config")?;
                let seed = self.seed.context("--seed is required without --config")?;
                ExperimentConfig::new(method, shape, seed)
            }
        };
        if let Some(m) = self.method {
            cfg.experiment.method = m;
        }
        if let Some(s) = &self.shape {
            cfg.shape.path = s.clone();
        }
        if let Some(s) = self.seed {
            cfg.experiment.seed = Some(s);
        }
        if let Some(r) = self.rounds {
            cfg.trainer.rounds = r;
        }
        if let Some(i) = self.iters {
            cfg.experiment.iterations = i;
        }
        if let Some(o) = &self.out {
            cfg.experiment.out = Some(o.clone());
        }
        if let Some(c) = &self.checkpoint {
            cfg.experiment.checkpoint = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn checkpoint_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.experiment
        .checkpoint
        .clone()
        .or_else(|| cfg.experiment.out.as_ref().map(|o| o.join("brain.json")))
}

fn train(cfg: &ExperimentConfig, shape: Arc<stigmergy::TargetShape>) -> Result<stigmergy::agent::AgentBrain> {
    let out = harness::train(cfg, shape)?;
    if let Some(dir) = &cfg.experiment.out {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
        let rows: Vec<TrainRow> = out.rounds.iter().flat_map(TrainRow::from_round).collect();
        write_metrics(&rows, &dir.join("train.csv"))?;
    }
    if let Some(p) = checkpoint_path(cfg) {
        save_checkpoint(&out.brain, cfg, &p)?;
        eprintln!("checkpoint written to {}", p.display());
    }
    Ok(out.brain)
}

fn test(cfg: &ExperimentConfig, shape: Arc<stigmergy::TargetShape>, brain: Option<&stigmergy::agent::AgentBrain>) -> Result<()> {
    let out = harness::run_test(cfg, shape, brain)?;
    println!(
        "{} seed={} iterations={} initial_si={:.4} final_si={:.4}",
        cfg.experiment.method,
        cfg.seed()?,
        cfg.experiment.iterations,
        out.initial_si,
        out.si
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (common, mode) = match &cli.cmd {
        Command::Train(c) => (c, 0),
        Command::Test(c) => (c, 1),
        Command::Run(c) => (c, 2),
    };
    let cfg = common.config()?;
    let shape = Arc::new(load_shape(&cfg.shape)?);
    eprintln!(
        "{}: {}x{} grid, {} agents",
        cfg.shape.path.display(),
        shape.width(),
        shape.height(),
        shape.agent_count()
    );
    let learns = cfg.experiment.method.profile().is_some();
    match mode {
        0 => {
            train(&cfg, shape)?;
        }
        1 => {
            let brain = if learns {
                let p = checkpoint_path(&cfg).context("learning methods need --checkpoint")?;
                Some(load_checkpoint(&p)?)
            } else {
                None
            };
            test(&cfg, shape, brain.as_ref())?;
        }
        _ => {
            let brain = if learns { Some(train(&cfg, shape.clone())?) } else { None };
            test(&cfg, shape, brain.as_ref())?;
        }
    }
    Ok(())
}
