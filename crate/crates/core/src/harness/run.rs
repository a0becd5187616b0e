use std::io::Write;
use std::path::{Path, PathBuf};

use crate::env::{make_env, Environment};
use crate::error::{usage, Result};
use crate::learner::{epsilon, sigma, Learner, ReplayBuffer, TrainMetrics};
use crate::numerics::{rng_from_seed, RngState, SeededRng};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use super::rollout::{collect_episode, evaluate, greedy_episode, EvalSummary, Mode};

/// Environment variable naming the directory that holds run directories.
pub const RUN_ROOT_ENV: &str = "CADP_RUN_ROOT";

pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Default run directory name, e.g. `climbing-qmix-cadp-s3`.
pub fn run_name(cfg: &TrainConfig) -> String {
    let env: String = cfg
        .env
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{env}-{}-{}-s{}", cfg.value_of("mixer"), cfg.value_of("agent"), cfg.seed)
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("step-{step:010}.ckpt"))
}

/// Training loop state: collect, store, sample, update, evaluate.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub learner: Learner,
    pub buffer: ReplayBuffer,
    pub t_env: u64,
    pub episodes: u64,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    rng: SeededRng,
    next_eval: u64,
    next_checkpoint: u64,
    last: Option<TrainMetrics>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(&cfg.env)?;
        let spec = env.spec();
        let mut rng = rng_from_seed(cfg.seed);
        let learner = Learner::new(spec, cfg.agent_config(spec), cfg.learner_config(), &mut rng)?;
        Ok(Trainer {
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            eval_env: make_env(&cfg.env)?,
            env,
            learner,
            rng,
            t_env: 0,
            episodes: 0,
            next_eval: cfg.eval_interval,
            next_checkpoint: if cfg.checkpoint_interval > 0 { cfg.checkpoint_interval } else { u64::MAX },
            last: None,
            cfg,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(ck.config)?;
        if t.learner.theta.len() != ck.theta.len()
            || t.learner.theta.iter().zip(ck.theta.iter()).any(|(a, b)| a.0 != b.0 || a.1.dims() != b.1.dims())
        {
            return usage("checkpoint parameters do not match its configuration");
        }
        t.learner.theta = ck.theta;
        t.learner.target = ck.target;
        t.learner.optimizer = ck.optimizer;
        t.learner.train_steps = ck.train_steps;
        t.buffer = ck.buffer;
        t.rng = ck.rng.restore();
        t.t_env = ck.t_env;
        t.episodes = ck.episodes;
        t.next_eval = ck.next_eval;
        t.next_checkpoint = ck.next_checkpoint;
        t.last = ck.last_metrics;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            t_env: self.t_env,
            episodes: self.episodes,
            next_eval: self.next_eval,
            next_checkpoint: self.next_checkpoint,
            train_steps: self.learner.train_steps,
            rng: RngState::capture(&self.rng),
            last_metrics: self.last,
            theta: self.learner.theta.clone(),
            target: self.learner.target.clone(),
            optimizer: self.learner.optimizer.clone(),
            buffer: self.buffer.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.t_env >= self.cfg.total_steps
    }

    pub fn last_metrics(&self) -> Option<TrainMetrics> {
        self.last
    }

    /// Collect one episode, store it and run one update.
    pub fn train_episode(&mut self) -> Result<Option<TrainMetrics>> {
        let eps = epsilon(self.t_env, &self.cfg.epsilon_schedule());
        let episode = collect_episode(
            self.env.as_mut(),
            &self.learner.agent,
            &self.learner.theta,
            self.cfg.exchange(),
            eps,
            &mut self.rng,
        )?;
        self.t_env += episode.len() as u64;
        self.episodes += 1;
        self.buffer.insert(episode)?;
        let metrics = self.learner.train_step(&self.buffer, &mut self.rng, self.t_env)?;
        if metrics.is_some() {
            self.last = metrics;
        }
        Ok(metrics)
    }

    /// Greedy evaluation in one mode. Reset seeds come from a generator on
    /// its own stream, keyed by the current step.
    pub fn evaluate(&mut self, mode: Mode) -> Result<EvalSummary> {
        let mut rng = rng_from_seed(self.cfg.seed);
        rng.set_stream(self.t_env + 1);
        evaluate(
            self.eval_env.as_mut(),
            &self.learner.agent,
            &self.learner.theta,
            self.cfg.exchange(),
            mode,
            self.cfg.eval_episodes,
            &mut rng,
        )
    }

    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let c = self.evaluate(Mode::Centralized)?;
        let d = self.evaluate(Mode::Decentralized)?;
        let (loss_td, loss_prune, mean_diag) = match self.last {
            Some(m) => (m.loss_td, m.loss_prune, m.mean_diag_confidence),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        Ok(MetricsRow {
            step: self.t_env,
            episode: self.episodes,
            loss_td,
            loss_prune,
            sigma: sigma(self.t_env, self.cfg.prune_start, self.cfg.prune_alpha),
            epsilon: epsilon(self.t_env, &self.cfg.epsilon_schedule()),
            mean_diag_conf: mean_diag,
            eval_return_c: c.mean_return,
            eval_return_d: d.mean_return,
            eval_win_c: c.win_rate,
            eval_win_d: d.win_rate,
        })
    }

    /// Train to `total_steps` (or until `stop_at`), writing metrics rows and
    /// checkpoints into `dir`.
    pub fn run(&mut self, dir: &Path, stop_at: Option<u64>) -> Result<()> {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        let config_path = dir.join("config.txt");
        if !config_path.exists() {
            std::fs::write(&config_path, self.cfg.to_text())?;
        }
        let metrics_path = dir.join("metrics.csv");
        let mut writer = MetricsWriter::truncate_after(&metrics_path, self.t_env)?;
        while !self.is_done() && stop_at.map_or(true, |s| self.t_env < s) {
            self.train_episode()?;
            if self.t_env >= self.next_eval || self.is_done() {
                writer.write(&self.metrics_row()?)?;
                while self.next_eval <= self.t_env {
                    self.next_eval += self.cfg.eval_interval;
                }
            }
            if self.t_env >= self.next_checkpoint {
                self.checkpoint().save(&checkpoint_path(dir, self.t_env))?;
                while self.next_checkpoint <= self.t_env {
                    self.next_checkpoint += self.cfg.checkpoint_interval;
                }
            }
        }
        let ck = self.checkpoint();
        ck.save(&checkpoint_path(dir, self.t_env))?;
        if self.is_done() {
            ck.save(&dir.join("final.ckpt"))?;
        }
        Ok(())
    }
}

/// Fresh run into `dir`; refuses a directory that already has metrics.
pub fn run_train(cfg: TrainConfig, dir: &Path) -> Result<Trainer> {
    if dir.join("metrics.csv").exists() {
        return usage(format!("{} already holds a run; use resume", dir.display()));
    }
    let mut trainer = Trainer::new(cfg)?;
    trainer.run(dir, None)?;
    Ok(trainer)
}

/// Continue the run in `dir` from a checkpoint.
pub fn resume_train(checkpoint: &Path, dir: &Path) -> Result<Trainer> {
    let mut trainer = Trainer::from_checkpoint(Checkpoint::load(checkpoint)?)?;
    trainer.run(dir, None)?;
    Ok(trainer)
}

pub fn run_eval(checkpoint: &Path, mode: Mode, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let trainer = Trainer::from_checkpoint(Checkpoint::load(checkpoint)?)?;
    let mut env = make_env(&trainer.cfg.env)?;
    evaluate(
        env.as_mut(),
        &trainer.learner.agent,
        &trainer.learner.theta,
        trainer.cfg.exchange(),
        mode,
        episodes,
        &mut rng_from_seed(seed),
    )
}

pub const ATTENTION_HEADER: &str = "episode,step,i,j,value";

/// Greedy CADP(C) rollouts, one CSV row per confidence entry.
pub fn export_attention<W: Write>(checkpoint: &Path, episodes: usize, seed: u64, out: &mut W) -> Result<()> {
    let trainer = Trainer::from_checkpoint(Checkpoint::load(checkpoint)?)?;
    let mut env = make_env(&trainer.cfg.env)?;
    let mut rng = rng_from_seed(seed);
    writeln!(out, "{ATTENTION_HEADER}")?;
    for e in 0..episodes {
        let ep = greedy_episode(
            env.as_mut(),
            &trainer.learner.agent,
            &trainer.learner.theta,
            trainer.cfg.exchange(),
            Mode::Centralized,
            rand::Rng::gen(&mut rng),
        )?;
        for (t, c) in ep.confidences.iter().enumerate() {
            for (i, row) in c.weights.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(out, "{e},{t},{i},{j},{v:.16e}")?;
                }
            }
        }
    }
    Ok(())
}
