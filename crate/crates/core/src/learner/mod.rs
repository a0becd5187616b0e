//! Training engine: replay, TD and pruning losses, schedules, updates.

mod buffer;
mod loss;
mod schedule;

pub use buffer::{Episode, EpisodeBatch, ReplayBuffer};
pub use loss::{compute_pruning_loss, compute_td_loss, TdOutput, PRUNE_LOG_EPS};
pub use schedule::{epsilon, sigma, EpsilonSchedule};

use rand::Rng;

use crate::agent::{AgentConfig, AgentNet, Exchange};
use crate::env::EnvSpec;
use crate::error::{config, Error, Result};
use crate::mixer::{Mixer, QmixMixer};
use crate::numerics::{OptimizerKind, OptimizerState, ParameterSet, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Qmix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub target_interval: u64,
    /// Global gradient-norm clip; zero disables clipping.
    pub grad_clip: f64,
    pub prune_start: u64,
    pub prune_alpha: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub optim_eps: f64,
    pub mixer: MixerKind,
    pub mixer_embed: usize,
    pub exchange: Exchange,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            batch_size: 32,
            target_interval: 200,
            grad_clip: 10.0,
            prune_start: 0,
            prune_alpha: 0.5,
            lr: 5e-4,
            optimizer: OptimizerKind::adam(),
            optim_eps: 1e-8,
            mixer: MixerKind::Qmix,
            mixer_embed: 32,
            exchange: Exchange::Attention,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainMetrics {
    pub loss_td: f64,
    pub loss_prune: f64,
    pub sigma: f64,
    pub mean_diag_confidence: f64,
    pub grad_norm: f64,
}

/// Online networks, their delayed copies and the optimizer.
#[derive(Clone, Debug)]
pub struct Learner {
    pub agent: AgentNet,
    pub mixer: Mixer,
    pub theta: ParameterSet,
    pub target: ParameterSet,
    pub optimizer: OptimizerState,
    pub train_steps: u64,
    pub cfg: LearnerConfig,
}

impl Learner {
    pub fn new<R: Rng>(spec: EnvSpec, agent_cfg: AgentConfig, cfg: LearnerConfig, rng: &mut R) -> Result<Self> {
        if agent_cfg.obs_dim != spec.obs_dim || agent_cfg.n_actions != spec.n_actions {
            return config("agent sizes do not match the environment");
        }
        if !(0.0..=1.0).contains(&cfg.gamma) || cfg.batch_size == 0 || cfg.target_interval == 0 || cfg.lr <= 0.0 {
            return config(format!("invalid learner settings {cfg:?}"));
        }
        let mut theta = ParameterSet::new();
        let agent = AgentNet::init(agent_cfg, &mut theta, rng)?;
        let mixer = match cfg.mixer {
            MixerKind::Vdn => Mixer::Vdn { n_agents: spec.n_agents },
            MixerKind::Qmix => Mixer::Qmix(QmixMixer::init(spec.n_agents, spec.state_dim, cfg.mixer_embed, &mut theta, rng)?),
        };
        let target = theta.clone();
        let optimizer = OptimizerState::new(cfg.optimizer, cfg.lr, cfg.optim_eps, &theta);
        Ok(Learner { agent, mixer, theta, target, optimizer, train_steps: 0, cfg })
    }

    pub fn sync_targets(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.theta)
    }

    /// One optimizer step on `L_TD + σ(t)·L_p`.
    pub fn update(&mut self, batch: &EpisodeBatch, t_env: u64) -> Result<TrainMetrics> {
        let sig = sigma(t_env, self.cfg.prune_start, self.cfg.prune_alpha);
        let (grads, vars, loss_td, loss_prune, mean_diag) = {
            let mut tape = Tape::new();
            let online = tape.bind(&self.theta);
            let target = tape.bind_frozen(&self.target);
            let td = compute_td_loss(
                &mut tape,
                &online,
                &target,
                &self.agent,
                &self.mixer,
                batch,
                self.cfg.gamma,
                self.cfg.exchange,
            )?;
            let (prune, mean_diag) = compute_pruning_loss(&mut tape, &td.confidences, batch)?;
            let total = if sig != 0.0 {
                let scaled = tape.scale(prune, sig);
                tape.add(td.loss, scaled)?
            } else {
                td.loss
            };
            let (loss_td, loss_prune) = (tape.scalar(td.loss), tape.scalar(prune));
            let total_value = tape.scalar(total);
            if !total_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at train step {} (td {loss_td}, prune {loss_prune})",
                    self.train_steps
                )));
            }
            let grads = tape.backward(total)?;
            (grads, online.vars().to_vec(), loss_td, loss_prune, mean_diag)
        };
        self.theta.zero_grads();
        self.theta.accumulate_from(&vars, &grads)?;
        let grad_norm = self.theta.grad_norm();
        if !grad_norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at train step {}", self.train_steps)));
        }
        if self.cfg.grad_clip > 0.0 && grad_norm > self.cfg.grad_clip {
            self.theta.scale_grads(self.cfg.grad_clip / grad_norm);
        }
        self.optimizer.step(&mut self.theta)?;
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_interval == 0 {
            self.sync_targets()?;
        }
        // L_p is reported only while it is part of the objective.
        let loss_prune = if sig != 0.0 { loss_prune } else { 0.0 };
        Ok(TrainMetrics { loss_td, loss_prune, sigma: sig, mean_diag_confidence: mean_diag, grad_norm })
    }

    /// Sample a batch and update; `None` while the buffer is not ready.
    pub fn train_step<R: Rng>(&mut self, buffer: &ReplayBuffer, rng: &mut R, t_env: u64) -> Result<Option<TrainMetrics>> {
        match buffer.sample(self.cfg.batch_size, rng)? {
            None => Ok(None),
            Some(batch) => self.update(&batch, t_env).map(Some),
        }
    }

    /// TD targets for a batch under the current target networks.
    pub fn td_targets(&self, batch: &EpisodeBatch) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let online = tape.bind_frozen(&self.theta);
        let target = tape.bind_frozen(&self.target);
        let td = compute_td_loss(
            &mut tape,
            &online,
            &target,
            &self.agent,
            &self.mixer,
            batch,
            self.cfg.gamma,
            self.cfg.exchange,
        )?;
        Ok(td.targets)
    }
}
