use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::agent::{AgentConfig, Exchange};
use crate::env::{make_env, EnvSpec};
use crate::error::{config, Result};
use crate::learner::{EpsilonSchedule, LearnerConfig, MixerKind};
use crate::numerics::OptimizerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    /// Attention exchange during training, pruned by `L_p`.
    Cadp,
    /// Same network with the exchange fixed to the identity.
    Ctde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerChoice {
    Adam,
    RmsProp,
}

/// Every setting of a training run. Serialized as flat `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: String,
    pub mixer: MixerKind,
    pub agent: AgentKind,
    pub total_steps: u64,
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: OptimizerChoice,
    pub optim_eps: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_interval: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal: u64,
    pub prune_start: u64,
    pub prune_alpha: f64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
    pub seed: u64,
    pub hidden: usize,
    pub attn_dim: usize,
    pub head_hidden: usize,
    pub mixer_embed: usize,
    pub grad_clip: f64,
}

pub const KEYS: [&str; 25] = [
    "env",
    "mixer",
    "agent",
    "total_steps",
    "gamma",
    "lr",
    "optimizer",
    "optim_eps",
    "buffer_capacity",
    "batch_size",
    "target_interval",
    "eps_start",
    "eps_end",
    "eps_anneal",
    "prune_start",
    "prune_alpha",
    "eval_interval",
    "eval_episodes",
    "checkpoint_interval",
    "seed",
    "hidden",
    "attn_dim",
    "head_hidden",
    "mixer_embed",
    "grad_clip",
];

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: "climbing".into(),
            mixer: MixerKind::Qmix,
            agent: AgentKind::Cadp,
            total_steps: 50_000,
            gamma: 0.99,
            lr: 5e-4,
            optimizer: OptimizerChoice::Adam,
            optim_eps: 1e-8,
            buffer_capacity: 5000,
            batch_size: 32,
            target_interval: 200,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal: 50_000,
            prune_start: 37_500,
            prune_alpha: 0.5,
            eval_interval: 1000,
            eval_episodes: 32,
            checkpoint_interval: 10_000,
            seed: 0,
            hidden: 64,
            attn_dim: 32,
            head_hidden: 64,
            mixer_embed: 32,
            grad_clip: 10.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().or_else(|_| config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    /// Parse `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored. `prune_start` follows `total_steps` (three
    /// quarters) unless given.
    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| split_pair(l))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(&pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Apply `key=value` pairs in order, later ones winning.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut prune_given = false;
        let mut eps_given = false;
        for (k, v) in pairs {
            prune_given |= k == "prune_start";
            eps_given |= k == "optim_eps";
            cfg.set(k, v)?;
        }
        if !prune_given {
            cfg.prune_start = cfg.total_steps / 4 * 3;
        }
        if !eps_given && cfg.optimizer == OptimizerChoice::RmsProp {
            cfg.optim_eps = 1e-5;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "env" => self.env = v.to_string(),
            "mixer" => {
                self.mixer = match v {
                    "qmix" => MixerKind::Qmix,
                    "vdn" => MixerKind::Vdn,
                    _ => return config(format!("unknown mixer {v:?} (qmix|vdn)")),
                }
            }
            "agent" => {
                self.agent = match v {
                    "cadp" => AgentKind::Cadp,
                    "ctde" => AgentKind::Ctde,
                    _ => return config(format!("unknown agent {v:?} (cadp|ctde)")),
                }
            }
            "optimizer" => {
                self.optimizer = match v {
                    "adam" => OptimizerChoice::Adam,
                    "rmsprop" => OptimizerChoice::RmsProp,
                    _ => return config(format!("unknown optimizer {v:?} (adam|rmsprop)")),
                }
            }
            "total_steps" => self.total_steps = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "optim_eps" => self.optim_eps = parse(key, v)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "target_interval" => self.target_interval = parse(key, v)?,
            "eps_start" => self.eps_start = parse(key, v)?,
            "eps_end" => self.eps_end = parse(key, v)?,
            "eps_anneal" => self.eps_anneal = parse(key, v)?,
            "prune_start" => self.prune_start = parse(key, v)?,
            "prune_alpha" => self.prune_alpha = parse(key, v)?,
            "eval_interval" => self.eval_interval = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "attn_dim" => self.attn_dim = parse(key, v)?,
            "head_hidden" => self.head_hidden = parse(key, v)?,
            "mixer_embed" => self.mixer_embed = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse(key, v)?,
            other => return config(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_steps", self.total_steps as f64),
            ("lr", self.lr),
            ("optim_eps", self.optim_eps),
            ("buffer_capacity", self.buffer_capacity as f64),
            ("batch_size", self.batch_size as f64),
            ("target_interval", self.target_interval as f64),
            ("eval_interval", self.eval_interval as f64),
            ("eval_episodes", self.eval_episodes as f64),
            ("hidden", self.hidden as f64),
            ("attn_dim", self.attn_dim as f64),
            ("head_hidden", self.head_hidden as f64),
            ("mixer_embed", self.mixer_embed as f64),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return config(format!("{k} must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return config("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) || self.eps_end > self.eps_start {
            return config("epsilon schedule needs 0 ≤ eps_end ≤ eps_start ≤ 1");
        }
        if self.prune_start > self.total_steps {
            return config("prune_start must not exceed total_steps");
        }
        if !(self.prune_alpha >= 0.0) || !(self.grad_clip >= 0.0) {
            return config("prune_alpha and grad_clip must be nonnegative");
        }
        if self.batch_size > self.buffer_capacity {
            return config("batch_size exceeds buffer_capacity");
        }
        make_env(&self.env)?;
        Ok(())
    }

    /// All keys in a fixed order, floats in round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    pub fn value_of(&self, key: &str) -> String {
        match key {
            "env" => self.env.clone(),
            "mixer" => match self.mixer {
                MixerKind::Qmix => "qmix".into(),
                MixerKind::Vdn => "vdn".into(),
            },
            "agent" => match self.agent {
                AgentKind::Cadp => "cadp".into(),
                AgentKind::Ctde => "ctde".into(),
            },
            "optimizer" => match self.optimizer {
                OptimizerChoice::Adam => "adam".into(),
                OptimizerChoice::RmsProp => "rmsprop".into(),
            },
            "total_steps" => self.total_steps.to_string(),
            "gamma" => format!("{:?}", self.gamma),
            "lr" => format!("{:?}", self.lr),
            "optim_eps" => format!("{:?}", self.optim_eps),
            "buffer_capacity" => self.buffer_capacity.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "target_interval" => self.target_interval.to_string(),
            "eps_start" => format!("{:?}", self.eps_start),
            "eps_end" => format!("{:?}", self.eps_end),
            "eps_anneal" => self.eps_anneal.to_string(),
            "prune_start" => self.prune_start.to_string(),
            "prune_alpha" => format!("{:?}", self.prune_alpha),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "seed" => self.seed.to_string(),
            "hidden" => self.hidden.to_string(),
            "attn_dim" => self.attn_dim.to_string(),
            "head_hidden" => self.head_hidden.to_string(),
            "mixer_embed" => self.mixer_embed.to_string(),
            "grad_clip" => format!("{:?}", self.grad_clip),
            _ => String::new(),
        }
    }

    /// Text identifying the experiment irrespective of seed.
    pub fn group_key(&self) -> String {
        KEYS.iter()
            .filter(|&&k| k != "seed")
            .map(|k| format!("{k}={}", self.value_of(k)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn exchange(&self) -> Exchange {
        match self.agent {
            AgentKind::Cadp => Exchange::Attention,
            AgentKind::Ctde => Exchange::Identity,
        }
    }

    pub fn agent_config(&self, spec: EnvSpec) -> AgentConfig {
        AgentConfig {
            obs_dim: spec.obs_dim,
            n_actions: spec.n_actions,
            hidden: self.hidden,
            attn_dim: self.attn_dim,
            head_hidden: self.head_hidden,
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            gamma: self.gamma,
            batch_size: self.batch_size,
            target_interval: self.target_interval,
            grad_clip: self.grad_clip,
            prune_start: self.prune_start,
            prune_alpha: self.prune_alpha,
            lr: self.lr,
            optimizer: match self.optimizer {
                OptimizerChoice::Adam => OptimizerKind::adam(),
                OptimizerChoice::RmsProp => OptimizerKind::rmsprop(),
            },
            optim_eps: self.optim_eps,
            mixer: self.mixer,
            mixer_embed: self.mixer_embed,
            exchange: self.exchange(),
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule { start: self.eps_start, end: self.eps_end, anneal_steps: self.eps_anneal }
    }
}

/// Split `key=value` (spaces allowed around `=`).
pub fn split_pair(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => config(format!("expected key=value, got {s:?}")),
    }
}
