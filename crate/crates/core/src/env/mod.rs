//! Cooperative environments with a team reward.
//!
//! Every environment follows the same contract: `reset(seed)` returns the
//! global state and per-agent observations, `step(joint_action)` advances the
//! episode. Environments are selected by a short spec string, see [`make_env`].

mod corridor;
mod matrix;

pub use corridor::{Corridor, CorridorSpreadDef, LEFT, RIGHT, STAY};
pub use matrix::{brute_force_optimal_return, MatrixGame, MatrixGameDef};

use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub observations: ObservationSet,
    pub reward: f64,
    pub terminated: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    fn reset(&mut self, seed: u64) -> (Vec<f64>, ObservationSet);

    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome>;

    /// Whether a finished episode counts as a win.
    fn is_win(&self, episode_return: f64) -> bool;

    fn name(&self) -> &str;
}

impl std::fmt::Debug for dyn Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Environment({})", self.name())
    }
}

pub(crate) fn one_hot(len: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[idx] = 1.0;
    v
}

/// Parse `key=value` pairs after the environment name.
fn parse_params(parts: &[&str]) -> Result<Vec<(String, String)>> {
    parts
        .iter()
        .map(|p| match p.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().replace('\u{2212}', "-"))),
            None => config(format!("environment parameter `{p}` is not key=value")),
        })
        .collect()
}

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .or_else(|_| config(format!("invalid value `{value}` for environment parameter {key}")))
}

/// Build an environment from a spec string such as `climbing`,
/// `penalty,k=-100` or `corridor,L=7,N=3,R=1`.
pub fn make_env(spec: &str) -> Result<Box<dyn Environment>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let Some((&name, rest)) = parts.split_first() else {
        return config("empty environment name");
    };
    let params = parse_params(rest)?;
    match name {
        "climbing" => {
            if let Some((k, _)) = params.first() {
                return config(format!("climbing game takes no parameter {k}"));
            }
            Ok(Box::new(MatrixGame::new(MatrixGameDef::climbing())?))
        }
        "penalty" => {
            let mut k = -100.0;
            for (key, value) in &params {
                match key.as_str() {
                    "k" => k = parse_num(key, value)?,
                    _ => return config(format!("penalty game has no parameter {key}")),
                }
            }
            Ok(Box::new(MatrixGame::new(MatrixGameDef::penalty(k))?))
        }
        "corridor" => {
            let def = CorridorSpreadDef::from_params(&params)?;
            Ok(Box::new(Corridor::new(def)?))
        }
        other => config(format!("unknown environment `{other}`")),
    }
}
