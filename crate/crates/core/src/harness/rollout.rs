use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::agent::{masked_argmax, select_actions, AgentNet, ConfidenceMatrix, Exchange, HiddenStates};
use crate::env::Environment;
use crate::error::{config, Result};
use crate::learner::Episode;
use crate::numerics::{ParameterSet, SeededRng};

/// Execution mode: full exchange (C) or value-only per agent (D).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Centralized,
    Decentralized,
}

impl FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" | "c" => Ok(Mode::Centralized),
            "D" | "d" => Ok(Mode::Decentralized),
            _ => config(format!("unknown mode {s:?} (C|D)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "C",
            Mode::Decentralized => "D",
        })
    }
}

/// Collect one ε-greedy episode with message exchange on.
pub fn collect_episode(
    env: &mut dyn Environment,
    agent: &AgentNet,
    params: &ParameterSet,
    exchange: Exchange,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<Episode> {
    let spec = env.spec();
    let (state, obs) = env.reset(rng.gen());
    let mut hidden = HiddenStates::zeros(spec.n_agents, agent.cfg.hidden);
    let mut current = obs.clone();
    let mut episode = Episode::start(spec, state, obs);
    while !episode.is_complete() {
        let out = agent.forward_centralized_with(params, &current.obs, &hidden, exchange)?;
        hidden = out.hidden;
        let actions = select_actions(&out.q_values, &current.avail, epsilon, rng)?;
        let step = env.step(&actions)?;
        current = step.observations.clone();
        episode.record(actions, step.reward, step.terminated, step.next_state, step.observations);
    }
    Ok(episode)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyEpisode {
    pub total_return: f64,
    pub win: bool,
    pub actions: Vec<Vec<usize>>,
    /// Per step; only filled in centralized mode.
    pub confidences: Vec<ConfidenceMatrix>,
}

/// One ε = 0 episode. In D mode each agent is evaluated alone on its own
/// observation and hidden state.
pub fn greedy_episode(
    env: &mut dyn Environment,
    agent: &AgentNet,
    params: &ParameterSet,
    exchange: Exchange,
    mode: Mode,
    reset_seed: u64,
) -> Result<GreedyEpisode> {
    let spec = env.spec();
    let (_, mut current) = env.reset(reset_seed);
    let mut hidden = HiddenStates::zeros(spec.n_agents, agent.cfg.hidden);
    let mut out = GreedyEpisode { total_return: 0.0, win: false, actions: Vec::new(), confidences: Vec::new() };
    for _ in 0..spec.episode_limit {
        let q_values = match mode {
            Mode::Centralized => {
                let step = agent.forward_centralized_with(params, &current.obs, &hidden, exchange)?;
                hidden = step.hidden;
                out.confidences.push(step.confidence);
                step.q_values
            }
            Mode::Decentralized => {
                let mut q_values = Vec::with_capacity(spec.n_agents);
                for (o, h) in current.obs.iter().zip(hidden.h.iter_mut()) {
                    let (q, next) = agent.forward_decentralized(params, o, h)?;
                    *h = next;
                    q_values.push(q);
                }
                q_values
            }
        };
        let actions = q_values
            .iter()
            .zip(&current.avail)
            .map(|(q, m)| masked_argmax(q, m))
            .collect::<Result<Vec<_>>>()?;
        let step = env.step(&actions)?;
        out.total_return += step.reward;
        out.actions.push(actions);
        current = step.observations;
        if step.terminated {
            break;
        }
    }
    out.win = env.is_win(out.total_return);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub mode: Mode,
    pub episodes: usize,
    pub mean_return: f64,
    /// Population standard deviation over episodes.
    pub std_return: f64,
    pub win_rate: f64,
    /// Attention evaluations performed during this evaluation.
    pub cross_agent_calls: u64,
}

/// Greedy evaluation; reset seeds are drawn from `rng`.
pub fn evaluate(
    env: &mut dyn Environment,
    agent: &AgentNet,
    params: &ParameterSet,
    exchange: Exchange,
    mode: Mode,
    episodes: usize,
    rng: &mut SeededRng,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return config("evaluation needs at least one episode");
    }
    let before = agent.cross_agent_calls();
    let mut returns = Vec::with_capacity(episodes);
    let mut wins = 0usize;
    for _ in 0..episodes {
        let ep = greedy_episode(env, agent, params, exchange, mode, rng.gen())?;
        wins += usize::from(ep.win);
        returns.push(ep.total_return);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary {
        mode,
        episodes,
        mean_return: mean,
        std_return: var.sqrt(),
        win_rate: wins as f64 / n,
        cross_agent_calls: agent.cross_agent_calls() - before,
    })
}
