//! Per-agent Q network with attention-based advice exchange.
//!
//! One parameter set serves all agents. Each agent encodes its observation,
//! updates a recurrent state, and projects the raw observation into a query,
//! key and value. In centralized mode every agent attends over all agents'
//! keys (itself included) and mixes their values into a collective intention
//! `z_i`; in decentralized mode `z_i` is just the agent's own value `v_i`.
//! The output head reads `[h_i, f(z_i)]`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{config, usage, Result};
use crate::numerics::{softmax_row, Bound, GruCell, Linear, ParameterSet, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub head_hidden: usize,
}

impl AgentConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        AgentConfig { obs_dim, n_actions, hidden: 64, attn_dim: 32, head_hidden: 64 }
    }
}

/// How `z` is formed from the agents' values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exchange {
    /// Softmax attention over all agents in the group.
    Attention,
    /// Confidence fixed to the identity: `z_i = v_i`.
    Identity,
}

/// Row-stochastic agent-to-agent weights and their pre-softmax scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMatrix {
    pub scores: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl ConfidenceMatrix {
    pub fn identity(n: usize) -> Self {
        let weights: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ConfidenceMatrix { scores: weights.clone(), weights }
    }

    pub fn n_agents(&self) -> usize {
        self.weights.len()
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.weights.len();
        (0..n).map(|i| self.weights[i][i]).sum::<f64>() / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    pub h: Vec<Vec<f64>>,
}

impl HiddenStates {
    pub fn zeros(n_agents: usize, hidden: usize) -> Self {
        HiddenStates { h: vec![vec![0.0; hidden]; n_agents] }
    }
}

/// Symbolic outputs of one batched step.
#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    pub q: Var,
    pub hidden: Var,
    pub scores: Option<Var>,
    pub confidence: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralizedOutput {
    pub q_values: Vec<Vec<f64>>,
    pub confidence: ConfidenceMatrix,
    pub hidden: HiddenStates,
}

#[derive(Debug)]
pub struct AgentNet {
    pub cfg: AgentConfig,
    encoder: Linear,
    gru: GruCell,
    fusion: Linear,
    head_hidden: Linear,
    head_out: Linear,
    cross_agent_calls: AtomicU64,
}

impl Clone for AgentNet {
    fn clone(&self) -> Self {
        AgentNet {
            cfg: self.cfg,
            encoder: self.encoder.clone(),
            gru: self.gru.clone(),
            fusion: self.fusion.clone(),
            head_hidden: self.head_hidden.clone(),
            head_out: self.head_out.clone(),
            cross_agent_calls: AtomicU64::new(self.cross_agent_calls()),
        }
    }
}

const W_Q: &str = "agent.w_q";
const W_K: &str = "agent.w_k";
const W_V: &str = "agent.w_v";

impl AgentNet {
    /// Register all agent parameters under `agent.*`.
    pub fn init<R: Rng>(cfg: AgentConfig, set: &mut ParameterSet, rng: &mut R) -> Result<Self> {
        if cfg.obs_dim == 0 || cfg.n_actions == 0 || cfg.hidden == 0 || cfg.attn_dim == 0 || cfg.head_hidden == 0 {
            return config(format!("agent sizes must be positive: {cfg:?}"));
        }
        let encoder = Linear::init(set, "agent.enc", cfg.obs_dim, cfg.hidden, rng)?;
        let gru = GruCell::init(set, "agent.gru", cfg.hidden, cfg.hidden, rng)?;
        set.init_weight(W_Q, cfg.attn_dim, cfg.obs_dim, rng)?;
        set.init_weight(W_K, cfg.attn_dim, cfg.obs_dim, rng)?;
        set.init_weight(W_V, cfg.attn_dim, cfg.obs_dim, rng)?;
        let fusion = Linear::init(set, "agent.fuse", cfg.attn_dim, cfg.attn_dim, rng)?;
        let head_hidden = Linear::init(set, "agent.head1", cfg.hidden + cfg.attn_dim, cfg.head_hidden, rng)?;
        let head_out = Linear::init(set, "agent.head2", cfg.head_hidden, cfg.n_actions, rng)?;
        Ok(AgentNet {
            cfg,
            encoder,
            gru,
            fusion,
            head_hidden,
            head_out,
            cross_agent_calls: AtomicU64::new(0),
        })
    }

    /// Number of forward passes that read across agents since construction.
    pub fn cross_agent_calls(&self) -> u64 {
        self.cross_agent_calls.load(Ordering::Relaxed)
    }

    /// Batched step over `G` groups of `n_agents` consecutive rows.
    /// `obs: (G·n)×obs_dim`, `hidden: (G·n)×hidden`.
    pub fn step(
        &self,
        tape: &mut Tape<'_>,
        p: &Bound<'_>,
        obs: Var,
        hidden: Var,
        n_agents: usize,
        exchange: Exchange,
    ) -> Result<StepVars> {
        let (rows, od) = tape.shape(obs);
        if od != self.cfg.obs_dim {
            return config(format!("observation width {od}, expected {}", self.cfg.obs_dim));
        }
        if n_agents == 0 || rows % n_agents != 0 {
            return config(format!("{rows} rows do not split into groups of {n_agents}"));
        }
        let enc = self.encoder.forward(tape, p, obs)?;
        let enc = tape.relu(enc);
        let h = self.gru.forward(tape, p, enc, hidden)?;
        let v = tape.matmul_t(obs, p.get(W_V)?)?;
        let (z, scores, confidence) = match exchange {
            Exchange::Attention => {
                self.cross_agent_calls.fetch_add(1, Ordering::Relaxed);
                let q = tape.matmul_t(obs, p.get(W_Q)?)?;
                let k = tape.matmul_t(obs, p.get(W_K)?)?;
                let scale = 1.0 / (self.cfg.attn_dim as f64).sqrt();
                let s = tape.group_scores(q, k, n_agents, scale)?;
                let c = tape.softmax_rows(s)?;
                let z = tape.group_mix(c, v, n_agents)?;
                (z, Some(s), Some(c))
            }
            Exchange::Identity => (v, None, None),
        };
        let fz = self.fusion.forward(tape, p, z)?;
        let joined = tape.concat_cols(h, fz)?;
        let a = self.head_hidden.forward(tape, p, joined)?;
        let a = tape.relu(a);
        let q = self.head_out.forward(tape, p, a)?;
        Ok(StepVars { q, hidden: h, scores, confidence })
    }

    fn check_obs(&self, observations: &[Vec<f64>]) -> Result<()> {
        if observations.is_empty() {
            return config("no observations");
        }
        if let Some(o) = observations.iter().find(|o| o.len() != self.cfg.obs_dim) {
            return config(format!("observation of length {}, expected {}", o.len(), self.cfg.obs_dim));
        }
        Ok(())
    }

    /// `(q_i, k_i, v_i) = (W_q o_i, W_k o_i, W_v o_i)` for every agent.
    #[allow(clippy::type_complexity)]
    pub fn project_qkv(
        &self,
        params: &ParameterSet,
        observations: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.check_obs(observations)?;
        let mut tape = Tape::new();
        let p = tape.bind_frozen(params);
        let obs = tape.constant(observations.len(), self.cfg.obs_dim, observations.concat())?;
        let q = tape.matmul_t(obs, p.get(W_Q)?)?;
        let k = tape.matmul_t(obs, p.get(W_K)?)?;
        let v = tape.matmul_t(obs, p.get(W_V)?)?;
        Ok((tape.rows_of(q), tape.rows_of(k), tape.rows_of(v)))
    }

    pub fn forward_centralized(
        &self,
        params: &ParameterSet,
        observations: &[Vec<f64>],
        hidden: &HiddenStates,
    ) -> Result<CentralizedOutput> {
        self.forward_centralized_with(params, observations, hidden, Exchange::Attention)
    }

    /// Centralized forward with a chosen exchange; [`Exchange::Identity`]
    /// forces the confidence matrix to the identity.
    pub fn forward_centralized_with(
        &self,
        params: &ParameterSet,
        observations: &[Vec<f64>],
        hidden: &HiddenStates,
        exchange: Exchange,
    ) -> Result<CentralizedOutput> {
        self.check_obs(observations)?;
        let n = observations.len();
        if hidden.h.len() != n || hidden.h.iter().any(|h| h.len() != self.cfg.hidden) {
            return config("hidden states do not match agents");
        }
        let mut tape = Tape::new();
        let p = tape.bind_frozen(params);
        let obs = tape.constant(n, self.cfg.obs_dim, observations.concat())?;
        let h = tape.constant(n, self.cfg.hidden, hidden.h.concat())?;
        let out = self.step(&mut tape, &p, obs, h, n, exchange)?;
        let confidence = match (out.scores, out.confidence) {
            (Some(s), Some(c)) => ConfidenceMatrix { scores: tape.rows_of(s), weights: tape.rows_of(c) },
            _ => ConfidenceMatrix::identity(n),
        };
        Ok(CentralizedOutput {
            q_values: tape.rows_of(out.q),
            confidence,
            hidden: HiddenStates { h: tape.rows_of(out.hidden) },
        })
    }

    /// Value-only forward for one agent; reads nothing but `(o_i, h_i)`.
    pub fn forward_decentralized(
        &self,
        params: &ParameterSet,
        obs: &[f64],
        hidden: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.len() != self.cfg.obs_dim || hidden.len() != self.cfg.hidden {
            return config("decentralized forward input sizes");
        }
        let mut tape = Tape::new();
        let p = tape.bind_frozen(params);
        let o = tape.constant(1, obs.len(), obs.to_vec())?;
        let h = tape.constant(1, hidden.len(), hidden.to_vec())?;
        let out = self.step(&mut tape, &p, o, h, 1, Exchange::Identity)?;
        Ok((tape.value(out.q).to_vec(), tape.value(out.hidden).to_vec()))
    }
}

/// `α_ij = q_i·k_j / √d_x`, `c = row-softmax(α)`.
pub fn confidence(q: &[Vec<f64>], k: &[Vec<f64>], d_x: usize) -> Result<ConfidenceMatrix> {
    if q.len() != k.len() || q.iter().chain(k).any(|x| x.len() != d_x) {
        return config("query/key sizes disagree");
    }
    let scale = 1.0 / (d_x as f64).sqrt();
    let scores: Vec<Vec<f64>> = q
        .iter()
        .map(|qi| k.iter().map(|kj| scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>()).collect())
        .collect();
    let weights = scores.iter().map(|row| softmax_row(row)).collect::<Result<_>>()?;
    Ok(ConfidenceMatrix { scores, weights })
}

/// `z_i = Σ_j c_ij v_j`.
pub fn aggregate_advice(c: &ConfidenceMatrix, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if c.n_agents() != v.len() {
        return config("confidence and advice disagree on agent count");
    }
    let d = v.first().map_or(0, Vec::len);
    Ok(c.weights
        .iter()
        .map(|row| {
            let mut z = vec![0.0; d];
            for (w, vj) in row.iter().zip(v) {
                for (zz, x) in z.iter_mut().zip(vj) {
                    *zz += w * x;
                }
            }
            z
        })
        .collect())
}

/// Greedy choice among available actions, lowest index on ties.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (j, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.map_or(true, |b| v > q[b]) {
            best = Some(j);
        }
    }
    best.map_or_else(|| usage("no available action"), Ok)
}

/// ε-greedy joint action. One uniform draw per agent decides exploration.
pub fn select_actions<R: Rng>(
    q_values: &[Vec<f64>],
    masks: &[Vec<bool>],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if q_values.len() != masks.len() {
        return usage("q-values and masks disagree on agent count");
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return usage(format!("epsilon {epsilon} outside [0, 1]"));
    }
    q_values
        .iter()
        .zip(masks)
        .map(|(q, m)| {
            if q.len() != m.len() {
                return usage("mask length differs from action count");
            }
            let avail: Vec<usize> = (0..m.len()).filter(|&j| m[j]).collect();
            if avail.is_empty() {
                return usage("empty action mask");
            }
            if rng.gen::<f64>() < epsilon {
                Ok(avail[rng.gen_range(0..avail.len())])
            } else {
                masked_argmax(q, m)
            }
        })
        .collect()
}
