use crate::agent::{AgentNet, Exchange};
use crate::error::{usage, Result};
use crate::mixer::Mixer;
use crate::numerics::{Bound, Tape, Var};

use super::buffer::EpisodeBatch;

/// Stabilizer inside the pruning loss logarithm.
pub const PRUNE_LOG_EPS: f64 = 1e-10;

pub struct TdOutput {
    /// Masked mean squared TD error.
    pub loss: Var,
    /// Confidence matrices `(B·N)×N` per step; empty without attention.
    pub confidences: Vec<Var>,
    /// Joint values per step, `B×1`.
    pub q_tot: Vec<Var>,
    /// Detached targets per step.
    pub targets: Vec<Vec<f64>>,
}

/// Greedy joint values of the target networks at every time `0..=T`,
/// `None` entries where no real step needs them.
fn target_values(
    tape: &mut Tape<'_>,
    target: &Bound<'_>,
    agent: &AgentNet,
    mixer: &Mixer,
    batch: &EpisodeBatch,
    exchange: Exchange,
) -> Result<Vec<Vec<f64>>> {
    let spec = batch.spec;
    let (b, n) = (batch.batch, spec.n_agents);
    let rows = b * n;
    let mut h = tape.constant(rows, agent.cfg.hidden, vec![0.0; rows * agent.cfg.hidden])?;
    let mut out = vec![Vec::new()];
    for t in 0..=batch.max_len {
        let obs = tape.constant(rows, spec.obs_dim, batch.obs_at(t))?;
        let step = agent.step(tape, target, obs, h, n, exchange)?;
        h = step.hidden;
        if t == 0 {
            continue;
        }
        let best = tape.masked_row_max(step.q, &batch.avail_at(t))?;
        let best = tape.reshape(best, b, n)?;
        let state = tape.constant(b, spec.state_dim, batch.states_at(t))?;
        let joint = mixer.forward(tape, target, best, state)?;
        let joint = tape.detach(joint);
        out.push(tape.value(joint).to_vec());
    }
    Ok(out)
}

/// `Σ mask·(y − Q_tot)² / Σ mask` with `y = r + γ(1 − terminated)·max Q̂_tot(s')`.
#[allow(clippy::too_many_arguments)]
pub fn compute_td_loss(
    tape: &mut Tape<'_>,
    online: &Bound<'_>,
    target: &Bound<'_>,
    agent: &AgentNet,
    mixer: &Mixer,
    batch: &EpisodeBatch,
    gamma: f64,
    exchange: Exchange,
) -> Result<TdOutput> {
    let denom = batch.filled_total();
    if denom <= 0.0 {
        return usage("TD loss over a batch with no real steps");
    }
    let spec = batch.spec;
    let (b, n) = (batch.batch, spec.n_agents);
    let rows = b * n;
    let bootstrap = batch
        .filled
        .iter()
        .zip(&batch.terminated)
        .any(|(&m, &term)| m > 0.0 && !term);
    let next_values = if bootstrap && gamma != 0.0 {
        Some(target_values(tape, target, agent, mixer, batch, exchange)?)
    } else {
        None
    };

    let mut h = tape.constant(rows, agent.cfg.hidden, vec![0.0; rows * agent.cfg.hidden])?;
    let mut confidences = Vec::new();
    let mut q_tot = Vec::new();
    let mut targets = Vec::new();
    let mut total: Option<Var> = None;
    for t in 0..batch.max_len {
        let obs = tape.constant(rows, spec.obs_dim, batch.obs_at(t))?;
        let step = agent.step(tape, online, obs, h, n, exchange)?;
        h = step.hidden;
        if let Some(c) = step.confidence {
            confidences.push(c);
        }
        let chosen = tape.gather_cols(step.q, batch.actions_at(t))?;
        let chosen = tape.reshape(chosen, b, n)?;
        let state = tape.constant(b, spec.state_dim, batch.states_at(t))?;
        let joint = mixer.forward(tape, online, chosen, state)?;

        let rewards = batch.rewards_at(t);
        let terminated = batch.terminated_at(t);
        let y: Vec<f64> = (0..b)
            .map(|i| match (&next_values, terminated[i]) {
                (Some(next), false) => rewards[i] + gamma * next[t + 1][i],
                _ => rewards[i],
            })
            .collect();
        let yv = tape.constant(b, 1, y.clone())?;
        let mask = tape.constant(b, 1, batch.filled_at(t))?;
        let diff = tape.sub(joint, yv)?;
        let masked = tape.mul(diff, mask)?;
        let sq = tape.mul(masked, masked)?;
        let s = tape.sum(sq);
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
        q_tot.push(joint);
        targets.push(y);
    }
    let total = total.expect("max_len ≥ 1 when denom > 0");
    let loss = tape.scale(total, 1.0 / denom);
    Ok(TdOutput { loss, confidences, q_tot, targets })
}

/// Mean over real steps of `Σ_i −ln(c_ii + ε)`; returns the loss and the
/// mean diagonal confidence. Without confidences the loss is zero and the
/// diagonal is one.
pub fn compute_pruning_loss(
    tape: &mut Tape<'_>,
    confidences: &[Var],
    batch: &EpisodeBatch,
) -> Result<(Var, f64)> {
    let denom = batch.filled_total();
    if confidences.is_empty() || denom <= 0.0 {
        return Ok((tape.constant(1, 1, vec![0.0])?, 1.0));
    }
    let n = batch.spec.n_agents;
    let mut total: Option<Var> = None;
    let mut diag_sum = 0.0;
    for (t, &c) in confidences.iter().enumerate() {
        let diag = tape.group_diag(c, n)?;
        let weights: Vec<f64> = batch
            .filled_at(t)
            .iter()
            .flat_map(|&m| std::iter::repeat(-m).take(n))
            .collect();
        diag_sum -= tape.value(diag).iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>();
        let w = tape.constant(weights.len(), 1, weights)?;
        let logs = tape.log_eps(diag, PRUNE_LOG_EPS);
        let weighted = tape.mul(logs, w)?;
        let s = tape.sum(weighted);
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let loss = tape.scale(total.expect("non-empty"), 1.0 / denom);
    Ok((loss, diag_sum / (n as f64 * denom)))
}
