use std::collections::VecDeque;

use rand::Rng;

use crate::env::{EnvSpec, ObservationSet};
use crate::error::{config, usage, Result};

/// One recorded episode of `len` steps. Observation-like fields hold
/// `len + 1` entries: the last one follows the final step.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub spec: EnvSpec,
    pub obs: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<f64>>,
    pub avail: Vec<Vec<Vec<bool>>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
}

impl Episode {
    pub fn start(spec: EnvSpec, state: Vec<f64>, observations: ObservationSet) -> Self {
        Episode {
            spec,
            obs: vec![observations.obs],
            states: vec![state],
            avail: vec![observations.avail],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
        }
    }

    pub fn record(
        &mut self,
        actions: Vec<usize>,
        reward: f64,
        terminated: bool,
        next_state: Vec<f64>,
        next_obs: ObservationSet,
    ) {
        self.actions.push(actions);
        self.rewards.push(reward);
        self.terminated.push(terminated);
        self.states.push(next_state);
        self.obs.push(next_obs.obs);
        self.avail.push(next_obs.avail);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Ended by termination or by reaching the episode limit.
    pub fn is_complete(&self) -> bool {
        !self.is_empty()
            && (self.terminated.last() == Some(&true) || self.len() >= self.spec.episode_limit)
    }
}

/// Padded batch with layout `[B][T+1][N][·]` for observation-like fields
/// and `[B][T]` for per-step fields, all flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeBatch {
    pub batch: usize,
    pub max_len: usize,
    pub spec: EnvSpec,
    pub obs: Vec<f64>,
    pub states: Vec<f64>,
    pub avail: Vec<bool>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub filled: Vec<f64>,
}

impl EpisodeBatch {
    pub fn from_episodes(episodes: &[&Episode]) -> Result<Self> {
        Self::padded(episodes, 0)
    }

    /// Batch padded to at least `min_len` steps.
    pub fn padded(episodes: &[&Episode], min_len: usize) -> Result<Self> {
        let Some(first) = episodes.first() else {
            return usage("empty episode batch");
        };
        let spec = first.spec;
        if episodes.iter().any(|e| e.spec != spec || e.is_empty()) {
            return config("episodes in a batch must share a spec and be non-empty");
        }
        let (n, od, sd, na) = (spec.n_agents, spec.obs_dim, spec.state_dim, spec.n_actions);
        let t_max = episodes.iter().map(|e| e.len()).max().unwrap_or(0).max(min_len);
        let b = episodes.len();
        let mut batch = EpisodeBatch {
            batch: b,
            max_len: t_max,
            spec,
            obs: vec![0.0; b * (t_max + 1) * n * od],
            states: vec![0.0; b * (t_max + 1) * sd],
            avail: vec![true; b * (t_max + 1) * n * na],
            actions: vec![0; b * t_max * n],
            rewards: vec![0.0; b * t_max],
            terminated: vec![false; b * t_max],
            filled: vec![0.0; b * t_max],
        };
        for (bi, ep) in episodes.iter().enumerate() {
            for t in 0..=ep.len() {
                let base = (bi * (t_max + 1) + t) * n;
                for a in 0..n {
                    batch.obs[(base + a) * od..(base + a + 1) * od].copy_from_slice(&ep.obs[t][a]);
                    batch.avail[(base + a) * na..(base + a + 1) * na].copy_from_slice(&ep.avail[t][a]);
                }
                let sb = (bi * (t_max + 1) + t) * sd;
                batch.states[sb..sb + sd].copy_from_slice(&ep.states[t]);
            }
            for t in 0..ep.len() {
                let i = bi * t_max + t;
                batch.actions[i * n..(i + 1) * n].copy_from_slice(&ep.actions[t]);
                batch.rewards[i] = ep.rewards[t];
                batch.terminated[i] = ep.terminated[t];
                batch.filled[i] = 1.0;
            }
        }
        Ok(batch)
    }

    /// Observations at time `t` as `(B·N)×obs_dim` rows ordered by (episode, agent).
    pub fn obs_at(&self, t: usize) -> Vec<f64> {
        let row = self.spec.n_agents * self.spec.obs_dim;
        let mut out = Vec::with_capacity(self.batch * row);
        for b in 0..self.batch {
            let start = (b * (self.max_len + 1) + t) * row;
            out.extend_from_slice(&self.obs[start..start + row]);
        }
        out
    }

    pub fn states_at(&self, t: usize) -> Vec<f64> {
        let sd = self.spec.state_dim;
        let mut out = Vec::with_capacity(self.batch * sd);
        for b in 0..self.batch {
            let start = (b * (self.max_len + 1) + t) * sd;
            out.extend_from_slice(&self.states[start..start + sd]);
        }
        out
    }

    pub fn avail_at(&self, t: usize) -> Vec<bool> {
        let row = self.spec.n_agents * self.spec.n_actions;
        let mut out = Vec::with_capacity(self.batch * row);
        for b in 0..self.batch {
            let start = (b * (self.max_len + 1) + t) * row;
            out.extend_from_slice(&self.avail[start..start + row]);
        }
        out
    }

    pub fn actions_at(&self, t: usize) -> Vec<usize> {
        let n = self.spec.n_agents;
        (0..self.batch)
            .flat_map(|b| {
                let i = b * self.max_len + t;
                self.actions[i * n..(i + 1) * n].iter().copied()
            })
            .collect()
    }

    fn per_step(&self, t: usize, field: &[f64]) -> Vec<f64> {
        (0..self.batch).map(|b| field[b * self.max_len + t]).collect()
    }

    pub fn rewards_at(&self, t: usize) -> Vec<f64> {
        self.per_step(t, &self.rewards)
    }

    pub fn filled_at(&self, t: usize) -> Vec<f64> {
        self.per_step(t, &self.filled)
    }

    pub fn terminated_at(&self, t: usize) -> Vec<bool> {
        (0..self.batch).map(|b| self.terminated[b * self.max_len + t]).collect()
    }

    pub fn filled_total(&self) -> f64 {
        self.filled.iter().sum()
    }

    /// Real steps per episode.
    pub fn lengths(&self) -> Vec<usize> {
        (0..self.batch)
            .map(|b| self.filled[b * self.max_len..(b + 1) * self.max_len].iter().filter(|&&m| m > 0.0).count())
            .collect()
    }
}

/// FIFO ring of complete episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return config("replay capacity must be positive");
        }
        Ok(ReplayBuffer { capacity, episodes: VecDeque::with_capacity(capacity.min(1 << 16)), inserted: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Total insertions since creation, evicted episodes included.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn insert(&mut self, episode: Episode) -> Result<()> {
        if !episode.is_complete() {
            return usage("only complete episodes can be stored");
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
        Ok(())
    }

    /// Restore contents verbatim, e.g. from a checkpoint.
    pub fn restore(capacity: usize, episodes: Vec<Episode>, inserted: u64) -> Result<Self> {
        let mut buf = ReplayBuffer::new(capacity)?;
        if episodes.len() > capacity {
            return config("more stored episodes than capacity");
        }
        buf.episodes.extend(episodes);
        buf.inserted = inserted;
        Ok(buf)
    }

    /// Indices drawn uniformly without replacement; `None` until enough
    /// episodes are stored.
    pub fn sample_indices<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<usize>> {
        if batch_size == 0 || self.episodes.len() < batch_size {
            return None;
        }
        Some(rand::seq::index::sample(rng, self.episodes.len(), batch_size).into_vec())
    }

    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Option<EpisodeBatch>> {
        match self.sample_indices(batch_size, rng) {
            None => Ok(None),
            Some(idx) => {
                let eps: Vec<&Episode> = idx.iter().map(|&i| &self.episodes[i]).collect();
                EpisodeBatch::from_episodes(&eps).map(Some)
            }
        }
    }
}
