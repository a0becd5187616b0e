use std::path::Path;

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{Episode, ReplayBuffer, TrainMetrics};
use crate::numerics::{OptimizerKind, OptimizerState, ParameterSet, RngState, Tensor};

use super::config::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CADPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state; restoring it continues a run bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub t_env: u64,
    pub episodes: u64,
    pub next_eval: u64,
    pub next_checkpoint: u64,
    pub train_steps: u64,
    pub rng: RngState,
    pub last_metrics: Option<TrainMetrics>,
    pub theta: ParameterSet,
    pub target: ParameterSet,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn params(&mut self, set: &ParameterSet) {
        self.u32(set.len() as u32);
        for (name, t) in set.iter() {
            self.str(name);
            self.u32(t.dims().len() as u32);
            t.dims().iter().for_each(|&d| self.u64(d as u64));
            self.f64s(t.values());
        }
    }

    fn episode(&mut self, ep: &Episode) {
        self.u64(ep.len() as u64);
        for t in 0..=ep.len() {
            ep.obs[t].iter().for_each(|o| o.iter().for_each(|&v| self.f64(v)));
            ep.states[t].iter().for_each(|&v| self.f64(v));
            ep.avail[t].iter().flatten().for_each(|&a| self.u8(u8::from(a)));
        }
        for t in 0..ep.len() {
            ep.actions[t].iter().for_each(|&a| self.u64(a as u64));
            self.f64(ep.rewards[t]);
            self.u8(u8::from(ep.terminated[t]));
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("invalid flag byte {b}"))),
        }
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.bytes.len() - self.pos) as u64 {
            return Err(Error::Format("length prefix exceeds checkpoint size".into()));
        }
        Ok(n as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8 in checkpoint".into()))
    }

    fn params(&mut self) -> Result<ParameterSet> {
        let mut set = ParameterSet::new();
        for _ in 0..self.u32()? {
            let name = self.str()?;
            let rank = self.u32()?;
            let dims = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let values = self.f64s()?;
            set.insert(name, Tensor::new(&dims, values)?)?;
        }
        Ok(set)
    }

    fn episode(&mut self, spec: EnvSpec) -> Result<Episode> {
        let len = self.len()?;
        let (n, a) = (spec.n_agents, spec.n_actions);
        let mut ep = Episode {
            spec,
            obs: Vec::new(),
            states: Vec::new(),
            avail: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
        };
        for _ in 0..=len {
            let obs = (0..n)
                .map(|_| (0..spec.obs_dim).map(|_| self.f64()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let state = (0..spec.state_dim).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let avail = (0..n)
                .map(|_| (0..a).map(|_| self.flag()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            ep.obs.push(obs);
            ep.states.push(state);
            ep.avail.push(avail);
        }
        for _ in 0..len {
            ep.actions.push((0..n).map(|_| self.u64().map(|x| x as usize)).collect::<Result<Vec<_>>>()?);
            ep.rewards.push(self.f64()?);
            ep.terminated.push(self.flag()?);
        }
        Ok(ep)
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.config.to_text());
        for v in [self.t_env, self.episodes, self.next_eval, self.next_checkpoint, self.train_steps] {
            w.u64(v);
        }
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        match &self.last_metrics {
            None => w.u8(0),
            Some(m) => {
                w.u8(1);
                for v in [m.loss_td, m.loss_prune, m.sigma, m.mean_diag_confidence, m.grad_norm] {
                    w.f64(v);
                }
            }
        }
        w.params(&self.theta);
        w.params(&self.target);

        let o = &self.optimizer;
        match o.kind {
            OptimizerKind::Adam { beta1, beta2 } => {
                w.u8(0);
                w.f64(beta1);
                w.f64(beta2);
            }
            OptimizerKind::RmsProp { alpha } => {
                w.u8(1);
                w.f64(alpha);
            }
        }
        w.f64(o.lr);
        w.f64(o.eps);
        w.u64(o.step);
        for moments in [&o.first, &o.second] {
            w.u32(moments.len() as u32);
            moments.iter().for_each(|m| w.f64s(m));
        }

        let b = &self.buffer;
        w.u64(b.capacity() as u64);
        w.u64(b.inserted());
        w.u64(b.len() as u64);
        b.episodes().for_each(|ep| w.episode(ep));
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let config = TrainConfig::from_text(&r.str()?)?;
        let spec = crate::env::make_env(&config.env)?.spec();
        let (t_env, episodes, next_eval, next_checkpoint, train_steps) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?, r.u64()?);
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let last_metrics = if r.flag()? {
            Some(TrainMetrics {
                loss_td: r.f64()?,
                loss_prune: r.f64()?,
                sigma: r.f64()?,
                mean_diag_confidence: r.f64()?,
                grad_norm: r.f64()?,
            })
        } else {
            None
        };
        let theta = r.params()?;
        let target = r.params()?;

        let kind = match r.u8()? {
            0 => OptimizerKind::Adam { beta1: r.f64()?, beta2: r.f64()? },
            1 => OptimizerKind::RmsProp { alpha: r.f64()? },
            k => return Err(Error::Format(format!("unknown optimizer tag {k}"))),
        };
        let (lr, eps, step) = (r.f64()?, r.f64()?, r.u64()?);
        let mut moments = Vec::new();
        for _ in 0..2 {
            let n = r.u32()?;
            moments.push((0..n).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?);
        }
        let second = moments.pop().expect("two moment lists");
        let first = moments.pop().expect("two moment lists");
        let optimizer = OptimizerState { kind, lr, eps, step, first, second };

        let capacity = r.u64()? as usize;
        let inserted = r.u64()?;
        let count = r.len()?;
        let eps_list = (0..count).map(|_| r.episode(spec)).collect::<Result<Vec<_>>>()?;
        let buffer = ReplayBuffer::restore(capacity, eps_list, inserted)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            config,
            t_env,
            episodes,
            next_eval,
            next_checkpoint,
            train_steps,
            rng: RngState { seed, stream, word_pos },
            last_metrics,
            theta,
            target,
            optimizer,
            buffer,
        })
    }

    /// Written to a temporary sibling first, then renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
