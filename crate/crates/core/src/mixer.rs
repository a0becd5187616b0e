//! Value-decomposition mixers: `Q_tot = mix(q_1..q_N; s)`.

use rand::Rng;

use crate::error::{config, Result};
use crate::numerics::{Bound, Linear, ParameterSet, Tape, Var};

/// QMIX: hypernetworks map the state to nonnegative mixing weights, so
/// `Q_tot` is monotone in every agent utility.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QmixMixer {
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed: usize,
    hyper_w1: Linear,
    hyper_b1: Linear,
    hyper_w2: Linear,
    value_1: Linear,
    value_2: Linear,
}

impl QmixMixer {
    pub fn init<R: Rng>(
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        set: &mut ParameterSet,
        rng: &mut R,
    ) -> Result<Self> {
        if n_agents == 0 || state_dim == 0 || embed == 0 {
            return config("qmix sizes must be positive");
        }
        Ok(QmixMixer {
            n_agents,
            state_dim,
            embed,
            hyper_w1: Linear::init(set, "mixer.hyper_w1", state_dim, n_agents * embed, rng)?,
            hyper_b1: Linear::init(set, "mixer.hyper_b1", state_dim, embed, rng)?,
            hyper_w2: Linear::init(set, "mixer.hyper_w2", state_dim, embed, rng)?,
            value_1: Linear::init(set, "mixer.value1", state_dim, embed, rng)?,
            value_2: Linear::init(set, "mixer.value2", embed, 1, rng)?,
        })
    }

    /// `Q_tot = |W2(s)|ᵀ · ELU(q·|W1(s)| + b1(s)) + V(s)` per row.
    pub fn forward(&self, tape: &mut Tape<'_>, p: &Bound<'_>, q: Var, state: Var) -> Result<Var> {
        let (rq, n) = tape.shape(q);
        let (rs, sd) = tape.shape(state);
        if n != self.n_agents || sd != self.state_dim || rq != rs {
            return config(format!(
                "qmix expects q R×{} and state R×{}, got {rq}×{n} and {rs}×{sd}",
                self.n_agents, self.state_dim
            ));
        }
        let w1 = self.hyper_w1.forward(tape, p, state)?;
        let w1 = tape.abs(w1);
        let b1 = self.hyper_b1.forward(tape, p, state)?;
        let mixed = tape.batch_vec_mat(q, w1, n, self.embed)?;
        let pre = tape.add(mixed, b1)?;
        let hidden = tape.elu(pre);
        let w2 = self.hyper_w2.forward(tape, p, state)?;
        let w2 = tape.abs(w2);
        let out = tape.row_dot(hidden, w2)?;
        let v = self.value_1.forward(tape, p, state)?;
        let v = tape.relu(v);
        let v = self.value_2.forward(tape, p, v)?;
        tape.add(out, v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mixer {
    Vdn { n_agents: usize },
    Qmix(QmixMixer),
}

impl Mixer {
    pub fn n_agents(&self) -> usize {
        match self {
            Mixer::Vdn { n_agents } => *n_agents,
            Mixer::Qmix(m) => m.n_agents,
        }
    }

    /// Batched mix: `q: R×N`, `state: R×S` → `R×1`.
    pub fn forward(&self, tape: &mut Tape<'_>, p: &Bound<'_>, q: Var, state: Var) -> Result<Var> {
        match self {
            Mixer::Vdn { n_agents } => {
                let (_, n) = tape.shape(q);
                if n != *n_agents {
                    return config(format!("vdn expects {n_agents} agents, got {n}"));
                }
                let ones = tape.constant(n, 1, vec![1.0; n])?;
                tape.matmul(q, ones)
            }
            Mixer::Qmix(m) => m.forward(tape, p, q, state),
        }
    }

    /// Single joint value.
    pub fn mix(&self, params: &ParameterSet, q: &[f64], state: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.bind_frozen(params);
        let qv = tape.constant(1, q.len(), q.to_vec())?;
        let sv = tape.constant(1, state.len(), state.to_vec())?;
        let out = self.forward(&mut tape, &p, qv, sv)?;
        Ok(tape.scalar(out))
    }

    pub fn check_monotonicity<R: Rng>(
        &self,
        params: &ParameterSet,
        state_dim: usize,
        trials: usize,
        rng: &mut R,
    ) -> Result<f64> {
        check_monotonicity(|q, s| self.mix(params, q, s), self.n_agents(), state_dim, trials, rng)
    }
}

pub fn vdn_mix(q: &[f64]) -> f64 {
    q.iter().sum()
}

pub fn qmix_mix(mixer: &QmixMixer, params: &ParameterSet, q: &[f64], state: &[f64]) -> Result<f64> {
    Mixer::Qmix(mixer.clone()).mix(params, q, state)
}

/// Largest negative central-difference slope `∂Q_tot/∂q_i` over random
/// probes with `q ∈ [−5, 5]^N` and `s ∈ [−1, 1]^S`; zero when monotone.
pub fn check_monotonicity<F, R>(f: F, n_agents: usize, state_dim: usize, trials: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
    R: Rng,
{
    const H: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let q: Vec<f64> = (0..n_agents).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let s: Vec<f64> = (0..state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n_agents {
            let mut plus = q.clone();
            plus[i] += H;
            let mut minus = q.clone();
            minus[i] -= H;
            let slope = (f(&plus, &s)? - f(&minus, &s)?) / (2.0 * H);
            worst = worst.max(-slope);
        }
    }
    Ok(worst)
}

/// Exhaustive IGM check: the tuple of per-agent greedy actions attains the
/// maximum joint value over the full joint-action grid.
pub fn check_igm<F>(q_tables: &[Vec<f64>], f: F) -> Result<bool>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = q_tables.len();
    let greedy: Vec<f64> = q_tables
        .iter()
        .map(|t| t.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let greedy_value = f(&greedy)?;
    let sizes: Vec<usize> = q_tables.iter().map(Vec::len).collect();
    let mut joint = vec![0usize; n];
    let total: usize = sizes.iter().product();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..total {
        let q: Vec<f64> = joint.iter().zip(q_tables).map(|(&a, t)| t[a]).collect();
        best = best.max(f(&q)?);
        for (slot, &size) in joint.iter_mut().zip(&sizes).rev() {
            *slot += 1;
            if *slot < size {
                break;
            }
            *slot = 0;
        }
    }
    Ok(greedy_value >= best - 1e-12 * best.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_from_seed;

    fn qmix(n: usize, s: usize, seed: u64) -> (Mixer, ParameterSet) {
        let mut set = ParameterSet::new();
        let m = QmixMixer::init(n, s, 8, &mut set, &mut rng_from_seed(seed)).unwrap();
        (Mixer::Qmix(m), set)
    }

    #[test]
    fn vdn_sums() {
        assert_eq!(vdn_mix(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(vdn_mix(&[0.0; 4]), 0.0);
        let vdn = Mixer::Vdn { n_agents: 3 };
        assert_eq!(vdn.mix(&ParameterSet::new(), &[1.0, 2.0, 3.0], &[]).unwrap(), 6.0);
    }

    #[test]
    fn vdn_igm_by_enumeration() {
        let tables = vec![vec![0.1, 2.0, -1.0], vec![3.0, -4.0, 3.5]];
        assert!(check_igm(&tables, |q| Ok(vdn_mix(q))).unwrap());
    }

    #[test]
    fn zero_hypernetworks_give_zero() {
        let (m, mut set) = qmix(2, 4, 1);
        for (_, t) in set.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(m.mix(&set, &[3.0, -2.0], &[0.5, 0.1, -0.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn qmix_weights_nonnegative_and_monotone() {
        let (m, set) = qmix(3, 5, 2);
        let v = m.check_monotonicity(&set, 5, 200, &mut rng_from_seed(3)).unwrap();
        assert!(v <= 1e-9, "{v}");
        assert_eq!(Mixer::Vdn { n_agents: 3 }.check_monotonicity(&ParameterSet::new(), 0, 50, &mut rng_from_seed(4)).unwrap(), 0.0);
    }

    #[test]
    fn negated_weight_is_detected() {
        let (m, set) = qmix(2, 3, 5);
        let broken = |q: &[f64], s: &[f64]| -> Result<f64> {
            let flipped = [-q[0], q[1]];
            m.mix(&set, &flipped, s)
        };
        let v = check_monotonicity(broken, 2, 3, 100, &mut rng_from_seed(6)).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn qmix_igm_exhaustive() {
        let mut rng = rng_from_seed(8);
        for seed in 0..20 {
            let (m, set) = qmix(2, 3, seed);
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tables: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
            assert!(check_igm(&tables, |q| m.mix(&set, q, &s)).unwrap());
        }
    }

    #[test]
    fn qmix_rejects_wrong_shapes() {
        let (m, set) = qmix(2, 3, 9);
        assert!(m.mix(&set, &[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
        assert!(m.mix(&set, &[1.0, 2.0], &[0.0; 4]).is_err());
    }
}
