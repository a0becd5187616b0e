use crate::error::{config, usage, Result};

use super::{one_hot, EnvSpec, Environment, ObservationSet, StepOutcome};

/// Joint-action payoff table, indexed with agent 0 as the most significant digit.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGameDef {
    pub name: String,
    pub n_agents: usize,
    pub n_actions: usize,
    pub payoff: Vec<f64>,
}

impl MatrixGameDef {
    pub fn new(name: &str, n_agents: usize, n_actions: usize, payoff: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || n_actions == 0 {
            return config("matrix game needs at least one agent and action");
        }
        let size = (n_actions as u128).checked_pow(n_agents as u32);
        if size != Some(payoff.len() as u128) {
            return config(format!(
                "payoff table has {} entries, expected {n_actions}^{n_agents}",
                payoff.len()
            ));
        }
        Ok(MatrixGameDef { name: name.to_string(), n_agents, n_actions, payoff })
    }

    pub fn climbing() -> Self {
        #[rustfmt::skip]
        let payoff = vec![
            11.0, -30.0, 0.0,
            -30.0, 7.0, 6.0,
            0.0, 0.0, 5.0,
        ];
        MatrixGameDef::new("climbing", 2, 3, payoff).expect("3x3 table")
    }

    pub fn penalty(k: f64) -> Self {
        #[rustfmt::skip]
        let payoff = vec![
            10.0, 0.0, k,
            0.0, 2.0, 0.0,
            k, 0.0, 10.0,
        ];
        MatrixGameDef::new("penalty", 2, 3, payoff).expect("3x3 table")
    }

    pub fn joint_index(&self, joint_action: &[usize]) -> Result<usize> {
        if joint_action.len() != self.n_agents {
            return usage(format!("expected {} actions, got {}", self.n_agents, joint_action.len()));
        }
        let mut idx = 0;
        for &a in joint_action {
            if a >= self.n_actions {
                return usage(format!("action {a} out of range"));
            }
            idx = idx * self.n_actions + a;
        }
        Ok(idx)
    }

    pub fn value(&self, joint_action: &[usize]) -> Result<f64> {
        Ok(self.payoff[self.joint_index(joint_action)?])
    }
}

/// Exhaustive maximum over the joint-action space.
pub fn brute_force_optimal_return(game: &MatrixGameDef) -> Result<f64> {
    let space = (game.n_actions as u128).pow(game.n_agents as u32);
    if space > 1_000_000 {
        return config(format!("joint-action space {space} too large to enumerate"));
    }
    let mut best = f64::NEG_INFINITY;
    let mut joint = vec![0usize; game.n_agents];
    for _ in 0..space {
        best = best.max(game.value(&joint)?);
        for slot in joint.iter_mut().rev() {
            *slot += 1;
            if *slot < game.n_actions {
                break;
            }
            *slot = 0;
        }
    }
    Ok(best)
}

/// One-step game. Each agent sees `[1, one_hot(id)]`; the global state is the
/// concatenation of all observations.
#[derive(Clone, Debug)]
pub struct MatrixGame {
    def: MatrixGameDef,
    optimum: f64,
    done: bool,
}

impl MatrixGame {
    pub fn new(def: MatrixGameDef) -> Result<Self> {
        let optimum = brute_force_optimal_return(&def)?;
        Ok(MatrixGame { def, optimum, done: true })
    }

    pub fn def(&self) -> &MatrixGameDef {
        &self.def
    }

    pub fn optimal_return(&self) -> f64 {
        self.optimum
    }

    fn observe(&self) -> (Vec<f64>, ObservationSet) {
        let n = self.def.n_agents;
        let obs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut o = vec![1.0];
                o.extend(one_hot(n, i));
                o
            })
            .collect();
        let state = obs.concat();
        let avail = vec![vec![true; self.def.n_actions]; n];
        (state, ObservationSet { obs, avail })
    }
}

impl Environment for MatrixGame {
    fn spec(&self) -> EnvSpec {
        let n = self.def.n_agents;
        EnvSpec {
            n_agents: n,
            n_actions: self.def.n_actions,
            obs_dim: 1 + n,
            state_dim: n * (1 + n),
            episode_limit: 1,
        }
    }

    fn reset(&mut self, _seed: u64) -> (Vec<f64>, ObservationSet) {
        self.done = false;
        self.observe()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return usage("step on a terminated episode");
        }
        let reward = self.def.value(joint_action)?;
        self.done = true;
        let (next_state, observations) = self.observe();
        Ok(StepOutcome { next_state, observations, reward, terminated: true })
    }

    fn is_win(&self, episode_return: f64) -> bool {
        (episode_return - self.optimum).abs() < 1e-9
    }

    fn name(&self) -> &str {
        &self.def.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn climbing_payoffs() {
        let mut g = MatrixGame::new(MatrixGameDef::climbing()).unwrap();
        let (state, obs) = g.reset(0);
        assert_eq!(state.len(), g.spec().state_dim);
        assert_eq!(obs.obs[0], vec![1.0, 1.0, 0.0]);
        assert_eq!(obs.obs[1], vec![1.0, 0.0, 1.0]);
        let out = g.step(&[0, 0]).unwrap();
        assert_eq!(out.reward, 11.0);
        assert!(out.terminated);
        assert!(g.step(&[0, 0]).is_err());
        g.reset(1);
        assert_eq!(g.step(&[0, 1]).unwrap().reward, -30.0);
    }

    #[test]
    fn optimal_returns_by_enumeration() {
        assert_eq!(brute_force_optimal_return(&MatrixGameDef::climbing()).unwrap(), 11.0);
        assert_eq!(brute_force_optimal_return(&MatrixGameDef::penalty(-100.0)).unwrap(), 10.0);
        let flat = MatrixGameDef::new("flat", 3, 2, vec![-4.5; 8]).unwrap();
        assert_eq!(brute_force_optimal_return(&flat).unwrap(), -4.5);
    }

    #[test]
    fn refuses_huge_spaces() {
        let def = MatrixGameDef {
            name: "huge".into(),
            n_agents: 7,
            n_actions: 8,
            payoff: Vec::new(),
        };
        assert!(brute_force_optimal_return(&def).is_err());
    }

    #[test]
    fn rejects_bad_actions() {
        let mut g = MatrixGame::new(MatrixGameDef::penalty(-100.0)).unwrap();
        g.reset(0);
        assert!(g.step(&[3, 0]).is_err());
        assert!(g.step(&[0]).is_err());
    }

    #[test]
    fn win_means_optimal() {
        let g = MatrixGame::new(MatrixGameDef::penalty(-100.0)).unwrap();
        assert!(g.is_win(10.0));
        assert!(!g.is_win(2.0));
    }
}
