use rand::seq::SliceRandom;

use crate::error::{config, usage, Result};
use crate::numerics::rng_from_seed;

use super::{one_hot, parse_num, EnvSpec, Environment, ObservationSet, StepOutcome};

pub const LEFT: usize = 0;
pub const STAY: usize = 1;
pub const RIGHT: usize = 2;

/// One-dimensional spread task: N agents on a line of L cells must end the
/// episode covering N goal cells, one agent per goal.
#[derive(Clone, Debug, PartialEq)]
pub struct CorridorSpreadDef {
    pub length: usize,
    pub n_agents: usize,
    pub goals: Vec<usize>,
    pub sight_range: usize,
    pub horizon: usize,
    pub step_penalty: f64,
}

impl Default for CorridorSpreadDef {
    fn default() -> Self {
        CorridorSpreadDef::spread(7, 3)
    }
}

impl CorridorSpreadDef {
    /// Goals evenly spaced: cell ⌊(2i+1)·L / 2N⌋ for agent slot i.
    pub fn spread(length: usize, n_agents: usize) -> Self {
        let goals = (0..n_agents)
            .map(|i| (2 * i + 1) * length / (2 * n_agents.max(1)))
            .collect();
        CorridorSpreadDef {
            length,
            n_agents,
            goals,
            sight_range: 1,
            horizon: 10,
            step_penalty: 0.01,
        }
    }

    pub(crate) fn from_params(params: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| params.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        for (k, _) in params {
            if !["L", "N", "R", "H", "step_penalty", "goals"].contains(&k.as_str()) {
                return config(format!("corridor has no parameter {k}"));
            }
        }
        let length = get("L").map_or(Ok(7), |v| parse_num("L", v))?;
        let n_agents = get("N").map_or(Ok(3), |v| parse_num("N", v))?;
        let mut def = CorridorSpreadDef::spread(length, n_agents);
        if let Some(v) = get("R") {
            def.sight_range = parse_num("R", v)?;
        }
        if let Some(v) = get("H") {
            def.horizon = parse_num("H", v)?;
        }
        if let Some(v) = get("step_penalty") {
            def.step_penalty = parse_num("step_penalty", v)?;
        }
        if let Some(v) = get("goals") {
            def.goals = v
                .split(';')
                .map(|g| parse_num("goals", g.trim()))
                .collect::<Result<_>>()?;
        }
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.horizon == 0 {
            return config("corridor needs N ≥ 1 and H ≥ 1");
        }
        if self.length < self.n_agents {
            return config(format!("corridor of length {} cannot hold {} agents", self.length, self.n_agents));
        }
        if self.sight_range > self.length {
            return config("sight range must lie in 0..=L");
        }
        if self.goals.len() != self.n_agents {
            return config("corridor needs exactly one goal per agent");
        }
        let mut sorted = self.goals.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.goals.len() || sorted.iter().any(|&g| g >= self.length) {
            return config("corridor goals must be distinct cells inside the corridor");
        }
        if !self.step_penalty.is_finite() {
            return config("step penalty must be finite");
        }
        Ok(())
    }

    fn window(&self) -> usize {
        2 * self.sight_range + 1
    }

    /// Best achievable return when every agent can reach a distinct goal
    /// within the horizon.
    pub fn analytic_optimum(&self) -> f64 {
        1.0 - self.horizon as f64 * self.step_penalty
    }
}

#[derive(Clone, Debug)]
pub struct Corridor {
    def: CorridorSpreadDef,
    positions: Vec<usize>,
    t: usize,
    done: bool,
}

impl Corridor {
    pub fn new(def: CorridorSpreadDef) -> Result<Self> {
        def.validate()?;
        Ok(Corridor { def, positions: Vec::new(), t: 0, done: true })
    }

    pub fn def(&self) -> &CorridorSpreadDef {
        &self.def
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Start from a chosen placement instead of a seeded one.
    pub fn reset_to(&mut self, positions: &[usize]) -> Result<(Vec<f64>, ObservationSet)> {
        if positions.len() != self.def.n_agents || positions.iter().any(|&p| p >= self.def.length) {
            return usage("invalid corridor placement");
        }
        self.positions = positions.to_vec();
        self.t = 0;
        self.done = false;
        Ok((self.state(), self.observe()))
    }

    fn occupancy(&self, cell: usize) -> usize {
        self.positions.iter().filter(|&&p| p == cell).count()
    }

    fn covered_goals(&self) -> usize {
        self.def.goals.iter().filter(|&&g| self.occupancy(g) == 1).count()
    }

    fn state(&self) -> Vec<f64> {
        let l = self.def.length;
        let mut s = Vec::with_capacity(self.def.n_agents * l + l + 1);
        for &p in &self.positions {
            s.extend(one_hot(l, p));
        }
        let mut goals = vec![0.0; l];
        for &g in &self.def.goals {
            goals[g] = 1.0;
        }
        s.extend(goals);
        s.push(self.t as f64 / self.def.horizon as f64);
        s
    }

    fn observe(&self) -> ObservationSet {
        let (l, r, n) = (self.def.length, self.def.sight_range as isize, self.def.n_agents);
        let obs = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut o = one_hot(l, p);
                let cells: Vec<Option<usize>> = (-r..=r)
                    .map(|d| {
                        let c = p as isize + d;
                        (0..l as isize).contains(&c).then_some(c as usize)
                    })
                    .collect();
                o.extend(cells.iter().map(|c| c.map_or(0.0, |c| self.occupancy(c) as f64)));
                o.extend(cells.iter().map(|c| match c {
                    Some(c) if self.def.goals.contains(c) => 1.0,
                    _ => 0.0,
                }));
                o.extend(one_hot(n, i));
                o.push(self.t as f64 / self.def.horizon as f64);
                o
            })
            .collect();
        ObservationSet { obs, avail: vec![vec![true; 3]; n] }
    }
}

impl Environment for Corridor {
    fn spec(&self) -> EnvSpec {
        let (l, n) = (self.def.length, self.def.n_agents);
        EnvSpec {
            n_agents: n,
            n_actions: 3,
            obs_dim: l + 2 * self.def.window() + n + 1,
            state_dim: n * l + l + 1,
            episode_limit: self.def.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> (Vec<f64>, ObservationSet) {
        let mut rng = rng_from_seed(seed);
        let mut cells: Vec<usize> = (0..self.def.length).collect();
        cells.shuffle(&mut rng);
        self.positions = cells[..self.def.n_agents].to_vec();
        self.t = 0;
        self.done = false;
        (self.state(), self.observe())
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return usage("step on a terminated episode");
        }
        if joint_action.len() != self.def.n_agents {
            return usage(format!("expected {} actions, got {}", self.def.n_agents, joint_action.len()));
        }
        if let Some(&a) = joint_action.iter().find(|&&a| a > RIGHT) {
            return usage(format!("action {a} is not available"));
        }
        for (p, &a) in self.positions.iter_mut().zip(joint_action) {
            *p = match a {
                LEFT => p.saturating_sub(1),
                RIGHT => (*p + 1).min(self.def.length - 1),
                _ => *p,
            };
        }
        self.t += 1;
        let mut reward = -self.def.step_penalty;
        let terminated = self.t >= self.def.horizon;
        if terminated {
            reward += self.covered_goals() as f64 / self.def.n_agents as f64;
            self.done = true;
        }
        Ok(StepOutcome {
            next_state: self.state(),
            observations: self.observe(),
            reward,
            terminated,
        })
    }

    fn is_win(&self, _episode_return: f64) -> bool {
        self.done && self.covered_goals() == self.def.n_agents
    }

    fn name(&self) -> &str {
        "corridor"
    }
}
