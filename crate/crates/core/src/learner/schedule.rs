/// Linear ε annealing, constant after `anneal_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { start: 1.0, end: 0.05, anneal_steps: 50_000 }
    }
}

pub fn epsilon(t: u64, schedule: &EpsilonSchedule) -> f64 {
    if t >= schedule.anneal_steps {
        return schedule.end;
    }
    let frac = t as f64 / schedule.anneal_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}

/// Pruning-loss coefficient: zero before `threshold`, `alpha` from then on.
pub fn sigma(t: u64, threshold: u64, alpha: f64) -> f64 {
    if t >= threshold {
        alpha
    } else {
        0.0
    }
}
