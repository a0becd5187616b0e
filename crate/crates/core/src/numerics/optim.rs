use crate::error::{config, usage, Result};

use super::tensor::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64 },
    /// No momentum, no weight decay.
    RmsProp { alpha: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999 }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::RmsProp { alpha: 0.99 }
    }
}

/// Moment accumulators for every tensor of one [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub eps: f64,
    pub step: u64,
    /// Adam first moments; empty for RMSProp.
    pub first: Vec<Vec<f64>>,
    /// Adam second moments or the RMSProp squared-gradient average.
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, eps: f64, params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let first = match kind {
            OptimizerKind::Adam { .. } => zeros.clone(),
            OptimizerKind::RmsProp { .. } => Vec::new(),
        };
        OptimizerState { kind, lr, eps, step: 0, first, second: zeros }
    }

    /// Apply one update. Gradients are read, not cleared.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        if self.second.len() != params.len() {
            return config("optimizer state does not match parameter set");
        }
        if params.iter().any(|(_, t)| t.grad().is_none()) {
            return usage("optimizer step before gradients were populated");
        }
        self.step += 1;
        let (lr, eps) = (self.lr, self.eps);
        match self.kind {
            OptimizerKind::Adam { beta1, beta2 } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (i, (_, t)) in params.iter_mut().enumerate() {
                    let grad = t.grad().expect("checked").to_vec();
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (j, p) in t.values_mut().iter_mut().enumerate() {
                        let g = grad[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::RmsProp { alpha } => {
                for (i, (_, t)) in params.iter_mut().enumerate() {
                    let grad = t.grad().expect("checked").to_vec();
                    let v = &mut self.second[i];
                    for (j, p) in t.values_mut().iter_mut().enumerate() {
                        let g = grad[j];
                        v[j] = alpha * v[j] + (1.0 - alpha) * g * g;
                        *p -= lr * g / (v[j].sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
