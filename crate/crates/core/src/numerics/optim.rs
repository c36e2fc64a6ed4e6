use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Cosine annealing from the base rate to zero over `total_steps`.
    Cosine { total_steps: usize },
}

/// Optimizer state threaded through successive [`OptimizerState::step`] calls.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub base_lr: f64,
    pub schedule: Schedule,
    step_count: usize,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, base_lr: f64, schedule: Schedule, param_len: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => param_len,
        };
        Self {
            kind,
            base_lr,
            schedule,
            step_count: 0,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr, Schedule::Constant, 0)
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Learning rate used by the next step. Past the end of a cosine
    /// schedule the rate is clamped to zero.
    pub fn current_lr(&self) -> f64 {
        match self.schedule {
            Schedule::Constant => self.base_lr,
            Schedule::Cosine { total_steps } => {
                if total_steps == 0 || self.step_count >= total_steps {
                    0.0
                } else {
                    let frac = self.step_count as f64 / total_steps as f64;
                    self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
                }
            }
        }
    }

    /// Apply one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(FedError::Shape(format!(
                "optimizer step: {} params, {} gradient entries",
                params.len(),
                grad.len()
            )));
        }
        let lr = self.current_lr();
        match self.kind {
            OptimizerKind::Sgd => {
                for (x, g) in params.iter_mut().zip(grad) {
                    *x -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.len() != params.len() {
                    return Err(FedError::Shape(format!(
                        "adam state sized for {} params, got {}",
                        self.first_moment.len(),
                        params.len()
                    )));
                }
                let t = (self.step_count + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
                    let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
                    self.first_moment[i] = m;
                    self.second_moment[i] = v;
                    params[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}
