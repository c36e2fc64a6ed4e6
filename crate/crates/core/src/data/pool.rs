use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::numerics::Matrix;
use crate::rng::SimRng;

/// Where unlabeled distillation inputs come from. Held-out pools keep only
/// the input matrix; labels never enter a pool.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolSource {
    Heldout(Matrix),
    UniformNoise { low: f64, high: f64, dim: usize },
    GaussianNoise { dim: usize, std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillPool {
    pub source: PoolSource,
    pub batch_size: usize,
}

/// Serializable description of a pool; held-out pools are materialized
/// from data by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolKind {
    Heldout,
    UniformNoise { low: f64, high: f64 },
    GaussianNoise { std: f64 },
}

impl DistillPool {
    pub fn new(source: PoolSource, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(FedError::Config("distillation batch_size must be >= 1".into()));
        }
        match &source {
            PoolSource::Heldout(m) if m.rows() == 0 => {
                return Err(FedError::EmptyDataset("held-out distillation pool is empty".into()))
            }
            PoolSource::UniformNoise { low, high, dim } if !(low < high) || *dim == 0 => {
                return Err(FedError::Config(format!("uniform noise pool needs low < high and dim > 0 (got {low}, {high}, {dim})")))
            }
            PoolSource::GaussianNoise { dim, std } if *dim == 0 || !(*std > 0.0) => {
                return Err(FedError::Config("gaussian noise pool needs dim > 0 and std > 0".into()))
            }
            _ => {}
        }
        Ok(Self { source, batch_size })
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            PoolSource::Heldout(m) => m.cols(),
            PoolSource::UniformNoise { dim, .. } | PoolSource::GaussianNoise { dim, .. } => *dim,
        }
    }
}

/// Stateful batch sampler. Held-out pools are visited without replacement
/// within an epoch and reshuffled between epochs.
#[derive(Debug, Clone)]
pub struct PoolSampler<'a> {
    pool: &'a DistillPool,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> PoolSampler<'a> {
    pub fn new(pool: &'a DistillPool) -> Self {
        Self { pool, order: Vec::new(), cursor: 0 }
    }

    pub fn next_batch(&mut self, rng: &mut SimRng) -> Matrix {
        let b = self.pool.batch_size;
        match &self.pool.source {
            PoolSource::Heldout(inputs) => {
                let mut picked = Vec::with_capacity(b);
                while picked.len() < b {
                    if self.cursor >= self.order.len() {
                        self.order = (0..inputs.rows()).collect();
                        self.order.shuffle(rng);
                        self.cursor = 0;
                    }
                    let take = (b - picked.len()).min(self.order.len() - self.cursor);
                    picked.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
                    self.cursor += take;
                }
                inputs.select_rows(&picked)
            }
            PoolSource::UniformNoise { low, high, dim } => {
                let data = (0..b * dim).map(|_| rng.random_range(*low..*high)).collect();
                Matrix::new(b, *dim, data).expect("sized buffer")
            }
            PoolSource::GaussianNoise { dim, std } => {
                let data = (0..b * dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
                Matrix::new(b, *dim, data).expect("sized buffer")
            }
        }
    }
}

/// One batch from a fresh sampler (the start of a new epoch).
pub fn sample_distill_batch(pool: &DistillPool, rng: &mut SimRng) -> Matrix {
    PoolSampler::new(pool).next_batch(rng)
}
