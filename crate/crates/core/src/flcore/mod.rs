//! The federated protocol: client sampling, local training, and the
//! aggregation strategies (FedAvg, FedProx, FedAvgM, FedDF homogeneous and
//! heterogeneous).
//!
//! Randomness is drawn from streams keyed by `(seed, round, client)` so a
//! round's outcome does not depend on the order clients are scheduled in.

mod client;
mod fusion;
mod round;

pub use client::{client_local_update, sample_clients, LocalTraining};
pub use fusion::{drop_worst, ensemble_logits, feddf_fuse, FuseOutcome, Teacher};
pub use round::{run_round_heterogeneous, run_round_homogeneous, PrototypeRecord, RoundInputs, RoundRecord, ServerState};

use serde::{Deserialize, Serialize};

use crate::data::DistillPool;
use crate::error::{FedError, Result};

/// Where the distillation student starts each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// The weighted average of this round's received models.
    FromAverage,
    /// The fused server model of the previous round.
    FromPrevious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Upper bound on server Adam steps per round.
    pub max_steps: usize,
    /// Stop after this many consecutive steps without a validation gain.
    pub patience: usize,
    /// Adam base rate, cosine-annealed over `max_steps`.
    pub base_lr: f64,
    pub init_mode: InitMode,
    pub pool: DistillPool,
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(FedError::Config(format!("distill base_lr must be > 0, got {}", self.base_lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    FedAvg,
    FedProx { mu: f64 },
    FedAvgM { beta: f64 },
    FedDf(DistillConfig),
    FedDfHetero(DistillConfig),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx { .. } => "fedprox",
            Strategy::FedAvgM { .. } => "fedavgm",
            Strategy::FedDf(_) => "feddf",
            Strategy::FedDfHetero(_) => "feddf_hetero",
        }
    }

    pub fn distill(&self) -> Option<&DistillConfig> {
        match self {
            Strategy::FedDf(d) | Strategy::FedDfHetero(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub rounds: usize,
    pub client_count: usize,
    /// Fraction of clients sampled per round, in `(0, 1]`.
    pub participation: f64,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub local_batch: usize,
    pub strategy: Strategy,
    /// Drop received models whose validation accuracy is at or below this.
    pub drop_worst_threshold: Option<f64>,
    pub seed: u64,
    /// Run client updates on the rayon pool. Results are identical either way.
    pub parallel_clients: bool,
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.client_count == 0 {
            return Err(FedError::Config("client_count must be >= 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(FedError::Config(format!("participation must lie in (0, 1], got {}", self.participation)));
        }
        if self.local_batch == 0 {
            return Err(FedError::Config("local_batch must be >= 1".into()));
        }
        if !(self.local_lr >= 0.0 && self.local_lr.is_finite()) {
            return Err(FedError::Config(format!("local_lr must be finite and >= 0, got {}", self.local_lr)));
        }
        match &self.strategy {
            Strategy::FedProx { mu } if !(*mu >= 0.0 && mu.is_finite()) => {
                return Err(FedError::Config(format!("fedprox mu must be >= 0, got {mu}")))
            }
            Strategy::FedAvgM { beta } if !(*beta >= 0.0 && *beta < 1.0) => {
                return Err(FedError::Config(format!("fedavgm beta must lie in [0, 1), got {beta}")))
            }
            Strategy::FedDf(d) | Strategy::FedDfHetero(d) => d.validate()?,
            _ => {}
        }
        if let Some(t) = self.drop_worst_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(FedError::Config(format!("drop_worst threshold must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    /// `ceil(participation * client_count)`.
    pub fn clients_per_round(&self) -> usize {
        clients_per_round(self.client_count, self.participation)
    }
}

pub(crate) fn clients_per_round(k: usize, c: f64) -> usize {
    ((c * k as f64 - 1e-9).ceil() as usize).clamp(1, k)
}

/// Default drop-worst threshold: slightly above chance for `classes` classes.
pub fn default_drop_threshold(classes: usize) -> f64 {
    1.1 / classes as f64
}
