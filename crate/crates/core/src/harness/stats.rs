use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::prepare_seed;
use crate::data::{class_entropy, client_class_counts};
use crate::error::Result;

/// Per-client class histograms for one seed's partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub seed: u64,
    pub alpha: f64,
    pub counts: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    /// Class-label entropy (nats) per client.
    pub entropy: Vec<f64>,
    pub mean_entropy: f64,
}

pub fn partition_stats(cfg: &ExperimentConfig) -> Result<Vec<PartitionStats>> {
    cfg.validate()?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let data = prepare_seed(cfg, seed)?;
            let counts = client_class_counts(data.client_train.labels(), &data.shard_indices, data.classes());
            let entropy: Vec<f64> = counts.iter().map(|c| class_entropy(c)).collect();
            let mean_entropy = entropy.iter().sum::<f64>() / entropy.len() as f64;
            Ok(PartitionStats {
                seed,
                alpha: cfg.partition.alpha,
                sizes: counts.iter().map(|c| c.iter().sum()).collect(),
                counts,
                entropy,
                mean_entropy,
            })
        })
        .collect()
}
