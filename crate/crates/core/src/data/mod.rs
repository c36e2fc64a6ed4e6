//! Labeled datasets, synthetic generators, Dirichlet non-iid partitioning
//! and unlabeled distillation pools.

mod io;
mod partition;
mod pool;
mod synth;

pub use io::{read_csv, write_csv, DatasetMeta};
pub use partition::{class_entropy, client_class_counts, dirichlet_partition, sample_dirichlet, PartitionSpec};
pub use pool::{sample_distill_batch, DistillPool, PoolKind, PoolSampler, PoolSource};
pub use synth::{make_gaussian_blobs, ring_centers, sphere_centers, split_train_val};

use crate::error::{FedError, Result};
use crate::numerics::Matrix;

/// Labeled samples: `inputs` is `n x d`, one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(FedError::EmptyDataset("dataset has no samples".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(FedError::Shape(format!("{} input rows but {} labels", inputs.rows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(FedError::Index(format!("label {bad} with class_count {class_count}")));
        }
        Ok(Self { inputs, labels, class_count })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Row-wise concatenation of datasets sharing dimension and class count.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| FedError::EmptyDataset("concat of nothing".into()))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim() != first.dim() || p.class_count != first.class_count {
                return Err(FedError::Shape("concatenating incompatible datasets".into()));
            }
            data.extend_from_slice(p.inputs.data());
            labels.extend_from_slice(&p.labels);
        }
        Self::new(Matrix::new(labels.len(), first.dim(), data)?, labels, first.class_count)
    }
}
