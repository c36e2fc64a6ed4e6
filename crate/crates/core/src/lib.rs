//! Deterministic federated-learning simulator.
//!
//! Implements ensemble-distillation model fusion (FedDF) next to the
//! parameter-averaging baselines FedAvg, FedProx and FedAvgM, on small
//! multilayer perceptrons trained from scratch. The crate also ships a
//! brute-force diagnostic suite for the ensemble generalization bound over
//! finite hypothesis classes.
//!
//! Module map:
//! - [`numerics`]: dense matrices, softmax/KL/cross-entropy, backprop, optimizers.
//! - [`models`]: prototypes, parameter layout, forward passes, averaging.
//! - [`data`]: synthetic datasets, Dirichlet partitioning, distillation pools.
//! - [`flcore`]: client sampling, local updates, aggregation strategies.
//! - [`bound`]: empirical terms of the ensemble risk bound.
//! - [`harness`]: experiment configs, metrics, artifacts.

pub mod bound;
pub mod data;
pub mod error;
pub mod flcore;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod rng;

pub use error::{FedError, Result};
