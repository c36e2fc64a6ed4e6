use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig, PoolConfig, StrategyConfig, StrategyKind, SCHEMA_VERSION};
use super::metrics::{decision_boundary_grid, rounds_to_target, top1_accuracy, write_jsonl, MetricsRow};
use crate::data::{
    dirichlet_partition, make_gaussian_blobs, read_csv, ring_centers, sphere_centers, split_train_val, Dataset, DistillPool,
    PartitionSpec, PoolKind, PoolSource,
};
use crate::error::{FedError, Result};
use crate::flcore::{
    client_local_update, run_round_heterogeneous, run_round_homogeneous, DistillConfig, FlConfig, LocalTraining,
    RoundInputs, ServerState, Strategy,
};
use crate::models::{init_params, ParamVector, Prototype};
use crate::numerics::Matrix;
use crate::rng::{self, Stream};

/// Datasets and client shards materialized for one seed.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    /// Training samples distributed to clients (validation and pool removed).
    pub client_train: Dataset,
    pub shards: Vec<Dataset>,
    pub shard_indices: Vec<Vec<usize>>,
    pub val: Dataset,
    pub test: Dataset,
    /// Unlabeled held-out inputs, when `split.distill_fraction > 0`.
    pub heldout_pool: Option<Matrix>,
    pub prototypes: Vec<Prototype>,
}

impl SeedData {
    pub fn classes(&self) -> usize {
        self.test.class_count()
    }

    /// Prototype index per client: round-robin over declared prototypes.
    pub fn client_prototype(&self) -> Vec<usize> {
        (0..self.shards.len()).map(|k| k % self.prototypes.len()).collect()
    }
}

fn load_datasets(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetConfig::Blobs { classes, dim, per_class, test_per_class, scale, radius, centers } => {
            let centers = match centers {
                Some(c) => c.clone(),
                None if *dim == 2 => ring_centers(*classes, *radius),
                None => sphere_centers(*classes, *dim, *radius, rng::derive_seed(seed, Stream::Data, 0, 2)),
            };
            let train = make_gaussian_blobs(*classes, *per_class, &centers, *scale, rng::derive_seed(seed, Stream::Data, 0, 0))?;
            let test = make_gaussian_blobs(*classes, *test_per_class, &centers, *scale, rng::derive_seed(seed, Stream::Data, 0, 1))?;
            Ok((train, test))
        }
        DatasetConfig::Csv { train, test } => {
            let (train, test) = (read_csv(train)?, read_csv(test)?);
            if train.dim() != test.dim() || train.class_count() != test.class_count() {
                return Err(FedError::Config("dataset: train and test CSVs disagree on shape".into()));
            }
            Ok((train, test))
        }
    }
}

/// Split every class across clients by fixed shares (rows normalized per
/// class column).
fn share_partition(labels: &[usize], shares: &[Vec<f64>], classes: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let k = shares.len();
    let mut rng = rng::stream(seed, Stream::Partition, 0, 1);
    let mut shards = vec![Vec::new(); k];
    for c in 0..classes {
        let col: Vec<f64> = shares.iter().map(|row| row.get(c).copied().unwrap_or(0.0)).collect();
        let total: f64 = col.iter().sum();
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if total <= 0.0 {
            if idx.is_empty() {
                continue;
            }
            return Err(FedError::Config(format!("partition.class_shares: class {c} has no owner")));
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let (mut cum, mut start) = (0.0, 0);
        for (client, share) in col.iter().enumerate() {
            cum += share / total;
            let end = if client + 1 == k { n } else { ((cum * n as f64).round() as usize).clamp(start, n) };
            shards[client].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let (train, test) = load_datasets(cfg, seed)?;
    let (rest, val) = split_train_val(&train, cfg.split.val_fraction, rng::derive_seed(seed, Stream::Data, 1, 0))?;
    let (client_train, heldout_pool) = if cfg.split.distill_fraction > 0.0 {
        let (ct, pool) = split_train_val(&rest, cfg.split.distill_fraction, rng::derive_seed(seed, Stream::Data, 1, 1))?;
        (ct, Some(pool.inputs().clone()))
    } else {
        (rest, None)
    };
    let part_seed = rng::derive_seed(seed, Stream::Partition, 0, 0);
    let shard_indices = match &cfg.partition.class_shares {
        Some(shares) => share_partition(client_train.labels(), shares, client_train.class_count(), part_seed)?,
        None => dirichlet_partition(
            client_train.labels(),
            &PartitionSpec { alpha: cfg.partition.alpha, client_count: cfg.partition.clients, seed: part_seed },
        )?,
    };
    let shards = shard_indices
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            client_train
                .subset(idx)
                .map_err(|_| FedError::Config(format!("partition: client {k} received no samples")))
        })
        .collect::<Result<Vec<_>>>()?;
    let prototypes = cfg
        .prototypes
        .iter()
        .map(|p| p.build(train.dim(), train.class_count()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedData { seed, client_train, shards, shard_indices, val, test, heldout_pool, prototypes })
}

pub fn build_pool(pool: &PoolConfig, batch_size: usize, data: &SeedData) -> Result<DistillPool> {
    let dim = data.test.dim();
    let mut rng = rng::stream(data.seed, Stream::DistillPool, 0, u64::MAX);
    let source = match (pool.kind, pool.size) {
        (PoolKind::Heldout, _) => PoolSource::Heldout(
            data.heldout_pool
                .clone()
                .ok_or_else(|| FedError::Config("held-out pool requested without split.distill_fraction".into()))?,
        ),
        (PoolKind::UniformNoise { low, high }, Some(n)) => {
            PoolSource::Heldout(Matrix::new(n, dim, (0..n * dim).map(|_| rng.random_range(low..high)).collect())?)
        }
        (PoolKind::GaussianNoise { std }, Some(n)) => PoolSource::Heldout(Matrix::new(
            n,
            dim,
            (0..n * dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
        )?),
        (PoolKind::UniformNoise { low, high }, None) => PoolSource::UniformNoise { low, high, dim },
        (PoolKind::GaussianNoise { std }, None) => PoolSource::GaussianNoise { dim, std },
    };
    DistillPool::new(source, batch_size)
}

pub fn build_fl_config(cfg: &ExperimentConfig, st: &StrategyConfig, data: &SeedData) -> Result<FlConfig> {
    let d = &cfg.distill;
    let distill = || -> Result<DistillConfig> {
        Ok(DistillConfig {
            max_steps: st.max_steps.unwrap_or(d.max_steps),
            patience: d.patience,
            base_lr: d.base_lr,
            init_mode: st.init_mode.unwrap_or(d.init_mode),
            pool: build_pool(st.pool.as_ref().unwrap_or(&d.pool), d.batch_size, data)?,
        })
    };
    let strategy = match st.kind {
        StrategyKind::Fedavg => Strategy::FedAvg,
        StrategyKind::Fedprox { mu } => Strategy::FedProx { mu },
        StrategyKind::Fedavgm { beta } => Strategy::FedAvgM { beta },
        StrategyKind::Feddf => Strategy::FedDf(distill()?),
        StrategyKind::FeddfHetero => Strategy::FedDfHetero(distill()?),
    };
    let f = &cfg.federation;
    Ok(FlConfig {
        rounds: f.rounds,
        client_count: cfg.partition.clients,
        participation: f.participation,
        local_epochs: f.local_epochs,
        local_lr: f.local_lr,
        local_batch: f.local_batch,
        strategy,
        drop_worst_threshold: f.drop_worst.and_then(|d| d.threshold(data.classes())),
        seed: data.seed,
        parallel_clients: f.parallel_clients,
    })
}

/// History and final server state of one strategy under one seed.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub label: String,
    pub history: Vec<MetricsRow>,
    pub state: ServerState,
}

pub fn run_strategy(cfg: &ExperimentConfig, st: &StrategyConfig, data: &SeedData) -> Result<StrategyRun> {
    let fl = build_fl_config(cfg, st, data)?;
    let client_prototype = data.client_prototype();
    let inputs = RoundInputs {
        prototypes: &data.prototypes,
        client_prototype: &client_prototype,
        shards: &data.shards,
        val: &data.val,
        test: &data.test,
    };
    let mut state = ServerState::new(&data.prototypes, data.seed);
    let mut history = Vec::with_capacity(fl.rounds);
    for _ in 0..fl.rounds {
        let start = Instant::now();
        let rec = if data.prototypes.len() == 1 {
            run_round_homogeneous(&mut state, &fl, &inputs)?
        } else {
            run_round_heterogeneous(&mut state, &fl, &inputs)?
        };
        let wall_ms = if cfg.output.wall_clock { start.elapsed().as_millis() as u64 } else { 0 };
        history.push(MetricsRow::from_record(&rec, wall_ms));
    }
    Ok(StrategyRun { label: st.label(), history, state })
}

/// Test accuracy of the first prototype trained on all client data.
pub fn centralized_accuracy(cfg: &ExperimentConfig, data: &SeedData, epochs: usize, lr: f64) -> Result<f64> {
    let proto = &data.prototypes[0];
    let start = init_params(proto, rng::derive_seed(data.seed, Stream::Init, 0, 0));
    let local = LocalTraining {
        epochs,
        lr,
        batch: cfg.federation.local_batch,
        prox_mu: None,
    };
    let mut r = rng::stream(data.seed, Stream::ClientTraining, 0, u64::MAX);
    let trained = client_local_update(proto, &start, &data.client_train, &local, &start, &mut r)?;
    top1_accuracy(proto, &trained, &data.test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub rounds_to_target: Option<usize>,
    pub final_acc_fused: f64,
    pub final_acc_averaged: f64,
    pub final_acc_ensemble: f64,
    pub best_acc_fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub centralized_accuracy: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub strategies: BTreeMap<String, StrategySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub name: String,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub data: SeedData,
    pub runs: Vec<StrategyRun>,
    pub summary: SeedSummary,
}

/// Run every configured strategy for one seed, in memory.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let data = prepare_seed(cfg, seed)?;
    let (centralized, target) = match &cfg.target {
        None => (None, None),
        Some(t) => match (t.accuracy, t.centralized_fraction) {
            (Some(a), _) => (None, Some(a)),
            (None, Some(frac)) => {
                let lr = t.centralized_lr.unwrap_or(cfg.federation.local_lr);
                let c = centralized_accuracy(cfg, &data, t.centralized_epochs, lr)?;
                (Some(c), Some(frac * c))
            }
            (None, None) => (None, None),
        },
    };
    let runs = cfg.strategies.iter().map(|st| run_strategy(cfg, st, &data)).collect::<Result<Vec<_>>>()?;
    let strategies = runs
        .iter()
        .map(|run| {
            let last = run.history.last().expect("rounds >= 1");
            (
                run.label.clone(),
                StrategySummary {
                    rounds_to_target: target.and_then(|t| rounds_to_target(&run.history, t)),
                    final_acc_fused: last.acc_fused,
                    final_acc_averaged: last.acc_averaged,
                    final_acc_ensemble: last.acc_ensemble,
                    best_acc_fused: run.history.iter().map(|r| r.acc_fused).fold(0.0, f64::max),
                },
            )
        })
        .collect();
    let summary = SeedSummary { seed, centralized_accuracy: centralized, target_accuracy: target, strategies };
    Ok(SeedResult { data, runs, summary })
}

fn json_err(e: serde_json::Error) -> FedError {
    FedError::Parse(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Per-seed artifacts: metrics JSONL, checkpoints and optional grids per
/// strategy, plus the seed summary.
pub fn write_seed_artifacts(cfg: &ExperimentConfig, result: &SeedResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in &result.runs {
        let sdir = dir.join(&run.label);
        fs::create_dir_all(&sdir)?;
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &run.history)?;
        fs::write(sdir.join("metrics.jsonl"), buf)?;
        for (id, params) in &run.state.params {
            fs::write(sdir.join(format!("checkpoint-{id}.bin")), params.to_bytes())?;
        }
        if let Some(grid) = &cfg.output.grid {
            let gdir = sdir.join("grids");
            fs::create_dir_all(&gdir)?;
            let protos: BTreeMap<&str, &Prototype> = result.data.prototypes.iter().map(|p| (p.id.as_str(), p)).collect();
            let write_grid = |name: String, proto: &Prototype, params: &ParamVector| -> Result<()> {
                let g = decision_boundary_grid(proto, params, grid)?;
                let mut out = Vec::new();
                g.write_csv(&mut out)?;
                fs::write(gdir.join(name), out)?;
                Ok(())
            };
            for (client, params) in &run.state.last_received {
                write_grid(format!("client-{client}.csv"), protos[params.prototype_id.as_str()], params)?;
            }
            for (id, params) in &run.state.params {
                let name = if run.state.params.len() == 1 { "server.csv".to_string() } else { format!("server-{id}.csv") };
                write_grid(name, &protos[id.as_str()].full_precision(), params)?;
            }
        }
    }
    write_json(&dir.join("summary.json"), &result.summary)
}

/// Run all seeds, write artifacts under the output directory, and return
/// the experiment summary (also written as `summary.json`).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = cfg.output_dir();
    fs::create_dir_all(&out)?;
    let one = |&seed: &u64| -> Result<SeedSummary> {
        let result = run_seed(cfg, seed)?;
        write_seed_artifacts(cfg, &result, &out.join(format!("seed-{seed}")))?;
        Ok(result.summary)
    };
    let seeds = if cfg.output.parallel_seeds {
        cfg.seeds.par_iter().map(one).collect::<Result<Vec<_>>>()?
    } else {
        cfg.seeds.iter().map(one).collect::<Result<Vec<_>>>()?
    };
    let summary = ExperimentSummary { schema_version: SCHEMA_VERSION, name: cfg.name.clone(), seeds };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
