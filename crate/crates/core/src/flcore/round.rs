use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{client_local_update, sample_clients, LocalTraining};
use super::fusion::{drop_worst, ensemble_logits, feddf_fuse, Teacher};
use super::{FlConfig, InitMode, Strategy};
use crate::data::Dataset;
use crate::error::{FedError, Result};
use crate::harness::{accuracy_from_logits, top1_accuracy};
use crate::models::{average_params, init_params, ParamVector, Prototype};
use crate::rng::{self, Stream};

/// Server-side state carried across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    /// Number of completed rounds.
    pub round: usize,
    pub seed: u64,
    /// Current model per prototype id.
    pub params: BTreeMap<String, ParamVector>,
    /// FedAvgM velocity per prototype id.
    pub velocity: BTreeMap<String, Vec<f64>>,
    /// Client id and locally trained model for every client sampled in the
    /// most recent round.
    pub last_received: Vec<(usize, ParamVector)>,
}

impl ServerState {
    /// Fresh state with He-initialized models, one per prototype.
    pub fn new(prototypes: &[Prototype], seed: u64) -> Self {
        let mut params = BTreeMap::new();
        let mut velocity = BTreeMap::new();
        for (i, p) in prototypes.iter().enumerate() {
            let init = init_params(p, rng::derive_seed(seed, Stream::Init, 0, i as u64));
            velocity.insert(p.id.clone(), vec![0.0; init.len()]);
            params.insert(p.id.clone(), init);
        }
        Self { round: 0, seed, params, velocity, last_received: Vec::new() }
    }

    pub fn model(&self, prototype_id: &str) -> Option<&ParamVector> {
        self.params.get(prototype_id)
    }
}

/// Everything a round reads besides the server state and config.
#[derive(Debug, Clone, Copy)]
pub struct RoundInputs<'a> {
    pub prototypes: &'a [Prototype],
    /// Index into `prototypes` for each client.
    pub client_prototype: &'a [usize],
    pub shards: &'a [Dataset],
    /// Server validation set (early stopping, drop-worst).
    pub val: &'a Dataset,
    /// Held-out evaluation set for the recorded accuracies.
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeRecord {
    /// Received (non-dropped) models of this prototype.
    pub clients: usize,
    pub acc_averaged: f64,
    pub acc_fused: f64,
    pub distill_steps: usize,
}

/// Per-round metrics. `acc_fused` is the accuracy of the model the server
/// keeps for the next round, which for the averaging strategies is the
/// (momentum-adjusted) average itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sampled: Vec<usize>,
    pub dropped: Vec<usize>,
    pub acc_averaged: f64,
    pub acc_fused: f64,
    pub acc_ensemble: f64,
    pub distill_steps_used: usize,
    pub per_prototype: BTreeMap<String, PrototypeRecord>,
}

/// One communication round with a single model prototype.
pub fn run_round_homogeneous(state: &mut ServerState, cfg: &FlConfig, inputs: &RoundInputs) -> Result<RoundRecord> {
    if inputs.prototypes.len() != 1 {
        return Err(FedError::Config(format!(
            "homogeneous round needs exactly one prototype, {} declared",
            inputs.prototypes.len()
        )));
    }
    run_round(state, cfg, inputs)
}

/// One communication round over several prototypes: each prototype group
/// is averaged on its own, then every prototype's student distills from the
/// ensemble of all received models. Prototypes without sampled clients keep
/// their parameters.
pub fn run_round_heterogeneous(state: &mut ServerState, cfg: &FlConfig, inputs: &RoundInputs) -> Result<RoundRecord> {
    run_round(state, cfg, inputs)
}

fn check_inputs(state: &ServerState, cfg: &FlConfig, inputs: &RoundInputs) -> Result<()> {
    cfg.validate()?;
    if inputs.shards.len() != cfg.client_count || inputs.client_prototype.len() != cfg.client_count {
        return Err(FedError::Config(format!(
            "{} clients configured but {} shards and {} prototype assignments",
            cfg.client_count,
            inputs.shards.len(),
            inputs.client_prototype.len()
        )));
    }
    if let Some(&bad) = inputs.client_prototype.iter().find(|&&p| p >= inputs.prototypes.len()) {
        return Err(FedError::Config(format!("client mapped to undeclared prototype index {bad}")));
    }
    if inputs.shards.iter().any(Dataset::is_empty) {
        return Err(FedError::EmptyDataset("a client shard is empty".into()));
    }
    for p in inputs.prototypes {
        if !state.params.contains_key(&p.id) {
            return Err(FedError::Config(format!("server state has no model for prototype `{}`", p.id)));
        }
    }
    Ok(())
}

fn run_round(state: &mut ServerState, cfg: &FlConfig, inputs: &RoundInputs) -> Result<RoundRecord> {
    check_inputs(state, cfg, inputs)?;
    let t = state.round as u64 + 1;
    let seed = state.seed;
    let sampled = sample_clients(cfg.client_count, cfg.participation, &mut rng::stream(seed, Stream::ClientSampling, t, 0));

    let prox_mu = match cfg.strategy {
        Strategy::FedProx { mu } => Some(mu),
        _ => None,
    };
    let local = LocalTraining { epochs: cfg.local_epochs, lr: cfg.local_lr, batch: cfg.local_batch, prox_mu };
    let train_one = |&k: &usize| -> Result<ParamVector> {
        let proto = &inputs.prototypes[inputs.client_prototype[k]];
        let start = &state.params[&proto.id];
        let mut r = rng::stream(seed, Stream::ClientTraining, t, k as u64);
        client_local_update(proto, start, &inputs.shards[k], &local, start, &mut r)
    };
    let received: Vec<ParamVector> = if cfg.parallel_clients {
        sampled.par_iter().map(train_one).collect::<Result<_>>()?
    } else {
        sampled.iter().map(train_one).collect::<Result<_>>()?
    };

    let teachers_all: Vec<Teacher> = sampled
        .iter()
        .zip(&received)
        .map(|(&k, m)| Teacher { proto: &inputs.prototypes[inputs.client_prototype[k]], params: m })
        .collect();
    let kept = match cfg.drop_worst_threshold {
        Some(th) => drop_worst(&teachers_all, inputs.val, th)?,
        None => (0..sampled.len()).collect(),
    };
    let dropped: Vec<usize> = (0..sampled.len()).filter(|i| !kept.contains(i)).map(|i| sampled[i]).collect();
    let teachers: Vec<Teacher> = kept.iter().map(|&i| teachers_all[i]).collect();

    let ens = ensemble_logits(&teachers, inputs.test.inputs())?;
    let acc_ensemble = accuracy_from_logits(&ens, inputs.test.labels())?;

    let mut per_prototype = BTreeMap::new();
    let mut updates = Vec::new();
    for (pi, proto) in inputs.prototypes.iter().enumerate() {
        let server_view = proto.full_precision();
        let previous = &state.params[&proto.id];
        let members: Vec<usize> = kept.iter().copied().filter(|&i| inputs.client_prototype[sampled[i]] == pi).collect();
        if members.is_empty() {
            let acc = top1_accuracy(&server_view, previous, inputs.test)?;
            per_prototype.insert(
                proto.id.clone(),
                PrototypeRecord { clients: 0, acc_averaged: acc, acc_fused: acc, distill_steps: 0 },
            );
            continue;
        }
        let models: Vec<&ParamVector> = members.iter().map(|&i| &received[i]).collect();
        let weights: Vec<f64> = members.iter().map(|&i| inputs.shards[sampled[i]].len() as f64).collect();
        let averaged = average_params(&models, &weights)?;

        let mut steps = 0;
        let mut velocity = None;
        let next = match &cfg.strategy {
            Strategy::FedAvg | Strategy::FedProx { .. } => averaged.clone(),
            Strategy::FedAvgM { beta } => {
                // v' = beta v + (x - avg); x' = x - v' = avg - beta v
                let v = &state.velocity[&proto.id];
                let mut x = averaged.clone();
                let mut v_new = v.clone();
                for i in 0..x.len() {
                    x.values[i] = averaged.values[i] - beta * v[i];
                    v_new[i] = beta * v[i] + (previous.values[i] - averaged.values[i]);
                }
                velocity = Some(v_new);
                x
            }
            Strategy::FedDf(d) | Strategy::FedDfHetero(d) => {
                let init = match d.init_mode {
                    InitMode::FromAverage => &averaged,
                    InitMode::FromPrevious => previous,
                };
                let mut pool_rng = rng::stream(seed, Stream::DistillPool, t, pi as u64);
                let out = feddf_fuse(&teachers, &server_view, init, d, inputs.val, &mut pool_rng)?;
                steps = out.steps_used;
                out.params
            }
        };
        per_prototype.insert(
            proto.id.clone(),
            PrototypeRecord {
                clients: members.len(),
                acc_averaged: top1_accuracy(&server_view, &averaged, inputs.test)?,
                acc_fused: top1_accuracy(&server_view, &next, inputs.test)?,
                distill_steps: steps,
            },
        );
        updates.push((proto.id.clone(), next, velocity));
    }

    for (id, next, velocity) in updates {
        state.params.insert(id.clone(), next);
        if let Some(v) = velocity {
            state.velocity.insert(id, v);
        }
    }
    state.round += 1;
    state.last_received = sampled.iter().copied().zip(received).collect();

    let n = per_prototype.len() as f64;
    Ok(RoundRecord {
        round: state.round,
        sampled,
        dropped,
        acc_averaged: per_prototype.values().map(|r| r.acc_averaged).sum::<f64>() / n,
        acc_fused: per_prototype.values().map(|r| r.acc_fused).sum::<f64>() / n,
        acc_ensemble,
        distill_steps_used: per_prototype.values().map(|r| r.distill_steps).max().unwrap_or(0),
        per_prototype,
    })
}
