//! Dirichlet non-iid client partitioning.
//!
//! For every class the samples are split across clients with proportions
//! drawn from a symmetric Dirichlet with concentration `alpha` per client.
//! Large `alpha` gives near-identical client label distributions; as
//! `alpha -> 0` each class lands almost entirely on one client.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub alpha: f64,
    pub client_count: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(FedError::Config(format!("partition alpha must be > 0, got {}", self.alpha)));
        }
        if self.client_count == 0 {
            return Err(FedError::Config("partition client_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw from a symmetric Dirichlet(`alpha`, ..., `alpha`) over `k` outcomes.
///
/// Gamma variates are combined in log space: for `alpha < 1` the boost
/// `G(alpha) = G(alpha + 1) * U^(1/alpha)` underflows to zero in linear
/// space for concentrations around 0.01.
pub fn sample_dirichlet(alpha: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let (shape, boost) = if alpha < 1.0 { (alpha + 1.0, true) } else { (alpha, false) };
    let gamma = Gamma::new(shape, 1.0).expect("positive gamma shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mut lg = g.ln();
            if boost {
                let u: f64 = rng.random::<f64>();
                lg += u.max(f64::MIN_POSITIVE).ln() / alpha;
            }
            lg
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Split sample indices into `client_count` disjoint shards covering all
/// of `labels`. Shards are returned sorted.
///
/// A shard left empty by the draw receives one random sample taken from a
/// shard holding at least two, so every client can train (possible
/// whenever there are at least as many samples as clients).
pub fn dirichlet_partition(labels: &[usize], spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(FedError::EmptyDataset("partition of an empty label set".into()));
    }
    let k = spec.client_count;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = rng::stream(spec.seed, rng::Stream::Partition, 0, 0);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let props = sample_dirichlet(spec.alpha, k, &mut rng);
        let n = idx.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (client, p) in props.iter().enumerate() {
            cum += p;
            let end = if client + 1 == k { n } else { ((cum * n as f64) as usize).min(n) };
            let end = end.max(start);
            shards[client].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    if labels.len() >= k {
        while let Some(empty) = shards.iter().position(Vec::is_empty) {
            let donors: Vec<usize> = (0..k).filter(|&s| shards[s].len() >= 2).collect();
            let total: usize = donors.iter().map(|&s| shards[s].len()).sum();
            let mut pick = rng.random_range(0..total);
            let mut moved = None;
            for &s in &donors {
                if pick < shards[s].len() {
                    moved = Some(shards[s].swap_remove(pick));
                    break;
                }
                pick -= shards[s].len();
            }
            shards[empty].push(moved.expect("donor sample"));
        }
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

/// Per-client class histograms.
pub fn client_class_counts(labels: &[usize], shards: &[Vec<usize>], class_count: usize) -> Vec<Vec<usize>> {
    shards
        .iter()
        .map(|s| {
            let mut h = vec![0; class_count];
            for &i in s {
                h[labels[i]] += 1;
            }
            h
        })
        .collect()
}

/// Shannon entropy (nats) of a histogram; zero for an empty one.
pub fn class_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cifar_like_labels(per_class: usize) -> Vec<usize> {
        (0..10).flat_map(|c| std::iter::repeat_n(c, per_class)).collect()
    }

    fn assert_partition(shards: &[Vec<usize>], n: usize) {
        let mut seen = vec![false; n];
        for s in shards {
            for &i in s {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|b| b), "not all indices covered");
    }

    #[test]
    fn dirichlet_draws_are_distributions() {
        let mut r = rng::from_seed(3);
        for alpha in [0.001, 0.01, 0.5, 1.0, 100.0] {
            let p = sample_dirichlet(alpha, 20, &mut r);
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_mean_is_uniform() {
        let mut r = rng::from_seed(4);
        let mut acc = [0.0; 4];
        let draws = 4000;
        for _ in 0..draws {
            for (a, p) in acc.iter_mut().zip(sample_dirichlet(0.5, 4, &mut r)) {
                *a += p;
            }
        }
        for a in acc {
            assert!((a / draws as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn high_alpha_every_client_sees_most_classes() {
        let labels = cifar_like_labels(500);
        let spec = PartitionSpec { alpha: 100.0, client_count: 20, seed: 1 };
        let shards = dirichlet_partition(&labels, &spec).unwrap();
        for counts in client_class_counts(&labels, &shards, 10) {
            assert!(counts.iter().filter(|&&c| c > 0).count() >= 9);
        }
    }

    #[test]
    fn tiny_alpha_concentrates_clients() {
        let labels = cifar_like_labels(500);
        let spec = PartitionSpec { alpha: 0.01, client_count: 20, seed: 2 };
        let shards = dirichlet_partition(&labels, &spec).unwrap();
        let mut shares: Vec<f64> = client_class_counts(&labels, &shards, 10)
            .iter()
            .map(|c| *c.iter().max().unwrap() as f64 / c.iter().sum::<usize>() as f64)
            .collect();
        shares.sort_by(f64::total_cmp);
        assert!(shares[shares.len() / 2] >= 0.95);
    }

    #[test]
    fn empty_shards_rebalanced() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        for seed in 0..50 {
            let spec = PartitionSpec { alpha: 0.01, client_count: 6, seed };
            let shards = dirichlet_partition(&labels, &spec).unwrap();
            assert!(shards.iter().all(|s| !s.is_empty()));
            assert_partition(&shards, labels.len());
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(dirichlet_partition(&[0], &PartitionSpec { alpha: 0.0, client_count: 1, seed: 0 }).is_err());
        assert!(dirichlet_partition(&[0], &PartitionSpec { alpha: 1.0, client_count: 0, seed: 0 }).is_err());
        assert!(dirichlet_partition(&[], &PartitionSpec { alpha: 1.0, client_count: 2, seed: 0 }).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(class_entropy(&[5, 0, 0]), 0.0);
        assert!((class_entropy(&[2, 2]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(class_entropy(&[]), 0.0);
    }

    proptest! {
        #[test]
        fn partition_is_deterministic_disjoint_cover(
            labels in prop::collection::vec(0usize..6, 1..300),
            alpha in 0.01f64..50.0,
            clients in 1usize..25,
            seed in any::<u64>(),
        ) {
            let spec = PartitionSpec { alpha, client_count: clients, seed };
            let a = dirichlet_partition(&labels, &spec).unwrap();
            let b = dirichlet_partition(&labels, &spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), clients);
            assert_partition(&a, labels.len());
            if labels.len() >= clients {
                prop_assert!(a.iter().all(|s| !s.is_empty()));
            }
        }
    }
}
