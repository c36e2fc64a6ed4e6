use rand::seq::{index, SliceRandom};

use crate::data::Dataset;
use crate::error::Result;
use crate::models::{check_params, ParamVector, Prototype};
use crate::numerics::{self, LossKind, OptimizerState};
use crate::rng::SimRng;

/// Uniform random subset of `ceil(c * k)` client ids, returned sorted.
pub fn sample_clients(k: usize, c: f64, rng: &mut SimRng) -> Vec<usize> {
    let m = super::clients_per_round(k, c);
    let mut ids = index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Hyperparameters of one client's local solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// FedProx proximal coefficient; `None` or zero is plain SGD.
    pub prox_mu: Option<f64>,
}

/// Mini-batch SGD on cross-entropy for `epochs` passes over `shard`, with
/// a fresh shuffle per epoch. When `prox_mu > 0` the gradient of
/// `mu/2 * ||x - anchor||^2` is added. Constant rate, no momentum, no
/// weight decay.
pub fn client_local_update(
    proto: &Prototype,
    start: &ParamVector,
    shard: &Dataset,
    cfg: &LocalTraining,
    anchor: &ParamVector,
    rng: &mut SimRng,
) -> Result<ParamVector> {
    check_params(proto, start)?;
    check_params(proto, anchor)?;
    let mut params = start.clone();
    if cfg.epochs == 0 {
        return Ok(params);
    }
    let mu = cfg.prox_mu.unwrap_or(0.0);
    let mut opt = OptimizerState::sgd(cfg.lr);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch.max(1)) {
            let x = shard.inputs().select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| shard.labels()[i]).collect();
            let mut g = numerics::grad(proto, &params, &x, LossKind::CrossEntropy { labels: &y })?;
            if mu > 0.0 {
                for ((gi, xi), ai) in g.iter_mut().zip(&params.values).zip(&anchor.values) {
                    *gi += mu * (xi - ai);
                }
            }
            opt.step(&mut params.values, &g)?;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_blobs, ring_centers};
    use crate::models::init_params;
    use crate::rng;

    fn setup() -> (Prototype, ParamVector, Dataset) {
        let proto = Prototype::mlp("c", vec![2, 8, 3]).unwrap();
        let params = init_params(&proto, 1);
        let data = make_gaussian_blobs(3, 20, &ring_centers(3, 2.0), 0.5, 3).unwrap();
        (proto, params, data)
    }

    #[test]
    fn sampling_examples() {
        let mut r = rng::from_seed(0);
        assert_eq!(sample_clients(7, 1.0, &mut r), (0..7).collect::<Vec<_>>());
        let s = sample_clients(20, 0.4, &mut r);
        assert_eq!(s.len(), 8);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_clients(20, 0.4, &mut rng::from_seed(5)), sample_clients(20, 0.4, &mut rng::from_seed(5)));
        assert_eq!(sample_clients(10, 0.01, &mut r).len(), 1);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (p, x, d) = setup();
        let cfg = LocalTraining { epochs: 0, lr: 0.1, batch: 8, prox_mu: None };
        let out = client_local_update(&p, &x, &d, &cfg, &x, &mut rng::from_seed(1)).unwrap();
        assert!(out.bitwise_eq(&x));
    }

    #[test]
    fn zero_mu_matches_plain_sgd_bitwise() {
        let (p, x, d) = setup();
        let plain = LocalTraining { epochs: 3, lr: 0.1, batch: 8, prox_mu: None };
        let prox = LocalTraining { prox_mu: Some(0.0), ..plain };
        let a = client_local_update(&p, &x, &d, &plain, &x, &mut rng::from_seed(4)).unwrap();
        let b = client_local_update(&p, &x, &d, &prox, &x, &mut rng::from_seed(4)).unwrap();
        assert!(a.bitwise_eq(&b));
        assert!(!a.bitwise_eq(&x));
    }

    #[test]
    fn huge_mu_pins_to_anchor() {
        // With lr * mu = 1 each step jumps straight back to the anchor plus a
        // correction of size lr * |grad ce| = 1e-6 * O(1).
        let (p, x, d) = setup();
        let cfg = LocalTraining { epochs: 5, lr: 1e-6, batch: 8, prox_mu: Some(1e6) };
        let out = client_local_update(&p, &x, &d, &cfg, &x, &mut rng::from_seed(2)).unwrap();
        assert!(out.l2_distance(&x) < 1e-3);
    }

    #[test]
    fn local_training_fits_shard() {
        let (p, x, d) = setup();
        let cfg = LocalTraining { epochs: 30, lr: 0.1, batch: 8, prox_mu: None };
        let out = client_local_update(&p, &x, &d, &cfg, &x, &mut rng::from_seed(2)).unwrap();
        let acc = crate::harness::top1_accuracy(&p, &out, &d).unwrap();
        assert!(acc > 0.95, "train accuracy {acc}");
    }

    #[test]
    fn shard_dimension_mismatch() {
        let (p, x, _) = setup();
        let wrong = make_gaussian_blobs(3, 4, &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 0.1, 0).unwrap();
        let cfg = LocalTraining { epochs: 1, lr: 0.1, batch: 4, prox_mu: None };
        assert!(client_local_update(&p, &x, &wrong, &cfg, &x, &mut rng::from_seed(0)).is_err());
    }
}
