//! MLP prototypes, parameter initialization and layout, forward passes
//! (full precision and binarized) and parameter averaging.

pub(crate) mod mlp;
mod params;
mod prototype;

pub use params::ParamVector;
pub use prototype::{Activation, LayerLayout, Precision, Prototype};

use rand::Rng;

use crate::error::{FedError, Result};
use crate::numerics::{self, LossKind, Matrix};
use crate::rng;

/// He-uniform weights in `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`, zero biases.
pub fn init_params(proto: &Prototype, seed: u64) -> ParamVector {
    let mut rng = rng::from_seed(seed);
    let mut values = vec![0.0; proto.param_len()];
    for layer in proto.layout() {
        let bound = (6.0 / layer.fan_in as f64).sqrt();
        for w in &mut values[layer.weights] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ParamVector::new(proto.id.clone(), values)
}

pub(crate) fn check_params(proto: &Prototype, params: &ParamVector) -> Result<()> {
    if params.prototype_id != proto.id {
        return Err(FedError::PrototypeMismatch { expected: proto.id.clone(), found: params.prototype_id.clone() });
    }
    if params.len() != proto.param_len() {
        return Err(FedError::Shape(format!(
            "prototype `{}` needs {} parameters, got {}",
            proto.id,
            proto.param_len(),
            params.len()
        )));
    }
    Ok(())
}

/// Raw logits (`batch x classes`).
pub fn predict_logits(proto: &Prototype, params: &ParamVector, inputs: &Matrix) -> Result<Matrix> {
    check_params(proto, params)?;
    if inputs.cols() != proto.input_dim() {
        return Err(FedError::Shape(format!(
            "prototype `{}` expects {} input features, got {}",
            proto.id,
            proto.input_dim(),
            inputs.cols()
        )));
    }
    let eff = mlp::effective_params(proto, &params.values);
    Ok(mlp::forward_raw(proto, &eff, inputs, false).0)
}

/// Straight-through gradient of the cross-entropy for a binarized prototype.
pub fn binarize_ste_grad(proto: &Prototype, params: &ParamVector, inputs: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if proto.precision != Precision::BinarySte {
        return Err(FedError::Config(format!(
            "straight-through gradient requested for full-precision prototype `{}`",
            proto.id
        )));
    }
    numerics::grad(proto, params, inputs, LossKind::CrossEntropy { labels })
}

/// Binarized copy of the weights (`sign(w) * mean|w|` per layer).
pub fn binarize_weights(proto: &Prototype, params: &ParamVector) -> ParamVector {
    ParamVector::new(params.prototype_id.clone(), mlp::binarized(proto, &params.values))
}

/// Weighted convex combination of parameter vectors.
///
/// Computed as an incremental weighted mean so that identical inputs come
/// back bit-for-bit and zero-weight models contribute nothing.
pub fn average_params(models: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if models.is_empty() {
        return Err(FedError::Precondition("average of zero models".into()));
    }
    if models.len() != weights.len() {
        return Err(FedError::Shape(format!("{} models but {} weights", models.len(), weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(FedError::Precondition("averaging weights must be finite and nonnegative".into()));
    }
    let first = models[0];
    for m in &models[1..] {
        if m.prototype_id != first.prototype_id {
            return Err(FedError::PrototypeMismatch {
                expected: first.prototype_id.clone(),
                found: m.prototype_id.clone(),
            });
        }
        if m.len() != first.len() {
            return Err(FedError::Shape(format!("parameter lengths {} and {}", first.len(), m.len())));
        }
    }
    let mut pairs = models.iter().zip(weights).filter(|(_, &w)| w > 0.0);
    let (start, &w0) = pairs
        .next()
        .ok_or_else(|| FedError::Precondition("averaging weights sum to zero".into()))?;
    let mut mean = start.values.clone();
    let mut acc = w0;
    for (m, &w) in pairs {
        acc += w;
        let ratio = w / acc;
        for (x, y) in mean.iter_mut().zip(&m.values) {
            *x += ratio * (y - *x);
        }
    }
    Ok(ParamVector::new(first.prototype_id.clone(), mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn proto() -> Prototype {
        Prototype::mlp("m", vec![2, 5, 3]).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let p = proto();
        let a = init_params(&p, 11);
        let b = init_params(&p, 11);
        assert!(a.bitwise_eq(&b));
        assert!(!a.bitwise_eq(&init_params(&p, 12)));
        for layer in p.layout() {
            assert!(a.values[layer.bias].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_std_matches_he_uniform() {
        // Uniform(-b, b) has std b / sqrt(3) = sqrt(2 / fan_in).
        let p = Prototype::mlp("wide", vec![50, 200, 2]).unwrap();
        let params = init_params(&p, 3);
        let layer = &p.layout()[0];
        let w = &params.values[layer.weights.clone()];
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let expected = (2.0f64 / 50.0).sqrt();
        assert!((std - expected).abs() / expected < 0.2, "std {std} vs {expected}");
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = proto();
        let z = ParamVector::new("m", vec![0.0; p.param_len()]);
        let x = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.3, 0.4]]).unwrap();
        assert!(predict_logits(&p, &z, &x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_forward() {
        // 2 -> 1 (relu) -> 2, one sample x = (1, 2).
        // h = relu(0.5*1 - 0.25*2 + 0.1) = 0.1
        // logits = (2*0.1 + 0.3, -1*0.1 - 0.2) = (0.5, -0.3)
        let p = Prototype::mlp("h", vec![2, 1, 2]).unwrap();
        let params = ParamVector::new("h", vec![0.5, -0.25, 0.1, 2.0, -1.0, 0.3, -0.2]);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let z = predict_logits(&p, &params, &x).unwrap();
        assert!((z.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((z.get(0, 1) + 0.3).abs() < 1e-12);

        let t = Prototype::new("h", vec![2, 1, 2], Activation::Tanh, Precision::Full).unwrap();
        let h = 0.1f64.tanh();
        let z = predict_logits(&t, &params, &x).unwrap();
        assert!((z.get(0, 0) - (2.0 * h + 0.3)).abs() < 1e-12);
        assert!((z.get(0, 1) - (-h - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_duplicate_logits() {
        let p = proto();
        let params = init_params(&p, 1);
        let x = Matrix::from_rows(&[vec![0.2, 0.7], vec![0.2, 0.7]]).unwrap();
        let z = predict_logits(&p, &params, &x).unwrap();
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn prototype_mismatch_detected() {
        let p = proto();
        let other = ParamVector::new("other", vec![0.0; p.param_len()]);
        let x = Matrix::zeros(1, 2);
        assert!(matches!(predict_logits(&p, &other, &x), Err(FedError::PrototypeMismatch { .. })));
        let good = init_params(&p, 0);
        assert!(matches!(predict_logits(&p, &good, &Matrix::zeros(1, 3)), Err(FedError::Shape(_))));
    }

    #[test]
    fn averaging_examples() {
        let a = ParamVector::new("s", vec![0.0]);
        let b = ParamVector::new("s", vec![4.0]);
        assert_eq!(average_params(&[&a, &b], &[1.0, 3.0]).unwrap().values, vec![3.0]);
        assert!(average_params(&[&a, &b], &[1.0, 0.0]).unwrap().bitwise_eq(&a));
        let c = ParamVector::new("t", vec![1.0]);
        assert!(matches!(average_params(&[&a, &c], &[1.0, 1.0]), Err(FedError::PrototypeMismatch { .. })));
        assert!(average_params(&[&a, &b], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn averaging_identical_models_is_bitwise_identity() {
        let m = init_params(&proto(), 5);
        let avg = average_params(&[&m, &m, &m], &[1.0, 7.0, 0.3]).unwrap();
        assert!(avg.bitwise_eq(&m));
    }

    #[test]
    fn binarized_forward_all_positive_layer() {
        // Single layer with positive weights: binarized forward equals the
        // forward of an all-ones weight matrix scaled by mean|w|.
        let bin = Prototype::new("b", vec![3, 2], Activation::Relu, Precision::BinarySte).unwrap();
        let full = bin.full_precision();
        let params = ParamVector::new("b", vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.05, -0.05]);
        let scale = 0.35;
        let ones = ParamVector::new("b", vec![scale, scale, scale, scale, scale, scale, 0.05, -0.05]);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let zb = predict_logits(&bin, &params, &x).unwrap();
        let zf = predict_logits(&full, &ones, &x).unwrap();
        for (a, b) in zb.data().iter().zip(zf.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ste_grad_matches_gradient_at_binarized_weights() {
        let bin = Prototype::new("b", vec![2, 6, 3], Activation::Relu, Precision::BinarySte).unwrap();
        let full = bin.full_precision();
        let params = init_params(&bin, 9);
        let x = Matrix::from_rows(&[vec![0.3, -1.2], vec![1.0, 0.4], vec![-0.7, 0.9]]).unwrap();
        let labels = [0, 2, 1];
        let g = binarize_ste_grad(&bin, &params, &x, &labels).unwrap();
        let g_ref = numerics::grad(&full, &binarize_weights(&bin, &params), &x, LossKind::CrossEntropy { labels: &labels }).unwrap();
        assert_eq!(g, g_ref);
        assert!(matches!(binarize_ste_grad(&full, &params, &x, &labels), Err(FedError::Config(_))));
    }

    #[test]
    fn binarized_logits_depend_on_sign_and_scale_only() {
        let bin = Prototype::new("b", vec![2, 4, 2], Activation::Relu, Precision::BinarySte).unwrap();
        let params = init_params(&bin, 21);
        let mut perturbed = params.clone();
        // Swap magnitudes between two same-sign weights of layer 0: signs and
        // mean |w| are unchanged, so the binarized forward is identical.
        let w = &params.values[0..8];
        let (i, j) = (0..8)
            .flat_map(|i| (i + 1..8).map(move |j| (i, j)))
            .find(|&(i, j)| w[i].signum() == w[j].signum())
            .unwrap();
        perturbed.values.swap(i, j);
        let x = Matrix::from_rows(&[vec![0.5, -0.5], vec![2.0, 1.0]]).unwrap();
        let a = predict_logits(&bin, &params, &x).unwrap();
        let b = predict_logits(&bin, &perturbed, &x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn averaging_is_permutation_invariant(
            vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 2..6),
            ws in prop::collection::vec(0.1f64..3.0, 6),
            rot in 0usize..6,
        ) {
            let models: Vec<ParamVector> = vals.iter().map(|v| ParamVector::new("p", v.clone())).collect();
            let weights = &ws[..models.len()];
            let refs: Vec<&ParamVector> = models.iter().collect();
            let a = average_params(&refs, weights).unwrap();
            let k = rot % models.len();
            let mut refs_r = refs.clone();
            refs_r.rotate_left(k);
            let mut w_r = weights.to_vec();
            w_r.rotate_left(k);
            let b = average_params(&refs_r, &w_r).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn predict_is_batch_order_equivariant(seed in 0u64..1000, rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..8)) {
            let p = proto();
            let params = init_params(&p, seed);
            let x = Matrix::from_rows(&rows).unwrap();
            let rev: Vec<usize> = (0..rows.len()).rev().collect();
            let z = predict_logits(&p, &params, &x).unwrap();
            let zr = predict_logits(&p, &params, &x.select_rows(&rev)).unwrap();
            for (i, &j) in rev.iter().enumerate() {
                prop_assert_eq!(zr.row(i), z.row(j));
            }
        }
    }
}
