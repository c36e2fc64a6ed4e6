//! Losses and exact gradients for MLP prototypes.

use super::{log_softmax, softmax, Matrix};
use crate::error::{FedError, Result};
use crate::models::{mlp, ParamVector, Prototype};

/// Scalar training objective, always reduced as a batch mean.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Cross-entropy against class labels.
    CrossEntropy { labels: &'a [usize] },
    /// `KL(target_row || softmax(logits_row))` with `targets` holding
    /// probability rows.
    KlToTarget { targets: &'a Matrix },
}

fn check_batch(proto: &Prototype, params: &ParamVector, inputs: &Matrix, loss: &LossKind) -> Result<()> {
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
    if inputs.rows() == 0 {
        return Err(FedError::EmptyDataset("gradient on empty batch".into()));
    }
    if inputs.cols() != proto.input_dim() {
        return Err(FedError::Shape(format!(
            "prototype `{}` expects {} input features, batch has {}",
            proto.id,
            proto.input_dim(),
            inputs.cols()
        )));
    }
    match loss {
        LossKind::CrossEntropy { labels } => {
            if labels.len() != inputs.rows() {
                return Err(FedError::Shape(format!("{} labels for {} rows", labels.len(), inputs.rows())));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= proto.class_count()) {
                return Err(FedError::Index(format!("label {bad} with {} classes", proto.class_count())));
            }
        }
        LossKind::KlToTarget { targets } => {
            if targets.rows() != inputs.rows() || targets.cols() != proto.class_count() {
                return Err(FedError::Shape(format!(
                    "targets {}x{} for batch of {} with {} classes",
                    targets.rows(),
                    targets.cols(),
                    inputs.rows(),
                    proto.class_count()
                )));
            }
        }
    }
    Ok(())
}

/// Loss value and gradient of the mean loss w.r.t. every parameter.
///
/// For binarized prototypes the forward pass runs on binarized weights and
/// the gradient w.r.t. those weights is returned unchanged for the
/// full-precision master copy (straight-through estimator).
pub fn loss_and_grad(proto: &Prototype, params: &ParamVector, inputs: &Matrix, loss: LossKind) -> Result<(f64, Vec<f64>)> {
    check_batch(proto, params, inputs, &loss)?;
    let eff = mlp::effective_params(proto, &params.values);
    let (logits, trace) = mlp::forward_raw(proto, &eff, inputs, true);
    if !logits.is_finite() {
        return Err(FedError::NumericDomain("non-finite logits in forward pass".into()));
    }
    let n = inputs.rows() as f64;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let z = logits.row(r);
        let logp = log_softmax(z)?;
        let p = softmax(z)?;
        let d = dlogits.row_mut(r);
        match loss {
            LossKind::CrossEntropy { labels } => {
                let y = labels[r];
                total -= logp[y];
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj = (p[j] - if j == y { 1.0 } else { 0.0 }) / n;
                }
            }
            LossKind::KlToTarget { targets } => {
                let t = targets.row(r);
                let tsum: f64 = t.iter().sum();
                for j in 0..t.len() {
                    if t[j] > 0.0 {
                        total += t[j] * (t[j].ln() - logp[j]);
                    }
                    d[j] = (tsum * p[j] - t[j]) / n;
                }
            }
        }
    }
    let grad = mlp::backward(proto, &eff, trace.as_ref().expect("trace requested"), dlogits);
    Ok((total / n, grad))
}

pub fn grad(proto: &Prototype, params: &ParamVector, inputs: &Matrix, loss: LossKind) -> Result<Vec<f64>> {
    loss_and_grad(proto, params, inputs, loss).map(|(_, g)| g)
}

/// Loss value only (no backward pass).
pub fn loss(proto: &Prototype, params: &ParamVector, inputs: &Matrix, loss: LossKind) -> Result<f64> {
    check_batch(proto, params, inputs, &loss)?;
    let eff = mlp::effective_params(proto, &params.values);
    let (logits, _) = mlp::forward_raw(proto, &eff, inputs, false);
    let n = inputs.rows() as f64;
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let logp = log_softmax(logits.row(r))?;
        match loss {
            LossKind::CrossEntropy { labels } => total -= logp[labels[r]],
            LossKind::KlToTarget { targets } => {
                for (t, lp) in targets.row(r).iter().zip(&logp) {
                    if *t > 0.0 {
                        total += t * (t.ln() - lp);
                    }
                }
            }
        }
    }
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, Activation, Precision};
    use crate::rng;
    use rand::Rng;

    /// Central finite differences of the loss, independent of backprop.
    fn numeric_grad(proto: &Prototype, params: &ParamVector, x: &Matrix, kind: LossKind, h: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.len());
        let mut p = params.clone();
        for i in 0..params.len() {
            let orig = p.values[i];
            p.values[i] = orig + h;
            let up = loss(proto, &p, x, kind).unwrap();
            p.values[i] = orig - h;
            let down = loss(proto, &p, x, kind).unwrap();
            p.values[i] = orig;
            out.push((up - down) / (2.0 * h));
        }
        out
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn matches_finite_differences() {
        let mut r = rng::from_seed(99);
        for case in 0..6 {
            let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Relu };
            let proto = Prototype::new("g", vec![3, 4, 5, 3], act, Precision::Full).unwrap();
            let mut params = init_params(&proto, case);
            for v in &mut params.values {
                *v += r.random_range(-0.1..0.1);
            }
            let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let labels = [0usize, 2, 1, 2];
            let tgt_rows: Vec<Vec<f64>> = (0..4)
                .map(|_| softmax(&[r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).unwrap())
                .collect();
            let targets = Matrix::from_rows(&tgt_rows).unwrap();
            for kind in [LossKind::CrossEntropy { labels: &labels }, LossKind::KlToTarget { targets: &targets }] {
                let g = grad(&proto, &params, &x, kind).unwrap();
                let fd = numeric_grad(&proto, &params, &x, kind, 1e-6);
                let worst = g.iter().zip(&fd).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
                assert!(worst <= 1e-5, "case {case}: max rel err {worst}");
            }
        }
    }

    #[test]
    fn zero_last_layer_uniform_target_has_zero_bias_grad() {
        let proto = Prototype::mlp("z", vec![2, 4, 3]).unwrap();
        let mut params = init_params(&proto, 4);
        let last = proto.layout().pop().unwrap();
        for v in &mut params.values[last.weights.start..last.bias.end] {
            *v = 0.0;
        }
        let x = Matrix::from_rows(&[vec![0.1, 0.9], vec![-1.0, 0.5]]).unwrap();
        let targets = Matrix::new(2, 3, vec![1.0 / 3.0; 6]).unwrap();
        let g = grad(&proto, &params, &x, LossKind::KlToTarget { targets: &targets }).unwrap();
        for &v in &g[last.bias] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let proto = Prototype::mlp("d", vec![2, 6, 3]).unwrap();
        let params = init_params(&proto, 8);
        let x = Matrix::from_rows(&[vec![0.3, -0.4], vec![1.5, 0.2]]).unwrap();
        let xx = x.select_rows(&[0, 0, 1, 1]);
        let g1 = grad(&proto, &params, &x, LossKind::CrossEntropy { labels: &[1, 2] }).unwrap();
        let g2 = grad(&proto, &params, &xx, LossKind::CrossEntropy { labels: &[1, 1, 2, 2] }).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_errors() {
        let proto = Prototype::mlp("s", vec![2, 3]).unwrap();
        let params = init_params(&proto, 0);
        let bad = Matrix::zeros(1, 4);
        assert!(matches!(grad(&proto, &params, &bad, LossKind::CrossEntropy { labels: &[0] }), Err(FedError::Shape(_))));
        let x = Matrix::zeros(1, 2);
        assert!(matches!(grad(&proto, &params, &x, LossKind::CrossEntropy { labels: &[5] }), Err(FedError::Index(_))));
    }
}
