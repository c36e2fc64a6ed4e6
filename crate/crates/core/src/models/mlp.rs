//! Forward and backward passes over a flat parameter slice.

use super::prototype::{Precision, Prototype};
use crate::numerics::Matrix;

/// Activations kept from a forward pass for backprop.
pub(crate) struct Trace {
    /// `layers[l]` is the input of dense layer `l`; the final entry holds
    /// the raw logits.
    pub layers: Vec<Matrix>,
    /// Pre-activations of hidden layers.
    pub pre: Vec<Matrix>,
}

/// Copy of `params` with every weight block replaced by
/// `sign(w) * mean(|w|)`. Biases stay in full precision.
pub(crate) fn binarized(proto: &Prototype, params: &[f64]) -> Vec<f64> {
    let mut out = params.to_vec();
    for layer in proto.layout() {
        let w = &params[layer.weights.clone()];
        let scale = w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64;
        for (o, &v) in out[layer.weights].iter_mut().zip(w) {
            *o = if v > 0.0 {
                scale
            } else if v < 0.0 {
                -scale
            } else {
                0.0
            };
        }
    }
    out
}

/// Parameters actually used by the forward pass of `proto`.
pub(crate) fn effective_params<'a>(proto: &Prototype, params: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
    match proto.precision {
        Precision::Full => std::borrow::Cow::Borrowed(params),
        Precision::BinarySte => std::borrow::Cow::Owned(binarized(proto, params)),
    }
}

fn dense(input: &Matrix, w: &[f64], b: &[f64], fan_out: usize) -> Matrix {
    let n = input.rows();
    let fan_in = input.cols();
    let mut out = Matrix::zeros(n, fan_out);
    for r in 0..n {
        let x = input.row(r);
        let o = out.row_mut(r);
        o.copy_from_slice(b);
        for k in 0..fan_in {
            let a = x[k];
            if a != 0.0 {
                let wk = &w[k * fan_out..(k + 1) * fan_out];
                for (oj, wj) in o.iter_mut().zip(wk) {
                    *oj += a * wj;
                }
            }
        }
    }
    out
}

/// Forward pass with `params` used verbatim (no binarization).
pub(crate) fn forward_raw(proto: &Prototype, params: &[f64], inputs: &Matrix, keep_trace: bool) -> (Matrix, Option<Trace>) {
    let layout = proto.layout();
    let last = layout.len() - 1;
    let mut layers = Vec::new();
    let mut pre = Vec::new();
    let mut current = inputs.clone();
    for (l, layer) in layout.iter().enumerate() {
        let z = dense(&current, &params[layer.weights.clone()], &params[layer.bias.clone()], layer.fan_out);
        let next = if l == last {
            z
        } else {
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = proto.activation.apply(*v);
            }
            if keep_trace {
                pre.push(z);
            }
            a
        };
        if keep_trace {
            layers.push(std::mem::replace(&mut current, next));
        } else {
            current = next;
        }
    }
    if keep_trace {
        layers.push(current.clone());
        (current, Some(Trace { layers, pre }))
    } else {
        (current, None)
    }
}

/// Backprop `dlogits` (gradient of the scalar loss w.r.t. the logits)
/// through the network described by `trace`.
pub(crate) fn backward(proto: &Prototype, params: &[f64], trace: &Trace, dlogits: Matrix) -> Vec<f64> {
    let layout = proto.layout();
    let mut grad = vec![0.0; params.len()];
    let mut delta = dlogits;
    for l in (0..layout.len()).rev() {
        let layer = &layout[l];
        let input = &trace.layers[l];
        let n = input.rows();
        let (fan_in, fan_out) = (layer.fan_in, layer.fan_out);
        {
            let gw = &mut grad[layer.weights.clone()];
            for r in 0..n {
                let x = input.row(r);
                let d = delta.row(r);
                for k in 0..fan_in {
                    let a = x[k];
                    if a != 0.0 {
                        for (g, dj) in gw[k * fan_out..(k + 1) * fan_out].iter_mut().zip(d) {
                            *g += a * dj;
                        }
                    }
                }
            }
        }
        {
            let gb = &mut grad[layer.bias.clone()];
            for r in 0..n {
                for (g, dj) in gb.iter_mut().zip(delta.row(r)) {
                    *g += dj;
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &params[layer.weights.clone()];
        let pre = &trace.pre[l - 1];
        let mut prev = Matrix::zeros(n, fan_in);
        for r in 0..n {
            let d = delta.row(r);
            let z = pre.row(r);
            let a = input.row(r);
            let out = prev.row_mut(r);
            for k in 0..fan_in {
                let dk: f64 = w[k * fan_out..(k + 1) * fan_out].iter().zip(d).map(|(wj, dj)| wj * dj).sum();
                out[k] = dk * proto.activation.derivative(z[k], a[k]);
            }
        }
        delta = prev;
    }
    grad
}
