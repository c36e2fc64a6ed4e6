//! Dense row-major matrices, probability utilities, losses, backprop and
//! optimizers. Everything here is `f64` and allocation-light; the networks
//! in this crate are small enough that straightforward loops are fast.

mod grad;
mod optim;

pub use grad::{grad, loss, loss_and_grad, LossKind};
pub use optim::{OptimizerKind, OptimizerState, Schedule};

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

/// Lower clamp applied to predicted probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FedError::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(FedError::Shape(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Gather the given rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Apply softmax to every row.
    pub fn softmax_rows(&self) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let p = softmax(self.row(i))?;
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }

    /// Index of the largest entry per row; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.iter_rows().map(argmax).collect()
    }
}

/// Index of the maximum; the first maximal entry wins.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FedError::NumericDomain(format!("{what} contains NaN or infinity")))
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits, "softmax input")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `ln softmax(logits)` computed without forming the probabilities.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits, "log_softmax input")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|&z| z - lse).collect())
}

/// `KL(target || pred) = sum_i target_i ln(target_i / pred_i)`.
///
/// `0 ln 0` is taken as 0 and `pred` is clamped to [`PROB_FLOOR`].
pub fn kl_div(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(FedError::Shape(format!(
            "kl_div: target has {} entries, pred has {}",
            target.len(),
            pred.len()
        )));
    }
    check_finite(target, "kl_div target")?;
    check_finite(pred, "kl_div pred")?;
    Ok(target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * (t.ln() - p.max(PROB_FLOOR).ln()))
        .sum())
}

/// Mean over rows of `-ln softmax(logits_row)[label]`.
pub fn cross_entropy(labels: &[usize], logits: &Matrix) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(FedError::Shape(format!(
            "cross_entropy: {} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if labels.is_empty() {
        return Err(FedError::EmptyDataset("cross_entropy on empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        if y >= row.len() {
            return Err(FedError::Index(format!("label {y} with {} classes", row.len())));
        }
        total -= log_softmax(row)?[y];
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_hand_value() {
        let p = softmax(&[0.0, 2f64.ln()]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(FedError::NumericDomain(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(FedError::NumericDomain(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_div(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(kl_div(&[1.0], &[0.5, 0.5]), Err(FedError::Shape(_))));
    }

    #[test]
    fn kl_clamps_zero_prediction() {
        let v = kl_div(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite());
        let expected = 0.5 * 0.5f64.ln() + 0.5 * (0.5f64.ln() - PROB_FLOOR.ln());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Matrix::zeros(4, 5);
        let ce = cross_entropy(&[0, 1, 2, 4], &uniform).unwrap();
        assert!((ce - 5f64.ln()).abs() < 1e-12);

        let confident = Matrix::from_rows(&[vec![60.0, 0.0, 0.0]]).unwrap();
        assert!(cross_entropy(&[0], &confident).unwrap() < 1e-20);

        let two = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let r0 = -log_softmax(&[1.0, 2.0]).unwrap()[0];
        let r1 = -log_softmax(&[0.5, -1.0]).unwrap()[1];
        let ce = cross_entropy(&[0, 1], &two).unwrap();
        assert!((ce - 0.5 * (r0 + r1)).abs() < 1e-15);

        assert!(matches!(cross_entropy(&[3], &Matrix::zeros(1, 3)), Err(FedError::Index(_))));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    proptest! {
        #[test]
        fn softmax_is_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&logits).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(x in -20.0f64..20.0, c in -3.0f64..3.0, shift in -100.0f64..100.0) {
            let a = softmax(&[x, x + c, x + 2.0 * c]).unwrap();
            let b = softmax(&[x + shift, x + c + shift, x + 2.0 * c + shift]).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_nonnegative(a in prop::collection::vec(-10.0f64..10.0, 2..8), shift in prop::collection::vec(-10.0f64..10.0, 8)) {
            let p = softmax(&a).unwrap();
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
            let q = softmax(&b).unwrap();
            prop_assert!(kl_div(&p, &q).unwrap() >= -1e-12);
        }

        #[test]
        fn uniform_cross_entropy_is_ln_c(c in 2usize..20, n in 1usize..10) {
            let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
            let ce = cross_entropy(&labels, &Matrix::zeros(n, c)).unwrap();
            prop_assert!((ce - (c as f64).ln()).abs() < 1e-12);
        }
    }
}
