use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{FedError, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Isotropic Gaussian blobs, `per_class` samples around each center.
/// Rows are grouped by class in center order.
pub fn make_gaussian_blobs(classes: usize, per_class: usize, centers: &[Vec<f64>], scale: f64, seed: u64) -> Result<Dataset> {
    if per_class == 0 || classes == 0 {
        return Err(FedError::EmptyDataset("gaussian blobs with zero samples".into()));
    }
    if centers.len() != classes {
        return Err(FedError::Config(format!("{classes} classes but {} centers", centers.len())));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(FedError::Config("centers must share a nonzero dimension".into()));
    }
    for i in 0..classes {
        for j in i + 1..classes {
            if centers[i] == centers[j] {
                return Err(FedError::Config(format!("centers {i} and {j} coincide")));
            }
        }
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(FedError::Config(format!("blob scale must be finite and >= 0, got {scale}")));
    }
    let mut rng = rng::from_seed(seed);
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in center {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu + scale * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::new(labels.len(), dim, data)?, labels, classes)
}

/// `classes` points evenly spaced on a circle of the given radius.
pub fn ring_centers(classes: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
            vec![radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// `classes` points drawn uniformly on the sphere of the given radius in
/// `dim` dimensions.
pub fn sphere_centers(classes: usize, dim: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::from_seed(seed);
    (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| radius * x / norm).collect();
            }
        })
        .collect()
}

/// Stratified split: each class contributes `round(n_c * val_fraction)`
/// samples to the validation side.
pub fn split_train_val(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(FedError::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    let mut rng = rng::from_seed(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..dataset.class_count() {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels()[i] == c).collect();
        idx.shuffle(&mut rng);
        let take = (idx.len() as f64 * val_fraction).round() as usize;
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    if train.is_empty() || val.is_empty() {
        return Err(FedError::EmptyDataset(format!(
            "val_fraction {val_fraction} leaves an empty side ({} train, {} val)",
            train.len(),
            val.len()
        )));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((dataset.subset(&train)?, dataset.subset(&val)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_puts_points_on_centers() {
        let centers = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let d = make_gaussian_blobs(2, 5, &centers, 0.0, 1).unwrap();
        for (row, &y) in d.inputs().iter_rows().zip(d.labels()) {
            assert_eq!(row, centers[y].as_slice());
        }
    }

    #[test]
    fn histogram_and_means() {
        let centers = ring_centers(3, 2.0);
        let scale = 0.7;
        let per_class = 400;
        let d = make_gaussian_blobs(3, per_class, &centers, scale, 5).unwrap();
        assert_eq!(d.class_histogram(), vec![per_class; 3]);
        let tol = 3.0 * scale / (per_class as f64).sqrt();
        for c in 0..3 {
            for k in 0..2 {
                let mean = d.inputs().iter_rows().zip(d.labels()).filter(|(_, &y)| y == c).map(|(r, _)| r[k]).sum::<f64>()
                    / per_class as f64;
                assert!((mean - centers[c][k]).abs() <= tol, "class {c} coord {k}: {mean}");
            }
        }
    }

    #[test]
    fn blob_errors() {
        let centers = ring_centers(2, 1.0);
        assert!(matches!(make_gaussian_blobs(2, 0, &centers, 1.0, 0), Err(FedError::EmptyDataset(_))));
        assert!(make_gaussian_blobs(2, 3, &[vec![0.0], vec![0.0]], 1.0, 0).is_err());
        assert!(make_gaussian_blobs(3, 3, &centers, 1.0, 0).is_err());
    }

    #[test]
    fn stratified_split() {
        let d = make_gaussian_blobs(3, 37, &ring_centers(3, 1.0), 1.0, 2).unwrap();
        let (tr, va) = split_train_val(&d, 0.1, 9).unwrap();
        assert_eq!(tr.len() + va.len(), d.len());
        for c in va.class_histogram() {
            assert!((c as f64 - 3.7).abs() <= 1.0);
        }
        let (tr2, va2) = split_train_val(&d, 0.1, 9).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(va, va2);
        assert!(split_train_val(&d, 0.0, 1).is_err());
        assert!(split_train_val(&d, 0.001, 1).is_err());
    }
}
