//! Seeded synthetic classification data: Gaussian class clusters projected
//! onto the unit sphere, with a difficulty knob controlling overlap.

use icmlp::data::Dataset;
use icmlp::rng::Rng;
use icmlp::tensor::Tensor2D;
use icmlp::{Error, Result};

/// Generates `n` unit-norm samples of width `dim` across `classes`
/// balanced classes (labels cycle 0, 1, ..., C-1). Each class gets a
/// random unit-vector center; a sample is `normalize(center + d * g)`
/// with `g` standard normal and `d` the difficulty, so difficulty 0
/// collapses every class onto its center (trivially separable) and larger
/// values blur the clusters into overlap.
pub fn gen_synthetic(
    n: usize,
    dim: usize,
    classes: usize,
    difficulty: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || dim == 0 || classes == 0 {
        return Err(Error::Parameter(
            "samples, dimension, and classes must all be positive".into(),
        ));
    }
    if classes > n {
        return Err(Error::Parameter(format!(
            "more classes ({classes}) than samples ({n})"
        )));
    }
    if !(difficulty.is_finite() && difficulty >= 0.0) {
        return Err(Error::Parameter(format!(
            "difficulty must be finite and >= 0, got {difficulty}"
        )));
    }

    let mut rng = Rng::new(seed);
    let mut centers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut center = vec![0.0; dim];
        loop {
            for v in center.iter_mut() {
                *v = rng.next_normal();
            }
            if normalize(&mut center) {
                break;
            }
        }
        centers.push(center);
    }

    let mut features = Tensor2D::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = vec![0.0; dim];
    for i in 0..n {
        let class = i % classes;
        let center = &centers[class];
        // Draw fresh until the perturbed center normalizes; a zero-norm
        // draw is astronomically unlikely but must not slip through.
        loop {
            for (v, c) in row.iter_mut().zip(center) {
                *v = c + difficulty * rng.next_normal();
            }
            if normalize(&mut row) {
                break;
            }
        }
        features.data_mut()[i * dim..(i + 1) * dim].copy_from_slice(&row);
        labels.push(class);
    }
    Dataset::with_n_classes(features, labels, classes)
}

/// Scales `row` to unit Euclidean norm; false if the norm is unusable.
fn normalize(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return false;
    }
    for v in row {
        *v /= norm;
    }
    true
}
