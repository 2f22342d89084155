//! Shared helpers for the integration test suites.
#![allow(dead_code)]

use icmlp::rng::Rng;
use icmlp::tensor::Tensor2D;

/// Relative error against the larger magnitude, floored so near-zero pairs
/// compare absolutely: |a - b| / max(|a|, |b|, 1e-8).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        rel_err(actual, expected) < tol,
        "{what}: expected {expected}, got {actual} (rel err {})",
        rel_err(actual, expected)
    );
}

pub fn assert_tensors_close(actual: &Tensor2D, expected: &Tensor2D, tol: f64, what: &str) {
    assert_eq!(
        actual.shape(),
        expected.shape(),
        "{what}: shape {:?} vs {:?}",
        actual.shape(),
        expected.shape()
    );
    for r in 0..actual.rows() {
        for c in 0..actual.cols() {
            let (a, e) = (actual.get(r, c), expected.get(r, c));
            assert!(
                rel_err(a, e) < tol,
                "{what}: entry ({r}, {c}) expected {e}, got {a} (rel err {})",
                rel_err(a, e)
            );
        }
    }
}

pub fn assert_tensors_bitwise(actual: &Tensor2D, expected: &Tensor2D, what: &str) {
    assert_eq!(actual.shape(), expected.shape(), "{what}: shapes differ");
    for (i, (a, e)) in actual.data().iter().zip(expected.data()).enumerate() {
        assert!(
            a.to_bits() == e.to_bits(),
            "{what}: flat entry {i} differs bitwise: {a} vs {e}"
        );
    }
}

/// Random tensor with entries in [lo, hi).
pub fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor2D {
    rng.uniform(lo, hi, rows, cols).unwrap()
}

/// Step size for central differences.
pub const FD_H: f64 = 1e-5;

/// Central-difference gradient of a scalar `loss` with respect to every
/// entry of `at`. Each evaluation re-runs the full computation on a copy
/// with one entry shifted by ±FD_H.
pub fn central_diff(mut loss: impl FnMut(&Tensor2D) -> f64, at: &Tensor2D) -> Tensor2D {
    let mut grad = Tensor2D::zeros(at.rows(), at.cols());
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let v = at.get(r, c);
            let mut probe = at.clone();
            probe.set(r, c, v + FD_H);
            let up = loss(&probe);
            probe.set(r, c, v - FD_H);
            let down = loss(&probe);
            grad.set(r, c, (up - down) / (2.0 * FD_H));
        }
    }
    grad
}
