//! Matrix and random-draw primitives: frozen hand oracles, a brute-force
//! product oracle, algebraic invariants, and error contracts.

mod common;

use common::{assert_close, assert_tensors_bitwise, assert_tensors_close, random_tensor};
use icmlp::error::Error;
use icmlp::rng::{derive_seed, Rng};
use icmlp::tensor::{rel_close, Tensor2D};

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor2D {
    Tensor2D::from_vec(rows, cols, data.to_vec()).unwrap()
}

/// Reference product by direct expansion; the implementation must agree.
fn naive_matmul(a: &Tensor2D, b: &Tensor2D) -> Tensor2D {
    let mut out = Tensor2D::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

#[test]
fn matmul_hand_expanded_2x2() {
    let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let b = t(2, 2, &[5.0, 6.0, 7.0, 8.0]);
    // [1*5+2*7, 1*6+2*8; 3*5+4*7, 3*6+4*8]
    let expected = t(2, 2, &[19.0, 22.0, 43.0, 50.0]);
    assert_tensors_close(&a.matmul(&b).unwrap(), &expected, 1e-15, "2x2 product");
}

#[test]
fn matmul_identity_is_identity() {
    let mut rng = Rng::new(3);
    let a = random_tensor(&mut rng, 4, 4, -2.0, 2.0);
    let id = Tensor2D::identity(4);
    assert_tensors_close(&a.matmul(&id).unwrap(), &a, 1e-15, "a * I");
    assert_tensors_close(&id.matmul(&a).unwrap(), &a, 1e-15, "I * a");
}

#[test]
fn matmul_zero_annihilates() {
    let mut rng = Rng::new(4);
    let a = random_tensor(&mut rng, 3, 5, -1.0, 1.0);
    let z = Tensor2D::zeros(5, 2);
    let out = a.matmul(&z).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0), "a * 0 must be 0");
}

#[test]
fn matmul_agrees_with_naive_expansion() {
    let mut rng = Rng::new(11);
    for &(m, k, n) in &[(1, 1, 1), (2, 3, 4), (7, 5, 3), (16, 16, 16), (33, 17, 9)] {
        let a = random_tensor(&mut rng, m, k, -3.0, 3.0);
        let b = random_tensor(&mut rng, k, n, -3.0, 3.0);
        assert_tensors_close(
            &a.matmul(&b).unwrap(),
            &naive_matmul(&a, &b),
            1e-12,
            &format!("{m}x{k} * {k}x{n} vs naive"),
        );
    }
}

#[test]
fn matmul_transposed_variants_agree_with_explicit_transpose() {
    let mut rng = Rng::new(12);
    let a = random_tensor(&mut rng, 4, 6, -1.0, 1.0);
    let b = random_tensor(&mut rng, 5, 6, -1.0, 1.0);
    assert_tensors_close(
        &a.matmul_nt(&b).unwrap(),
        &a.matmul(&b.transpose()).unwrap(),
        1e-13,
        "a * b^T",
    );
    let c = random_tensor(&mut rng, 4, 3, -1.0, 1.0);
    assert_tensors_close(
        &a.matmul_tn(&c).unwrap(),
        &a.transpose().matmul(&c).unwrap(),
        1e-13,
        "a^T * c",
    );
}

#[test]
fn matmul_is_associative_within_tolerance() {
    let mut rng = Rng::new(21);
    for round in 0..5 {
        let a = random_tensor(&mut rng, 6, 4, -2.0, 2.0);
        let b = random_tensor(&mut rng, 4, 7, -2.0, 2.0);
        let c = random_tensor(&mut rng, 7, 3, -2.0, 2.0);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        assert_tensors_close(&left, &right, 1e-9, &format!("associativity round {round}"));
    }
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let a = Tensor2D::zeros(2, 3);
    let b = Tensor2D::zeros(4, 2);
    match a.matmul(&b) {
        Err(Error::ShapeMismatch { op, left, right }) => {
            assert_eq!(op, "matmul");
            assert_eq!(left, (2, 3));
            assert_eq!(right, (4, 2));
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn transpose_swaps_and_is_an_involution() {
    let a = t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let at = a.transpose();
    assert_eq!(at.shape(), (3, 2));
    assert_eq!(at.get(0, 1), 4.0);
    assert_eq!(at.get(2, 0), 3.0);
    let mut rng = Rng::new(9);
    for _ in 0..5 {
        let m = random_tensor(&mut rng, 5, 8, -1.0, 1.0);
        assert_tensors_bitwise(&m.transpose().transpose(), &m, "transpose twice");
    }
}

#[test]
fn add_row_broadcast_adds_to_every_row() {
    let a = t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let row = t(1, 3, &[10.0, 20.0, 30.0]);
    let out = a.add_row_broadcast(&row).unwrap();
    assert_tensors_close(
        &out,
        &t(2, 3, &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]),
        1e-15,
        "row broadcast",
    );
}

#[test]
fn add_row_broadcast_rejects_width_mismatch() {
    let a = Tensor2D::zeros(2, 3);
    let row = Tensor2D::zeros(1, 4);
    match a.add_row_broadcast(&row) {
        Err(Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, (2, 3));
            assert_eq!(right, (1, 4));
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
    // A 2-row "row vector" is also rejected.
    assert!(a.add_row_broadcast(&Tensor2D::zeros(2, 3)).is_err());
}

#[test]
fn from_vec_rejects_wrong_length() {
    assert!(matches!(
        Tensor2D::from_vec(2, 2, vec![1.0; 3]),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn col_sums_match_hand_sums() {
    let a = t(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
    assert_tensors_close(&a.col_sums(), &t(1, 2, &[6.0, 60.0]), 1e-15, "col sums");
}

#[test]
fn uniform_draws_stay_in_range_with_correct_mean() {
    let mut rng = Rng::new(42);
    let u = rng.uniform(0.0, 1.0, 1, 1000).unwrap();
    assert!(u.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    let mean = u.data().iter().sum::<f64>() / 1000.0;
    // std of the mean is 1/sqrt(12*1000) ~ 0.009; 0.05 is > 5 sigma.
    assert!(
        (mean - 0.5).abs() < 0.05,
        "uniform mean {mean} too far from 0.5"
    );
}

#[test]
fn uniform_respects_bounds_and_rejects_bad_ones() {
    let mut rng = Rng::new(1);
    let u = rng.uniform(-2.5, -1.5, 8, 8).unwrap();
    assert!(u.data().iter().all(|&v| (-2.5..-1.5).contains(&v)));
    assert!(matches!(
        rng.uniform(1.0, 1.0, 1, 1),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        rng.uniform(2.0, 1.0, 1, 1),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn seeded_draws_are_reproducible_and_seeds_differ() {
    let a = Rng::new(7).uniform(0.0, 1.0, 4, 4).unwrap();
    let b = Rng::new(7).uniform(0.0, 1.0, 4, 4).unwrap();
    assert_tensors_bitwise(&a, &b, "same seed");
    let c = Rng::new(8).uniform(0.0, 1.0, 4, 4).unwrap();
    assert!(
        a.data() != c.data(),
        "different seeds must give different draws"
    );
}

#[test]
fn bernoulli_mask_is_binary_with_expected_density() {
    let mut rng = Rng::new(5);
    let keep = 0.95;
    let mask = rng.bernoulli_mask(keep, 100, 1000).unwrap();
    assert!(mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
    let ones = mask.data().iter().sum::<f64>();
    let n = 100_000.0;
    let sigma = (n * keep * (1.0 - keep)).sqrt();
    assert!(
        (ones - n * keep).abs() < 4.0 * sigma,
        "keep rate {} too far from {keep}",
        ones / n
    );
}

#[test]
fn bernoulli_mask_edge_probabilities() {
    let mut rng = Rng::new(6);
    let all = rng.bernoulli_mask(1.0, 10, 10).unwrap();
    assert!(all.data().iter().all(|&v| v == 1.0), "keep 1.0 is all ones");
    let none = rng.bernoulli_mask(0.0, 10, 10).unwrap();
    assert!(none.data().iter().all(|&v| v == 0.0), "keep 0.0 is all zeros");
    assert!(matches!(
        rng.bernoulli_mask(1.5, 1, 1),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        rng.bernoulli_mask(-0.1, 1, 1),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn normal_draws_have_plausible_moments() {
    let mut rng = Rng::new(13);
    let n = 20_000usize;
    let xs: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.05, "normal mean {mean}");
    assert!((var - 1.0).abs() < 0.1, "normal variance {var}");
}

#[test]
fn derive_seed_separates_streams() {
    let base = 99u64;
    let a = derive_seed(base, &[1, 0]);
    let b = derive_seed(base, &[1, 1]);
    let c = derive_seed(base, &[2, 0]);
    assert!(a != b && a != c && b != c, "derived seeds must differ");
    assert_eq!(a, derive_seed(base, &[1, 0]), "derivation is deterministic");
}

#[test]
fn shuffle_is_a_seeded_permutation() {
    let mut rng = Rng::new(17);
    let mut xs: Vec<usize> = (0..50).collect();
    rng.shuffle(&mut xs);
    let mut sorted = xs.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>(), "still a permutation");
    let mut again: Vec<usize> = (0..50).collect();
    Rng::new(17).shuffle(&mut again);
    assert_eq!(xs, again, "same seed, same permutation");
}

#[test]
fn rel_close_floors_near_zero() {
    assert!(rel_close(0.0, 1e-12, 1e-9));
    assert!(!rel_close(1.0, 1.1, 1e-9));
    assert_close(1.0 + 1e-12, 1.0, 1e-9, "tiny perturbation");
}
