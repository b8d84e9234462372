mod common;

use ascca::tracelasso::{l21_norm, nuclear_norm, svt, TraceLassoImage, TraceLassoOp};
use common::*;
use nalgebra::{dvector, DMatrix};
use proptest::prelude::*;
use rand::Rng;

fn columnwise_oracle(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let r = w.ncols();
    let mut out = DMatrix::zeros(n, p * r);
    for i in 0..r {
        for j in 0..p {
            for row in 0..n {
                out[(row, i * p + j)] = x[(row, j)] * w[(j, i)];
            }
        }
    }
    out
}

#[test]
fn apply_zero_and_identity_cases() {
    let x = DMatrix::<f64>::identity(4, 4);
    let op = TraceLassoOp::new(&x, 1);
    let zero = op.apply(&DMatrix::zeros(4, 1)).unwrap();
    assert_eq!(zero.matrix(), &DMatrix::zeros(4, 4));

    let w = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 0.0]);
    let img = op.apply(&w).unwrap();
    assert_eq!(img.matrix(), &DMatrix::from_diagonal(&dvector![1.0, -2.0, 0.5, 0.0]));
    assert!((nuclear_norm(img.matrix()).unwrap() - 3.5).abs() < 1e-12);
    assert_eq!(op.adjoint(&img).unwrap(), w);
}

#[test]
fn apply_matches_entrywise_oracle() {
    let mut g = rng(11);
    let x = gaussian(4, 3, &mut g);
    let w = gaussian(3, 2, &mut g);
    let img = TraceLassoOp::new(&x, 2).apply(&w).unwrap();
    let oracle = columnwise_oracle(&x, &w);
    assert!((img.matrix() - &oracle).amax() <= 1e-15);
    assert_eq!(img.blocks(), 2);
    assert_eq!(img.block(1).into_owned(), oracle.columns(3, 3).into_owned());
}

#[test]
fn adjoint_of_zero_is_zero() {
    let mut g = rng(3);
    let x = gaussian(5, 3, &mut g);
    let op = TraceLassoOp::new(&x, 2);
    assert_eq!(op.adjoint_matrix(&DMatrix::zeros(5, 6)).unwrap(), DMatrix::zeros(3, 2));
}

#[test]
fn dimension_errors() {
    let x = DMatrix::<f64>::zeros(4, 3);
    let op = TraceLassoOp::new(&x, 2);
    assert!(op.apply(&DMatrix::zeros(2, 2)).is_err());
    assert!(op.adjoint_matrix(&DMatrix::zeros(4, 5)).is_err());
    assert!(TraceLassoImage::new(DMatrix::<f64>::zeros(4, 5), 3, 2).is_err());
}

#[test]
fn nuclear_norm_matches_full_svd() {
    let mut g = rng(5);
    let m = gaussian(5, 7, &mut g);
    assert!((nuclear_norm(&m).unwrap() - nuclear(&m)).abs() < 1e-12);
}

#[test]
fn svt_simple_cases() {
    let mut g = rng(8);
    let y = gaussian(4, 6, &mut g);
    assert_eq!(svt(&y, 0.0).unwrap(), y);
    let top = singular_values(&y)[0];
    assert!(svt(&y, top).unwrap().amax() < 1e-12);
    assert!(svt(&y, top * 2.0).unwrap().amax() == 0.0);
    let d = DMatrix::from_diagonal(&dvector![3.0, 1.0]);
    let out = svt(&d, 2.0).unwrap();
    assert!((out - DMatrix::from_diagonal(&dvector![1.0, 0.0])).amax() < 1e-12);
    assert!(svt(&y, -1.0).is_err());
}

fn prox_objective(x: &DMatrix<f64>, y: &DMatrix<f64>, tau: f64) -> f64 {
    0.5 * (x - y).norm_squared() + tau * nuclear(x)
}

#[test]
fn svt_beats_random_probes() {
    let mut g = rng(21);
    let y = gaussian(6, 8, &mut g);
    let tau = 0.7;
    let out = svt(&y, tau).unwrap();
    let best = prox_objective(&out, &y, tau);
    assert!(best <= prox_objective(&y, &y, tau) + 1e-12);
    assert!(best <= prox_objective(&DMatrix::zeros(6, 8), &y, tau) + 1e-12);
    for k in 0..1000 {
        let scale = [1e-3, 1e-2, 1e-1, 1.0][k % 4];
        let probe = &out + gaussian(6, 8, &mut g) * scale;
        assert!(best <= prox_objective(&probe, &y, tau) + 1e-12, "probe {k} beats svt");
    }
}

fn random_instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, usize) {
    let mut g = rng(seed);
    let n = g.random_range(1..=20);
    let p = g.random_range(1..=10);
    let r = g.random_range(1..=4);
    let x = unit_columns(gaussian(n, p, &mut g));
    let w = gaussian(p, r, &mut g);
    (x, w, r)
}

#[test]
fn adjoint_identity_on_200_instances() {
    for seed in 0..200 {
        let mut g = rng(1000 + seed);
        let (n, p, r) = (g.random_range(1..=12), g.random_range(1..=9), g.random_range(1..=4));
        let x = gaussian(n, p, &mut g);
        let w = gaussian(p, r, &mut g);
        let m = gaussian(n, p * r, &mut g);
        let op = TraceLassoOp::new(&x, r);
        let lhs = frob_dot(op.apply(&w).unwrap().matrix(), &m);
        let rhs = frob_dot(&w, &op.adjoint_matrix(&m).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * w.norm() * m.norm(), "seed {seed}");
    }
}

#[test]
fn orthonormal_columns_give_l21() {
    let mut g = rng(4);
    for _ in 0..20 {
        let q = gaussian(9, 5, &mut g).qr().q();
        let w = gaussian(5, 3, &mut g);
        let val = nuclear_norm(TraceLassoOp::new(&q, 3).apply(&w).unwrap().matrix()).unwrap();
        assert!((val - l21_norm(&w)).abs() < 1e-8);
    }
}

#[test]
fn identical_columns_give_frobenius() {
    let mut g = rng(6);
    for _ in 0..20 {
        let c = unit_columns(gaussian(7, 1, &mut g));
        let x = DMatrix::from_fn(7, 4, |i, _| c[(i, 0)]);
        let w = gaussian(4, 3, &mut g);
        let val = nuclear_norm(TraceLassoOp::new(&x, 3).apply(&w).unwrap().matrix()).unwrap();
        assert!((val - w.norm()).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn frobenius_isometry(seed in any::<u64>()) {
        let (x, w, r) = random_instance(seed);
        let img = TraceLassoOp::new(&x, r).apply(&w).unwrap();
        prop_assert!((img.matrix().norm() - w.norm()).abs() <= 1e-10 * (1.0 + w.norm()));
    }

    #[test]
    fn trace_lasso_between_frobenius_and_l21(seed in any::<u64>()) {
        let (x, w, r) = random_instance(seed);
        let val = nuclear_norm(TraceLassoOp::new(&x, r).apply(&w).unwrap().matrix()).unwrap();
        prop_assert!(w.norm() <= val + 1e-8);
        prop_assert!(val <= (r as f64).sqrt() * l21_norm(&w) + 1e-8);
    }

    #[test]
    fn svt_is_nonexpansive(seed in any::<u64>(), tau in 0.0f64..3.0) {
        let mut g = rng(seed);
        let (m, n) = (g.random_range(1..=7), g.random_range(1..=7));
        let a = gaussian(m, n, &mut g);
        let b = &a + gaussian(m, n, &mut g) * 0.3;
        let d = (svt(&a, tau).unwrap() - svt(&b, tau).unwrap()).norm();
        prop_assert!(d <= (&a - &b).norm() + 1e-10);
    }

    #[test]
    fn svt_shrinks_singular_values(seed in any::<u64>(), tau in 0.0f64..2.0) {
        let mut g = rng(seed);
        let (m, n) = (g.random_range(1..=8), g.random_range(1..=8));
        let y = gaussian(m, n, &mut g);
        let expect: Vec<f64> = singular_values(&y).iter().map(|s| (s - tau).max(0.0)).collect();
        let got = singular_values(&svt(&y, tau).unwrap());
        for (a, b) in expect.iter().zip(&got) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
