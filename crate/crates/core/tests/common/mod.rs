#![allow(dead_code)]

use ascca::manifold::{make_metric, random_point, GStiefelPoint, MetricMatrix, ProductPoint};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// Random SPD metric `A^T A / m + 0.5 I`.
pub fn spd_metric(p: usize, rng: &mut ChaCha8Rng) -> Arc<MetricMatrix<f64>> {
    let a = gaussian(p + 3, p, rng);
    let g = a.transpose() * &a / (p as f64 + 3.0) + DMatrix::identity(p, p) * 0.5;
    Arc::new(make_metric(&g, 0.0).unwrap())
}

pub fn point(metric: &Arc<MetricMatrix<f64>>, r: usize, seed: u64) -> GStiefelPoint<f64> {
    random_point(metric, r, seed).unwrap()
}

pub fn product(
    gx: &Arc<MetricMatrix<f64>>,
    gy: &Arc<MetricMatrix<f64>>,
    r: usize,
    seed: u64,
) -> ProductPoint<f64> {
    ProductPoint::new(point(gx, r, seed), point(gy, r, seed + 7))
}

pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Singular values from the full SVD, sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn nuclear(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().sum()
}

/// Inverse square root of an SPD matrix via its eigendecomposition.
pub fn inv_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let e = s.clone().symmetric_eigen();
    let d = e.eigenvalues.map(|x| 1.0 / x.sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}
