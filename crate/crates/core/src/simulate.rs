//! Synthetic designs: identity, Toeplitz and block-correlated covariances
//! with sparse ground-truth loadings, joint Gaussian sampling, and the
//! evaluation metrics used by the experiment harness.

use crate::error::{AsccaError, Result};
use crate::linalg::{b_orthonormalize, inv_sqrt_spd, singular_values, sym, sym_eig_range, sym_eigen_desc};
use crate::scalar::{from_usize, lit, Scalar};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Covariance family shared by the X and Y blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovKind {
    Identity,
    /// `base^{|i - j|}`.
    Toeplitz { base: f64 },
    /// Unit diagonal, `sigma` between distinct support indices, zero elsewhere.
    Correlated { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDesign {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub cov: CovKind,
    /// One-based row indices carrying the nonzero loadings.
    pub support: Vec<usize>,
    /// Population canonical correlations, strictly decreasing in (0, 1).
    pub spectrum: Vec<f64>,
    pub seed: u64,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        SimulationDesign {
            n: 200,
            p: 200,
            q: 200,
            r: 2,
            cov: CovKind::Identity,
            support: vec![1, 6, 11, 16, 21],
            spectrum: vec![0.9, 0.8],
            seed: 0,
        }
    }
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AsccaError::InvalidConfig(format!("design: {m}")));
        if self.r == 0 || self.spectrum.len() != self.r {
            return bad(format!(
                "spectrum has {} entries but r = {}",
                self.spectrum.len(),
                self.r
            ));
        }
        if self.spectrum.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return bad("spectrum entries must lie in (0, 1)".into());
        }
        if self.spectrum.windows(2).any(|w| !(w[0] > w[1])) {
            return bad("spectrum must be strictly decreasing".into());
        }
        if self.support.len() < self.r {
            return bad(format!("support has {} indices, need at least r", self.support.len()));
        }
        let limit = self.p.min(self.q);
        if self.support.iter().any(|&s| s == 0 || s > limit) {
            return bad(format!("support indices must lie in 1..={limit}"));
        }
        let mut sorted = self.support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.support.len() {
            return bad("support indices must be distinct".into());
        }
        if self.n < 2 {
            return bad("n must be at least 2".into());
        }
        Ok(())
    }
}

/// Population covariance of one block.
pub fn make_covariance<T: Scalar>(kind: CovKind, dim: usize, support: &[usize]) -> Result<DMatrix<T>> {
    if support.iter().any(|&s| s == 0 || s > dim) {
        return Err(AsccaError::InvalidConfig(format!(
            "support indices must lie in 1..={dim}"
        )));
    }
    let m = match kind {
        CovKind::Identity => DMatrix::identity(dim, dim),
        CovKind::Toeplitz { base } => {
            let b: T = lit(base);
            DMatrix::from_fn(dim, dim, |i, j| b.powi(i.abs_diff(j) as i32))
        }
        CovKind::Correlated { sigma } => {
            let mut m = DMatrix::identity(dim, dim);
            for &a in support {
                for &b in support {
                    if a != b {
                        m[(a - 1, b - 1)] = lit(sigma);
                    }
                }
            }
            m
        }
    };
    let (lo, _) = sym_eig_range(&m);
    if !(lo > T::zero()) {
        return Err(AsccaError::NotPositiveDefinite {
            context: format!("{kind:?} covariance of dimension {dim}"),
        });
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct GroundTruth<T: Scalar> {
    pub u: DMatrix<T>,
    pub v: DMatrix<T>,
    pub sigma_x: DMatrix<T>,
    pub sigma_y: DMatrix<T>,
    pub sigma_xy: DMatrix<T>,
}

impl<T: Scalar> GroundTruth<T> {
    /// `[[Sx, Sxy], [Sxy^T, Sy]]`.
    pub fn joint_covariance(&self) -> DMatrix<T> {
        let (p, q) = (self.sigma_x.nrows(), self.sigma_y.nrows());
        let mut j = DMatrix::zeros(p + q, p + q);
        j.view_mut((0, 0), (p, p)).copy_from(&self.sigma_x);
        j.view_mut((p, p), (q, q)).copy_from(&self.sigma_y);
        j.view_mut((0, p), (p, q)).copy_from(&self.sigma_xy);
        j.view_mut((p, 0), (q, p)).copy_from(&self.sigma_xy.transpose());
        j
    }
}

const MAX_DRAWS: usize = 100;

fn draw_loadings<T: Scalar>(
    rng: &mut ChaCha8Rng,
    dim: usize,
    r: usize,
    support: &[usize],
    sigma: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    for _ in 0..MAX_DRAWS {
        let mut w = DMatrix::<T>::zeros(dim, r);
        for j in 0..r {
            loop {
                let vals: Vec<i32> = support.iter().map(|_| rng.random_range(-2..=2)).collect();
                if vals.iter().any(|&v| v != 0) {
                    for (&s, &v) in support.iter().zip(&vals) {
                        w[(s - 1, j)] = lit(v as f64);
                    }
                    break;
                }
            }
        }
        if let Some(q) = b_orthonormalize(&w, sigma) {
            return Ok(q);
        }
    }
    Err(AsccaError::DegenerateDraw { attempts: MAX_DRAWS })
}

/// Draws sparse loadings, Sigma-orthonormalizes them and assembles
/// `Sxy = Sx U diag(spectrum) V^T Sy`.
pub fn make_truth<T: Scalar>(design: &SimulationDesign) -> Result<GroundTruth<T>> {
    design.validate()?;
    let sigma_x = make_covariance::<T>(design.cov, design.p, &design.support)?;
    let sigma_y = make_covariance::<T>(design.cov, design.q, &design.support)?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let u = draw_loadings(&mut rng, design.p, design.r, &design.support, &sigma_x)?;
    let v = draw_loadings(&mut rng, design.q, design.r, &design.support, &sigma_y)?;
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        design.r,
        design.spectrum.iter().map(|&l| lit::<T>(l)),
    ));
    let sigma_xy = &sigma_x * &u * lam * v.transpose() * &sigma_y;
    let truth = GroundTruth {
        u,
        v,
        sigma_x,
        sigma_y,
        sigma_xy,
    };
    let (lo, _) = sym_eig_range(&truth.joint_covariance());
    if lo < lit(-1e-10) {
        return Err(AsccaError::NotPositiveDefinite {
            context: format!("joint covariance has eigenvalue {lo}"),
        });
    }
    Ok(truth)
}

/// Centered samples drawn from a ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleData<T: Scalar> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
}

/// `n` draws of `(x, y) ~ N(0, joint)` via the symmetric square root of the
/// joint covariance, columns centered afterwards. Uses ChaCha stream 1 of
/// `seed`, so it never overlaps the loading draws of a design with the
/// same seed.
pub fn sample_data<T: Scalar>(truth: &GroundTruth<T>, n: usize, seed: u64) -> Result<SampleData<T>> {
    let (p, q) = (truth.sigma_x.nrows(), truth.sigma_y.nrows());
    let joint = sym(&truth.joint_covariance());
    let (vals, vecs) = sym_eigen_desc(&joint);
    if vals.iter().any(|&v| v < lit(-1e-10)) {
        return Err(AsccaError::NotPositiveDefinite {
            context: "joint covariance".into(),
        });
    }
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vals[j].max(T::zero()).sqrt();
    }
    let root = scaled * vecs.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let z = DMatrix::<T>::from_fn(n, p + q, |_, _| {
        let s: f64 = StandardNormal.sample(&mut rng);
        lit(s)
    });
    let mut data = z * root;
    let nn = from_usize::<T>(n.max(1));
    for mut col in data.column_iter_mut() {
        let mean = col.sum() / nn;
        col.add_scalar_mut(-mean);
    }
    Ok(SampleData {
        x: data.columns(0, p).into_owned(),
        y: data.columns(p, q).into_owned(),
    })
}

fn orthonormal_basis<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = a.amax();
    let floor = scale * lit(1e-12) * from_usize::<T>(a.nrows().max(a.ncols()));
    if !(scale > T::zero()) || r.diagonal().iter().any(|d| !(d.abs() > floor)) {
        return Err(AsccaError::RankDeficient);
    }
    Ok(qr.q())
}

/// `||P_A - P_B||_F^2` for the orthogonal projectors onto the column spaces.
pub fn subspace_loss<T: Scalar>(truth: &DMatrix<T>, estimate: &DMatrix<T>) -> Result<T> {
    if truth.nrows() != estimate.nrows() {
        return Err(AsccaError::dims(
            "subspace_loss",
            format!("{} rows", truth.nrows()),
            format!("{} rows", estimate.nrows()),
        ));
    }
    let qa = orthonormal_basis(truth)?;
    let qb = orthonormal_basis(estimate)?;
    let overlap = (qa.transpose() * qb).norm_squared();
    let total = from_usize::<T>(truth.ncols() + estimate.ncols()) - overlap * lit(2.0);
    Ok(total.max(T::zero()))
}

/// Sample correlation of `X U_i` and `Y V_i` for every column pair `i`.
pub fn sample_canonical_correlations<T: Scalar>(
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
) -> Result<Vec<T>> {
    if x.nrows() != y.nrows() || x.ncols() != u.nrows() || y.ncols() != v.nrows() || u.ncols() != v.ncols() {
        return Err(AsccaError::dims(
            "sample_canonical_correlations",
            "X n x p, Y n x q, U p x r, V q x r",
            format!(
                "X {}x{}, Y {}x{}, U {}x{}, V {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols(),
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            ),
        ));
    }
    let n = from_usize::<T>(x.nrows().max(1));
    let mut a = x * u;
    let mut b = y * v;
    for mut col in a.column_iter_mut().chain(b.column_iter_mut()) {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    (0..u.ncols())
        .map(|i| {
            let (ca, cb) = (a.column(i), b.column(i));
            let (na, nb) = (ca.norm(), cb.norm());
            if !(na > T::zero() && nb > T::zero()) {
                return Err(AsccaError::ZeroVariance { pair: i });
            }
            Ok(ca.dot(&cb) / (na * nb))
        })
        .collect()
}

/// Canonical correlations attainable inside `span(U)` and `span(V)` under the
/// population covariance, in decreasing order.
pub fn population_canonical_correlations<T: Scalar>(
    truth: &GroundTruth<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
) -> Result<Vec<T>> {
    let cxx = u.transpose() * &truth.sigma_x * u;
    let cyy = v.transpose() * &truth.sigma_y * v;
    let cxy = u.transpose() * &truth.sigma_xy * v;
    let wx = inv_sqrt_spd(&cxx, "U^T Sx U").map_err(|_| AsccaError::ZeroVariance { pair: 0 })?;
    let wy = inv_sqrt_spd(&cyy, "V^T Sy V").map_err(|_| AsccaError::ZeroVariance { pair: 0 })?;
    Ok(singular_values(&(wx * cxy * wy))?.iter().copied().collect())
}
