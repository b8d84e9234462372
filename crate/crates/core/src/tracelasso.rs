//! Matrix trace-Lasso operator `A_X(W) = [X Diag(W_1), ..., X Diag(W_r)]`,
//! its adjoint, the nuclear norm and singular value thresholding.

use crate::error::{AsccaError, Result};
use crate::linalg::{singular_values, sym_eigen_desc, thin_svd};
use crate::scalar::{from_usize, lit, Scalar};
use nalgebra::{DMatrix, DMatrixView};

/// The linear map `A_X : R^{p x r} -> R^{n x pr}` for a fixed data matrix.
#[derive(Clone, Copy, Debug)]
pub struct TraceLassoOp<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    r: usize,
}

/// `A_X(W)`: `r` contiguous `n x p` blocks, block `i` equal to `X Diag(W_{.i})`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceLassoImage<T: Scalar> {
    m: DMatrix<T>,
    p: usize,
    r: usize,
}

impl<T: Scalar> TraceLassoImage<T> {
    /// Wraps an `n x (p r)` matrix.
    pub fn new(m: DMatrix<T>, p: usize, r: usize) -> Result<Self> {
        if m.ncols() != p * r {
            return Err(AsccaError::dims(
                "TraceLassoImage::new",
                format!("{} columns", p * r),
                format!("{} columns", m.ncols()),
            ));
        }
        Ok(TraceLassoImage { m, p, r })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.m
    }

    /// Block `i` (zero based), i.e. columns `i p .. (i + 1) p`.
    pub fn block(&self, i: usize) -> DMatrixView<'_, T> {
        self.m.columns(i * self.p, self.p)
    }

    pub fn blocks(&self) -> usize {
        self.r
    }
}

impl<'a, T: Scalar> TraceLassoOp<'a, T> {
    pub fn new(x: &'a DMatrix<T>, r: usize) -> Self {
        TraceLassoOp { x, r }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn apply(&self, w: &DMatrix<T>) -> Result<TraceLassoImage<T>> {
        let (p, r) = (self.p(), self.r);
        if w.shape() != (p, r) {
            return Err(AsccaError::dims(
                "TraceLassoOp::apply",
                format!("{p}x{r}"),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        let mut m = DMatrix::zeros(self.n(), p * r);
        for i in 0..r {
            for j in 0..p {
                let wji = w[(j, i)];
                if wji != T::zero() {
                    m.column_mut(i * p + j).axpy(wji, &self.x.column(j), T::zero());
                }
            }
        }
        Ok(TraceLassoImage { m, p, r })
    }

    pub fn adjoint(&self, img: &TraceLassoImage<T>) -> Result<DMatrix<T>> {
        self.adjoint_matrix(&img.m)
    }

    /// Adjoint applied to a raw `n x (p r)` matrix.
    pub fn adjoint_matrix(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        let (n, p, r) = (self.n(), self.p(), self.r);
        if m.shape() != (n, p * r) {
            return Err(AsccaError::dims(
                "TraceLassoOp::adjoint",
                format!("{n}x{}", p * r),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Ok(DMatrix::from_fn(p, r, |j, i| {
            self.x.column(j).dot(&m.column(i * p + j))
        }))
    }
}

/// Sum of singular values.
pub fn nuclear_norm<T: Scalar>(m: &DMatrix<T>) -> Result<T> {
    Ok(singular_values(m)?.sum())
}

/// Row-wise group norm `sum_j ||W_{j.}||_2`.
pub fn l21_norm<T: Scalar>(w: &DMatrix<T>) -> T {
    w.row_iter().fold(T::zero(), |acc, row| acc + row.norm())
}

/// Result of singular value thresholding together with the nuclear norm of
/// the thresholded matrix.
#[derive(Clone, Debug)]
pub struct Shrinkage<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub nuclear_norm: T,
    /// Number of singular values strictly above the threshold.
    pub rank: usize,
}

/// Singular value soft-thresholding `U diag((s - tau)_+) V^T`, the proximal
/// map of `tau ||.||_*`.
pub fn svt<T: Scalar>(y: &DMatrix<T>, tau: T) -> Result<DMatrix<T>> {
    Ok(svt_with_norm(y, tau)?.matrix)
}

/// [`svt`] that also reports the nuclear norm of its output.
///
/// Works on the eigendecomposition of the smaller Gram matrix (`Y Y^T` or
/// `Y^T Y`) and applies `sum_{s_i > tau} (1 - tau / s_i) q_i q_i^T` to `Y`.
/// When `tau` is below the resolution of the Gram route the thin SVD is
/// used instead.
pub fn svt_with_norm<T: Scalar>(y: &DMatrix<T>, tau: T) -> Result<Shrinkage<T>> {
    if !(tau >= T::zero()) {
        return Err(AsccaError::InvalidConfig(format!(
            "threshold must be nonnegative, got {tau}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(AsccaError::SvdFailure("non-finite input".into()));
    }
    let (n, m) = y.shape();
    if n == 0 || m == 0 {
        return Ok(Shrinkage {
            matrix: y.clone(),
            nuclear_norm: T::zero(),
            rank: 0,
        });
    }
    if tau == T::zero() {
        return Ok(Shrinkage {
            matrix: y.clone(),
            nuclear_norm: nuclear_norm(y)?,
            rank: n.min(m),
        });
    }
    let k = n.min(m);
    let wide = n <= m;
    let gram = if wide { y * y.transpose() } else { y.transpose() * y };
    let (vals, vecs) = sym_eigen_desc(&gram);
    let top = vals[0].max(T::zero());
    if top == T::zero() {
        return Ok(Shrinkage {
            matrix: DMatrix::zeros(n, m),
            nuclear_norm: T::zero(),
            rank: 0,
        });
    }
    // Eigenvalues of the Gram matrix are only resolved to about eps * k * top.
    let resolution = (top * T::machine_eps() * from_usize::<T>(k) * lit(100.0)).sqrt();
    if tau <= resolution {
        return svt_via_svd(y, tau);
    }
    let mut kept = Vec::new();
    let mut norm = T::zero();
    for i in 0..k {
        let s = vals[i].max(T::zero()).sqrt();
        if s <= tau {
            break;
        }
        kept.push((i, T::one() - tau / s));
        norm += s - tau;
    }
    if kept.is_empty() {
        return Ok(Shrinkage {
            matrix: DMatrix::zeros(n, m),
            nuclear_norm: T::zero(),
            rank: 0,
        });
    }
    let q = DMatrix::from_fn(vecs.nrows(), kept.len(), |a, b| vecs[(a, kept[b].0)]);
    let mut qw = q.clone();
    for (b, mut col) in qw.column_iter_mut().enumerate() {
        col *= kept[b].1;
    }
    let matrix = if wide {
        qw * (q.transpose() * y)
    } else {
        (y * q) * qw.transpose()
    };
    Ok(Shrinkage {
        matrix,
        nuclear_norm: norm,
        rank: kept.len(),
    })
}

fn svt_via_svd<T: Scalar>(y: &DMatrix<T>, tau: T) -> Result<Shrinkage<T>> {
    let svd = thin_svd(y)?;
    let mut u = svd.u;
    let mut norm = T::zero();
    let mut rank = 0;
    for (i, mut col) in u.column_iter_mut().enumerate() {
        let shrunk = (svd.s[i] - tau).max(T::zero());
        if shrunk > T::zero() {
            rank += 1;
        }
        norm += shrunk;
        col *= shrunk;
    }
    Ok(Shrinkage {
        matrix: u * svd.v_t,
        nuclear_norm: norm,
        rank,
    })
}
