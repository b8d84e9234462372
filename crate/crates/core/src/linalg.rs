//! Dense linear-algebra helpers on top of `nalgebra`.

use crate::error::{AsccaError, Result};
use crate::scalar::{lit, to_f64, Scalar};
use nalgebra::{DMatrix, DVector};

/// `(A + A^T) / 2`.
pub fn sym<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// `(A - A^T) / 2`.
pub fn skew<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a - a.transpose()) * lit::<T>(0.5)
}

/// Frobenius inner product `tr(A^T B)`.
pub fn frob_dot<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.dot(b)
}

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs<T: Scalar>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

// Eigen and singular value decompositions run in f64 through faer, which
// is several times faster than nalgebra's at the sizes the solver meets.
fn to_faer<T: Scalar>(m: &DMatrix<T>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| to_f64(m[(i, j)]))
}

fn from_faer<T: Scalar>(m: faer::MatRef<'_, f64>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| lit(m[(i, j)]))
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
/// Only the lower triangle of `s` is read.
pub fn sym_eigen_desc<T: Scalar>(s: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = s.nrows();
    match to_faer(s).self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            let vals = eig.S().column_vector();
            let vecs = eig.U();
            let values = DVector::from_fn(n, |i, _| lit(vals[n - 1 - i]));
            let vectors = DMatrix::from_fn(n, n, |i, j| lit(vecs[(i, n - 1 - j)]));
            (values, vectors)
        }
        Err(_) => nalgebra_eigen_desc(s),
    }
}

fn nalgebra_eigen_desc<T: Scalar>(s: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = s.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(s.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_range<T: Scalar>(s: &DMatrix<T>) -> (T, T) {
    let (vals, _) = sym_eigen_desc(&sym(s));
    (vals[vals.len() - 1], vals[0])
}

/// `S^{-1/2}` for a symmetric positive-definite matrix.
pub fn inv_sqrt_spd<T: Scalar>(s: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    spd_power(s, lit(-0.5), context)
}

/// `S^{1/2}` for a symmetric positive-definite matrix.
pub fn sqrt_spd<T: Scalar>(s: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    spd_power(s, lit(0.5), context)
}

fn spd_power<T: Scalar>(s: &DMatrix<T>, power: T, context: &str) -> Result<DMatrix<T>> {
    let (vals, q) = sym_eigen_desc(&sym(s));
    let hi = vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let floor = hi * T::machine_eps() * crate::scalar::from_usize(s.nrows().max(1));
    if vals.iter().any(|&v| v <= floor) {
        return Err(AsccaError::NotPositiveDefinite {
            context: context.to_string(),
        });
    }
    let scaled = vals.map(|v| v.powf(power));
    let mut qs = q.clone();
    for (j, mut col) in qs.column_iter_mut().enumerate() {
        col *= scaled[j];
    }
    Ok(sym(&(qs * q.transpose())))
}

/// Thin SVD `M = U diag(s) V^T` with singular values in nonincreasing order.
pub struct ThinSvd<T: Scalar> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v_t: DMatrix<T>,
}

pub fn thin_svd<T: Scalar>(m: &DMatrix<T>) -> Result<ThinSvd<T>> {
    let failure = || AsccaError::SvdFailure(format!("{}x{} matrix", m.nrows(), m.ncols()));
    if m.iter().any(|v| !v.is_finite()) {
        return Err(failure());
    }
    let svd = to_faer(m).thin_svd().map_err(|_| failure())?;
    let s = svd.S().column_vector();
    let v = svd.V();
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        s: DVector::from_fn(s.nrows(), |i, _| lit(s[i])),
        v_t: DMatrix::from_fn(v.ncols(), v.nrows(), |i, j| lit(v[(j, i)])),
    })
}

/// Singular values in nonincreasing order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Result<DVector<T>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let failure = || AsccaError::SvdFailure(format!("{}x{} matrix", m.nrows(), m.ncols()));
    if m.iter().any(|v| !v.is_finite()) {
        return Err(failure());
    }
    let s = to_faer(m).singular_values().map_err(|_| failure())?;
    Ok(DVector::from_iterator(s.len(), s.into_iter().map(lit)))
}

/// Orthonormalizes the columns of `u` in the inner product `<a, b> = a^T B b`
/// with two passes of modified Gram-Schmidt. Returns `None` when a column
/// collapses numerically.
pub fn b_orthonormalize<T: Scalar>(u: &DMatrix<T>, b: &DMatrix<T>) -> Option<DMatrix<T>> {
    let mut q = u.clone();
    let r = q.ncols();
    for _pass in 0..2 {
        for j in 0..r {
            for i in 0..j {
                let qi = q.column(i).clone_owned();
                let bqi = b * &qi;
                let c = bqi.dot(&q.column(j));
                let mut cj = q.column_mut(j);
                cj.axpy(-c, &qi, T::one());
            }
            let qj = q.column(j).clone_owned();
            let nrm2 = (b * &qj).dot(&qj);
            let scale = u.column(j).norm().max(T::tiny());
            if !(nrm2 > T::zero()) || nrm2.sqrt() <= lit::<T>(1e-10) * scale {
                return None;
            }
            q.column_mut(j).scale_mut(T::one() / nrm2.sqrt());
        }
    }
    Some(q)
}

/// Copies the listed rows of `m` into a new matrix.
pub fn select_rows<T: Scalar>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let s = DMatrix::<f64>::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = sym_eigen_desc(&s);
        assert_eq!(vals.as_slice(), &[5.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let w = inv_sqrt_spd(&s, "test").unwrap();
        let id = &w * &s * &w;
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert!(inv_sqrt_spd(&DMatrix::<f64>::zeros(2, 2), "zero").is_err());
    }

    #[test]
    fn b_orthonormalize_gives_identity_gram() {
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.3, -0.2, 1.0, 0.5, 0.7]);
        let q = b_orthonormalize(&u, &b).unwrap();
        let g = q.transpose() * &b * &q;
        assert!((g - DMatrix::<f64>::identity(2, 2)).norm() < 1e-13);
        let dup = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(b_orthonormalize(&dup, &b).is_none());
    }

    #[test]
    fn thin_svd_reconstructs() {
        let m = DMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let svd = thin_svd(&m).unwrap();
        for w in svd.s.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let rec = &svd.u * DMatrix::from_diagonal(&svd.s) * &svd.v_t;
        assert!((rec - m).norm() < 1e-12);
    }
}
