//! Generalized Stiefel manifold `{U : U^T B U = I_r}` for a symmetric
//! positive-definite metric matrix `B`, and the product of two of them.
//!
//! Tangent vectors at `U` satisfy `U^T B xi + xi^T B U = 0`. The Riemannian
//! metric is `<eta, xi>_U = tr(eta^T B xi)`, under which the orthogonal
//! projector onto the tangent space is `xi - U sym(U^T B xi)` and the
//! Riemannian gradient of a cost with Euclidean gradient `G` is the
//! projection of `B^{-1} G`. Points are retracted with the B-polar map
//! `(U + xi) ((U + xi)^T B (U + xi))^{-1/2}` and tangent vectors are carried
//! between points by re-projection.

use crate::error::{AsccaError, Result};
use crate::linalg::{b_orthonormalize, frob_dot, sym, sym_eig_range, sym_eigen_desc};
use crate::scalar::{feasibility_tol, lit, to_f64, Scalar};
use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

/// Symmetric positive-definite matrix defining a generalized Stiefel manifold.
#[derive(Clone, Debug)]
pub struct MetricMatrix<T: Scalar> {
    b: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
    eig_min: T,
    eig_max: T,
    alpha: T,
}

impl<T: Scalar> MetricMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn eig_max(&self) -> T {
        self.eig_max
    }

    pub fn eig_min(&self) -> T {
        self.eig_min
    }

    /// Regularization weight used when the metric was built.
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// `B^{-1} rhs`.
    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(rhs)
    }

    /// `tr(a^T B b)`.
    pub fn inner(&self, a: &DMatrix<T>, b: &DMatrix<T>) -> T {
        frob_dot(a, &(&self.b * b))
    }
}

/// Builds `(1 - alpha) gram + alpha I`, symmetrized, with a cached Cholesky
/// factor and its extreme eigenvalues.
pub fn make_metric<T: Scalar>(gram: &DMatrix<T>, alpha: T) -> Result<MetricMatrix<T>> {
    if !gram.is_square() {
        return Err(AsccaError::dims(
            "make_metric",
            "square matrix",
            format!("{}x{}", gram.nrows(), gram.ncols()),
        ));
    }
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(AsccaError::InvalidConfig(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    let p = gram.nrows();
    let b = sym(&(gram * (T::one() - alpha) + DMatrix::<T>::identity(p, p) * alpha));
    let (eig_min, eig_max) = sym_eig_range(&b);
    let floor = eig_max.abs() * T::machine_eps() * crate::scalar::from_usize(p.max(1));
    if !(eig_min > floor) {
        return Err(AsccaError::NotPositiveDefinite {
            context: format!(
                "metric with alpha = {alpha} has smallest eigenvalue {:e}",
                to_f64(eig_min)
            ),
        });
    }
    let chol = Cholesky::new(b.clone()).ok_or_else(|| AsccaError::NotPositiveDefinite {
        context: format!("Cholesky factorization failed with alpha = {alpha}"),
    })?;
    Ok(MetricMatrix {
        b,
        chol,
        eig_min,
        eig_max,
        alpha,
    })
}

/// A point `U` with `U^T B U = I_r`.
#[derive(Clone, Debug)]
pub struct GStiefelPoint<T: Scalar> {
    u: DMatrix<T>,
    metric: Arc<MetricMatrix<T>>,
}

impl<T: Scalar> GStiefelPoint<T> {
    /// Wraps `u` after checking feasibility against `metric`.
    pub fn new(u: DMatrix<T>, metric: Arc<MetricMatrix<T>>) -> Result<Self> {
        if u.nrows() != metric.dim() || u.ncols() == 0 || u.ncols() > u.nrows() {
            return Err(AsccaError::dims(
                "GStiefelPoint::new",
                format!("{}xr with 1 <= r <= {}", metric.dim(), metric.dim()),
                format!("{}x{}", u.nrows(), u.ncols()),
            ));
        }
        let point = GStiefelPoint { u, metric };
        let res = point.feasibility_residual();
        if !(res <= feasibility_tol::<T>(point.rank())) {
            return Err(AsccaError::InfeasiblePoint {
                residual: to_f64(res),
            });
        }
        Ok(point)
    }

    /// B-orthonormalizes the columns of `u` and wraps the result.
    pub fn orthonormalized(u: &DMatrix<T>, metric: Arc<MetricMatrix<T>>) -> Result<Self> {
        if u.nrows() != metric.dim() {
            return Err(AsccaError::dims(
                "GStiefelPoint::orthonormalized",
                format!("{} rows", metric.dim()),
                format!("{} rows", u.nrows()),
            ));
        }
        let q = b_orthonormalize(u, metric.matrix()).ok_or(AsccaError::RankDeficient)?;
        Self::new(q, metric)
    }

    pub(crate) fn new_unchecked(u: DMatrix<T>, metric: Arc<MetricMatrix<T>>) -> Self {
        GStiefelPoint { u, metric }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.u
    }

    pub fn metric(&self) -> &Arc<MetricMatrix<T>> {
        &self.metric
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    /// `||U^T B U - I_r||_F`.
    pub fn feasibility_residual(&self) -> T {
        let r = self.rank();
        let g = self.u.transpose() * self.metric.matrix() * &self.u;
        (g - DMatrix::<T>::identity(r, r)).norm()
    }
}

/// A tangent vector at some [`GStiefelPoint`].
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T: Scalar>(pub DMatrix<T>);

impl<T: Scalar> TangentVector<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    /// `||sym(U^T B xi)||_F`; zero for an exactly tangent vector.
    pub fn tangency_residual(&self, at: &GStiefelPoint<T>) -> T {
        let m = at.matrix().transpose() * at.metric().matrix() * &self.0;
        sym(&m).norm() * lit(2.0)
    }

    pub fn norm(&self, at: &GStiefelPoint<T>) -> T {
        at.metric().inner(&self.0, &self.0).max(T::zero()).sqrt()
    }
}

fn check_shape<T: Scalar>(
    x: &GStiefelPoint<T>,
    xi: &DMatrix<T>,
    context: &'static str,
) -> Result<()> {
    if xi.shape() != x.matrix().shape() {
        return Err(AsccaError::dims(
            context,
            format!("{}x{}", x.ambient_dim(), x.rank()),
            format!("{}x{}", xi.nrows(), xi.ncols()),
        ));
    }
    Ok(())
}

fn project_unchecked<T: Scalar>(x: &GStiefelPoint<T>, xi: &DMatrix<T>) -> DMatrix<T> {
    let u = x.matrix();
    let s = sym(&(u.transpose() * (x.metric().matrix() * xi)));
    xi - u * s
}

/// Orthogonal projection (in the B metric) onto the tangent space at `x`.
pub fn project_tangent<T: Scalar>(
    x: &GStiefelPoint<T>,
    xi: &DMatrix<T>,
) -> Result<TangentVector<T>> {
    check_shape(x, xi, "project_tangent")?;
    Ok(TangentVector(project_unchecked(x, xi)))
}

/// Riemannian gradient under `<eta, xi> = tr(eta^T B xi)` from the
/// Euclidean gradient `egrad`.
pub fn riemannian_grad<T: Scalar>(
    x: &GStiefelPoint<T>,
    egrad: &DMatrix<T>,
) -> Result<TangentVector<T>> {
    check_shape(x, egrad, "riemannian_grad")?;
    let scaled = x.metric().solve(egrad);
    Ok(TangentVector(project_unchecked(x, &scaled)))
}

/// B-polar retraction.
pub fn retract<T: Scalar>(x: &GStiefelPoint<T>, xi: &TangentVector<T>) -> Result<GStiefelPoint<T>> {
    check_shape(x, &xi.0, "retract")?;
    if xi.0.iter().all(|v| *v == T::zero()) {
        return Ok(x.clone());
    }
    let m = x.matrix() + &xi.0;
    let s = sym(&(m.transpose() * (x.metric().matrix() * &m)));
    let (vals, vecs) = sym_eigen_desc(&s);
    let r = vals.len();
    let top = vals[0];
    let bottom = vals[r - 1];
    if !(bottom > top * T::machine_eps() * lit(100.0)) || !bottom.is_finite() {
        return Err(AsccaError::RankDeficientStep {
            min_eig: to_f64(bottom),
        });
    }
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= vals[j].sqrt();
    }
    let inv_sqrt = scaled * vecs.transpose();
    Ok(GStiefelPoint::new_unchecked(
        m * inv_sqrt,
        Arc::clone(x.metric()),
    ))
}

/// Projection vector transport from `from` to `to`.
pub fn transport<T: Scalar>(
    from: &GStiefelPoint<T>,
    to: &GStiefelPoint<T>,
    xi: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    check_shape(from, &xi.0, "transport")?;
    project_tangent(to, &xi.0)
}

/// Seeded random feasible point: a Gaussian `p x r` matrix orthonormalized
/// in the B inner product.
pub fn random_point<T: Scalar>(
    metric: &Arc<MetricMatrix<T>>,
    r: usize,
    seed: u64,
) -> Result<GStiefelPoint<T>> {
    let p = metric.dim();
    if r == 0 || r > p {
        return Err(AsccaError::InvalidConfig(format!(
            "rank r = {r} must satisfy 1 <= r <= {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let g = DMatrix::<T>::from_fn(p, r, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            lit(z)
        });
        if let Some(q) = b_orthonormalize(&g, metric.matrix()) {
            return GStiefelPoint::new(q, Arc::clone(metric));
        }
    }
    Err(AsccaError::RankDeficient)
}

/// Point on `M1 x M2`.
#[derive(Clone, Debug)]
pub struct ProductPoint<T: Scalar> {
    pub u_part: GStiefelPoint<T>,
    pub v_part: GStiefelPoint<T>,
}

/// Tangent vector on `M1 x M2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductTangent<T: Scalar> {
    pub u: TangentVector<T>,
    pub v: TangentVector<T>,
}

impl<T: Scalar> ProductPoint<T> {
    pub fn new(u_part: GStiefelPoint<T>, v_part: GStiefelPoint<T>) -> Self {
        ProductPoint { u_part, v_part }
    }

    pub fn u(&self) -> &DMatrix<T> {
        self.u_part.matrix()
    }

    pub fn v(&self) -> &DMatrix<T> {
        self.v_part.matrix()
    }

    /// Larger of the two factor feasibility residuals.
    pub fn feasibility_residual(&self) -> T {
        self.u_part
            .feasibility_residual()
            .max(self.v_part.feasibility_residual())
    }

    /// Product metric: sum of the two factor metrics.
    pub fn inner(&self, a: &ProductTangent<T>, b: &ProductTangent<T>) -> T {
        self.u_part.metric().inner(&a.u.0, &b.u.0) + self.v_part.metric().inner(&a.v.0, &b.v.0)
    }

    pub fn norm(&self, a: &ProductTangent<T>) -> T {
        self.inner(a, a).max(T::zero()).sqrt()
    }

    pub fn retract(&self, xi: &ProductTangent<T>) -> Result<ProductPoint<T>> {
        Ok(ProductPoint {
            u_part: retract(&self.u_part, &xi.u)?,
            v_part: retract(&self.v_part, &xi.v)?,
        })
    }

    /// Projection transport of `xi` (tangent here) to `to`.
    pub fn transport_to(&self, to: &ProductPoint<T>, xi: &ProductTangent<T>) -> Result<ProductTangent<T>> {
        Ok(ProductTangent {
            u: transport(&self.u_part, &to.u_part, &xi.u)?,
            v: transport(&self.v_part, &to.v_part, &xi.v)?,
        })
    }

    pub fn riemannian_grad(&self, egrad_u: &DMatrix<T>, egrad_v: &DMatrix<T>) -> Result<ProductTangent<T>> {
        Ok(ProductTangent {
            u: riemannian_grad(&self.u_part, egrad_u)?,
            v: riemannian_grad(&self.v_part, egrad_v)?,
        })
    }
}

impl<T: Scalar> ProductTangent<T> {
    pub fn scaled(&self, t: T) -> ProductTangent<T> {
        ProductTangent {
            u: TangentVector(&self.u.0 * t),
            v: TangentVector(&self.v.0 * t),
        }
    }

    pub fn sub(&self, other: &ProductTangent<T>) -> ProductTangent<T> {
        ProductTangent {
            u: TangentVector(&self.u.0 - &other.u.0),
            v: TangentVector(&self.v.0 - &other.v.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric_2x2() -> Arc<MetricMatrix<f64>> {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        Arc::new(make_metric(&g, 0.0).unwrap())
    }

    #[test]
    fn metric_identity_and_diagonal() {
        let m = make_metric(&DMatrix::<f64>::identity(4, 4), 0.0).unwrap();
        assert_eq!(m.matrix(), &DMatrix::<f64>::identity(4, 4));
        let d = make_metric(&DMatrix::from_diagonal(&nalgebra::dvector![2.0, 0.0]), 0.5).unwrap();
        assert_eq!(d.matrix(), &DMatrix::from_diagonal(&nalgebra::dvector![1.5, 0.5]));
        assert!((d.eig_max() - 1.5f64).abs() < 1e-15);
    }

    #[test]
    fn metric_rejects_singular_and_bad_alpha() {
        let singular = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        assert!(matches!(
            make_metric(&singular, 0.0),
            Err(AsccaError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            make_metric(&singular, 1.0),
            Err(AsccaError::InvalidConfig(_))
        ));
        assert!(make_metric(&DMatrix::<f64>::zeros(2, 3), 0.1).is_err());
    }

    #[test]
    fn normal_direction_is_annihilated() {
        let x = random_point(&metric_2x2(), 2, 3).unwrap();
        let p = project_tangent(&x, x.matrix()).unwrap();
        assert!(p.0.norm() < 1e-12);
    }

    #[test]
    fn gradient_of_metric_direction_vanishes() {
        let x = random_point(&metric_2x2(), 2, 5).unwrap();
        let egrad = x.metric().matrix() * x.matrix();
        assert!(riemannian_grad(&x, &egrad).unwrap().0.norm() < 1e-12);
    }

    #[test]
    fn retract_zero_is_identity() {
        let x = random_point(&metric_2x2(), 2, 7).unwrap();
        let y = retract(&x, &TangentVector(DMatrix::zeros(3, 2))).unwrap();
        assert_eq!(x.matrix(), y.matrix());
    }

    #[test]
    fn retract_rejects_collapsing_step() {
        let x = random_point(&metric_2x2(), 1, 1).unwrap();
        let xi = TangentVector(-x.matrix().clone());
        assert!(matches!(
            retract(&x, &xi),
            Err(AsccaError::RankDeficientStep { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        let x = random_point(&metric_2x2(), 2, 1).unwrap();
        let bad = DMatrix::<f64>::zeros(2, 2);
        assert!(project_tangent(&x, &bad).is_err());
        assert!(riemannian_grad(&x, &bad).is_err());
        assert!(random_point(&metric_2x2(), 4, 1).is_err());
    }

    #[test]
    fn infeasible_point_rejected() {
        let u = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            GStiefelPoint::new(u, metric_2x2()),
            Err(AsccaError::InfeasiblePoint { .. })
        ));
    }

    #[test]
    fn random_point_square_identity_metric_is_orthogonal() {
        let m = Arc::new(make_metric(&DMatrix::<f64>::identity(5, 5), 0.0).unwrap());
        let x = random_point(&m, 5, 11).unwrap();
        let g = x.matrix().transpose() * x.matrix();
        assert!((g - DMatrix::<f64>::identity(5, 5)).norm() < 1e-12);
        let again = random_point(&m, 5, 11).unwrap();
        assert_eq!(x.matrix(), again.matrix());
    }

    #[test]
    fn single_precision_retraction_is_feasible() {
        let g = DMatrix::<f32>::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = Arc::new(make_metric(&g, 0.0f32).unwrap());
        let x = random_point(&m, 1, 2).unwrap();
        let xi = project_tangent(&x, &DMatrix::from_row_slice(2, 1, &[0.3f32, -0.1])).unwrap();
        let y = retract(&x, &xi).unwrap();
        assert!(y.feasibility_residual() < 1e-5);
    }
}
