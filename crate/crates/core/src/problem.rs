//! The ASCCA problem
//!
//! ```text
//! min  1/2 ||XU - YV||_F^2 + lambda_u ||A_X(U)||_* + lambda_v ||A_Y(V)||_*
//! s.t. U^T Gx U = I_r,  V^T Gy V = I_r
//! ```
//!
//! split as `A_X(U) = P`, `A_Y(V) = Q` for the augmented Lagrangian. For
//! fixed multipliers and penalty the `P`, `Q` blocks are eliminated in
//! closed form by singular value thresholding, which leaves the smooth
//! surrogate `psi(U, V)` minimized on the product manifold.

use crate::error::{AsccaError, Result};
use crate::linalg::max_abs;
use crate::manifold::{make_metric, MetricMatrix, ProductPoint};
use crate::scalar::{lit, Scalar};
use crate::tracelasso::{nuclear_norm, svt, svt_with_norm, TraceLassoOp};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Default Gram regularization weight. With unit-norm columns the Gram
/// diagonal is one, so this shrinks the metric a third of the way toward the
/// identity. Much smaller values leave the `p >= n` metric so ill-conditioned
/// that the inner solver crawls.
pub const DEFAULT_ALPHA: f64 = 0.3;

/// Preprocessing switches applied by [`preprocess`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Scale every centered column to unit Euclidean norm.
    pub normalize: bool,
    /// Gram regularization: the metric is `(1 - alpha) X^T X + alpha I`.
    pub alpha: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            normalize: true,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Centered (optionally column-normalized) data with cached metric matrices.
#[derive(Clone, Debug)]
pub struct DataPair<T: Scalar> {
    x: DMatrix<T>,
    y: DMatrix<T>,
    x_scale: DVector<T>,
    y_scale: DVector<T>,
    gx: Arc<MetricMatrix<T>>,
    gy: Arc<MetricMatrix<T>>,
    options: PreprocessOptions,
}

impl<T: Scalar> DataPair<T> {
    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<T> {
        &self.y
    }

    pub fn gx(&self) -> &Arc<MetricMatrix<T>> {
        &self.gx
    }

    pub fn gy(&self) -> &Arc<MetricMatrix<T>> {
        &self.gy
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn options(&self) -> PreprocessOptions {
        self.options
    }

    /// Column scales divided out during normalization (all ones otherwise).
    pub fn x_scale(&self) -> &DVector<T> {
        &self.x_scale
    }

    pub fn y_scale(&self) -> &DVector<T> {
        &self.y_scale
    }

    /// Maps X loadings from the processed coordinates back to the
    /// coordinates of the matrix given to [`preprocess`], so that
    /// `Xc U_in = X U` for the centered input `Xc`.
    pub fn x_loadings_to_input(&self, u: &DMatrix<T>) -> DMatrix<T> {
        unscale_rows(u, &self.x_scale)
    }

    pub fn y_loadings_to_input(&self, v: &DMatrix<T>) -> DMatrix<T> {
        unscale_rows(v, &self.y_scale)
    }
}

fn unscale_rows<T: Scalar>(w: &DMatrix<T>, scale: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] / scale[i])
}

fn center_columns<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut out = m.clone();
    let n = crate::scalar::from_usize::<T>(m.nrows());
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

fn normalize_columns<T: Scalar>(
    m: &mut DMatrix<T>,
    raw: &DMatrix<T>,
    name: &'static str,
) -> Result<DVector<T>> {
    let mut scale = DVector::from_element(m.ncols(), T::one());
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let norm = col.norm();
        let reference = raw.column(j).amax().max(T::tiny());
        if !(norm > lit::<T>(1e-12) * reference * crate::scalar::from_usize::<T>(raw.nrows()).sqrt())
        {
            return Err(AsccaError::DegenerateColumn { matrix: name, index: j });
        }
        col /= norm;
        scale[j] = norm;
    }
    Ok(scale)
}

/// Centers both matrices, optionally normalizes columns, and builds the
/// regularized metric matrices `(1 - alpha) Gram + alpha I`.
pub fn preprocess<T: Scalar>(
    x_raw: &DMatrix<T>,
    y_raw: &DMatrix<T>,
    options: PreprocessOptions,
) -> Result<DataPair<T>> {
    let n = x_raw.nrows();
    if y_raw.nrows() != n {
        return Err(AsccaError::dims(
            "preprocess",
            format!("Y with {n} rows"),
            format!("{} rows", y_raw.nrows()),
        ));
    }
    if n < 2 || x_raw.ncols() == 0 || y_raw.ncols() == 0 {
        return Err(AsccaError::InvalidConfig(format!(
            "need n >= 2 and at least one column in each block, got X {}x{}, Y {}x{}",
            n,
            x_raw.ncols(),
            y_raw.nrows(),
            y_raw.ncols()
        )));
    }
    if x_raw.iter().chain(y_raw.iter()).any(|v| !v.is_finite()) {
        return Err(AsccaError::InvalidConfig("data contains non-finite values".into()));
    }
    let alpha: T = lit(options.alpha);
    let mut x = center_columns(x_raw);
    let mut y = center_columns(y_raw);
    let (x_scale, y_scale) = if options.normalize {
        (
            normalize_columns(&mut x, x_raw, "X")?,
            normalize_columns(&mut y, y_raw, "Y")?,
        )
    } else {
        (
            DVector::from_element(x.ncols(), T::one()),
            DVector::from_element(y.ncols(), T::one()),
        )
    };
    let gx = make_metric(&(x.transpose() * &x), alpha).map_err(|e| relabel(e, "X^T X"))?;
    let gy = make_metric(&(y.transpose() * &y), alpha).map_err(|e| relabel(e, "Y^T Y"))?;
    Ok(DataPair {
        x,
        y,
        x_scale,
        y_scale,
        gx: Arc::new(gx),
        gy: Arc::new(gy),
        options,
    })
}

fn relabel(e: AsccaError, which: &str) -> AsccaError {
    match e {
        AsccaError::NotPositiveDefinite { context } => AsccaError::NotPositiveDefinite {
            context: format!("{which}: {context}"),
        },
        other => other,
    }
}

/// Data plus rank and penalty weights.
#[derive(Clone, Debug)]
pub struct AsccaProblem<T: Scalar> {
    data: DataPair<T>,
    r: usize,
    lambda_u: T,
    lambda_v: T,
}

impl<T: Scalar> AsccaProblem<T> {
    pub fn new(data: DataPair<T>, r: usize, lambda_u: T, lambda_v: T) -> Result<Self> {
        let limit = data.p().min(data.q()).min(data.n());
        if r == 0 || r > limit {
            return Err(AsccaError::InvalidConfig(format!(
                "r = {r} must satisfy 1 <= r <= min(n, p, q) = {limit}"
            )));
        }
        if !(lambda_u >= T::zero() && lambda_v >= T::zero()) {
            return Err(AsccaError::InvalidConfig(format!(
                "penalty weights must be nonnegative, got ({lambda_u}, {lambda_v})"
            )));
        }
        Ok(AsccaProblem {
            data,
            r,
            lambda_u,
            lambda_v,
        })
    }

    pub fn data(&self) -> &DataPair<T> {
        &self.data
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn lambda_u(&self) -> T {
        self.lambda_u
    }

    pub fn lambda_v(&self) -> T {
        self.lambda_v
    }

    pub fn op_x(&self) -> TraceLassoOp<'_, T> {
        TraceLassoOp::new(self.data.x(), self.r)
    }

    pub fn op_y(&self) -> TraceLassoOp<'_, T> {
        TraceLassoOp::new(self.data.y(), self.r)
    }

    fn check_uv(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> Result<()> {
        let r = self.r;
        if u.shape() != (self.data.p(), r) || v.shape() != (self.data.q(), r) {
            return Err(AsccaError::dims(
                "AsccaProblem",
                format!("U {}x{r}, V {}x{r}", self.data.p(), self.data.q()),
                format!("U {}x{}, V {}x{}", u.nrows(), u.ncols(), v.nrows(), v.ncols()),
            ));
        }
        Ok(())
    }

    fn check_pq(&self, p: &DMatrix<T>, q: &DMatrix<T>) -> Result<()> {
        let (n, r) = (self.data.n(), self.r);
        let pe = (n, self.data.p() * r);
        let qe = (n, self.data.q() * r);
        if p.shape() != pe || q.shape() != qe {
            return Err(AsccaError::dims(
                "AsccaProblem",
                format!("P {}x{}, Q {}x{}", pe.0, pe.1, qe.0, qe.1),
                format!("P {}x{}, Q {}x{}", p.nrows(), p.ncols(), q.nrows(), q.ncols()),
            ));
        }
        Ok(())
    }

    /// `XU - YV`.
    fn fit_residual(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> DMatrix<T> {
        self.data.x() * u - self.data.y() * v
    }

    /// Value of the penalized CCA objective
    /// `1/2 ||XU - YV||^2 + lambda_u ||A_X(U)||_* + lambda_v ||A_Y(V)||_*`.
    pub fn objective(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> Result<T> {
        self.check_uv(u, v)?;
        let fit = self.fit_residual(u, v).norm_squared() * lit(0.5);
        let mut total = fit;
        if self.lambda_u > T::zero() {
            total += self.lambda_u * nuclear_norm(self.op_x().apply(u)?.matrix())?;
        }
        if self.lambda_v > T::zero() {
            total += self.lambda_v * nuclear_norm(self.op_y().apply(v)?.matrix())?;
        }
        Ok(total)
    }
}

/// Lagrange multipliers for `A_X(U) = P` and `A_Y(V) = Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers<T: Scalar> {
    pub l1: DMatrix<T>,
    pub l2: DMatrix<T>,
}

impl<T: Scalar> Multipliers<T> {
    pub fn zeros(prob: &AsccaProblem<T>) -> Self {
        let (n, r) = (prob.data.n(), prob.r);
        Multipliers {
            l1: DMatrix::zeros(n, prob.data.p() * r),
            l2: DMatrix::zeros(n, prob.data.q() * r),
        }
    }

    /// Clamps every entry into `[lo, hi]`.
    pub fn clip(&mut self, lo: T, hi: T) {
        for v in self.l1.iter_mut().chain(self.l2.iter_mut()) {
            *v = v.max(lo).min(hi);
        }
    }

    fn check(&self, prob: &AsccaProblem<T>) -> Result<()> {
        prob.check_pq(&self.l1, &self.l2)
    }
}

fn check_rho<T: Scalar>(rho: T) -> Result<()> {
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(AsccaError::InvalidConfig(format!(
            "penalty rho must be positive, got {rho}"
        )));
    }
    Ok(())
}

/// Augmented Lagrangian `L_rho(U, V, P, Q; L1, L2)`.
#[allow(clippy::too_many_arguments)]
pub fn aug_lagrangian<T: Scalar>(
    prob: &AsccaProblem<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    mult: &Multipliers<T>,
    rho: T,
) -> Result<T> {
    check_rho(rho)?;
    prob.check_uv(u, v)?;
    prob.check_pq(p, q)?;
    mult.check(prob)?;
    let half = lit::<T>(0.5);
    let r1 = prob.op_x().apply(u)?.into_matrix() - p;
    let r2 = prob.op_y().apply(v)?.into_matrix() - q;
    let mut value = prob.fit_residual(u, v).norm_squared() * half;
    if prob.lambda_u > T::zero() {
        value += prob.lambda_u * nuclear_norm(p)?;
    }
    if prob.lambda_v > T::zero() {
        value += prob.lambda_v * nuclear_norm(q)?;
    }
    value -= mult.l1.dot(&r1) + mult.l2.dot(&r2);
    value += rho * half * (r1.norm_squared() + r2.norm_squared());
    Ok(value)
}

/// Everything known about `psi` at one point: value, Euclidean gradient and
/// the minimizing `P`, `Q`.
#[derive(Clone, Debug)]
pub struct PsiEval<T: Scalar> {
    pub value: T,
    pub grad_u: DMatrix<T>,
    pub grad_v: DMatrix<T>,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
}

struct Eliminated<T: Scalar> {
    prox: DMatrix<T>,
    /// `A(W) - L / rho - prox`.
    gap: DMatrix<T>,
    prox_nuclear: T,
}

fn eliminate<T: Scalar>(
    op: TraceLassoOp<'_, T>,
    w: &DMatrix<T>,
    l: &DMatrix<T>,
    lambda: T,
    rho: T,
) -> Result<Eliminated<T>> {
    let shifted = op.apply(w)?.into_matrix() - l / rho;
    let shrink = svt_with_norm(&shifted, lambda / rho)?;
    Ok(Eliminated {
        gap: shifted - &shrink.matrix,
        prox: shrink.matrix,
        prox_nuclear: shrink.nuclear_norm,
    })
}

/// Evaluates `psi`, its Euclidean gradient and the minimizing `(P, Q)` in one
/// pass (two thresholding steps).
pub fn psi_eval<T: Scalar>(
    prob: &AsccaProblem<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    mult: &Multipliers<T>,
    rho: T,
) -> Result<PsiEval<T>> {
    check_rho(rho)?;
    prob.check_uv(u, v)?;
    mult.check(prob)?;
    let half = lit::<T>(0.5);
    let ex = eliminate(prob.op_x(), u, &mult.l1, prob.lambda_u, rho)?;
    let ey = eliminate(prob.op_y(), v, &mult.l2, prob.lambda_v, rho)?;
    let fit = prob.fit_residual(u, v);
    let value = fit.norm_squared() * half
        + prob.lambda_u * ex.prox_nuclear
        + prob.lambda_v * ey.prox_nuclear
        + rho * half * (ex.gap.norm_squared() + ey.gap.norm_squared())
        - (mult.l1.norm_squared() + mult.l2.norm_squared()) * half / rho;
    let grad_u = prob.data.x().transpose() * &fit + prob.op_x().adjoint_matrix(&ex.gap)? * rho;
    let grad_v = -(prob.data.y().transpose() * &fit) + prob.op_y().adjoint_matrix(&ey.gap)? * rho;
    Ok(PsiEval {
        value,
        grad_u,
        grad_v,
        p: ex.prox,
        q: ey.prox,
    })
}

/// `psi(U, V) = inf_{P, Q} L_rho(U, V, P, Q; L1, L2)`.
pub fn psi_value<T: Scalar>(
    prob: &AsccaProblem<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    mult: &Multipliers<T>,
    rho: T,
) -> Result<T> {
    Ok(psi_eval(prob, u, v, mult, rho)?.value)
}

/// Euclidean gradient `(grad_U psi, grad_V psi)`.
pub fn psi_egrad<T: Scalar>(
    prob: &AsccaProblem<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    mult: &Multipliers<T>,
    rho: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let e = psi_eval(prob, u, v, mult, rho)?;
    Ok((e.grad_u, e.grad_v))
}

/// `P = svt(A_X(U) - L1 / rho, lambda_u / rho)` and the matching `Q`.
pub fn recover_pq<T: Scalar>(
    prob: &AsccaProblem<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    mult: &Multipliers<T>,
    rho: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_rho(rho)?;
    prob.check_uv(u, v)?;
    mult.check(prob)?;
    let ex = eliminate(prob.op_x(), u, &mult.l1, prob.lambda_u, rho)?;
    let ey = eliminate(prob.op_y(), v, &mult.l2, prob.lambda_v, rho)?;
    Ok((ex.prox, ey.prox))
}

/// Residuals of the first-order optimality system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max |A_X(U) - P|`.
    pub feas1: f64,
    /// `max |A_Y(V) - Q|`.
    pub feas2: f64,
    /// Riemannian gradient norm of the Lagrangian in `(U, V)` plus the
    /// distances `||P - svt(P - L1, lambda_u)||_F` and
    /// `||Q - svt(Q - L2, lambda_v)||_F` from the subdifferential conditions.
    pub stat: f64,
    /// The `(U, V)` part of `stat` alone.
    pub stat_manifold: f64,
}

/// KKT residuals at `(U, V, P, Q; L1, L2)`.
///
/// With the sign convention `L = f + g(P) + h(Q) - <L1, A_X(U) - P> - ...`,
/// stationarity in `P` reads `-L1 in d g(P)`, equivalently
/// `P = prox_g(P - L1)`.
pub fn kkt_residuals<T: Scalar>(
    prob: &AsccaProblem<T>,
    point: &ProductPoint<T>,
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    mult: &Multipliers<T>,
) -> Result<KktResiduals> {
    let (u, v) = (point.u(), point.v());
    prob.check_uv(u, v)?;
    prob.check_pq(p, q)?;
    mult.check(prob)?;
    let ax = prob.op_x().apply(u)?.into_matrix();
    let ay = prob.op_y().apply(v)?.into_matrix();
    let feas1 = max_abs(&(&ax - p));
    let feas2 = max_abs(&(&ay - q));

    let fit = prob.fit_residual(u, v);
    let gu = prob.data.x().transpose() * &fit - prob.op_x().adjoint_matrix(&mult.l1)?;
    let gv = -(prob.data.y().transpose() * &fit) - prob.op_y().adjoint_matrix(&mult.l2)?;
    let rgrad = point.riemannian_grad(&gu, &gv)?;
    let stat_manifold = point.norm(&rgrad);
    let sub1 = (p - svt(&(p - &mult.l1), prob.lambda_u)?).norm();
    let sub2 = (q - svt(&(q - &mult.l2), prob.lambda_v)?).norm();
    Ok(KktResiduals {
        feas1: crate::scalar::to_f64(feas1),
        feas2: crate::scalar::to_f64(feas2),
        stat: crate::scalar::to_f64(stat_manifold + sub1 + sub2),
        stat_manifold: crate::scalar::to_f64(stat_manifold),
    })
}
