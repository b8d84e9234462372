//! Manifold inexact augmented Lagrangian method.
//!
//! Each outer iteration approximately minimizes the eliminated surrogate
//! `psi(U, V; L, rho)` on the product manifold with the RBB solver (to
//! tolerance `eps_k = max(1e-3, 0.9^k)`), recovers `P`, `Q` by thresholding,
//! takes a clipped dual step `L <- clip(L - rho R)` and grows `rho` by
//! `gamma` unless both residual blocks shrank by the factor `tau` in the
//! max-abs norm.

use crate::error::{AsccaError, Result};
use crate::linalg::{b_orthonormalize, inv_sqrt_spd, max_abs, thin_svd};
use crate::manifold::{random_point, GStiefelPoint, ProductPoint, ProductTangent};
use crate::problem::{kkt_residuals, psi_eval, recover_pq, AsccaProblem, KktResiduals, Multipliers};
use crate::rbb::{minimize, ManifoldCost, RbbConfig, Termination};
use crate::scalar::{lit, to_f64, Scalar};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig<T: Scalar> {
    /// Initial penalty; `None` means `max(lambda_max(Gx), lambda_max(Gy))`.
    pub rho0: Option<T>,
    /// Residual ratio a block must achieve to keep `rho` fixed.
    pub tau: T,
    /// Penalty growth factor.
    pub gamma: T,
    /// Floor of the inner tolerance schedule.
    pub eps_min: T,
    /// Base of the inner tolerance schedule.
    pub eps_decay: T,
    /// Bound on `max(||R1||_F^2, ||R2||_F^2)` for termination.
    pub outer_tol: T,
    pub max_outer: usize,
    pub inner_max: usize,
    pub clip_lo: T,
    pub clip_hi: T,
    /// Also require the last inner solve to reach `eps_min` before the
    /// residual test may stop the loop. Without it the residual test alone
    /// can fire before `(U, V)` is stationary, e.g. at once when both
    /// penalties are zero.
    #[serde(default = "default_true")]
    pub require_stationarity: bool,
    /// Line-search and BB settings for the inner solver; its `eps` and
    /// `max_iters` are overwritten every outer iteration.
    pub rbb: RbbConfig<T>,
}

fn default_true() -> bool {
    true
}

impl<T: Scalar> Default for AlmConfig<T> {
    fn default() -> Self {
        AlmConfig {
            rho0: None,
            tau: lit(0.99),
            gamma: lit(1.05),
            eps_min: lit(1e-3),
            eps_decay: lit(0.9),
            outer_tol: lit(1e-8),
            max_outer: 500,
            inner_max: 100,
            clip_lo: lit(-100.0),
            clip_hi: lit(100.0),
            require_stationarity: true,
            rbb: RbbConfig::default(),
        }
    }
}

impl<T: Scalar> AlmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AsccaError::InvalidConfig(format!("alm: {m}")));
        if !(self.tau > T::zero() && self.tau < T::one()) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.gamma > T::one()) {
            return bad("gamma must exceed 1");
        }
        if let Some(r) = self.rho0 {
            if !(r > T::zero()) {
                return bad("rho0 must be positive");
            }
        }
        if !(self.clip_lo < self.clip_hi) {
            return bad("clip bounds must satisfy lo < hi");
        }
        if !(self.eps_decay > T::zero() && self.eps_decay < T::one()) || !(self.eps_min >= T::zero()) {
            return bad("tolerance schedule must have 0 < decay < 1 and floor >= 0");
        }
        if !(self.outer_tol >= T::zero()) {
            return bad("outer_tol must be nonnegative");
        }
        self.rbb.validate()
    }

    /// Inner tolerance for outer iteration `k`.
    pub fn eps_schedule(&self, k: usize) -> T {
        let e = self.eps_decay.powi(k.min(i32::MAX as usize) as i32);
        e.max(self.eps_min)
    }
}

/// One record per outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    /// Penalty used for this iteration's subproblem.
    pub rho: f64,
    pub r1_inf: f64,
    pub r2_inf: f64,
    pub r1_fro_sq: f64,
    pub r2_fro_sq: f64,
    pub psi: f64,
    pub inner_iters: usize,
    pub inner_grad_norm: f64,
    pub inner_eps: f64,
    pub inner_termination: Termination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlmTermination {
    Residual,
    MaxOuter,
}

#[derive(Clone, Debug)]
pub struct AsccaSolution<T: Scalar> {
    pub point: ProductPoint<T>,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
    pub multipliers: Multipliers<T>,
    pub kkt: KktResiduals,
    /// Penalized CCA objective at `(U, V)`.
    pub objective: f64,
    /// Final RBB gradient norm of the smoothed subproblem.
    pub smoothed_grad_norm: f64,
    pub rho: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub termination: AlmTermination,
    pub history: Vec<OuterRecord>,
    pub wall_time_secs: f64,
}

impl<T: Scalar> AsccaSolution<T> {
    pub fn u(&self) -> &DMatrix<T> {
        self.point.u()
    }

    pub fn v(&self) -> &DMatrix<T> {
        self.point.v()
    }

    pub fn converged(&self) -> bool {
        self.termination == AlmTermination::Residual
    }
}

/// `psi(.; L, rho)` with its Riemannian gradient.
pub struct PsiCost<'a, T: Scalar> {
    pub prob: &'a AsccaProblem<T>,
    pub mult: &'a Multipliers<T>,
    pub rho: T,
}

impl<T: Scalar> ManifoldCost<T> for PsiCost<'_, T> {
    fn value_and_grad(&self, x: &ProductPoint<T>) -> Result<(T, ProductTangent<T>)> {
        let e = psi_eval(self.prob, x.u(), x.v(), self.mult, self.rho)?;
        let g = x.riemannian_grad(&e.grad_u, &e.grad_v)?;
        Ok((e.value, g))
    }
}

fn attach<T: Scalar>(prob: &AsccaProblem<T>, init: &ProductPoint<T>) -> Result<ProductPoint<T>> {
    let u = GStiefelPoint::new(init.u().clone(), Arc::clone(prob.data().gx()))
        .map_err(|e| AsccaError::InfeasibleInit(format!("U: {e}")))?;
    let v = GStiefelPoint::new(init.v().clone(), Arc::clone(prob.data().gy()))
        .map_err(|e| AsccaError::InfeasibleInit(format!("V: {e}")))?;
    if u.rank() != prob.r() || v.rank() != prob.r() {
        return Err(AsccaError::InfeasibleInit(format!(
            "expected {} columns, got U {} and V {}",
            prob.r(),
            u.rank(),
            v.rank()
        )));
    }
    Ok(ProductPoint::new(u, v))
}

/// Runs the augmented Lagrangian method from `init`.
pub fn solve<T: Scalar>(
    prob: &AsccaProblem<T>,
    init: &ProductPoint<T>,
    cfg: &AlmConfig<T>,
) -> Result<AsccaSolution<T>> {
    solve_with_observer(prob, init, cfg, |_| {})
}

/// [`solve`] that reports every outer iteration to `observer`.
pub fn solve_with_observer<T: Scalar, F: FnMut(&OuterRecord)>(
    prob: &AsccaProblem<T>,
    init: &ProductPoint<T>,
    cfg: &AlmConfig<T>,
    mut observer: F,
) -> Result<AsccaSolution<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let mut x = attach(prob, init)?;
    let mut mult = Multipliers::zeros(prob);
    let mut rho = cfg
        .rho0
        .unwrap_or_else(|| prob.data().gx().eig_max().max(prob.data().gy().eig_max()));
    let mut prev_inf = (T::max_value().unwrap(), T::max_value().unwrap());
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut termination = AlmTermination::MaxOuter;
    let mut last_grad = T::zero();
    let mut pq = None;

    let op_x = prob.op_x();
    let op_y = prob.op_y();
    for k in 0..cfg.max_outer {
        let eps_k = cfg.eps_schedule(k);
        let mut inner_cfg = cfg.rbb.clone();
        inner_cfg.eps = eps_k;
        inner_cfg.max_iters = cfg.inner_max;
        let report = {
            let cost = PsiCost { prob, mult: &mult, rho };
            minimize(&cost, x, &inner_cfg)?
        };
        x = report.point;
        inner_total += report.iterations;
        last_grad = report.grad_norm;

        let (p, q) = recover_pq(prob, x.u(), x.v(), &mult, rho)?;
        let r1 = op_x.apply(x.u())?.into_matrix() - &p;
        let r2 = op_y.apply(x.v())?.into_matrix() - &q;
        mult.l1 -= &r1 * rho;
        mult.l2 -= &r2 * rho;
        mult.clip(cfg.clip_lo, cfg.clip_hi);

        let (inf1, inf2) = (max_abs(&r1), max_abs(&r2));
        let (fro1, fro2) = (r1.norm_squared(), r2.norm_squared());
        let record = OuterRecord {
            k,
            rho: to_f64(rho),
            r1_inf: to_f64(inf1),
            r2_inf: to_f64(inf2),
            r1_fro_sq: to_f64(fro1),
            r2_fro_sq: to_f64(fro2),
            psi: to_f64(report.value),
            inner_iters: report.iterations,
            inner_grad_norm: to_f64(report.grad_norm),
            inner_eps: to_f64(eps_k),
            inner_termination: report.termination,
        };
        observer(&record);
        history.push(record);
        pq = Some((p, q));

        let stationary = !cfg.require_stationarity || report.grad_norm <= cfg.eps_min;
        if fro1.max(fro2) <= cfg.outer_tol && stationary {
            termination = AlmTermination::Residual;
            break;
        }
        if !(inf1 <= cfg.tau * prev_inf.0 && inf2 <= cfg.tau * prev_inf.1) {
            rho *= cfg.gamma;
        }
        prev_inf = (inf1, inf2);
    }

    let (p, q) = match pq {
        Some(pq) => pq,
        None => recover_pq(prob, x.u(), x.v(), &mult, rho)?,
    };
    let kkt = kkt_residuals(prob, &x, &p, &q, &mult)?;
    let objective = to_f64(prob.objective(x.u(), x.v())?);
    Ok(AsccaSolution {
        point: x,
        p,
        q,
        multipliers: mult,
        kkt,
        objective,
        smoothed_grad_norm: to_f64(last_grad),
        rho: to_f64(rho),
        outer_iterations: history.len(),
        inner_iterations: inner_total,
        termination,
        history,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// How to pick the starting point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    Random,
    /// Leading canonical directions of the regularized classical CCA.
    Spectral,
}

/// Starting point for [`solve`].
pub fn default_init<T: Scalar>(
    prob: &AsccaProblem<T>,
    strategy: InitStrategy,
    seed: u64,
) -> Result<ProductPoint<T>> {
    let data = prob.data();
    let r = prob.r();
    match strategy {
        InitStrategy::Random => Ok(ProductPoint::new(
            random_point(data.gx(), r, seed)?,
            random_point(data.gy(), r, seed.wrapping_add(1))?,
        )),
        InitStrategy::Spectral => {
            let (u, v) = spectral_directions(data.x(), data.y(), data.gx().matrix(), data.gy().matrix(), r)?;
            Ok(ProductPoint::new(
                GStiefelPoint::orthonormalized(&u, Arc::clone(data.gx()))?,
                GStiefelPoint::orthonormalized(&v, Arc::clone(data.gy()))?,
            ))
        }
    }
}

/// Top-`r` canonical directions `Gx^{-1/2} a_i`, `Gy^{-1/2} b_i` from the SVD
/// of `Gx^{-1/2} X^T Y Gy^{-1/2}`.
pub(crate) fn spectral_directions<T: Scalar>(
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    gx: &DMatrix<T>,
    gy: &DMatrix<T>,
    r: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let wx = inv_sqrt_spd(gx, "X metric")?;
    let wy = inv_sqrt_spd(gy, "Y metric")?;
    let k = &wx * (x.transpose() * y) * &wy;
    let svd = thin_svd(&k)?;
    if svd.s.len() < r {
        return Err(AsccaError::RankDeficient);
    }
    let u = &wx * svd.u.columns(0, r);
    let v = &wy * svd.v_t.rows(0, r).transpose();
    let u = b_orthonormalize(&u, gx).ok_or(AsccaError::RankDeficient)?;
    let v = b_orthonormalize(&v, gy).ok_or(AsccaError::RankDeficient)?;
    Ok((u, v))
}
