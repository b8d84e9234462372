//! Riemannian Barzilai-Borwein gradient method with Armijo backtracking on
//! the product manifold `M1 x M2`.

use crate::error::{AsccaError, Result};
use crate::manifold::{ProductPoint, ProductTangent};
use crate::scalar::{lit, to_f64, Scalar};
use serde::{Deserialize, Serialize};

/// A smooth cost on the product manifold with its Riemannian gradient.
pub trait ManifoldCost<T: Scalar> {
    fn value_and_grad(&self, x: &ProductPoint<T>) -> Result<(T, ProductTangent<T>)>;
}

/// Adapts a pair of closures (cost, Riemannian gradient) to [`ManifoldCost`].
pub struct FnCost<F, G> {
    pub cost: F,
    pub grad: G,
}

impl<T, F, G> ManifoldCost<T> for FnCost<F, G>
where
    T: Scalar,
    F: Fn(&ProductPoint<T>) -> Result<T>,
    G: Fn(&ProductPoint<T>) -> Result<ProductTangent<T>>,
{
    fn value_and_grad(&self, x: &ProductPoint<T>) -> Result<(T, ProductTangent<T>)> {
        Ok(((self.cost)(x)?, (self.grad)(x)?))
    }
}

/// Which difference plays which role in the BB quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbConvention {
    /// `s = g_{k+1} - T(g_k)`, `y = T(-a_k g_k)`, step `<s,s> / <s,y>`.
    /// This quotient estimates curvature rather than its inverse, so on
    /// stiff costs most trial steps are rejected.
    Paper,
    /// Step difference over gradient difference: `<y,y> / <y,s>` with the
    /// same `s`, `y`.
    Classical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbbConfig<T: Scalar> {
    /// Stop once the Riemannian gradient norm drops below this.
    pub eps: T,
    pub max_iters: usize,
    /// First BB step; `None` means `1 / ||g(x0)||`.
    pub alpha0: Option<T>,
    pub alpha_min: T,
    pub alpha_max: T,
    /// Sufficient-decrease constant of the Armijo test.
    pub ls_decrease: T,
    /// Backtracking contraction factor.
    pub ls_contract: T,
    pub ls_max_backtracks: usize,
    pub bb_convention: BbConvention,
}

impl<T: Scalar> Default for RbbConfig<T> {
    fn default() -> Self {
        RbbConfig {
            eps: lit(1e-6),
            max_iters: 1000,
            alpha0: None,
            alpha_min: lit(1e-10),
            alpha_max: lit(1e10),
            ls_decrease: lit(1e-4),
            ls_contract: lit(0.5),
            ls_max_backtracks: 50,
            bb_convention: BbConvention::Classical,
        }
    }
}

impl<T: Scalar> RbbConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AsccaError::InvalidConfig(format!("rbb: {m}")));
        if !(self.alpha_min > T::zero() && self.alpha_min <= self.alpha_max) {
            return bad("need 0 < alpha_min <= alpha_max");
        }
        if !(self.ls_contract > T::zero() && self.ls_contract < T::one()) {
            return bad("ls_contract must lie in (0, 1)");
        }
        if !(self.ls_decrease > T::zero() && self.ls_decrease < T::one()) {
            return bad("ls_decrease must lie in (0, 1)");
        }
        if !(self.eps >= T::zero()) {
            return bad("eps must be nonnegative");
        }
        if let Some(a) = self.alpha0 {
            if !(a > T::zero()) {
                return bad("alpha0 must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchStall,
}

/// One accepted iteration, enough to replay the Armijo test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// BB trial step this iteration started from.
    pub alpha_bb: f64,
    /// Accepted step `contract^h * alpha_bb`.
    pub alpha: f64,
    pub backtracks: usize,
    pub f_before: f64,
    pub f_after: f64,
    /// `||g_k||^2` in the product metric.
    pub grad_norm_sq: f64,
}

#[derive(Clone, Debug)]
pub struct RbbReport<T: Scalar> {
    pub point: ProductPoint<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    /// Cost evaluations, line-search trials included.
    pub evaluations: usize,
    /// Cost at the start and after every accepted step.
    pub objective: Vec<T>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

/// Clamps the BB quotient into the safeguards, or returns `alpha_max` when
/// the curvature pair has a nonpositive inner product.
pub fn safeguarded_step<T: Scalar>(num: T, den: T, cfg: &RbbConfig<T>) -> T {
    if den > T::zero() && num.is_finite() && (num / den).is_finite() {
        (num / den).max(cfg.alpha_min).min(cfg.alpha_max)
    } else {
        cfg.alpha_max
    }
}

/// Minimizes `cost` from `x0`.
pub fn minimize<T: Scalar, C: ManifoldCost<T> + ?Sized>(
    cost: &C,
    x0: ProductPoint<T>,
    cfg: &RbbConfig<T>,
) -> Result<RbbReport<T>> {
    cfg.validate()?;
    let mut x = x0;
    let (mut f, mut g) = cost.value_and_grad(&x)?;
    let mut evaluations = 1;
    let mut gnorm = x.norm(&g);
    let mut objective = vec![f];
    let mut steps = Vec::new();
    if !f.is_finite() || !gnorm.is_finite() {
        return Err(AsccaError::InvalidConfig(
            "cost or gradient is not finite at the initial point".into(),
        ));
    }
    let mut alpha_bb = cfg
        .alpha0
        .unwrap_or_else(|| if gnorm > T::zero() { T::one() / gnorm } else { T::one() })
        .max(cfg.alpha_min)
        .min(cfg.alpha_max);

    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    if gnorm < cfg.eps {
        termination = Termination::GradTol;
    } else {
        while iterations < cfg.max_iters {
            let gsq = gnorm * gnorm;
            let mut t = alpha_bb;
            let mut accepted = None;
            for h in 0..=cfg.ls_max_backtracks {
                match x.retract(&g.scaled(-t)) {
                    Ok(trial) => {
                        let (ft, gt) = cost.value_and_grad(&trial)?;
                        evaluations += 1;
                        if ft.is_finite() && ft <= f - cfg.ls_decrease * t * gsq {
                            accepted = Some((trial, ft, gt, h));
                            break;
                        }
                    }
                    Err(AsccaError::RankDeficientStep { .. }) => {}
                    Err(e) => return Err(e),
                }
                t *= cfg.ls_contract;
            }
            let Some((next, f_next, g_next, backtracks)) = accepted else {
                termination = Termination::LineSearchStall;
                break;
            };

            let tg = x.transport_to(&next, &g)?;
            let grad_diff = g_next.sub(&tg);
            let step = tg.scaled(-t);
            let (num, den) = match cfg.bb_convention {
                BbConvention::Paper => (
                    next.inner(&grad_diff, &grad_diff),
                    next.inner(&grad_diff, &step),
                ),
                BbConvention::Classical => (next.inner(&step, &step), next.inner(&step, &grad_diff)),
            };
            steps.push(StepRecord {
                alpha_bb: to_f64(alpha_bb),
                alpha: to_f64(t),
                backtracks,
                f_before: to_f64(f),
                f_after: to_f64(f_next),
                grad_norm_sq: to_f64(gsq),
            });
            alpha_bb = safeguarded_step(num, den, cfg);

            x = next;
            f = f_next;
            g = g_next;
            gnorm = x.norm(&g);
            objective.push(f);
            iterations += 1;
            if gnorm < cfg.eps {
                termination = Termination::GradTol;
                break;
            }
        }
    }
    Ok(RbbReport {
        point: x,
        value: f,
        grad_norm: gnorm,
        iterations,
        evaluations,
        objective,
        steps,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = RbbConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.ls_contract = 1.0;
        assert!(cfg.validate().is_err());
        cfg = RbbConfig::default();
        cfg.alpha_min = 2e10;
        assert!(cfg.validate().is_err());
        cfg = RbbConfig::default();
        cfg.ls_decrease = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn safeguard_rules() {
        let cfg = RbbConfig::<f64>::default();
        assert_eq!(safeguarded_step(1.0, -1.0, &cfg), cfg.alpha_max);
        assert_eq!(safeguarded_step(1.0, 0.0, &cfg), cfg.alpha_max);
        assert_eq!(safeguarded_step(1e-20, 1.0, &cfg), cfg.alpha_min);
        assert_eq!(safeguarded_step(3.0, 2.0, &cfg), 1.5);
    }
}
