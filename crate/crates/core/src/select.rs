//! K-fold cross-validation of the shared penalty scale `b`, with
//! `lambda_u = b sqrt((r + ln p) / n)` and `lambda_v = b sqrt((r + ln q) / n)`.

use crate::alm::{default_init, solve, AlmConfig, InitStrategy};
use crate::error::{AsccaError, Result};
use crate::linalg::select_rows;
use crate::problem::{preprocess, AsccaProblem, DataPair};
use crate::scalar::{lit, to_f64, Scalar};
use crate::simulate::sample_canonical_correlations;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    pub kappa: usize,
    pub b_grid: Vec<f64>,
    pub seed: u64,
    /// Score folds by absolute correlations instead of signed ones.
    #[serde(default)]
    pub absolute_scores: bool,
}

/// Eleven log-spaced values in `[0.05, 2.0]`.
pub fn default_b_grid() -> Vec<f64> {
    log_grid(0.05, 2.0, 11)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            kappa: 10,
            b_grid: default_b_grid(),
            seed: 0,
            absolute_scores: false,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.kappa < 2 {
            return Err(AsccaError::InvalidConfig("cv: kappa must be at least 2".into()));
        }
        if self.b_grid.is_empty() {
            return Err(AsccaError::InvalidConfig("cv: b grid is empty".into()));
        }
        if self.b_grid.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(AsccaError::InvalidConfig("cv: b values must be finite and >= 0".into()));
        }
        if self.b_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(AsccaError::InvalidConfig("cv: b grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// `(b sqrt((r + ln p) / n), b sqrt((r + ln q) / n))`.
pub fn lambda_from_b(b: f64, r: usize, p: usize, q: usize, n: usize) -> (f64, f64) {
    (
        b * penalty_scale(r as f64, p as f64, n as f64),
        b * penalty_scale(r as f64, q as f64, n as f64),
    )
}

/// `sqrt((r + ln dim) / n)`.
pub fn penalty_scale(r: f64, dim: f64, n: f64) -> f64 {
    ((r + dim.ln()) / n).sqrt()
}

/// Test-fold row indices: a seeded shuffle cut into `kappa` contiguous
/// chunks whose sizes differ by at most one.
pub fn fold_assignment(n: usize, kappa: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / kappa;
    let extra = n % kappa;
    let mut folds = Vec::with_capacity(kappa);
    let mut start = 0;
    for f in 0..kappa {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    folds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kappa: usize,
    pub seed: u64,
    pub b_grid: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    /// `scores[b][fold]`: mean held-out canonical correlation.
    pub scores: Vec<Vec<f64>>,
    pub averages: Vec<f64>,
    pub selected_index: usize,
    pub selected_b: f64,
    /// Penalty weights for the full sample at the selected `b`.
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub absolute_scores: bool,
}

impl CvReport {
    /// Long-format CSV with one `b,fold,score` row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,fold,score\n");
        for (bi, row) in self.scores.iter().enumerate() {
            for (f, s) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", self.b_grid[bi], f, s));
            }
        }
        out
    }
}

/// Index of the largest average; ties go to the smaller `b`. NaN averages
/// never win.
pub fn select_best(averages: &[f64]) -> usize {
    let mut best = 0;
    for (i, &a) in averages.iter().enumerate() {
        let current = averages[best];
        if a > current || (current.is_nan() && !a.is_nan()) {
            best = i;
        }
    }
    best
}

/// Mean held-out correlation of one `(b, fold)` cell.
fn score_cell<T: Scalar>(
    data: &DataPair<T>,
    r: usize,
    b: f64,
    test: &[usize],
    alm_cfg: &AlmConfig<T>,
    absolute: bool,
) -> Result<f64> {
    let n = data.n();
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    let train_data = preprocess(
        &select_rows(data.x(), &train),
        &select_rows(data.y(), &train),
        data.options(),
    )?;
    let (lu, lv) = lambda_from_b(b, r, data.p(), data.q(), train.len());
    let prob = AsccaProblem::new(train_data, r, lit::<T>(lu), lit::<T>(lv))?;
    let init = default_init(&prob, InitStrategy::Spectral, 0)?;
    let sol = solve(&prob, &init, alm_cfg)?;
    let u = prob.data().x_loadings_to_input(sol.u());
    let v = prob.data().y_loadings_to_input(sol.v());
    let corr = sample_canonical_correlations(
        &select_rows(data.x(), test),
        &select_rows(data.y(), test),
        &u,
        &v,
    )?;
    let total: f64 = corr
        .iter()
        .map(|&c| if absolute { to_f64(c).abs() } else { to_f64(c) })
        .sum();
    Ok(total / corr.len() as f64)
}

/// Runs the full `b` grid times `kappa` folds and picks the `b` with the
/// highest average held-out correlation. Cells are evaluated in parallel
/// on the current rayon pool; results do not depend on the pool size.
pub fn cross_validate<T: Scalar>(
    data: &DataPair<T>,
    r: usize,
    plan: &CvPlan,
    alm_cfg: &AlmConfig<T>,
) -> Result<CvReport> {
    plan.validate()?;
    alm_cfg.validate()?;
    let n = data.n();
    if n < plan.kappa {
        return Err(AsccaError::FoldTooSmall {
            fold: n,
            size: 0,
            required: r + 1,
        });
    }
    let folds = fold_assignment(n, plan.kappa, plan.seed);
    if let Some((f, fold)) = folds.iter().enumerate().find(|(_, f)| f.len() < r + 1) {
        return Err(AsccaError::FoldTooSmall {
            fold: f,
            size: fold.len(),
            required: r + 1,
        });
    }

    let (scores, averages, selected_index) = if plan.b_grid.len() == 1 {
        (vec![Vec::new()], vec![f64::NAN], 0)
    } else {
        let cells: Vec<(usize, usize)> = (0..plan.b_grid.len())
            .flat_map(|bi| (0..plan.kappa).map(move |f| (bi, f)))
            .collect();
        let flat: Vec<f64> = cells
            .par_iter()
            .map(|&(bi, f)| score_cell(data, r, plan.b_grid[bi], &folds[f], alm_cfg, plan.absolute_scores))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<Vec<f64>> = flat.chunks(plan.kappa).map(|c| c.to_vec()).collect();
        let averages: Vec<f64> = scores
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        let best = select_best(&averages);
        (scores, averages, best)
    };
    let selected_b = plan.b_grid[selected_index];
    let (lu, lv) = lambda_from_b(selected_b, r, data.p(), data.q(), n);
    Ok(CvReport {
        kappa: plan.kappa,
        seed: plan.seed,
        b_grid: plan.b_grid.clone(),
        fold_sizes: folds.iter().map(Vec::len).collect(),
        scores,
        averages,
        selected_index,
        selected_b,
        lambda_u: lu,
        lambda_v: lv,
        absolute_scores: plan.absolute_scores,
    })
}
