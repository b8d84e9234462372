//! Replicated simulation pipeline: generate, select `b` by cross-validation,
//! solve, and score against the ground truth.

use crate::alm::{default_init, solve, AlmConfig, InitStrategy};
use crate::error::Result;
use crate::problem::{preprocess, AsccaProblem, PreprocessOptions};
use crate::select::{cross_validate, lambda_from_b, CvPlan};
use crate::simulate::{make_truth, population_canonical_correlations, sample_data, subspace_loss, SimulationDesign};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Base design; replicate `i` uses seed `design.seed + i` for both the
    /// loadings and the sample.
    pub design: SimulationDesign,
    pub replicates: usize,
    pub preprocess: PreprocessOptions,
    /// Fold plan; its seed is replaced by the replicate seed.
    pub cv: CvPlan,
    /// Skip cross-validation and use this `b` for every replicate.
    #[serde(default)]
    pub fixed_b: Option<f64>,
    pub alm: AlmConfig<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            design: SimulationDesign::default(),
            replicates: 20,
            preprocess: PreprocessOptions::default(),
            cv: CvPlan::default(),
            fixed_b: None,
            alm: AlmConfig::default(),
        }
    }
}

/// Metrics of one replicate. Failed replicates carry NaN metrics and the
/// error message in `status`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub status: String,
    pub selected_b: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub init_lossu: f64,
    pub init_lossv: f64,
    pub init_rho: Vec<f64>,
    pub lossu: f64,
    pub lossv: f64,
    pub rho: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

impl ReplicateRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(replicate: usize, seed: u64, r: usize, message: String, seconds: f64) -> Self {
        ReplicateRow {
            replicate,
            seed,
            status: format!("failed: {message}"),
            selected_b: f64::NAN,
            lambda_u: f64::NAN,
            lambda_v: f64::NAN,
            init_lossu: f64::NAN,
            init_lossv: f64::NAN,
            init_rho: vec![f64::NAN; r],
            lossu: f64::NAN,
            lossv: f64::NAN,
            rho: vec![f64::NAN; r],
            outer_iterations: 0,
            converged: false,
            seconds,
        }
    }
}

/// Medians over the successful replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub replicates: usize,
    pub succeeded: usize,
    pub init_lossu: f64,
    pub init_lossv: f64,
    pub init_rho: Vec<f64>,
    pub lossu: f64,
    pub lossv: f64,
    pub rho: Vec<f64>,
    pub selected_b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<ReplicateRow>,
    pub summary: SweepSummary,
}

/// Median of the finite values; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn scores(
    truth: &crate::simulate::GroundTruth<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<(f64, f64, Vec<f64>)> {
    Ok((
        subspace_loss(&truth.u, u)?,
        subspace_loss(&truth.v, v)?,
        population_canonical_correlations(truth, u, v)?,
    ))
}

/// Runs replicate `index` of `cfg`.
pub fn run_replicate(cfg: &SweepConfig, index: usize) -> ReplicateRow {
    let start = Instant::now();
    let seed = cfg.design.seed.wrapping_add(index as u64);
    match replicate_inner(cfg, index, seed, start) {
        Ok(row) => row,
        Err(e) => ReplicateRow::failed(index, seed, cfg.design.r, e.to_string(), start.elapsed().as_secs_f64()),
    }
}

fn replicate_inner(cfg: &SweepConfig, index: usize, seed: u64, start: Instant) -> Result<ReplicateRow> {
    let design = SimulationDesign {
        seed,
        ..cfg.design.clone()
    };
    let r = design.r;
    let truth = make_truth::<f64>(&design)?;
    let sample = sample_data(&truth, design.n, seed)?;
    let data = preprocess(&sample.x, &sample.y, cfg.preprocess)?;

    let init_prob = AsccaProblem::new(data.clone(), r, 0.0, 0.0)?;
    let init = default_init(&init_prob, InitStrategy::Spectral, seed)?;
    let (init_lossu, init_lossv, init_rho) = scores(
        &truth,
        &data.x_loadings_to_input(init.u()),
        &data.y_loadings_to_input(init.v()),
    )?;

    let b = match cfg.fixed_b {
        Some(b) => b,
        None => {
            let plan = CvPlan {
                seed,
                ..cfg.cv.clone()
            };
            cross_validate(&data, r, &plan, &cfg.alm)?.selected_b
        }
    };
    let (lu, lv) = lambda_from_b(b, r, data.p(), data.q(), data.n());
    let prob = AsccaProblem::new(data, r, lu, lv)?;
    let sol = solve(&prob, &init, &cfg.alm)?;
    let (lossu, lossv, rho) = scores(
        &truth,
        &prob.data().x_loadings_to_input(sol.u()),
        &prob.data().y_loadings_to_input(sol.v()),
    )?;
    Ok(ReplicateRow {
        replicate: index,
        seed,
        status: "ok".into(),
        selected_b: b,
        lambda_u: lu,
        lambda_v: lv,
        init_lossu,
        init_lossv,
        init_rho,
        lossu,
        lossv,
        rho,
        outer_iterations: sol.outer_iterations,
        converged: sol.converged(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn summarize(rows: &[ReplicateRow], r: usize) -> SweepSummary {
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|row| row.ok()).collect();
    let col = |f: &dyn Fn(&ReplicateRow) -> f64| median(&ok.iter().map(|row| f(row)).collect::<Vec<_>>());
    SweepSummary {
        replicates: rows.len(),
        succeeded: ok.len(),
        init_lossu: col(&|row| row.init_lossu),
        init_lossv: col(&|row| row.init_lossv),
        init_rho: (0..r).map(|i| col(&|row| row.init_rho[i])).collect(),
        lossu: col(&|row| row.lossu),
        lossv: col(&|row| row.lossv),
        rho: (0..r).map(|i| col(&|row| row.rho[i])).collect(),
        selected_b: col(&|row| row.selected_b),
    }
}

/// Runs every replicate (in parallel on the current rayon pool) and
/// summarizes. Row order and values do not depend on the pool size.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.design.validate()?;
    cfg.cv.validate()?;
    cfg.alm.validate()?;
    let rows: Vec<ReplicateRow> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(cfg, i))
        .collect();
    let summary = summarize(&rows, cfg.design.r);
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
        summary,
    })
}

fn rho_header(prefix: &str, r: usize) -> String {
    (1..=r).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Raw per-replicate table. Timing is left out so that re-runs with the
/// same seed give identical bytes.
pub fn raw_csv(rows: &[ReplicateRow], r: usize) -> String {
    let mut out = format!(
        "replicate,seed,status,selected_b,lambda_u,lambda_v,init_lossu,init_lossv,{},lossu,lossv,{},outer_iterations,converged\n",
        rho_header("init_rho", r),
        rho_header("rho", r)
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},\"{}\",{},{},{},{},{},{},{},{},{},{},{}",
            row.replicate,
            row.seed,
            row.status.replace('"', "'"),
            row.selected_b,
            row.lambda_u,
            row.lambda_v,
            row.init_lossu,
            row.init_lossv,
            join(&row.init_rho),
            row.lossu,
            row.lossv,
            join(&row.rho),
            row.outer_iterations,
            row.converged
        );
    }
    out
}

/// One-row table of medians laid out as lossu, lossv and correlations for
/// the initializer and the solver.
pub fn summary_csv(s: &SweepSummary, r: usize) -> String {
    format!(
        "replicates,succeeded,init_lossu,lossu,init_lossv,lossv,{},{},selected_b\n{},{},{},{},{},{},{},{},{}\n",
        rho_header("init_rho", r),
        rho_header("rho", r),
        s.replicates,
        s.succeeded,
        s.init_lossu,
        s.lossu,
        s.init_lossv,
        s.lossv,
        join(&s.init_rho),
        join(&s.rho),
        s.selected_b
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(median(&[f64::NAN, 5.0]), 5.0);
    }

    #[test]
    fn single_replicate_summary_equals_row() {
        let row = ReplicateRow {
            replicate: 0,
            seed: 1,
            status: "ok".into(),
            selected_b: 0.5,
            lambda_u: 0.1,
            lambda_v: 0.1,
            init_lossu: 0.4,
            init_lossv: 0.3,
            init_rho: vec![0.8, 0.7],
            lossu: 0.1,
            lossv: 0.05,
            rho: vec![0.88, 0.78],
            outer_iterations: 12,
            converged: true,
            seconds: 1.0,
        };
        let s = summarize(std::slice::from_ref(&row), 2);
        assert_eq!(s.lossu, row.lossu);
        assert_eq!(s.rho, row.rho);
        assert_eq!(s.init_lossv, row.init_lossv);
        let failed = ReplicateRow::failed(1, 2, 2, "boom".into(), 0.0);
        let s2 = summarize(&[row.clone(), failed], 2);
        assert_eq!(s2.succeeded, 1);
        assert_eq!(s2.lossv, row.lossv);
        assert!(raw_csv(&[row], 2).starts_with("replicate,seed,status"));
    }
}
