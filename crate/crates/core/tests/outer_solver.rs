mod common;

use ascca::alm::{default_init, solve, solve_with_observer, AlmConfig, AlmTermination, InitStrategy, OuterRecord};
use ascca::error::AsccaError;
use ascca::problem::{preprocess, AsccaProblem, DataPair, PreprocessOptions};
use ascca::simulate::{make_truth, sample_canonical_correlations, sample_data, subspace_loss, SimulationDesign};
use common::*;
use nalgebra::DMatrix;

const OPTS: PreprocessOptions = PreprocessOptions { normalize: true, alpha: 0.0 };

fn correlated_data(n: usize, p: usize, q: usize, seed: u64) -> DataPair<f64> {
    let mut g = rng(seed);
    let x = gaussian(n, p, &mut g);
    let mut y = gaussian(n, q, &mut g);
    for j in 0..q.min(p).min(3) {
        let w = [0.9, 0.6, 0.3][j];
        let col = x.column(j) * w + y.column(j) * (1.0 - w * w).sqrt();
        y.set_column(j, &col);
    }
    preprocess(&x, &y, OPTS).unwrap()
}

/// Sum of the top `r` canonical correlations from the generalized
/// eigenproblem `Gxy Gy^{-1} Gyx u = rho^2 Gx u`, reduced with a Cholesky
/// factor of `Gx`.
fn cca_oracle(data: &DataPair<f64>, r: usize) -> f64 {
    let (x, y) = (data.x(), data.y());
    let gx = data.gx().matrix().clone();
    let gy = data.gy().matrix().clone();
    let gxy = x.transpose() * y;
    let l = gx.cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let gyinv = gy.try_inverse().unwrap();
    let m = &linv * &gxy * gyinv * gxy.transpose() * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig.iter().take(r).map(|e| e.max(0.0).sqrt()).sum()
}

#[test]
fn unpenalized_solve_matches_cca_oracle() {
    let data = correlated_data(50, 8, 6, 1);
    let best = cca_oracle(&data, 2);
    let prob = AsccaProblem::new(data, 2, 0.0, 0.0).unwrap();
    let init = default_init(&prob, InitStrategy::Random, 3).unwrap();
    // The objective gap scales like the squared gradient norm, so the
    // default floor of 1e-3 only guarantees about 1e-6.
    let cfg = AlmConfig { eps_min: 1e-4, ..AlmConfig::default() };
    let sol = solve(&prob, &init, &cfg).unwrap();
    assert_eq!(sol.termination, AlmTermination::Residual);
    // With U^T Gx U = V^T Gy V = I the fit is r - tr(U^T X^T Y V).
    assert!((sol.objective - (2.0 - best)).abs() <= 1e-6, "{} vs {}", sol.objective, 2.0 - best);
    let last = sol.history.last().unwrap();
    assert!(last.r1_fro_sq.max(last.r2_fro_sq) <= 1e-8);
    assert!(sol.point.feasibility_residual() <= 1e-9);
}

#[test]
fn penalized_solve_reaches_kkt_tolerance() {
    let data = correlated_data(30, 5, 4, 2);
    let prob = AsccaProblem::new(data, 2, 0.1, 0.1).unwrap();
    let init = default_init(&prob, InitStrategy::Spectral, 0).unwrap();
    let cfg = AlmConfig::default();
    let mut records: Vec<OuterRecord> = Vec::new();
    let sol = solve_with_observer(&prob, &init, &cfg, |r| records.push(r.clone())).unwrap();
    assert_eq!(sol.termination, AlmTermination::Residual);
    let last = records.last().unwrap();
    assert!(last.r1_fro_sq.max(last.r2_fro_sq) <= 1e-8);
    assert!(sol.kkt.feas1 <= 1e-4 && sol.kkt.feas2 <= 1e-4);
    assert!(sol.kkt.stat <= 1e-3, "{:?}", sol.kkt);
    assert_eq!(records.len(), sol.outer_iterations);

    // Penalty bookkeeping replayed from the log.
    for (k, w) in records.windows(2).enumerate() {
        assert!(w[1].rho >= w[0].rho);
        let prev = if k == 0 { (f64::INFINITY, f64::INFINITY) } else { (records[k - 1].r1_inf, records[k - 1].r2_inf) };
        let kept = w[0].r1_inf <= 0.99 * prev.0 && w[0].r2_inf <= 0.99 * prev.1;
        let expect = if kept { w[0].rho } else { w[0].rho * 1.05 };
        assert_eq!(w[1].rho, expect, "outer {k}");
    }
    for r in &records {
        assert_eq!(r.inner_eps, cfg.eps_schedule(r.k));
    }
    assert!(sol.multipliers.l1.iter().chain(sol.multipliers.l2.iter()).all(|v| v.abs() <= 100.0));
}

#[test]
fn identical_blocks_are_perfectly_correlated() {
    let mut g = rng(4);
    let x = gaussian(40, 4, &mut g);
    let data = preprocess(&x, &x, OPTS).unwrap();
    let prob = AsccaProblem::new(data, 2, 0.05, 0.05).unwrap();
    let init = default_init(&prob, InitStrategy::Random, 5).unwrap();
    let sol = solve(&prob, &init, &AlmConfig::default()).unwrap();
    let d = prob.data();
    let corr = sample_canonical_correlations(d.x(), d.y(), sol.u(), sol.v()).unwrap();
    assert!(corr.iter().all(|c| *c >= 0.999), "{corr:?}");
}

#[test]
fn spectral_init_is_consistent_for_large_samples() {
    let design = SimulationDesign { n: 2000, p: 20, q: 20, support: vec![1, 6, 11, 16, 20], ..SimulationDesign::default() };
    let truth = make_truth::<f64>(&design).unwrap();
    let s = sample_data(&truth, 2000, 7).unwrap();
    let data = preprocess(&s.x, &s.y, PreprocessOptions::default()).unwrap();
    let prob = AsccaProblem::new(data, 2, 0.0, 0.0).unwrap();
    let init = default_init(&prob, InitStrategy::Spectral, 0).unwrap();
    assert!(init.feasibility_residual() <= 1e-10);
    let d = prob.data();
    let lu = subspace_loss(&truth.u, &d.x_loadings_to_input(init.u())).unwrap();
    let lv = subspace_loss(&truth.v, &d.y_loadings_to_input(init.v())).unwrap();
    assert!(lu <= 0.2 && lv <= 0.2, "{lu} {lv}");
}

#[test]
fn random_init_is_deterministic_and_feasible() {
    let data = correlated_data(20, 5, 4, 8);
    let prob = AsccaProblem::new(data, 2, 0.0, 0.0).unwrap();
    let a = default_init(&prob, InitStrategy::Random, 9).unwrap();
    let b = default_init(&prob, InitStrategy::Random, 9).unwrap();
    assert_eq!(a.u(), b.u());
    assert_eq!(a.v(), b.v());
    assert!(a.feasibility_residual() <= 1e-10 * 2.0);
}

#[test]
fn infeasible_init_rejected() {
    let data = correlated_data(20, 5, 4, 10);
    let prob = AsccaProblem::new(data, 2, 0.1, 0.1).unwrap();
    let other = AsccaProblem::new(correlated_data(20, 5, 4, 11), 2, 0.1, 0.1).unwrap();
    let wrong = default_init(&other, InitStrategy::Random, 0).unwrap();
    match solve(&prob, &wrong, &AlmConfig::default()) {
        Err(AsccaError::InfeasibleInit(_)) => {}
        other => panic!("expected InfeasibleInit, got {:?}", other.map(|s| s.objective)),
    }
}

#[test]
fn outer_budget_is_respected() {
    let data = correlated_data(30, 5, 4, 12);
    let prob = AsccaProblem::new(data, 2, 0.1, 0.1).unwrap();
    let init = default_init(&prob, InitStrategy::Spectral, 0).unwrap();
    let cfg = AlmConfig { max_outer: 2, outer_tol: 0.0, ..AlmConfig::default() };
    let sol = solve(&prob, &init, &cfg).unwrap();
    assert_eq!(sol.outer_iterations, 2);
    assert_eq!(sol.termination, AlmTermination::MaxOuter);
    assert!(!sol.converged());
}

#[test]
fn single_precision_solve_runs() {
    let data = correlated_data(30, 5, 4, 13);
    let x: DMatrix<f32> = data.x().map(|v| v as f32);
    let y: DMatrix<f32> = data.y().map(|v| v as f32);
    let d32 = preprocess(&x, &y, OPTS).unwrap();
    let prob = AsccaProblem::new(d32, 2, 0.1f32, 0.1f32).unwrap();
    let init = default_init(&prob, InitStrategy::Spectral, 0).unwrap();
    let cfg = AlmConfig::<f32> { max_outer: 30, outer_tol: 1e-6, ..AlmConfig::default() };
    let sol = solve(&prob, &init, &cfg).unwrap();
    assert!(sol.objective.is_finite());
    assert!(sol.point.feasibility_residual() < 1e-4);
}
