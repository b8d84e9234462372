use crate::args::{CaseArg, Cli, Command, CvArgs, DataArgs, PreprocessArgs, SimulateArgs, SolveArgs};
use ascca::alm::{default_init, solve_with_observer, AlmConfig, AlmTermination, InitStrategy, OuterRecord};
use ascca::experiment::{raw_csv, run_sweep, summary_csv, SweepConfig};
use ascca::io::{read_matrix_csv, save_matrix_csv};
use ascca::problem::{preprocess, AsccaProblem, DataPair, KktResiduals, PreprocessOptions};
use ascca::select::{cross_validate, CvPlan, CvReport};
use ascca::simulate::{CovKind, SimulationDesign};
use ascca::{AsccaError, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] AsccaError),
    #[error("every replicate failed")]
    AllFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_config_error() => 2,
            _ => 1,
        }
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(AsccaError::InvalidConfig("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| AsccaError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| AsccaError::Io(format!("{}: {e}", cli.out_dir.display())))?;
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Solve(a) => Ok(cmd_solve(a, seed, &cli.out_dir, cli.verbose)?),
        Command::Cv(a) => Ok(cmd_cv(a, seed, &cli.out_dir)?),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, &cli.out_dir, cli.verbose),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| AsccaError::Io(format!("{}: {e}", path.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AsccaError::Io(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn load_data(args: &DataArgs, pre: &PreprocessArgs) -> Result<DataPair<f64>> {
    let x = read_matrix_csv::<f64>(&args.x)?;
    let y = read_matrix_csv::<f64>(&args.y)?;
    if x.data.nrows() != y.data.nrows() {
        return Err(AsccaError::DimensionMismatch {
            context: "input files",
            expected: format!("{} rows in Y to match X", x.data.nrows()),
            found: format!("{} rows", y.data.nrows()),
        });
    }
    preprocess(&x.data, &y.data, pre.options())
}

#[derive(Serialize)]
struct SolveEcho<'a> {
    command: &'static str,
    seed: u64,
    x: &'a Path,
    y: &'a Path,
    r: usize,
    /// `None` when the penalties were chosen by cross-validation.
    lambda_u: Option<f64>,
    lambda_v: Option<f64>,
    init: InitStrategy,
    preprocess: PreprocessOptions,
    alm: &'a AlmConfig<f64>,
    cv: Option<&'a CvPlan>,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config: &'a SolveEcho<'a>,
    n: usize,
    p: usize,
    q: usize,
    r: usize,
    lambda_u: f64,
    lambda_v: f64,
    /// `"flags"` or `"cv"`.
    lambda_source: &'static str,
    selected_b: Option<f64>,
    objective: f64,
    kkt: KktResiduals,
    feasibility_u: f64,
    feasibility_v: f64,
    smoothed_grad_norm: f64,
    rho: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    termination: AlmTermination,
    converged: bool,
    wall_time_secs: f64,
    outputs: Vec<PathBuf>,
    history: &'a [OuterRecord],
}

fn cmd_solve(a: &SolveArgs, seed: u64, out: &Path, verbose: bool) -> Result<()> {
    let given = a.lambdas()?;
    let alm = a.solver.config();
    alm.validate()?;
    let data = load_data(&a.data, &a.preprocess)?;
    let r = a.data.r;
    let plan = a.plan.plan(seed);

    let (lu, lv, cv) = match given {
        Some((lu, lv)) => (lu, lv, None),
        None => {
            let report = cross_validate(&data, r, &plan, &alm)?;
            write_cv_outputs(out, &report)?;
            (report.lambda_u, report.lambda_v, Some(report))
        }
    };
    let echo = SolveEcho {
        command: "solve",
        seed,
        x: &a.data.x,
        y: &a.data.y,
        r,
        lambda_u: given.map(|g| g.0),
        lambda_v: given.map(|g| g.1),
        init: a.init_strategy(),
        preprocess: data.options(),
        alm: &alm,
        cv: cv.as_ref().map(|_| &plan),
    };
    write_json(&out.join("config.json"), &echo)?;

    let (n, p, q) = (data.n(), data.p(), data.q());
    let prob = AsccaProblem::new(data, r, lu, lv)?;
    let init = default_init(&prob, a.init_strategy(), seed)?;
    let sol = solve_with_observer(&prob, &init, &alm, |rec| {
        if verbose {
            if let Ok(line) = serde_json::to_string(rec) {
                eprintln!("{line}");
            }
        }
    })?;
    if !sol.converged() {
        eprintln!(
            "warning: stopped after {} outer iterations without meeting the residual test",
            sol.outer_iterations
        );
    }

    let mut outputs = vec![out.join("U.csv"), out.join("V.csv")];
    save_matrix_csv(&outputs[0], "u", sol.u())?;
    save_matrix_csv(&outputs[1], "v", sol.v())?;
    let u_in = prob.data().x_loadings_to_input(sol.u());
    let v_in = prob.data().y_loadings_to_input(sol.v());
    outputs.push(out.join("U_input.csv"));
    outputs.push(out.join("V_input.csv"));
    save_matrix_csv(&outputs[2], "u", &u_in)?;
    save_matrix_csv(&outputs[3], "v", &v_in)?;
    outputs.push(out.join("config.json"));
    if cv.is_some() {
        outputs.push(out.join("cv_report.json"));
        outputs.push(out.join("cv_scores.csv"));
    }
    outputs.push(out.join("report.json"));

    let report = SolveReport {
        config: &echo,
        n,
        p,
        q,
        r,
        lambda_u: lu,
        lambda_v: lv,
        lambda_source: if cv.is_some() { "cv" } else { "flags" },
        selected_b: cv.as_ref().map(|c| c.selected_b),
        objective: sol.objective,
        kkt: sol.kkt,
        feasibility_u: sol.point.u_part.feasibility_residual(),
        feasibility_v: sol.point.v_part.feasibility_residual(),
        smoothed_grad_norm: sol.smoothed_grad_norm,
        rho: sol.rho,
        outer_iterations: sol.outer_iterations,
        inner_iterations: sol.inner_iterations,
        termination: sol.termination,
        converged: sol.converged(),
        wall_time_secs: sol.wall_time_secs,
        outputs,
        history: &sol.history,
    };
    write_json(&out.join("report.json"), &report)
}

fn write_cv_outputs(out: &Path, report: &CvReport) -> Result<()> {
    write_json(&out.join("cv_report.json"), report)?;
    write_text(&out.join("cv_scores.csv"), &report.to_csv())
}

#[derive(Serialize)]
struct CvEcho<'a> {
    command: &'static str,
    seed: u64,
    x: &'a Path,
    y: &'a Path,
    r: usize,
    preprocess: PreprocessOptions,
    alm: &'a AlmConfig<f64>,
    cv: &'a CvPlan,
}

fn cmd_cv(a: &CvArgs, seed: u64, out: &Path) -> Result<()> {
    let alm = a.solver.config();
    let plan = a.plan.plan(seed);
    plan.validate()?;
    alm.validate()?;
    let data = load_data(&a.data, &a.preprocess)?;
    let echo = CvEcho {
        command: "cv",
        seed,
        x: &a.data.x,
        y: &a.data.y,
        r: a.data.r,
        preprocess: data.options(),
        alm: &alm,
        cv: &plan,
    };
    write_json(&out.join("config.json"), &echo)?;
    let report = cross_validate(&data, a.data.r, &plan, &alm)?;
    write_cv_outputs(out, &report)?;
    println!(
        "selected b = {} (lambda_u = {}, lambda_v = {})",
        report.selected_b, report.lambda_u, report.lambda_v
    );
    Ok(())
}

fn sweep_from_flags(a: &SimulateArgs, seed: u64) -> Result<SweepConfig> {
    let cov = match (a.case, a.sigma) {
        (CaseArg::Identity, None) => CovKind::Identity,
        (CaseArg::Identity, Some(_)) => {
            return Err(AsccaError::InvalidConfig("--sigma does not apply to --case identity".into()))
        }
        (CaseArg::Toeplitz, s) => CovKind::Toeplitz { base: s.unwrap_or(0.3) },
        (CaseArg::Corr, Some(sigma)) => CovKind::Correlated { sigma },
        (CaseArg::Corr, None) => return Err(AsccaError::InvalidConfig("--case corr needs --sigma".into())),
    };
    let base = SimulationDesign::default();
    let design = SimulationDesign {
        n: a.n,
        p: a.p,
        q: a.q,
        r: a.r,
        cov,
        support: a.support.clone().unwrap_or(base.support),
        spectrum: a.spectrum.clone().unwrap_or(base.spectrum),
        seed,
    };
    Ok(SweepConfig {
        design,
        replicates: a.replicates,
        preprocess: a.preprocess.options(),
        cv: a.plan.plan(seed),
        fixed_b: a.b,
        alm: a.solver.config(),
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>, out: &Path, verbose: bool) -> std::result::Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AsccaError::Io(format!("{}: {e}", path.display())))?;
            let mut cfg: SweepConfig = serde_json::from_str(&text)
                .map_err(|e| AsccaError::InvalidConfig(format!("{}: {e}", path.display())))?;
            if let Some(s) = seed {
                cfg.design.seed = s;
                cfg.cv.seed = s;
            }
            cfg
        }
        None => sweep_from_flags(a, seed.unwrap_or(0))?,
    };
    if cfg.replicates == 0 {
        return Err(AsccaError::InvalidConfig("replicates must be at least 1".into()).into());
    }
    write_json(&out.join("config.json"), &cfg)?;
    let result = run_sweep(&cfg)?;
    let r = cfg.design.r;
    write_text(&out.join("replicates.csv"), &raw_csv(&result.rows, r))?;
    write_text(&out.join("summary.csv"), &summary_csv(&result.summary, r))?;
    write_json(&out.join("sweep.json"), &result)?;
    for row in &result.rows {
        if verbose {
            if let Ok(line) = serde_json::to_string(row) {
                eprintln!("{line}");
            }
        }
        if !row.ok() {
            eprintln!("warning: replicate {} failed: {}", row.replicate, row.status);
        }
    }
    let s = &result.summary;
    println!(
        "{} of {} replicates ok; median lossu {} lossv {} rho {:?} (init lossu {} lossv {})",
        s.succeeded, s.replicates, s.lossu, s.lossv, s.rho, s.init_lossu, s.init_lossv
    );
    if s.succeeded == 0 {
        return Err(CliError::AllFailed);
    }
    Ok(())
}
