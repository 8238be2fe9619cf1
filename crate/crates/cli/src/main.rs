use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clustcov::diagnostics::sparsity_scan;
use clustcov::io::{write_atomic, write_matrix};
use clustcov::portfolio::{backtest, BacktestConfig, Estimator, Scheme};
use clustcov::scod::DEFAULT_CQ;
use clustcov::simulation::config::{ConfigFile, DgpConfig};
use clustcov::simulation::dgp::generate_replication;
use clustcov::simulation::experiment::{cell_seed, EXPERIMENT_CQ};
use clustcov::simulation::{run_experiment, ExperimentSpec, GridCell};
use clustcov::{align, estimate, fit_loadings, Error, Panel, PanelKind};

/// Covariance and precision estimation with observable factors and latent
/// residual clusters.
#[derive(Parser, Debug)]
#[command(name = "clustcov", version)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results do
    /// not depend on this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the three-step estimator and write the covariance bundle.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment from a DGP config.
    Simulate(SimulateArgs),
    /// Rolling-window minimum-variance backtest.
    Backtest(BacktestArgs),
    /// Residual sparsity scan (m_p / p over sub-panel sizes and κ).
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Returns panel CSV (header `date,<series>...`).
    returns: PathBuf,
    /// Factors panel CSV (header `date,<factor>...`).
    factors: PathBuf,
    /// Output directory.
    out_dir: PathBuf,
    /// Ratio-criterion offset δ (floored at 1e-12).
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Truncation fraction c_q of the ratio search.
    #[arg(long = "cq", default_value_t = DEFAULT_CQ)]
    c_q: f64,
    /// Also write the p×p sCOD matrix to `scod.csv`.
    #[arg(long)]
    emit_scod: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// DGP config file (flat `key = value`); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    out_dir: PathBuf,
    /// Replications per grid cell.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Grid cells `T:p:K[:mode]`, comma-separated or repeated. Defaults to the
    /// config's (T, p, K, mode).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<String>,
    /// Base seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Ratio-criterion offset δ (floored at 1e-12).
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Truncation fraction c_q of the ratio search.
    #[arg(long = "cq", default_value_t = EXPERIMENT_CQ)]
    c_q: f64,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    returns: PathBuf,
    factors: PathBuf,
    out_dir: PathBuf,
    /// Training window length in trading days.
    #[arg(long, default_value_t = 504)]
    train_window: usize,
    /// `unconstrained` or `long_only`.
    #[arg(long, default_value = "unconstrained")]
    scheme: String,
    /// `cluster` or `sample`.
    #[arg(long, default_value = "cluster")]
    estimator: String,
    /// Days between re-estimations.
    #[arg(long, default_value_t = 1)]
    rebalance_every: usize,
    /// Inputs are already in percent (skip the ×100 in AV and SD).
    #[arg(long)]
    percent: bool,
    /// Trading days per year.
    #[arg(long, default_value_t = 252.0)]
    annualization: f64,
    /// Ratio-criterion offset δ (floored at 1e-12).
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long = "cq", default_value_t = DEFAULT_CQ)]
    c_q: f64,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    returns: PathBuf,
    factors: PathBuf,
    /// Output CSV with columns p,kappa,ratio.
    out: PathBuf,
    /// κ grid in [0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
    kappas: Vec<f64>,
    /// Sub-panel sizes; defaults to the full panel width.
    #[arg(long = "p-grid", value_delimiter = ',')]
    p_grid: Vec<usize>,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn require_file(path: &Path) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads both panels, dropping return series with gaps, and aligns them on
/// their common dates.
fn load_panels(returns: &Path, factors: &Path) -> Result<(Panel, Panel), Error> {
    require_file(returns)?;
    require_file(factors)?;
    let (r, dropped) = Panel::load_csv_complete_columns(returns)?;
    if !dropped.is_empty() {
        eprintln!(
            "warning: dropped {} series with missing values: {}",
            dropped.len(),
            dropped.join(" ")
        );
    }
    let f = Panel::load_csv(factors, PanelKind::Factors)?;
    let a = align(&r, &f)?;
    Ok((a.returns, a.factors))
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Error> {
    let (returns, factors) = load_panels(&a.returns, &a.factors)?;
    create_dir(&a.out_dir)?;
    let est = estimate(&returns, &factors, a.delta, a.c_q)?;
    let names = returns.names();
    let out = &a.out_dir;
    est.estimate.structured.save_bundle(out, names)?;
    write_matrix(&out.join("sigma.csv"), est.estimate.sigma.as_matrix())?;
    write_matrix(&out.join("precision.csv"), est.estimate.precision.as_matrix())?;
    if a.emit_scod {
        write_matrix(&out.join("scod.csv"), est.clustering.scod.as_matrix())?;
    }
    let part = &est.clustering.partition;
    let sel = &est.clustering.selection;
    let sizes: Vec<String> = part.sizes().iter().map(|s| s.to_string()).collect();
    let summary = format!(
        "series: {}\nobservations: {}\nfactors: {}\nclusters: {}\ncluster_sizes: {}\ngamma: {}\nq_hat: {}\ndelta: {}\nc_q: {}\n",
        returns.width(),
        returns.len(),
        factors.width(),
        part.num_clusters(),
        sizes.join(" "),
        sel.gamma,
        sel.q_hat,
        sel.delta,
        sel.c_q,
    );
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let file = match &a.config {
        Some(path) => {
            require_file(path)?;
            Some(ConfigFile::load(path)?)
        }
        None => None,
    };
    let base = file.unwrap_or_default().to_dgp();
    let cells: Vec<GridCell> = if a.grid.is_empty() {
        vec![GridCell {
            t: base.t,
            p: base.p,
            k: base.k,
            mode: base.mode,
        }]
    } else {
        a.grid.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    if a.reps == 0 {
        return Err(Error::InvalidParameter("--reps must be at least 1".into()));
    }
    create_dir(&a.out_dir)?;
    let mut spec = ExperimentSpec::new(cells.clone(), a.reps);
    spec.calibration = base.calibration.clone();
    spec.seed = a.seed.unwrap_or(base.seed);
    spec.delta = a.delta;
    spec.c_q = a.c_q;
    let result = run_experiment(&spec)?;
    result.save_csv(&a.out_dir.join("experiment.csv"))?;
    for c in &result.cells {
        for (rep, msg) in &c.failures {
            eprintln!(
                "warning: T={} p={} K={} replication {rep} failed: {msg}",
                c.cell.t, c.cell.p, c.cell.k
            );
        }
    }

    if a.reps == 1 {
        for cell in &cells {
            let dgp = DgpConfig {
                p: cell.p,
                k: cell.k,
                t: cell.t,
                mode: cell.mode,
                seed: cell_seed(spec.seed, cell),
                calibration: spec.calibration.clone(),
            }
            .validate()?;
            let sim = generate_replication(&dgp, 0)?;
            let dir = if cells.len() == 1 {
                a.out_dir.clone()
            } else {
                a.out_dir.join(format!(
                    "T{}_p{}_K{}_{}",
                    cell.t,
                    cell.p,
                    cell.k,
                    cell.mode.as_str()
                ))
            };
            create_dir(&dir)?;
            sim.returns.save_csv(&dir.join("returns.csv"))?;
            sim.factors.save_csv(&dir.join("factors.csv"))?;
            sim.truth
                .covariance
                .save_bundle(&dir.join("truth"), sim.returns.names())?;
        }
    }
    print!("{}", result.to_csv());
    Ok(())
}

fn cmd_backtest(a: BacktestArgs) -> Result<(), Error> {
    let config = BacktestConfig {
        train_window: a.train_window,
        rebalance_every: a.rebalance_every,
        estimator: a.estimator.parse::<Estimator>()?,
        scheme: a.scheme.parse::<Scheme>()?,
        delta: a.delta,
        c_q: a.c_q,
        annualization: a.annualization,
        percent_inputs: a.percent,
    };
    config.validate()?;
    let (returns, factors) = load_panels(&a.returns, &a.factors)?;
    create_dir(&a.out_dir)?;
    let report = backtest(&returns, &factors, a.train_window..returns.len(), &config)?;
    report.save(&a.out_dir, returns.names())?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<(), Error> {
    let (returns, factors) = load_panels(&a.returns, &a.factors)?;
    let fit = fit_loadings(&returns, &factors)?;
    let grid = if a.p_grid.is_empty() {
        vec![returns.width()]
    } else {
        a.p_grid.clone()
    };
    let report = sparsity_scan(&fit.residuals, &a.kappas, &grid, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    report.save_csv(&a.out)?;
    Ok(())
}
