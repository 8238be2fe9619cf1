//! Monte Carlo experiments comparing the cluster estimator with the sample
//! covariance over a grid of panel shapes.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::assembly::{assemble, estimate_from_fit, sample_cov};
use crate::error::{Error, Result};
use crate::factor::fit_loadings;
use crate::io::{format_f64, write_atomic};
use crate::linalg::{SymmetricMatrix, EIGEN_FLOOR};
use crate::norms::{max_norm, operator_norm, WeightedQuadraticNorm};
use crate::partition::adjusted_rand_index;
use crate::simulation::config::{Calibration, DgpConfig, MembershipMode, ValidatedDgp, DEFAULT_SEED};
use crate::simulation::dgp::generate_replication;

/// Truncation fraction used by experiments unless overridden. With K balanced
/// clusters about (1 − 1/K) of all pairs lie across clusters, so the boundary
/// rank sits above 0.75·Q as soon as K ≥ 4.
pub const EXPERIMENT_CQ: f64 = 0.95;

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub t: usize,
    pub p: usize,
    pub k: usize,
    pub mode: MembershipMode,
}

impl std::str::FromStr for GridCell {
    type Err = Error;

    /// Parses `T:p:K` or `T:p:K:mode`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || Error::InvalidParameter(format!("grid cell must be T:p:K[:mode], got {s:?}"));
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let num = |x: &str| x.parse::<usize>().map_err(|_| bad());
        Ok(GridCell {
            t: num(parts[0])?,
            p: num(parts[1])?,
            k: num(parts[2])?,
            mode: match parts.get(3) {
                Some(m) => m.parse()?,
                None => MembershipMode::Balanced,
            },
        })
    }
}

/// What to run: a calibration, the grid and the estimator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub calibration: Calibration,
    pub cells: Vec<GridCell>,
    pub n_reps: usize,
    pub seed: u64,
    pub delta: f64,
    pub c_q: f64,
}

impl ExperimentSpec {
    pub fn new(cells: Vec<GridCell>, n_reps: usize) -> Self {
        ExperimentSpec {
            calibration: Calibration::default(),
            cells,
            n_reps,
            seed: DEFAULT_SEED,
            delta: 0.0,
            c_q: EXPERIMENT_CQ,
        }
    }
}

/// Losses of one estimator on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    /// ‖Σ̂ − Σ‖_Σ
    pub sigma: f64,
    /// ‖Σ̂ − Σ‖_max
    pub max: f64,
    /// ‖Σ̂⁻¹ − Σ⁻¹‖ (operator); `None` when Σ̂ is singular.
    pub precision: Option<f64>,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    pub k_hat: usize,
    pub ari: f64,
    pub cluster: Losses,
    pub sample: Losses,
}

/// All replications of one cell. Failed replications keep their error text.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: GridCell,
    pub outcomes: Vec<RepOutcome>,
    pub failures: Vec<(usize, String)>,
}

impl CellResult {
    pub fn n_reps(&self) -> usize {
        self.outcomes.len() + self.failures.len()
    }

    /// Share of all replications (failures count as misses) with K̂ = K.
    pub fn freq_k_correct(&self) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.k_hat == self.cell.k).count();
        hits as f64 / self.n_reps() as f64
    }

    /// Mean ARI over successful replications.
    pub fn mean_ari(&self) -> Option<f64> {
        mean_se(self.outcomes.iter().map(|o| o.ari)).map(|(m, _)| m)
    }
}

/// Full experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

pub const TABLE_HEADER: &str = "T,p,K,mode,estimator,n_reps,n_failed,freq_k_correct,mean_ari,\
loss_sigma_mean,loss_sigma_se,loss_max_mean,loss_max_se,loss_precision_mean,loss_precision_se,n_singular";

fn mean_se(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    Some((mean, se))
}

fn fmt_opt(v: Option<f64>, missing: &str) -> String {
    match v {
        Some(x) if x.is_finite() => format_f64(x),
        _ => missing.to_string(),
    }
}

impl ExperimentResult {
    /// One row per (cell, estimator). Precision losses print `---` when any
    /// replication had a singular estimate; clustering columns are `NA` for
    /// the sample estimator.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        out.push('\n');
        for c in &self.cells {
            for estimator in ["cluster", "sample"] {
                let losses: Vec<Losses> = c
                    .outcomes
                    .iter()
                    .map(|o| if estimator == "cluster" { o.cluster } else { o.sample })
                    .collect();
                let n_singular = losses.iter().filter(|l| l.precision.is_none()).count();
                let sigma = mean_se(losses.iter().map(|l| l.sigma));
                let max = mean_se(losses.iter().map(|l| l.max));
                let prec = if n_singular == 0 {
                    mean_se(losses.iter().filter_map(|l| l.precision))
                } else {
                    None
                };
                let (freq, ari) = if estimator == "cluster" {
                    (format_f64(c.freq_k_correct()), fmt_opt(c.mean_ari(), "NA"))
                } else {
                    ("NA".to_string(), "NA".to_string())
                };
                let row = [
                    c.cell.t.to_string(),
                    c.cell.p.to_string(),
                    c.cell.k.to_string(),
                    c.cell.mode.as_str().to_string(),
                    estimator.to_string(),
                    c.n_reps().to_string(),
                    c.failures.len().to_string(),
                    freq,
                    ari,
                    fmt_opt(sigma.map(|s| s.0), "NA"),
                    fmt_opt(sigma.map(|s| s.1), "NA"),
                    fmt_opt(max.map(|s| s.0), "NA"),
                    fmt_opt(max.map(|s| s.1), "NA"),
                    fmt_opt(prec.map(|s| s.0), "---"),
                    fmt_opt(prec.map(|s| s.1), "---"),
                    n_singular.to_string(),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Inverse through an eigendecomposition, or `None` when the smallest
/// eigenvalue is at or below the floor.
fn precision_or_singular(m: &SymmetricMatrix) -> Option<SymmetricMatrix> {
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    if !(eig.eigenvalues.min() > EIGEN_FLOOR) {
        return None;
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / l);
    }
    Some(SymmetricMatrix::from_upper(scaled * v.transpose()))
}

fn losses(
    est: &SymmetricMatrix,
    est_precision: Option<&SymmetricMatrix>,
    truth: &SymmetricMatrix,
    truth_precision: &SymmetricMatrix,
    weighted: &WeightedQuadraticNorm,
) -> Losses {
    let diff = est.sub(truth);
    Losses {
        sigma: weighted.eval(&diff),
        max: max_norm(&diff),
        precision: est_precision.map(|pr| operator_norm(&pr.sub(truth_precision))),
    }
}

/// Runs replication `rep` of `dgp`.
pub fn run_replication(
    dgp: &ValidatedDgp,
    rep: usize,
    delta: f64,
    c_q: f64,
) -> Result<RepOutcome> {
    let sim = generate_replication(dgp, rep as u64)?;
    let truth = assemble(sim.truth.covariance.clone())?;
    let weighted = WeightedQuadraticNorm::new(&truth.sigma)?;

    let fit = fit_loadings(&sim.returns, &sim.factors)?;
    let est = estimate_from_fit(fit, delta, c_q)?;
    let partition = &est.clustering.partition;
    let ari = adjusted_rand_index(partition, &sim.truth.partition)?;
    let cluster = losses(
        &est.estimate.sigma,
        Some(&est.estimate.precision),
        &truth.sigma,
        &truth.precision,
        &weighted,
    );

    let s = sample_cov(sim.returns.values())?;
    let s_inv = precision_or_singular(&s);
    let sample = losses(&s, s_inv.as_ref(), &truth.sigma, &truth.precision, &weighted);

    Ok(RepOutcome {
        rep,
        k_hat: partition.num_clusters(),
        ari,
        cluster,
        sample,
    })
}

/// Runs every cell for `n_reps` replications. Replications run in parallel on
/// the current rayon pool; results are gathered in replication order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be at least 1".into()));
    }
    let mut cells = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let dgp = DgpConfig {
            p: cell.p,
            k: cell.k,
            t: cell.t,
            mode: cell.mode,
            seed: cell_seed(spec.seed, cell),
            calibration: spec.calibration.clone(),
        }
        .validate()?;
        let results: Vec<Result<RepOutcome>> = (0..spec.n_reps)
            .into_par_iter()
            .map(|rep| run_replication(&dgp, rep, spec.delta, spec.c_q))
            .collect();
        let mut outcomes = Vec::new();
        let mut failures = Vec::new();
        for (rep, r) in results.into_iter().enumerate() {
            match r {
                Ok(o) => outcomes.push(o),
                Err(e) => failures.push((rep, e.to_string())),
            }
        }
        cells.push(CellResult {
            cell: *cell,
            outcomes,
            failures,
        });
    }
    Ok(ExperimentResult { cells })
}

/// Each cell draws from its own seed so adding cells never changes others.
pub fn cell_seed(seed: u64, cell: &GridCell) -> u64 {
    crate::rng::derive_seed(
        seed,
        &[cell.t as u64, cell.p as u64, cell.k as u64, cell.mode as u64],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cell_parsing() {
        let c: GridCell = "300:60:3".parse().unwrap();
        assert_eq!((c.t, c.p, c.k, c.mode), (300, 60, 3, MembershipMode::Balanced));
        let c: GridCell = "300:60:3:imbalanced".parse().unwrap();
        assert_eq!(c.mode, MembershipMode::Imbalanced);
        assert!("300:60".parse::<GridCell>().is_err());
        assert!("a:b:c".parse::<GridCell>().is_err());
    }

    #[test]
    fn mean_se_small_cases() {
        assert_eq!(mean_se(std::iter::empty()), None);
        let (m, se) = mean_se([1.0, 3.0].into_iter()).unwrap();
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_precision_detected() {
        assert!(precision_or_singular(&SymmetricMatrix::from_diagonal(&[1.0, 0.0])).is_none());
        let inv = precision_or_singular(&SymmetricMatrix::from_diagonal(&[2.0, 4.0])).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15 && (inv[(1, 1)] - 0.25).abs() < 1e-15);
    }
}
