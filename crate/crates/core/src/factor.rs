//! Least-squares loadings on observable factors.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{centered_covariance, SymmetricMatrix, MAX_CONDITION};
use crate::panel::{FactorPanel, ReturnsPanel};

/// Result of regressing every series on the factors (no intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFit {
    /// p×r loadings; row i is `b̂_i`.
    pub loadings: DMatrix<f64>,
    /// r×r centered sample covariance of the factors (denominator T-1).
    pub factor_cov: SymmetricMatrix,
    /// T×p residuals `û_it = y_it - b̂_iᵀ f_t`.
    pub residuals: DMatrix<f64>,
}

/// Regresses each column of `returns` on the factor columns through the origin.
///
/// The r×r Gram matrix is factorized once and reused for every series; the
/// per-series work is independent and runs in parallel without changing the
/// summation order inside a series.
pub fn fit_loadings(returns: &ReturnsPanel, factors: &FactorPanel) -> Result<FactorFit> {
    if returns.times() != factors.times() {
        return Err(Error::InvalidPanel(
            "returns and factors must share the same time index; align them first".into(),
        ));
    }
    let loadings_and_resid = regress(returns.values(), factors.values(), factors.names())?;
    Ok(FactorFit {
        loadings: loadings_and_resid.0,
        factor_cov: sample_factor_cov(factors)?,
        residuals: loadings_and_resid.1,
    })
}

/// Matrix-level regression of the columns of `y` (T×p) on `f` (T×r).
pub fn regress(
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
    factor_names: &[String],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = y.nrows();
    let r = f.ncols();
    if f.nrows() != t {
        return Err(Error::DimensionMismatch {
            what: "factor rows",
            expected: t,
            actual: f.nrows(),
        });
    }
    if t <= r {
        return Err(Error::InsufficientData {
            required: r + 1,
            actual: t,
        });
    }
    let gram = SymmetricMatrix::from_upper_fn(r, |i, j| f.column(i).dot(&f.column(j)) / t as f64);
    guard_factor_moment(&gram, factor_names)?;
    let chol = gram
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| singular_report(&gram, factor_names))?;

    let p = y.ncols();
    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|i| {
            let yi = y.column(i);
            let rhs = f.tr_mul(&yi) / t as f64;
            let b = chol.solve(&rhs);
            let fitted = f * &b;
            let resid: Vec<f64> = yi.iter().zip(fitted.iter()).map(|(a, c)| a - c).collect();
            (b.iter().copied().collect(), resid)
        })
        .collect();

    let mut loadings = DMatrix::zeros(p, r);
    let mut residuals = DMatrix::zeros(t, p);
    for (i, (b, u)) in columns.into_iter().enumerate() {
        for (k, v) in b.into_iter().enumerate() {
            loadings[(i, k)] = v;
        }
        residuals.column_mut(i).copy_from_slice(&u);
    }
    Ok((loadings, residuals))
}

/// Σ̂_f = (T-1)⁻¹ Σ_t (f_t - f̄)(f_t - f̄)ᵀ.
pub fn sample_factor_cov(factors: &FactorPanel) -> Result<SymmetricMatrix> {
    centered_covariance(factors.values())
}

fn guard_factor_moment(gram: &SymmetricMatrix, names: &[String]) -> Result<()> {
    let ev = gram.eigenvalues();
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    if !(min > 0.0) || max / min >= MAX_CONDITION {
        return Err(singular_report(gram, names));
    }
    Ok(())
}

/// Describes the eigenvector of the smallest eigenvalue, which names the
/// near-collinear factor combination.
fn singular_report(gram: &SymmetricMatrix, names: &[String]) -> Error {
    let eig = SymmetricEigen::new(gram.as_matrix().clone());
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("r >= 1");
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("r >= 1");
    let min = eig.eigenvalues[imin];
    let max = eig.eigenvalues[imax];
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let v = eig.eigenvectors.column(imin);
    let combination = v
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-3)
        .map(|(k, c)| {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("f{}", k + 1));
            format!("{c:+.3}*{name}")
        })
        .collect::<Vec<_>>()
        .join(" ");
    Error::SingularFactorMoment {
        condition,
        combination,
    }
}
