//! Global minimum-variance weights with and without a no-short-sale constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::norms::operator_norm;

/// Default KKT tolerance for [`min_var_long_only`].
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default iteration cap for [`min_var_long_only`].
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// `w = Σ⁻¹1 / (1ᵀΣ⁻¹1)`, renormalized so the weights sum to one.
pub fn min_var_unconstrained(sigma_inv: &SymmetricMatrix) -> Result<Vec<f64>> {
    let p = sigma_inv.dim();
    let m = sigma_inv.as_matrix();
    let x: Vec<f64> = (0..p).map(|i| m.row(i).sum()).collect();
    let s: f64 = x.iter().sum();
    if !(s > 1e-12) {
        return Err(Error::NonPositiveNormalizer { value: s });
    }
    Ok(renormalize(x.into_iter().map(|v| v / s).collect()))
}

fn renormalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn objective(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(sigma * w))
}

/// Minimizer of wᵀΣw subject to 1ᵀw = 1 on the index set `free`, other
/// weights held at zero.
fn equality_solve(sigma: &DMatrix<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let n = free.len();
    let sub = DMatrix::from_fn(n, n, |i, j| sigma[(free[i], free[j])]);
    let chol = sub.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "covariance submatrix",
        min_eigenvalue: f64::NAN,
    })?;
    let x = chol.solve(&DVector::from_element(n, 1.0));
    let s = x.sum();
    if !(s > 0.0) {
        return Err(Error::NonPositiveNormalizer { value: s });
    }
    let mut w = DVector::zeros(sigma.nrows());
    for (k, &i) in free.iter().enumerate() {
        w[i] = x[k] / s;
    }
    Ok(w)
}

/// Largest violation of the simplex KKT conditions at a feasible `w`:
/// gradient entries on the support must be equal and those off it no smaller.
pub fn kkt_residual(sigma: &SymmetricMatrix, w: &[f64]) -> f64 {
    let m = sigma.as_matrix();
    let wv = DVector::from_column_slice(w);
    let g = (m * &wv) * 2.0;
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if support.is_empty() {
        return f64::INFINITY;
    }
    let lambda = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let dev = g[i] - lambda;
        if w[i] > 0.0 {
            worst = worst.max(dev.abs());
        } else {
            worst = worst.max(-dev);
        }
    }
    worst
}

fn kkt_scale(sigma: &DMatrix<f64>) -> f64 {
    sigma.diagonal().amax().max(f64::MIN_POSITIVE)
}

/// Primal active-set iterations from a feasible start. Returns the optimum or
/// `None` if the iteration budget runs out.
fn active_set(
    sigma: &DMatrix<f64>,
    start: DVector<f64>,
    tol: f64,
    budget: usize,
) -> Result<Option<DVector<f64>>> {
    let p = sigma.nrows();
    let scale = kkt_scale(sigma);
    let mut x = start;
    let mut fixed: Vec<bool> = x.iter().map(|&v| v <= 0.0).collect();
    for _ in 0..budget {
        let free: Vec<usize> = (0..p).filter(|&i| !fixed[i]).collect();
        let target = equality_solve(sigma, &free)?;
        let d = &target - &x;
        if d.amax() <= 1e-15 {
            let g = (sigma * &x) * 2.0;
            let lambda = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
            let release = (0..p)
                .filter(|&j| fixed[j])
                .map(|j| (j, g[j] - lambda))
                .filter(|&(_, mu)| mu < -tol * scale)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                None => return Ok(Some(x)),
                Some((j, _)) => fixed[j] = false,
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            if d[i] < 0.0 {
                let a = -x[i] / d[i];
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }
        x += d * alpha;
        match blocking {
            Some(i) => {
                x[i] = 0.0;
                fixed[i] = true;
            }
            None => x = target,
        }
    }
    Ok(None)
}

/// Minimizes wᵀΣw over the probability simplex.
///
/// Accelerated projected gradient (step 1/L, L = ‖2Σ‖) locates the support;
/// an active-set refinement then solves the problem on that support exactly.
/// The result is feasible to 1e-10 and satisfies the KKT conditions to
/// `tol` times the largest variance.
pub fn min_var_long_only(sigma: &SymmetricMatrix, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let p = sigma.dim();
    if p == 0 {
        return Err(Error::InvalidParameter("empty covariance matrix".into()));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidParameter(
            "tol must be positive and max_iter at least 1".into(),
        ));
    }
    if p == 1 {
        return Ok(vec![1.0]);
    }
    let m = sigma.as_matrix();
    let scale = kkt_scale(m);
    let lipschitz = 2.0 * operator_norm(sigma);
    if !(lipschitz > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: "covariance",
            min_eigenvalue: 0.0,
        });
    }

    let mut x = DVector::from_element(p, 1.0 / p as f64);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = objective(m, &x);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = (m * &y) * 2.0;
        let step: Vec<f64> = (0..p).map(|i| y[i] - g[i] / lipschitz).collect();
        let x_new = DVector::from_vec(project_simplex(&step));
        let f_new = objective(m, &x_new);
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = (&x_new - &x).amax();
        if f_new > fx {
            // Adaptive restart.
            y = x.clone();
            t = 1.0;
            continue;
        }
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        x = x_new;
        fx = f_new;
        t = t_new;
        if moved <= tol {
            break;
        }
    }

    let polished = active_set(m, x.clone(), tol, 10 * p + 10)?;
    let w = match polished {
        Some(w) => w,
        None => {
            return Err(Error::NotConverged {
                iterations,
                residual: kkt_residual(sigma, x.as_slice()),
            })
        }
    };
    let w = renormalize(w.iter().map(|&v| if v < 1e-12 { 0.0 } else { v }).collect());
    let residual = kkt_residual(sigma, &w);
    if residual > tol * scale {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }
    Ok(w)
}
