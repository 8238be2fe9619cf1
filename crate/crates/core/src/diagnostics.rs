//! Residual sparsity diagnostic: m_p = max_i Σ_j |Σ_u,ij|^κ.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::io::{format_f64, write_atomic};
use crate::linalg::SymmetricMatrix;
use crate::rng::{stream_rng, Stream};
use crate::scod::residual_cov;

/// Largest row sum of |Σ_ij|^κ. For κ = 0 each entry counts 1 if it is
/// exactly nonzero.
pub fn m_p(sigma_u: &SymmetricMatrix, kappa: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [0, 1), got {kappa}")));
    }
    let m = sigma_u.as_matrix();
    let term = |x: f64| {
        if kappa == 0.0 {
            if x != 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            x.abs().powf(kappa)
        }
    };
    Ok(m.row_iter()
        .map(|row| row.iter().map(|&x| term(x)).sum::<f64>())
        .fold(0.0, f64::max))
}

/// m̂_p / p for every (p, κ) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub kappas: Vec<f64>,
    pub p_values: Vec<usize>,
    /// Rows follow `p_values`, columns follow `kappas`.
    pub ratios: DMatrix<f64>,
}

impl SparsityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,kappa,ratio\n");
        for (i, p) in self.p_values.iter().enumerate() {
            for (j, k) in self.kappas.iter().enumerate() {
                out.push_str(&format!("{p},{},{}\n", format_f64(*k), format_f64(self.ratios[(i, j)])));
            }
        }
        out
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// For each p′ in `p_grid`, draws p′ of the residual series without
/// replacement (an independent draw per p′), forms Σ̌_u on the sub-panel and
/// evaluates m̂_p′/p′ for every κ.
pub fn sparsity_scan(
    residuals: &DMatrix<f64>,
    kappas: &[f64],
    p_grid: &[usize],
    seed: u64,
) -> Result<SparsityReport> {
    let p = residuals.ncols();
    for &k in kappas {
        if !(0.0..1.0).contains(&k) {
            return Err(Error::InvalidParameter(format!("kappa must lie in [0, 1), got {k}")));
        }
    }
    if let Some(&bad) = p_grid.iter().find(|&&q| q == 0 || q > p) {
        return Err(Error::InvalidParameter(format!(
            "sub-panel size {bad} must lie in 1..={p}"
        )));
    }
    let mut ratios = DMatrix::zeros(p_grid.len(), kappas.len());
    for (i, &q) in p_grid.iter().enumerate() {
        let mut rng = stream_rng(seed, q as u64, Stream::Subsample);
        let mut cols = sample(&mut rng, p, q).into_vec();
        cols.sort_unstable();
        let sub = residuals.select_columns(&cols);
        let s = residual_cov(&sub)?;
        for (j, &k) in kappas.iter().enumerate() {
            ratios[(i, j)] = m_p(&s, k)? / q as f64;
        }
    }
    Ok(SparsityReport {
        kappas: kappas.to_vec(),
        p_values: p_grid.to_vec(),
        ratios,
    })
}
