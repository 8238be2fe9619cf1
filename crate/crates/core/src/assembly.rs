//! Cluster-series extraction, structured covariance assembly, and
//! Sherman–Morrison–Woodbury precision matrices.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::{fit_loadings, FactorFit};
use crate::io;
use crate::linalg::{centered_covariance, SymmetricMatrix};
use crate::panel::{FactorPanel, ReturnsPanel};
use crate::partition::ClusterPartition;
use crate::scod::{run_clustering_pipeline, ClusteringOutcome};

/// Smallest idiosyncratic variance accepted by [`idio_var`].
pub const MIN_IDIO_VAR: f64 = 1e-12;

/// ẑ_t = (ÂᵀÂ)⁻¹Âᵀû_t, i.e. the within-cluster mean of the residuals.
pub fn estimate_cluster_series(
    residuals: &DMatrix<f64>,
    partition: &ClusterPartition,
) -> Result<DMatrix<f64>> {
    if residuals.ncols() != partition.len() {
        return Err(Error::DimensionMismatch {
            what: "residual columns vs partition",
            expected: partition.len(),
            actual: residuals.ncols(),
        });
    }
    let t = residuals.nrows();
    let mut z = DMatrix::zeros(t, partition.num_clusters());
    for (k, group) in partition.groups().iter().enumerate() {
        let n = group.len() as f64;
        for row in 0..t {
            let s: f64 = group.iter().map(|&i| residuals[(row, i)]).sum();
            z[(row, k)] = s / n;
        }
    }
    Ok(z)
}

/// Σ̂_z = T⁻¹ Σ_t ẑ_t ẑ_tᵀ.
pub fn cluster_cov(z_hat: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    crate::scod::residual_cov(z_hat)
}

/// v_i = T⁻¹ Σ_t ê_it². Fails if any v_i falls below [`MIN_IDIO_VAR`].
pub fn idio_var(e_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    let t = e_hat.nrows();
    if t == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    e_hat
        .column_iter()
        .enumerate()
        .map(|(i, c)| {
            let v = c.norm_squared() / t as f64;
            if v < MIN_IDIO_VAR {
                Err(Error::ZeroIdioVar { series: i, value: v })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Centered sample covariance with denominator T-1.
pub fn sample_cov(returns: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    centered_covariance(returns)
}

/// The decomposition Σ = BΣ_fBᵀ + AΣ_zAᵀ + Σ_e.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCovariance {
    /// p×r
    pub loadings: DMatrix<f64>,
    /// r×r
    pub factor_cov: SymmetricMatrix,
    pub partition: ClusterPartition,
    /// K×K
    pub cluster_cov: SymmetricMatrix,
    /// Diagonal of Σ_e, length p.
    pub idio_var: Vec<f64>,
}

impl StructuredCovariance {
    pub fn new(
        loadings: DMatrix<f64>,
        factor_cov: SymmetricMatrix,
        partition: ClusterPartition,
        cluster_cov: SymmetricMatrix,
        idio_var: Vec<f64>,
    ) -> Result<Self> {
        let p = partition.len();
        let check = |what, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual,
                })
            }
        };
        check("loadings rows", p, loadings.nrows())?;
        check("factor covariance", loadings.ncols(), factor_cov.dim())?;
        check("cluster covariance", partition.num_clusters(), cluster_cov.dim())?;
        check("idiosyncratic variances", p, idio_var.len())?;
        if let Some((i, &v)) = idio_var.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::ZeroIdioVar { series: i, value: v });
        }
        Ok(StructuredCovariance {
            loadings,
            factor_cov,
            partition,
            cluster_cov,
            idio_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.partition.len()
    }

    /// Σ_u = AΣ_zAᵀ + Σ_e.
    pub fn sigma_u(&self) -> SymmetricMatrix {
        let labels = self.partition.labels();
        let sz = &self.cluster_cov;
        SymmetricMatrix::from_upper_fn(self.dim(), |i, j| {
            let v = sz[(labels[i], labels[j])];
            if i == j {
                v + self.idio_var[i]
            } else {
                v
            }
        })
    }

    /// Σ = BΣ_fBᵀ + Σ_u.
    pub fn sigma(&self) -> SymmetricMatrix {
        let b = &self.loadings;
        let common = b * self.factor_cov.as_matrix() * b.transpose();
        SymmetricMatrix::from_upper(common + self.sigma_u().into_inner())
    }

    /// Writes `loadings.csv`, `factor_cov.csv`, `partition.csv`,
    /// `cluster_cov.csv` and `idio_var.csv` into `dir`.
    pub fn save_bundle(&self, dir: &Path, names: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_matrix(&dir.join("loadings.csv"), &self.loadings)?;
        io::write_matrix(&dir.join("factor_cov.csv"), self.factor_cov.as_matrix())?;
        self.partition.save_csv(&dir.join("partition.csv"), names)?;
        io::write_matrix(&dir.join("cluster_cov.csv"), self.cluster_cov.as_matrix())?;
        io::write_matrix(
            &dir.join("idio_var.csv"),
            &DMatrix::from_column_slice(self.idio_var.len(), 1, &self.idio_var),
        )
    }

    /// Reads a bundle written by [`StructuredCovariance::save_bundle`].
    pub fn load_bundle(dir: &Path) -> Result<(Vec<String>, Self)> {
        let loadings = io::read_matrix(&dir.join("loadings.csv"))?;
        let factor_cov = SymmetricMatrix::try_from_dense(io::read_matrix(&dir.join("factor_cov.csv"))?, 0.0)?;
        let (names, partition) = ClusterPartition::load_csv(&dir.join("partition.csv"))?;
        let cluster_cov =
            SymmetricMatrix::try_from_dense(io::read_matrix(&dir.join("cluster_cov.csv"))?, 0.0)?;
        let idio = io::read_matrix(&dir.join("idio_var.csv"))?;
        let s = StructuredCovariance::new(
            loadings,
            factor_cov,
            partition,
            cluster_cov,
            idio.iter().copied().collect(),
        )?;
        Ok((names, s))
    }
}

/// Assembled covariance and precision matrices.
#[derive(Debug, Clone)]
pub struct AssembledEstimate {
    pub structured: StructuredCovariance,
    pub sigma: SymmetricMatrix,
    pub sigma_u: SymmetricMatrix,
    pub precision: SymmetricMatrix,
    pub precision_u: SymmetricMatrix,
}

/// Builds Σ̂, Σ̂_u and their inverses. Both inverses come from the Woodbury
/// identity, so only K×K and r×r systems are ever factorized:
///
/// Σ_u⁻¹ = Σ_e⁻¹ − Σ_e⁻¹A(Σ_z⁻¹ + AᵀΣ_e⁻¹A)⁻¹AᵀΣ_e⁻¹
/// Σ⁻¹  = Σ_u⁻¹ − Σ_u⁻¹B(Σ_f⁻¹ + BᵀΣ_u⁻¹B)⁻¹BᵀΣ_u⁻¹
pub fn assemble(structured: StructuredCovariance) -> Result<AssembledEstimate> {
    let precision_u = precision_u(&structured)?;
    let b = &structured.loadings;
    let sf_inv = structured.factor_cov.spd_inverse("factor covariance")?;
    let w = precision_u.as_matrix() * b;
    let inner = SymmetricMatrix::from_upper(sf_inv.into_inner() + b.transpose() * &w);
    let inner_chol = inner
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "factor Woodbury system",
            min_eigenvalue: inner.min_eigenvalue(),
        })?;
    let correction = &w * inner_chol.solve(&w.transpose());
    let precision = SymmetricMatrix::from_upper(precision_u.as_matrix() - correction);

    Ok(AssembledEstimate {
        sigma: structured.sigma(),
        sigma_u: structured.sigma_u(),
        precision,
        precision_u,
        structured,
    })
}

fn precision_u(s: &StructuredCovariance) -> Result<SymmetricMatrix> {
    let sz_inv = s.cluster_cov.spd_inverse("cluster covariance")?;
    let labels = s.partition.labels();
    let inv_e: Vec<f64> = s.idio_var.iter().map(|v| 1.0 / v).collect();
    // Σ_z⁻¹ + AᵀΣ_e⁻¹A: AᵀΣ_e⁻¹A is diagonal with the per-cluster sums of 1/e_i.
    let mut inner = sz_inv.into_inner();
    for (i, &k) in labels.iter().enumerate() {
        inner[(k, k)] += inv_e[i];
    }
    let inner = SymmetricMatrix::from_upper(inner);
    let m = inner.spd_inverse("cluster Woodbury system")?;
    Ok(SymmetricMatrix::from_upper_fn(s.dim(), |i, j| {
        let corr = inv_e[i] * inv_e[j] * m[(labels[i], labels[j])];
        if i == j {
            inv_e[i] - corr
        } else {
            -corr
        }
    }))
}

/// All intermediate products of the three-step estimator.
#[derive(Debug, Clone)]
pub struct ClusterEstimate {
    pub fit: FactorFit,
    pub clustering: ClusteringOutcome,
    /// T×K̂ estimated cluster series.
    pub cluster_series: DMatrix<f64>,
    pub estimate: AssembledEstimate,
}

/// Runs factor regression, residual clustering and covariance assembly on
/// aligned panels.
pub fn estimate(
    returns: &ReturnsPanel,
    factors: &FactorPanel,
    delta: f64,
    c_q: f64,
) -> Result<ClusterEstimate> {
    let fit = fit_loadings(returns, factors)?;
    estimate_from_fit(fit, delta, c_q)
}

/// Steps 2–3 given an existing factor fit.
pub fn estimate_from_fit(fit: FactorFit, delta: f64, c_q: f64) -> Result<ClusterEstimate> {
    let clustering = run_clustering_pipeline(&fit.residuals, delta, c_q)?;
    let z = estimate_cluster_series(&fit.residuals, &clustering.partition)?;
    let sz = cluster_cov(&z)?;
    let e_hat = &fit.residuals - &z * clustering.membership.transpose();
    let ev = idio_var(&e_hat)?;
    let structured = StructuredCovariance::new(
        fit.loadings.clone(),
        fit.factor_cov.clone(),
        clustering.partition.clone(),
        sz,
        ev,
    )?;
    let estimate = assemble(structured)?;
    Ok(ClusterEstimate {
        fit,
        clustering,
        cluster_series: z,
        estimate,
    })
}
