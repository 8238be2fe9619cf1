//! Panel generation: `y_t = B f_t + A z_t + e_t` with VAR(1) factors and
//! cluster variables.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::assembly::StructuredCovariance;
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::panel::{FactorPanel, Panel, ReturnsPanel};
use crate::partition::ClusterPartition;
use crate::rng::{stream_rng, Stream};
use crate::simulation::config::{DgpConfig, MembershipMode, ValidatedDgp};

/// Cap on Gamma draws when rejection-sampling idiosyncratic volatilities.
pub const REJECTION_CAP: usize = 1_000_000;

/// Cap on multinomial redraws when an imbalanced draw leaves a cluster empty.
pub const MULTINOMIAL_CAP: usize = 10_000;

/// `p_k = ⌈p/K⌉` for the first K−1 clusters, the remainder in the last.
pub fn balanced_sizes(p: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= K <= p, got K = {k}, p = {p}"
        )));
    }
    let head = p.div_ceil(k);
    let used = head * (k - 1);
    if used >= p {
        return Err(Error::InvalidParameter(format!(
            "balanced sizes for p = {p}, K = {k} leave the last cluster empty"
        )));
    }
    let mut sizes = vec![head; k - 1];
    sizes.push(p - used);
    Ok(sizes)
}

/// Cluster proportions 3ι (first ⌈K/3⌉), 2ι (next ⌈K/3⌉) and ι (rest),
/// normalized to sum to one.
pub fn imbalanced_proportions(k: usize) -> Result<Vec<f64>> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!(
            "imbalanced proportions need K >= 3, got {k}"
        )));
    }
    let a = k.div_ceil(3);
    let weights: Vec<f64> = (0..k)
        .map(|i| {
            if i < a {
                3.0
            } else if i < 2 * a {
                2.0
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws cluster sizes from Mult(p; π), redrawing while any cluster is empty.
pub fn imbalanced_sizes<R: Rng + ?Sized>(p: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let pi = imbalanced_proportions(k)?;
    if k > p {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds p = {p}")));
    }
    let dist = WeightedIndex::new(&pi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for _ in 0..MULTINOMIAL_CAP {
        let mut sizes = vec![0usize; k];
        for _ in 0..p {
            sizes[dist.sample(rng)] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            return Ok(sizes);
        }
    }
    Err(Error::RejectionCapExceeded {
        attempts: MULTINOMIAL_CAP,
    })
}

/// Shape α and scale β with αβ = mean and √α·β = sd.
pub fn gamma_params(mean: f64, sd: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && sd > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma mean and sd must be positive, got {mean} and {sd}"
        )));
    }
    Ok(((mean / sd).powi(2), sd * sd / mean))
}

/// Draws `n` Gamma volatilities, keeping only those within `[lo, hi]`.
pub fn sample_idio_sd<R: Rng + ?Sized>(
    n: usize,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (alpha, beta) = gamma_params(mean, sd)?;
    let gamma = Gamma::new(alpha, beta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == REJECTION_CAP {
            return Err(Error::RejectionCapExceeded { attempts });
        }
        attempts += 1;
        let s: f64 = gamma.sample(rng);
        if (lo..=hi).contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Symmetric square root `L` with `L Lᵀ = cov` for a PSD `cov`.
fn psd_sqrt(cov: &SymmetricMatrix) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.as_matrix().clone());
    let mut v = eig.eigenvectors.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    v
}

fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Simulates `x_t = μ + Φ x_{t−1} + ε_t`, ε_t ~ N(0, innov_cov), starting at the
/// stationary mean `(I − Φ)⁻¹μ` and discarding `burn_in` steps. Returns T×d.
pub fn simulate_var1<R: Rng + ?Sized>(
    t: usize,
    mu: &DVector<f64>,
    phi: &DMatrix<f64>,
    innov_cov: &SymmetricMatrix,
    rng: &mut R,
    burn_in: usize,
) -> Result<DMatrix<f64>> {
    let d = mu.len();
    if phi.nrows() != d || phi.ncols() != d || innov_cov.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "VAR(1) parameters",
            expected: d,
            actual: phi.nrows(),
        });
    }
    let i_minus_phi = DMatrix::<f64>::identity(d, d) - phi;
    let mut x = i_minus_phi
        .lu()
        .solve(mu)
        .ok_or_else(|| Error::NotStationary {
            what: "VAR(1) coefficient",
            spectral_radius: 1.0,
        })?;
    let l = psd_sqrt(innov_cov);
    let mut out = DMatrix::zeros(t, d);
    for step in 0..burn_in + t {
        let eps = &l * standard_normal_vec(d, rng);
        x = mu + phi * &x + eps;
        if step >= burn_in {
            out.row_mut(step - burn_in).copy_from(&x.transpose());
        }
    }
    Ok(out)
}

/// Ground truth behind a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// p×r
    pub loadings: DMatrix<f64>,
    pub partition: ClusterPartition,
    /// Idiosyncratic standard deviations σ_i.
    pub idio_sd: Vec<f64>,
    /// T×K cluster-variable path.
    pub z: DMatrix<f64>,
    /// T×p idiosyncratic noise.
    pub e: DMatrix<f64>,
    /// Population decomposition (Σ_f, Σ_z from the calibration, Σ_e = diag(σ_i²)).
    pub covariance: StructuredCovariance,
}

/// A generated panel and the truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub returns: ReturnsPanel,
    pub factors: FactorPanel,
    pub truth: Truth,
}

/// Generates one panel for replication 0 of `config`.
pub fn generate(config: &DgpConfig) -> Result<SimulatedPanel> {
    generate_replication(&config.validate()?, 0)
}

/// Generates replication `rep`; every step draws from its own stream derived
/// from `(config.seed, rep)`.
pub fn generate_replication(v: &ValidatedDgp, rep: u64) -> Result<SimulatedPanel> {
    let cfg = &v.config;
    let cal = &cfg.calibration;
    let (p, k, t, r) = (cfg.p, cfg.k, cfg.t, cal.r());
    let seed = cfg.seed;

    // Step 1: loadings b_i ~ N_r(μ_b, Σ_b).
    let mut rng = stream_rng(seed, rep, Stream::Loadings);
    let lb = psd_sqrt(&cal.sigma_b);
    let mut loadings = DMatrix::zeros(p, r);
    for i in 0..p {
        let b = &cal.mu_b + &lb * standard_normal_vec(r, &mut rng);
        loadings.row_mut(i).copy_from(&b.transpose());
    }

    // Membership.
    let sizes = match cfg.mode {
        MembershipMode::Balanced => balanced_sizes(p, k)?,
        MembershipMode::Imbalanced => {
            imbalanced_sizes(p, k, &mut stream_rng(seed, rep, Stream::Sizes))?
        }
    };
    let partition = ClusterPartition::from_sizes(&sizes)?;

    // Idiosyncratic volatilities.
    let idio_sd = sample_idio_sd(
        p,
        cal.sigma_gamma_mean,
        cal.sigma_gamma_sd,
        cal.sigma_min,
        cal.sigma_max,
        &mut stream_rng(seed, rep, Stream::Sigmas),
    )?;

    // Step 2: e_t ~ N_p(0, Σ_e), drawn row by row.
    let mut rng = stream_rng(seed, rep, Stream::Noise);
    let mut e = DMatrix::zeros(t, p);
    for row in 0..t {
        for i in 0..p {
            let g: f64 = rng.sample(StandardNormal);
            e[(row, i)] = idio_sd[i] * g;
        }
    }

    // Steps 3–4.
    let f = simulate_var1(
        t,
        &cal.mu_f,
        &cal.phi_f,
        &v.innov_f,
        &mut stream_rng(seed, rep, Stream::Factors),
        cal.burn_in,
    )?;
    let z = simulate_var1(
        t,
        &DVector::zeros(k),
        &v.phi_z,
        &v.innov_z,
        &mut stream_rng(seed, rep, Stream::Clusters),
        cal.burn_in,
    )?;

    // Step 5.
    let labels = partition.labels();
    let common = &f * loadings.transpose();
    let y = DMatrix::from_fn(t, p, |row, i| {
        common[(row, i)] + z[(row, labels[i])] + e[(row, i)]
    });

    let covariance = StructuredCovariance::new(
        loadings.clone(),
        cal.sigma_f.clone(),
        partition.clone(),
        v.sigma_z.clone(),
        idio_sd.iter().map(|s| s * s).collect(),
    )?;

    Ok(SimulatedPanel {
        returns: Panel::with_generated_labels("y", y)?,
        factors: Panel::with_generated_labels("f", f)?,
        truth: Truth {
            loadings,
            partition,
            idio_sd,
            z,
            e,
            covariance,
        },
    })
}
