//! Data-generating process parameters.
//!
//! A [`Calibration`] holds everything that does not depend on the panel shape:
//! loading distribution, factor dynamics, cluster-variable dynamics and the
//! idiosyncratic volatility distribution. [`DgpConfig`] pins a calibration to
//! one `(p, K, T, membership mode, seed)` cell.
//!
//! The shipped defaults are artifact-chosen: a five-factor model with
//! diagonal-dominant loading covariance, mildly persistent factors
//! (autoregressive coefficients 0.1–0.3), and Gamma-distributed idiosyncratic
//! volatilities with mean 0.8, standard deviation 0.3, truncated to [0.2, 2.0].
//!
//! # Config file
//!
//! Flat `key = value` lines; `#` starts a comment. Vectors are comma-separated.
//! Matrix-valued keys take a path (relative to the config file) to a
//! headerless CSV matrix.
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `r` | integer | 5 |
//! | `mu_b` | vector (r) | `1.0, 0.3, 0.2, 0.1, 0.1` |
//! | `sigma_b` | matrix file (r×r) | diag(0.09, 0.04, 0.04, 0.02, 0.02) + 0.005 off-diagonal |
//! | `mu_f` | vector (r) | `0.05, 0.02, 0.02, 0.01, 0.01` |
//! | `phi_f` | matrix file (r×r) | diag(0.3, 0.2, 0.1, 0.1, 0.2) |
//! | `sigma_f` | matrix file (r×r) | diag(1.0, 0.5, 0.5, 0.3, 0.3) with correlation 0.1 |
//! | `z_var` | real | 1.5 |
//! | `z_corr` | real | 0.2 |
//! | `z_phi` | real | 0.2 |
//! | `phi_z` | matrix file (K×K) | `z_phi`·I |
//! | `sigma_z` | matrix file (K×K) | `z_var`·((1−`z_corr`)I + `z_corr`·11ᵀ) |
//! | `sigma_mean` | real | 0.8 |
//! | `sigma_sd` | real | 0.3 |
//! | `sigma_min` | real | 0.2 |
//! | `sigma_max` | real | 2.0 |
//! | `burn_in` | integer | 500 |
//! | `p`, `K`, `T` | integer | 200, 6, 500 |
//! | `mode` | `balanced` \| `imbalanced` | balanced |
//! | `seed` | integer | 20240101 |

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::io::read_matrix;
use crate::linalg::{spectral_radius, SymmetricMatrix};

/// How cluster sizes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MembershipMode {
    Balanced,
    Imbalanced,
}

impl MembershipMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MembershipMode::Balanced => "balanced",
            MembershipMode::Imbalanced => "imbalanced",
        }
    }
}

impl std::str::FromStr for MembershipMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "balanced" => Ok(MembershipMode::Balanced),
            "imbalanced" => Ok(MembershipMode::Imbalanced),
            other => Err(Error::InvalidParameter(format!(
                "membership mode must be balanced or imbalanced, got {other:?}"
            ))),
        }
    }
}

/// Shape-independent parameters of the data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub mu_b: DVector<f64>,
    pub sigma_b: SymmetricMatrix,
    pub mu_f: DVector<f64>,
    pub phi_f: DMatrix<f64>,
    pub sigma_f: SymmetricMatrix,
    pub z_var: f64,
    pub z_corr: f64,
    pub z_phi: f64,
    /// Explicit K×K overrides; used only when their size matches K.
    pub phi_z: Option<DMatrix<f64>>,
    pub sigma_z: Option<SymmetricMatrix>,
    pub sigma_gamma_mean: f64,
    pub sigma_gamma_sd: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub burn_in: usize,
}

impl Default for Calibration {
    fn default() -> Self {
        let sigma_b = SymmetricMatrix::from_upper_fn(5, |i, j| {
            if i == j {
                [0.09, 0.04, 0.04, 0.02, 0.02][i]
            } else {
                0.005
            }
        });
        let sd_f = [1.0f64, 0.5, 0.5, 0.3, 0.3].map(f64::sqrt);
        let sigma_f = SymmetricMatrix::from_upper_fn(5, |i, j| {
            let c = if i == j { 1.0 } else { 0.1 };
            c * sd_f[i] * sd_f[j]
        });
        Calibration {
            mu_b: DVector::from_column_slice(&[1.0, 0.3, 0.2, 0.1, 0.1]),
            sigma_b,
            mu_f: DVector::from_column_slice(&[0.05, 0.02, 0.02, 0.01, 0.01]),
            phi_f: DMatrix::from_diagonal(&DVector::from_column_slice(&[0.3, 0.2, 0.1, 0.1, 0.2])),
            sigma_f,
            z_var: 1.5,
            z_corr: 0.2,
            z_phi: 0.2,
            phi_z: None,
            sigma_z: None,
            sigma_gamma_mean: 0.8,
            sigma_gamma_sd: 0.3,
            sigma_min: 0.2,
            sigma_max: 2.0,
            burn_in: 500,
        }
    }
}

impl Calibration {
    pub fn r(&self) -> usize {
        self.mu_b.len()
    }

    /// Φ_z for K clusters.
    pub fn phi_z_for(&self, k: usize) -> DMatrix<f64> {
        match &self.phi_z {
            Some(m) if m.nrows() == k => m.clone(),
            _ => DMatrix::identity(k, k) * self.z_phi,
        }
    }

    /// Σ_z for K clusters.
    pub fn sigma_z_for(&self, k: usize) -> SymmetricMatrix {
        match &self.sigma_z {
            Some(m) if m.dim() == k => m.clone(),
            _ => SymmetricMatrix::from_upper_fn(k, |i, j| {
                if i == j {
                    self.z_var
                } else {
                    self.z_var * self.z_corr
                }
            }),
        }
    }
}

/// A calibration pinned to one panel shape and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub p: usize,
    pub k: usize,
    pub t: usize,
    pub mode: MembershipMode,
    pub seed: u64,
    pub calibration: Calibration,
}

/// Innovation covariances and square roots derived from a validated config.
#[derive(Debug, Clone)]
pub struct ValidatedDgp {
    pub config: DgpConfig,
    pub phi_z: DMatrix<f64>,
    pub sigma_z: SymmetricMatrix,
    /// Σ_f − Φ_fΣ_fΦ_fᵀ after clipping negative eigenvalues to zero.
    pub innov_f: SymmetricMatrix,
    /// Σ_z − Φ_zΣ_zΦ_zᵀ after clipping negative eigenvalues to zero.
    pub innov_z: SymmetricMatrix,
}

/// Tolerance for negative eigenvalues of innovation covariances.
const PSD_TOL: f64 = 1e-10;

impl DgpConfig {
    pub fn new(p: usize, k: usize, t: usize, mode: MembershipMode, seed: u64) -> Self {
        DgpConfig {
            p,
            k,
            t,
            mode,
            seed,
            calibration: Calibration::default(),
        }
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = calibration;
        self
    }

    /// Checks shapes, stationarity and innovation positive semidefiniteness.
    pub fn validate(&self) -> Result<ValidatedDgp> {
        let c = &self.calibration;
        let r = c.r();
        if self.p == 0 || self.k == 0 || self.t == 0 || r == 0 {
            return Err(Error::InvalidParameter("p, K, T and r must be positive".into()));
        }
        if self.k > self.p {
            return Err(Error::InvalidParameter(format!(
                "K = {} exceeds p = {}",
                self.k, self.p
            )));
        }
        let dims = [
            ("sigma_b", c.sigma_b.dim()),
            ("mu_f", c.mu_f.len()),
            ("phi_f", c.phi_f.nrows()),
            ("phi_f", c.phi_f.ncols()),
            ("sigma_f", c.sigma_f.dim()),
        ];
        for (what, d) in dims {
            if d != r {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: r,
                    actual: d,
                });
            }
        }
        if !(c.sigma_min > 0.0 && c.sigma_min < c.sigma_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                c.sigma_min, c.sigma_max
            )));
        }
        if !(c.sigma_gamma_mean > 0.0 && c.sigma_gamma_sd > 0.0) {
            return Err(Error::InvalidParameter(
                "sigma_mean and sigma_sd must be positive".into(),
            ));
        }
        let phi_z = c.phi_z_for(self.k);
        let sigma_z = c.sigma_z_for(self.k);
        let innov_f = innovation_cov(&c.phi_f, &c.sigma_f, "phi_f", "factor innovation covariance")?;
        let innov_z = innovation_cov(&phi_z, &sigma_z, "phi_z", "cluster innovation covariance")?;
        Ok(ValidatedDgp {
            config: self.clone(),
            phi_z,
            sigma_z,
            innov_f,
            innov_z,
        })
    }
}

/// Σ − ΦΣΦᵀ, rejecting nonstationary Φ and eigenvalues below −1e-10, and
/// clipping the remaining small negatives to zero.
pub fn innovation_cov(
    phi: &DMatrix<f64>,
    sigma: &SymmetricMatrix,
    phi_name: &'static str,
    what: &'static str,
) -> Result<SymmetricMatrix> {
    let rho = spectral_radius(phi);
    if !(rho < 1.0) {
        return Err(Error::NotStationary {
            what: phi_name,
            spectral_radius: rho,
        });
    }
    let raw = SymmetricMatrix::from_upper(
        sigma.as_matrix() - phi * sigma.as_matrix() * phi.transpose(),
    );
    let eig = SymmetricEigen::new(raw.as_matrix().clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL {
        return Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: min,
        });
    }
    if min >= 0.0 {
        return Ok(raw);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    Ok(SymmetricMatrix::from_upper(
        v * DMatrix::from_diagonal(&clipped) * v.transpose(),
    ))
}

/// Parsed config file: calibration plus the shape keys that were present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub calibration: Calibration,
    pub p: Option<usize>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub mode: Option<MembershipMode>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    /// Reads the flat key/value format documented at the module level.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                row: n + 1,
                col: 1,
                msg: "expected key = value".into(),
            })?;
            kv.insert(k.trim().to_string(), (n + 1, v.trim().to_string()));
        }

        let bad = |key: &str, row: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            row,
            col: 1,
            msg: format!("{key}: {msg}"),
        };
        let mut cal = Calibration::default();
        let mut out = ConfigFile {
            calibration: cal.clone(),
            p: None,
            k: None,
            t: None,
            mode: None,
            seed: None,
        };
        for (key, (row, val)) in &kv {
            let row = *row;
            let real = || val.parse::<f64>().map_err(|e| bad(key, row, e.to_string()));
            let int = || val.parse::<usize>().map_err(|e| bad(key, row, e.to_string()));
            let vector = || -> Result<DVector<f64>> {
                let v = val
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| bad(key, row, e.to_string()))?;
                Ok(DVector::from_vec(v))
            };
            let matrix = || read_matrix(&base.join(val));
            let sym = || SymmetricMatrix::try_from_dense(matrix()?, 1e-12);
            match key.as_str() {
                "p" => out.p = Some(int()?),
                "K" => out.k = Some(int()?),
                "T" => out.t = Some(int()?),
                "mode" => out.mode = Some(val.parse()?),
                "seed" => out.seed = Some(val.parse().map_err(|_| bad(key, row, "not a u64".into()))?),
                "r" => {
                    let r = int()?;
                    if r != cal.r() && !kv.contains_key("mu_b") {
                        return Err(bad(key, row, "changing r requires mu_b, sigma_b, mu_f, phi_f and sigma_f".into()));
                    }
                }
                "mu_b" => cal.mu_b = vector()?,
                "sigma_b" => cal.sigma_b = sym()?,
                "mu_f" => cal.mu_f = vector()?,
                "phi_f" => cal.phi_f = matrix()?,
                "sigma_f" => cal.sigma_f = sym()?,
                "z_var" => cal.z_var = real()?,
                "z_corr" => cal.z_corr = real()?,
                "z_phi" => cal.z_phi = real()?,
                "phi_z" => cal.phi_z = Some(matrix()?),
                "sigma_z" => cal.sigma_z = Some(sym()?),
                "sigma_mean" => cal.sigma_gamma_mean = real()?,
                "sigma_sd" => cal.sigma_gamma_sd = real()?,
                "sigma_min" => cal.sigma_min = real()?,
                "sigma_max" => cal.sigma_max = real()?,
                "burn_in" => cal.burn_in = int()?,
                other => return Err(bad(other, row, "unknown key".into())),
            }
        }
        out.calibration = cal;
        Ok(out)
    }

    /// Instantiates the calibration at the file's shape keys, falling back to
    /// p = 200, K = 6, T = 500, balanced, seed 20240101.
    pub fn to_dgp(&self) -> DgpConfig {
        DgpConfig {
            p: self.p.unwrap_or(200),
            k: self.k.unwrap_or(6),
            t: self.t.unwrap_or(500),
            mode: self.mode.unwrap_or(MembershipMode::Balanced),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            calibration: self.calibration.clone(),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20240101;
