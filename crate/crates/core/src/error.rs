use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation, simulation, and backtest pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {col}: {msg}")]
    Parse {
        path: PathBuf,
        /// 1-based line number in the file (header is line 1).
        row: usize,
        /// 1-based column number.
        col: usize,
        msg: String,
    },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("panels share fewer than 2 time labels ({shared} in common)")]
    EmptyIntersection { shared: usize },

    #[error(
        "factor second-moment matrix is singular (condition number {condition:.3e}); \
         near-collinear combination: {combination}"
    )]
    SingularFactorMoment { condition: f64, combination: String },

    #[error(
        "degenerate residuals: nonpositive sCOD denominator for series ({i}, {j}) with reference {l}"
    )]
    DegenerateScod { i: usize, j: usize, l: usize },

    #[error("{what} is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("{what} is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("idiosyncratic variance of series {series} is {value:.3e}, below 1e-12")]
    ZeroIdioVar { series: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} is not stationary (spectral radius {spectral_radius:.6})")]
    NotStationary {
        what: &'static str,
        spectral_radius: f64,
    },

    #[error("rejection sampler exceeded {attempts} attempts")]
    RejectionCapExceeded { attempts: usize },

    #[error("portfolio normalizer 1ᵀΣ⁻¹1 = {value:.3e} is not positive; the precision matrix is not positive definite")]
    NonPositiveNormalizer { value: f64 },

    #[error("long-only solver did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("estimation window ending {end_date} failed: {source}")]
    Window {
        end_date: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by files or arguments rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidPanel(_) | Error::InvalidParameter(_)
        )
    }
}
