//! Dense symmetric matrices and the small factorizations shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor below which a matrix is treated as not positive definite.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Largest condition number accepted before an r×r or K×K solve.
pub const MAX_CONDITION: f64 = 1e12;

/// Dense real symmetric matrix. Only the upper triangle is ever computed; the
/// lower triangle is mirrored so `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Builds from a closure evaluated on `i <= j` only.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymmetricMatrix(m)
    }

    /// Copies the upper triangle of `m` onto the lower triangle.
    pub fn from_upper(mut m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                m[(j, i)] = m[(i, j)];
            }
        }
        SymmetricMatrix(m)
    }

    /// Accepts `m` if it is symmetric to within `rel_tol` of its max-abs entry.
    pub fn try_from_dense(m: DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                what: "symmetric matrix",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_upper(m))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymmetricMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Self {
        SymmetricMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Self {
        SymmetricMatrix(&self.0 - &other.0)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(f64::NAN)
    }

    /// `ref^{-1/2}` from the symmetric eigendecomposition. Fails rather than
    /// clipping when an eigenvalue is at or below [`EIGEN_FLOOR`].
    pub fn inv_sqrt(&self, what: &'static str) -> Result<SymmetricMatrix> {
        let eig = SymmetricEigen::new(self.0.clone());
        let min = eig.eigenvalues.min();
        if !(min > EIGEN_FLOOR) {
            return Err(Error::NotPositiveDefinite {
                what,
                min_eigenvalue: min,
            });
        }
        let scale = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let v = &eig.eigenvectors;
        let mut vs = v.clone();
        for (j, s) in scale.iter().enumerate() {
            vs.column_mut(j).scale_mut(*s);
        }
        Ok(Self::from_upper(vs * v.transpose()))
    }

    /// Inverse of a small SPD matrix via Cholesky, guarded by the condition number.
    pub fn spd_inverse(&self, what: &'static str) -> Result<SymmetricMatrix> {
        check_condition(self, what)?;
        let chol = self
            .0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what,
                min_eigenvalue: self.min_eigenvalue(),
            })?;
        Ok(Self::from_upper(chol.inverse()))
    }
}

impl std::ops::Index<(usize, usize)> for SymmetricMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Rejects matrices whose eigenvalues are nonpositive or whose condition
/// number exceeds [`MAX_CONDITION`].
pub fn check_condition(m: &SymmetricMatrix, what: &'static str) -> Result<()> {
    let ev = m.eigenvalues();
    let (min, max) = match (ev.first(), ev.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Ok(()),
    };
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: min,
        });
    }
    let cond = max / min;
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned {
            what,
            condition: cond,
        });
    }
    Ok(())
}

/// `T^{-1} Σ_t x_t x_tᵀ` for the rows `x_t` of a T×d matrix (no centering).
pub fn uncentered_second_moment(x: &DMatrix<f64>) -> SymmetricMatrix {
    let t = x.nrows() as f64;
    let d = x.ncols();
    SymmetricMatrix::from_upper_fn(d, |i, j| x.column(i).dot(&x.column(j)) / t)
}

/// `(T-1)^{-1} Σ_t (x_t - x̄)(x_t - x̄)ᵀ`.
pub fn centered_covariance(x: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let t = x.nrows();
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let denom = (t - 1) as f64;
    Ok(SymmetricMatrix::from_upper_fn(x.ncols(), |i, j| {
        c.column(i).dot(&c.column(j)) / denom
    }))
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
