//! Matrix losses used to score covariance and precision estimates.

use crate::error::Result;
use crate::linalg::SymmetricMatrix;

/// Largest absolute entry.
pub fn max_norm(m: &SymmetricMatrix) -> f64 {
    m.as_matrix().amax()
}

/// Spectral norm of a symmetric matrix: the largest |eigenvalue|.
pub fn operator_norm(m: &SymmetricMatrix) -> f64 {
    let ev = m.eigenvalues();
    match (ev.first(), ev.last()) {
        (Some(a), Some(b)) => a.abs().max(b.abs()),
        _ => 0.0,
    }
}

pub fn frobenius_norm(m: &SymmetricMatrix) -> f64 {
    m.as_matrix().norm()
}

/// `p^{-1/2} ‖ref^{-1/2} M ref^{-1/2}‖_F`, with `ref^{-1/2}` cached so one
/// reference matrix can score many estimates.
#[derive(Debug, Clone)]
pub struct WeightedQuadraticNorm {
    inv_sqrt: SymmetricMatrix,
}

impl WeightedQuadraticNorm {
    /// Fails if `reference` has an eigenvalue at or below 1e-10.
    pub fn new(reference: &SymmetricMatrix) -> Result<Self> {
        Ok(WeightedQuadraticNorm {
            inv_sqrt: reference.inv_sqrt("reference matrix")?,
        })
    }

    pub fn eval(&self, m: &SymmetricMatrix) -> f64 {
        let r = self.inv_sqrt.as_matrix();
        let p = r.nrows() as f64;
        let inner = r * m.as_matrix() * r;
        inner.norm() / p.sqrt()
    }
}

/// One-shot form of [`WeightedQuadraticNorm`].
pub fn weighted_quadratic_norm(m: &SymmetricMatrix, reference: &SymmetricMatrix) -> Result<f64> {
    Ok(WeightedQuadraticNorm::new(reference)?.eval(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identity_norms() {
        let i = SymmetricMatrix::identity(4);
        assert_eq!(max_norm(&i), 1.0);
        assert!((operator_norm(&i) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn operator_norm_takes_absolute_value() {
        let d = SymmetricMatrix::from_diagonal(&[1.0, -3.0]);
        assert!((operator_norm(&d) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_norm_of_scaled_identity() {
        for p in [1, 3, 7] {
            let m = SymmetricMatrix::identity(p).scaled(2.0);
            let v = weighted_quadratic_norm(&m, &SymmetricMatrix::identity(p)).unwrap();
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_norm_of_reference_is_one() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.0]);
        let r = SymmetricMatrix::from_upper(a);
        assert!((weighted_quadratic_norm(&r, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_rejects_non_pd_reference() {
        let r = SymmetricMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(weighted_quadratic_norm(&r, &r).is_err());
    }
}
