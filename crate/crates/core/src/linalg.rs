//! Small dense linear-algebra helpers for covariance handling.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Eigenvalues in `[-PSD_TOLERANCE, 0)` are treated as zero.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// A covariance admits a Lebesgue density only above this eigenvalue.
pub const PD_TOLERANCE: f64 = 1e-12;

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "square covariance",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Validates symmetry and positive semidefiniteness; eigenvalues in
/// `[-1e-10, 0)` are accepted.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m)?;
    let min = min_eigenvalue(m);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Returns `L` with `L Lᵀ = Σ`.
///
/// Cholesky when `Σ` is positive definite. Rank-deficient matrices fall back
/// to `V diag(√λ⁺)` from the symmetric eigendecomposition, so a zero
/// covariance yields an exactly zero factor.
pub fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(cov)?;
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Log density of `N(mean, cov)` at `x`, computed without exponentiating.
pub fn normal_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let b = mean.len();
    if x.len() != b {
        return Err(Error::DimensionMismatch {
            context: "density argument",
            expected: b,
            found: x.len(),
        });
    }
    if b == 1 {
        let var = cov[(0, 0)];
        if var <= PD_TOLERANCE {
            return Err(Error::DegenerateCovariance {
                min_eigenvalue: var,
            });
        }
        let r = x[0] - mean[0];
        return Ok(-0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var));
    }
    let min = min_eigenvalue(cov);
    if min <= PD_TOLERANCE {
        return Err(Error::DegenerateCovariance {
            min_eigenvalue: min,
        });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::DegenerateCovariance { min_eigenvalue: min })?;
    let r = x - mean;
    let solved = chol.l().solve_lower_triangular(&r).ok_or(Error::DegenerateCovariance {
        min_eigenvalue: min,
    })?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (b as f64 * (2.0 * PI).ln() + log_det + solved.norm_squared()))
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reconstructs_psd_matrices() {
        let pd = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let l = psd_factor(&pd).unwrap();
        assert!((&l * l.transpose() - &pd).amax() < 1e-12);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&singular).unwrap();
        assert!((&l * l.transpose() - &singular).amax() < 1e-12);

        let zero = DMatrix::zeros(3, 3);
        assert_eq!(psd_factor(&zero).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            psd_factor(&indefinite),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym).is_err());
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clipped() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-11]);
        assert!(check_psd(&m).is_ok());
        assert!(psd_factor(&m).is_ok());
    }

    #[test]
    fn log_density_matches_closed_form() {
        let mean = DVector::from_vec(vec![0.0]);
        let cov = DMatrix::from_element(1, 1, 1.0);
        let v = normal_log_density(&mean, &cov, &DVector::from_vec(vec![0.0])).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);

        // diagonal 2-d density is the product of marginals
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let x = DVector::from_vec(vec![0.3, 0.2]);
        let joint = normal_log_density(&mean, &cov, &x).unwrap();
        let m1 = -0.5 * (2.0 * PI * 2.0f64).ln() - 0.7f64.powi(2) / 4.0;
        let m2 = -0.5 * (2.0 * PI * 0.5f64).ln() - 1.2f64.powi(2) / 1.0;
        assert!((joint - m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_has_no_density() {
        let mean = DVector::from_vec(vec![0.0, 0.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            normal_log_density(&mean, &cov, &mean),
            Err(Error::DegenerateCovariance { .. })
        ));
    }
}
