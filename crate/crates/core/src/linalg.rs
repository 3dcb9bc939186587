//! Small dense helpers shared by the sampler and the Newton solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge added to direction covariances: `1e-10 * trace / n`.
pub const COVARIANCE_RIDGE: f64 = 1e-10;
/// Ridge added before symmetric positive definite solves: `1e-12 * trace / n`.
pub const SOLVE_RIDGE: f64 = 1e-12;

fn mean_diag(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1);
    m.trace() / n as f64
}

/// `sigma + 1e-10 * tr(sigma)/n * I`, symmetrized.
pub fn regularize_covariance(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = symmetrize(sigma);
    let ridge = COVARIANCE_RIDGE * mean_diag(&out).abs();
    for i in 0..out.nrows() {
        out[(i, i)] += ridge;
    }
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if !(max_ev.is_finite()) || max_ev <= 0.0 {
        return Err(Error::Numerical("covariance has no positive eigenvalue".into()));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Solves `h * x = g` for symmetric positive definite `h` with a small ridge.
pub fn spd_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = spd_cholesky(h)?;
    Ok(chol.solve(g))
}

pub fn spd_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = spd_cholesky(h)?;
    Ok(symmetrize(&chol.inverse()))
}

fn spd_cholesky(h: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let mut a = symmetrize(h);
    let ridge = SOLVE_RIDGE * mean_diag(&a).abs();
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    a.cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// Sample mean and unbiased sample covariance.
pub fn mean_and_covariance(samples: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples for a covariance, got {m}"
        )));
    }
    let n = samples[0].len();
    let mut mean = DVector::zeros(n);
    for s in samples {
        crate::error::check_dim(n, s.len())?;
        mean += s;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (m - 1) as f64;
    Ok((mean, cov))
}

/// Whether `cov` has full numerical rank relative to its largest eigenvalue.
pub fn is_full_rank(cov: &DMatrix<f64>) -> bool {
    let eig = symmetrize(cov).symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    max.is_finite() && max > 0.0 && min > 1e-13 * max
}
