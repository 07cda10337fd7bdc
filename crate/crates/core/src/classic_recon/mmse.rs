use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default correlation between adjacent pixels for the AR(1) prior.
pub const DEFAULT_AR1: f64 = 0.95;
/// Condition number above which the inner MMSE matrix is regularized.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutocorrelationSource {
    Empirical { patches: usize },
    Ar1(f64),
}

/// Block autocorrelation `ρ` (`A^2 x A^2`, symmetric PSD).
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrelationModel {
    pub matrix: DMatrix<f64>,
    pub source: AutocorrelationSource,
}

/// `ρ_jk = r^d(j,k)` with `d` the Manhattan distance between pixel positions.
pub fn ar1_autocorrelation(block_size: usize, r: f64) -> AutocorrelationModel {
    let n = block_size * block_size;
    let matrix = DMatrix::from_fn(n, n, |j, k| {
        let (yj, xj) = (j / block_size, j % block_size);
        let (yk, xk) = (k / block_size, k % block_size);
        r.powi((yj.abs_diff(yk) + xj.abs_diff(xk)) as i32)
    });
    AutocorrelationModel { matrix, source: AutocorrelationSource::Ar1(r) }
}

/// Sample covariance of vectorized patches, symmetrized and eigenvalue-floored
/// at zero. Falls back to AR(1) with [`DEFAULT_AR1`] when there are fewer than
/// `A^2` patches.
pub fn estimate_autocorrelation(patches: &[Vec<f64>], block_size: usize) -> Result<AutocorrelationModel> {
    let n = block_size * block_size;
    if patches.len() < n {
        return Ok(ar1_autocorrelation(block_size, DEFAULT_AR1));
    }
    if let Some(p) = patches.iter().find(|p| p.len() != n) {
        return Err(Error::dim(format!("patch of length {} where {n} expected", p.len())));
    }
    let count = patches.len() as f64;
    let mut mean = vec![0.0; n];
    for p in patches {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let centered = DMatrix::from_fn(n, patches.len(), |i, k| patches[k][i] - mean[i]);
    let mut cov = (&centered * centered.transpose()) / count;
    cov = (&cov + cov.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(cov);
    eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    let floored = eig.recompose();
    let matrix = (&floored + floored.transpose()) * 0.5;
    Ok(AutocorrelationModel { matrix, source: AutocorrelationSource::Empirical { patches: patches.len() } })
}

/// Linear MMSE reconstruction matrix and whether Tikhonov jitter was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseMatrix {
    /// `A^2 x m_a`.
    pub matrix: DMatrix<f64>,
    pub jittered: bool,
}

/// `B̂ = ρ Bᵀ (B ρ Bᵀ)⁻¹`. When `B ρ Bᵀ` has condition number above
/// [`MAX_CONDITION`], `1e-10 · trace / m_a` is added to its diagonal.
pub fn mmse_matrix(b: &DMatrix<f64>, rho: &DMatrix<f64>) -> Result<MmseMatrix> {
    let (m, n) = b.shape();
    if rho.shape() != (n, n) {
        return Err(Error::dim(format!("autocorrelation {:?} for a {m}x{n} sensing matrix", rho.shape())));
    }
    let b_rho = b * rho;
    let mut inner = &b_rho * b.transpose();
    inner = (&inner + inner.transpose()) * 0.5;

    let eig = inner.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let jittered = !(lo > 0.0 && hi / lo < MAX_CONDITION);
    if jittered {
        let jitter = 1e-10 * inner.trace() / m as f64;
        let jitter = if jitter > 0.0 { jitter } else { 1e-10 };
        for i in 0..m {
            inner[(i, i)] += jitter;
        }
    }
    // B̂ᵀ = (BρBᵀ)⁻¹ B ρ, using the symmetry of ρ and the inner matrix
    let solved = match inner.clone().cholesky() {
        Some(ch) => ch.solve(&b_rho),
        None => inner
            .lu()
            .solve(&b_rho)
            .ok_or_else(|| Error::Solver { iteration: 0, message: "singular MMSE system".into() })?,
    };
    Ok(MmseMatrix { matrix: solved.transpose(), jittered })
}
