use nalgebra::{DMatrix, DVector};

use super::dct::Dct2Basis;
use super::mmse::mmse_matrix;
use super::{check_system, ReconConfig, ReconOutcome};
use crate::error::Result;

/// Keeps the `k` largest-magnitude entries (lowest index wins ties), zeroing the rest.
pub fn hard_threshold(v: &mut [f64], k: usize) {
    if k >= v.len() {
        return;
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &order[k..] {
        v[i] = 0.0;
    }
}

/// Two-stage IHT in the 2-D DCT basis: keep `2s` coefficients until the
/// iterates settle, then `s`. Starts from the identity-prior MMSE estimate and
/// steps with `1/‖B‖₂²`.
///
/// Without convergence the lowest-residual second-stage iterate is returned
/// with `converged = false`.
pub fn iht_reconstruct(b: &DMatrix<f64>, y: &[f64], cfg: &ReconConfig) -> Result<ReconOutcome> {
    check_system(b, y)?;
    cfg.validate()?;
    let n = b.ncols();
    let basis = Dct2Basis::for_length(n)?;
    let y = DVector::from_column_slice(y);
    let init = mmse_matrix(b, &DMatrix::identity(n, n))?.matrix;
    let mut x = &init * &y;

    let spectral = b.singular_values().max();
    if spectral == 0.0 {
        let r = y.norm();
        return Ok(ReconOutcome {
            x,
            iterations: 0,
            converged: true,
            initial_residual: r,
            final_residual: r,
            history: vec![r],
        });
    }
    let step = 1.0 / (spectral * spectral);
    let bt = b.transpose();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let stages = [(2 * cfg.sparsity).min(n), cfg.sparsity.min(n)];
    for (stage, &keep) in stages.iter().enumerate() {
        converged = false;
        for _ in 0..cfg.max_iterations {
            let grad_step = &x + (&bt * (&y - b * &x)) * step;
            let mut coeffs = basis.forward_vec(&grad_step);
            hard_threshold(coeffs.as_mut_slice(), keep);
            let next = basis.inverse_vec(&coeffs);
            let change = (&next - &x).norm();
            x = next;
            iterations += 1;
            let residual = (&y - b * &x).norm();
            history.push(residual);
            if stage == 1 && best.as_ref().map_or(true, |(r, _)| residual < *r) {
                best = Some((residual, x.clone()));
            }
            if change <= cfg.tolerance * x.norm() {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        if let Some((_, bx)) = best {
            x = bx;
        }
    }
    let final_residual = (&y - b * &x).norm();
    Ok(ReconOutcome { x, iterations, converged, initial_residual: history[0], final_residual, history })
}
