use nalgebra::{DMatrix, DVector};

use super::dct::Dct2Basis;
use super::{check_system, ReconConfig, ReconOutcome};
use crate::error::{Error, Result};

/// Smoothing constant in the IRLS weights.
pub const IRLS_EPSILON: f64 = 1e-6;

/// `½‖Bx − y‖² + λ‖Ψx‖₁` with `Ψ` the DCT of `basis`.
pub fn l1_objective(b: &DMatrix<f64>, y: &[f64], lambda: f64, basis: &Dct2Basis, x: &[f64]) -> Result<f64> {
    check_system(b, y)?;
    let x = DVector::from_column_slice(x);
    let r = b * &x - DVector::from_column_slice(y);
    let u = basis.forward(x.as_slice())?;
    Ok(0.5 * r.norm_squared() + lambda * u.iter().map(|v| v.abs()).sum::<f64>())
}

/// The objective IRLS decreases monotonically: `|u|` replaced by `sqrt(u² + ε²)`.
pub fn smoothed_objective(
    b: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    psi: &DMatrix<f64>,
    x: &DVector<f64>,
) -> f64 {
    let r = b * x - y;
    let u = psi * x;
    0.5 * r.norm_squared() + lambda * u.iter().map(|v| (v * v + IRLS_EPSILON * IRLS_EPSILON).sqrt()).sum::<f64>()
}

/// Minimizes `½‖Bx − y‖² + λ‖Ψx‖₁` by iteratively solving
/// `(BᵀB + λΨᵀWΨ)x = Bᵀy` with `W = diag(1/sqrt((Ψx)² + ε²))`, starting from
/// the ridge solution `(BᵀB + λI)x = Bᵀy`.
pub fn irls_reconstruct(b: &DMatrix<f64>, y: &[f64], cfg: &ReconConfig) -> Result<ReconOutcome> {
    check_system(b, y)?;
    cfg.validate()?;
    let n = b.ncols();
    let psi = Dct2Basis::for_length(n)?.matrix();
    let lambda = cfg.lambda;
    let y = DVector::from_column_slice(y);
    let btb = b.transpose() * b;
    let bty = b.transpose() * &y;

    let solve = |a: DMatrix<f64>, iteration: usize| -> Result<DVector<f64>> {
        a.cholesky()
            .map(|c| c.solve(&bty))
            .ok_or_else(|| Error::Solver { iteration, message: "normal equations are not positive definite".into() })
    };

    let mut x = solve(&btb + DMatrix::identity(n, n) * lambda, 0)?;
    let initial_residual = (b * &x - &y).norm();
    let mut history = vec![smoothed_objective(b, &y, lambda, &psi, &x)];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        let u = &psi * &x;
        let mut weighted = psi.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= lambda / (u[i] * u[i] + IRLS_EPSILON * IRLS_EPSILON).sqrt();
        }
        let next = solve(&btb + psi.transpose() * weighted, it)?;
        let change = (&next - &x).norm();
        x = next;
        iterations = it;
        history.push(smoothed_objective(b, &y, lambda, &psi, &x));
        if change <= cfg.tolerance * x.norm().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let final_residual = (b * &x - &y).norm();
    Ok(ReconOutcome { x, iterations, converged, initial_residual, final_residual, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Lasso by cyclic coordinate descent in the coefficient domain `u = Ψx`.
    fn coordinate_descent(b: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, psi: &DMatrix<f64>) -> DVector<f64> {
        let a = b * psi.transpose();
        let n = a.ncols();
        let mut u = DVector::<f64>::zeros(n);
        let mut r = y.clone();
        for _ in 0..20_000 {
            let mut moved = 0.0f64;
            for j in 0..n {
                let col = a.column(j);
                let nrm = col.norm_squared();
                let rho = col.dot(&r) + nrm * u[j];
                let new = rho.signum() * (rho.abs() - lambda).max(0.0) / nrm;
                let d = new - u[j];
                if d != 0.0 {
                    r -= col * d;
                    u[j] = new;
                    moved = moved.max(d.abs());
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        psi.transpose() * u
    }

    #[test]
    fn unregularized_square_system_inverts() {
        let b = gaussian(6, 6, 1);
        let x: DVector<f64> = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let y = &b * &x;
        let cfg = ReconConfig { lambda: 0.0, ..Default::default() };
        let out = irls_reconstruct(&b, y.as_slice(), &cfg).unwrap();
        assert!((&out.x - &x).abs().max() < 1e-8);
    }

    #[test]
    fn zero_measurements_give_zero() {
        let b = gaussian(6, 8, 2);
        let out = irls_reconstruct(&b, &[0.0; 6], &ReconConfig { lambda: 0.1, ..Default::default() }).unwrap();
        assert!(out.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_coordinate_descent_and_decreases() {
        let basis = Dct2Basis::for_length(8).unwrap();
        let psi = basis.matrix();
        for seed in 0..5 {
            let b = gaussian(6, 8, 10 + seed);
            let y = gaussian(6, 1, 100 + seed).column(0).into_owned();
            let lambda = 0.1;
            let cfg = ReconConfig { lambda, max_iterations: 500, tolerance: 1e-12, ..Default::default() };
            let out = irls_reconstruct(&b, y.as_slice(), &cfg).unwrap();
            let oracle = coordinate_descent(&b, &y, lambda, &psi);
            let f_irls = l1_objective(&b, y.as_slice(), lambda, &basis, out.x.as_slice()).unwrap();
            let f_cd = l1_objective(&b, y.as_slice(), lambda, &basis, oracle.as_slice()).unwrap();
            assert!((f_irls - f_cd).abs() < 1e-4, "seed {seed}: {f_irls} vs {f_cd}");
            assert!(out.history.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{:?}", out.history);
        }
    }

    #[test]
    fn singular_unregularized_system_reports_iteration() {
        let b = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let err = irls_reconstruct(&b, &[1.0, 1.0], &ReconConfig { lambda: 0.0, ..Default::default() });
        assert!(matches!(err, Err(Error::Solver { iteration: 0, .. })), "{err:?}");
    }
}
