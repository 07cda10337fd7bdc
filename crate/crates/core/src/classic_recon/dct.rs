use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormal type-II DCT matrix `C` (`n x n`): `C[k][i] = α_k cos(π(2i+1)k / 2n)`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, i| {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// 2-D orthonormal DCT-II of a block (rows and columns transformed separately).
pub fn dct2(block: &DMatrix<f64>) -> DMatrix<f64> {
    dct_matrix(block.nrows()) * block * dct_matrix(block.ncols()).transpose()
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &DMatrix<f64>) -> DMatrix<f64> {
    dct_matrix(coeffs.nrows()).transpose() * coeffs * dct_matrix(coeffs.ncols())
}

/// 2-D DCT acting on row-major vectorized `rows x cols` blocks.
#[derive(Clone, Debug)]
pub struct Dct2Basis {
    rows: usize,
    cols: usize,
    cr: DMatrix<f64>,
    cc: DMatrix<f64>,
}

impl Dct2Basis {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("empty DCT support"));
        }
        Ok(Dct2Basis { rows, cols, cr: dct_matrix(rows), cc: dct_matrix(cols) })
    }

    /// Square support for perfect-square lengths, otherwise a 1-D transform.
    pub fn for_length(n: usize) -> Result<Self> {
        let a = (n as f64).sqrt().round() as usize;
        if a * a == n {
            Self::new(a, a)
        } else {
            Self::new(1, n)
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::dim(format!("vector of length {} for a {}x{} DCT", v.len(), self.rows, self.cols)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let m = DMatrix::from_row_slice(self.rows, self.cols, x);
        Ok(row_major(&(&self.cr * m * self.cc.transpose())))
    }

    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check(c)?;
        let m = DMatrix::from_row_slice(self.rows, self.cols, c);
        Ok(row_major(&(self.cr.transpose() * m * &self.cc)))
    }

    /// Explicit `n x n` analysis matrix `Ψ` with `Ψ x = forward(x)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.cr.kronecker(&self.cc)
    }

    pub(crate) fn forward_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.forward(x.as_slice()).expect("length checked by caller"))
    }

    pub(crate) fn inverse_vec(&self, c: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.inverse(c.as_slice()).expect("length checked by caller"))
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dct2(x: &DMatrix<f64>) -> DMatrix<f64> {
        let (r, c) = x.shape();
        let alpha = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        DMatrix::from_fn(r, c, |u, v| {
            let mut s = 0.0;
            for i in 0..r {
                for j in 0..c {
                    s += x[(i, j)]
                        * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2 * r) as f64).cos()
                        * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / (2 * c) as f64).cos();
                }
            }
            alpha(u, r) * alpha(v, c) * s
        })
    }

    #[test]
    fn constant_block_is_pure_dc() {
        let x = DMatrix::from_element(8, 8, 0.3);
        let c = dct2(&x);
        assert!((c[(0, 0)] - 0.3 * 8.0).abs() < 1e-12);
        let rest: f64 = c.iter().skip(1).map(|v| v.abs()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn round_trip_parseval_and_oracle() {
        let x = DMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0 - 0.4);
        let c = dct2(&x);
        assert!((idct2(&c) - &x).abs().max() < 1e-12);
        assert!((c.norm() - x.norm()).abs() < 1e-12);
        assert!((naive_dct2(&x) - &c).abs().max() < 1e-12);
    }

    #[test]
    fn vector_basis_matches_matrix_form() {
        let basis = Dct2Basis::new(4, 4).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = basis.forward(&x).unwrap();
        let psi = basis.matrix();
        let via = &psi * DVector::from_column_slice(&x);
        assert!(c.iter().zip(via.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let back = basis.inverse(&c).unwrap();
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((psi.transpose() * &psi - DMatrix::identity(16, 16)).abs().max() < 1e-12);
        assert!(basis.forward(&x[..3]).is_err());
    }

    #[test]
    fn support_choice() {
        assert_eq!(Dct2Basis::for_length(64).unwrap().shape(), (8, 8));
        assert_eq!(Dct2Basis::for_length(8).unwrap().shape(), (1, 8));
    }
}
