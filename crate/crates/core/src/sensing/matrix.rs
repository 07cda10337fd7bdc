use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{LayerParams, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Gaussian,
    Bernoulli,
    ChebyshevChaotic,
    Learned,
}

impl MatrixKind {
    pub fn code(self) -> u8 {
        match self {
            MatrixKind::Gaussian => 0,
            MatrixKind::Bernoulli => 1,
            MatrixKind::ChebyshevChaotic => 2,
            MatrixKind::Learned => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => MatrixKind::Gaussian,
            1 => MatrixKind::Bernoulli,
            2 => MatrixKind::ChebyshevChaotic,
            3 => MatrixKind::Learned,
            _ => return None,
        })
    }
}

/// An `m_a x A^2` block sensing operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingMatrix {
    entries: DMatrix<f64>,
    block_size: usize,
    kind: MatrixKind,
}

/// Number of measurements per `A x A` block at sampling rate `tau`:
/// `floor(tau * A^2)`, at least 1.
pub fn rows_for_rate(tau: f64, block_size: usize) -> Result<usize> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::arg(format!("sampling rate {tau} outside (0, 1]")));
    }
    if block_size == 0 {
        return Err(Error::arg("block size must be >= 1"));
    }
    let n = (block_size * block_size) as f64;
    // the small offset keeps exact products like 0.3 * 100 from flooring down
    Ok(((tau * n + 1e-9).floor() as usize).clamp(1, block_size * block_size))
}

impl SensingMatrix {
    pub fn new(entries: DMatrix<f64>, block_size: usize, kind: MatrixKind) -> Result<Self> {
        if block_size == 0 || entries.ncols() != block_size * block_size {
            return Err(Error::dim(format!(
                "matrix has {} columns, block size {block_size} needs {}",
                entries.ncols(),
                block_size * block_size
            )));
        }
        if entries.nrows() == 0 || entries.nrows() > entries.ncols() {
            return Err(Error::dim(format!("row count {} outside [1, {}]", entries.nrows(), entries.ncols())));
        }
        Ok(SensingMatrix { entries, block_size, kind })
    }

    /// Builds from row-major values.
    pub fn from_row_slice(rows: usize, block_size: usize, kind: MatrixKind, values: &[f64]) -> Result<Self> {
        let cols = block_size * block_size;
        if values.len() != rows * cols {
            return Err(Error::dim(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, values.len())));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values), block_size, kind)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn sampling_rate(&self) -> f64 {
        self.rows() as f64 / self.cols() as f64
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            out.extend(self.entries.row(r).iter());
        }
        out
    }

    /// The `m_a` rows as `A x A` convolution filters: (m_a, 1, A, A), no bias.
    pub fn to_filters(&self) -> LayerParams<f64> {
        let w = Tensor4::from_vec([self.rows(), 1, self.block_size, self.block_size], self.to_row_major())
            .expect("row-major entries fill the filter bank");
        LayerParams::new(w, None)
    }

    /// Inverse of [`to_filters`](Self::to_filters); the matrix is marked as learned.
    pub fn from_filters(filters: &LayerParams<f64>) -> Result<Self> {
        let [m, c, kh, kw] = filters.weight.shape();
        if c != 1 || kh != kw {
            return Err(Error::dim(format!("sampling filters must be (m, 1, A, A), got {:?}", filters.weight.shape())));
        }
        Self::from_row_slice(m, kh, MatrixKind::Learned, filters.weight.data())
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }
}

fn check_dims(rows: usize, block_size: usize) -> Result<usize> {
    let n = block_size * block_size;
    if rows == 0 || rows > n {
        return Err(Error::arg(format!("row count {rows} outside [1, {n}]")));
    }
    Ok(n)
}

/// I.i.d. `N(0, 1/m_a)` entries.
pub fn make_gaussian(rows: usize, block_size: usize, seed: u64) -> Result<SensingMatrix> {
    let n = check_dims(rows, block_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
    let values: Vec<f64> = (0..rows * n).map(|_| normal.sample(&mut rng)).collect();
    SensingMatrix::from_row_slice(rows, block_size, MatrixKind::Gaussian, &values)
}

/// Equiprobable `+-1/sqrt(m_a)` entries.
pub fn make_bernoulli(rows: usize, block_size: usize, seed: u64) -> Result<SensingMatrix> {
    let n = check_dims(rows, block_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (rows as f64).sqrt();
    let values: Vec<f64> = (0..rows * n).map(|_| if rng.gen::<bool>() { s } else { -s }).collect();
    SensingMatrix::from_row_slice(rows, block_size, MatrixKind::Bernoulli, &values)
}

/// Parameters of the Chebyshev chaotic map `x <- cos(d * acos(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevConfig {
    pub degree: u32,
    /// Keep every `gap`-th iterate.
    pub gap: usize,
}

impl Default for ChebyshevConfig {
    fn default() -> Self {
        ChebyshevConfig { degree: 4, gap: 5 }
    }
}

/// `len` samples of the Chebyshev map started at `x0`, taking every
/// `gap`-th iterate. All values lie in [-1, 1].
pub fn chebyshev_sequence(x0: f64, cfg: ChebyshevConfig, len: usize) -> Vec<f64> {
    let d = cfg.degree as f64;
    let gap = cfg.gap.max(1);
    let mut x = x0.clamp(-1.0, 1.0);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        for _ in 0..gap {
            x = (d * x.clamp(-1.0, 1.0).acos()).cos();
        }
        out.push(x);
    }
    out
}

/// Chebyshev chaotic binary matrix: sign of the sampled chaotic sequence,
/// filled row-major, scaled by `1/sqrt(m_a)`. The seed picks the start state.
pub fn make_chebyshev(rows: usize, block_size: usize, seed: u64, cfg: ChebyshevConfig) -> Result<SensingMatrix> {
    let n = check_dims(rows, block_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stay clear of the map's fixed points at +-1 and of 0
    let x0 = rng.gen_range(0.05..0.95) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let s = 1.0 / (rows as f64).sqrt();
    let values: Vec<f64> =
        chebyshev_sequence(x0, cfg, rows * n).into_iter().map(|v| if v >= 0.0 { s } else { -s }).collect();
    SensingMatrix::from_row_slice(rows, block_size, MatrixKind::ChebyshevChaotic, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rows_for_rate_examples() {
        assert_eq!(rows_for_rate(0.01, 32).unwrap(), 10);
        assert_eq!(rows_for_rate(0.25, 32).unwrap(), 256);
        assert_eq!(rows_for_rate(1.0, 4).unwrap(), 16);
        assert_eq!(rows_for_rate(0.1, 32).unwrap(), 102);
        assert_eq!(rows_for_rate(1e-6, 4).unwrap(), 1);
        assert!(matches!(rows_for_rate(0.0, 32), Err(Error::Argument(_))));
        assert!(matches!(rows_for_rate(-0.5, 32), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn rows_for_rate_is_monotone(a in 1e-4f64..1.0, b in 1e-4f64..1.0, block in 1usize..40) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rows_for_rate(lo, block).unwrap() <= rows_for_rate(hi, block).unwrap());
        }
    }

    #[test]
    fn bernoulli_entries_are_signed_constants() {
        let m = make_bernoulli(10, 8, 3).unwrap();
        let s = 1.0 / 10f64.sqrt();
        assert!(m.entries().iter().all(|&v| v == s || v == -s));
        let pos = m.entries().iter().filter(|&&v| v > 0.0).count();
        assert!(pos > 200 && pos < 440, "{pos} of 640 positive");
    }

    #[test]
    fn gaussian_mean_within_three_sigma() {
        // 10 x 1024 = 10240 entries with std 1/sqrt(10)
        let m = make_gaussian(10, 32, 42).unwrap();
        let n = m.entries().len() as f64;
        let mean = m.entries().iter().sum::<f64>() / n;
        let sigma_of_mean = (1.0 / 10f64).sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * sigma_of_mean, "mean {mean}");
        let var = m.entries().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.1).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn chebyshev_iterates_stay_bounded() {
        let seq = chebyshev_sequence(0.3, ChebyshevConfig::default(), 10_000);
        assert!(seq.iter().all(|v| (-1.0..=1.0).contains(v)));
        let m = make_chebyshev(8, 8, 9, ChebyshevConfig::default()).unwrap();
        let s = 1.0 / 8f64.sqrt();
        assert!(m.entries().iter().all(|&v| v == s || v == -s));
    }

    #[test]
    fn seeded_constructions_are_reproducible() {
        assert_eq!(make_gaussian(4, 4, 5).unwrap(), make_gaussian(4, 4, 5).unwrap());
        assert_ne!(make_gaussian(4, 4, 5).unwrap(), make_gaussian(4, 4, 6).unwrap());
        assert_eq!(
            make_chebyshev(4, 4, 5, ChebyshevConfig::default()).unwrap(),
            make_chebyshev(4, 4, 5, ChebyshevConfig::default()).unwrap()
        );
    }

    #[test]
    fn filters_round_trip() {
        let m = make_gaussian(6, 4, 1).unwrap();
        let f = m.to_filters();
        assert_eq!(f.weight.shape(), [6, 1, 4, 4]);
        let back = SensingMatrix::from_filters(&f).unwrap();
        assert_eq!(back.entries(), m.entries());
        assert_eq!(back.kind(), MatrixKind::Learned);
    }
}
