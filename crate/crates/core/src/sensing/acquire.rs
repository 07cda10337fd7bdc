use nalgebra::{DMatrix, DVector};

use super::matrix::SensingMatrix;
use super::partition::{block_partition, BlockGrid};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{conv2d, LayerParams, Tensor4};

/// Per-block measurement vectors on the block grid of a (padded) image.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub block_size: usize,
    /// Measurements per block, `m_a`.
    pub rows: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Image size before padding.
    pub original: (usize, usize),
    pub tau: f64,
    /// Block-major: block `k` occupies `values[k*m_a..(k+1)*m_a]`.
    pub values: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(
        block_size: usize,
        rows: usize,
        grid: (usize, usize),
        original: (usize, usize),
        tau: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let blocks = grid.0 * grid.1;
        if values.len() != blocks * rows {
            return Err(Error::dim(format!("{} values for {blocks} blocks of {rows}", values.len())));
        }
        if original.0 > grid.0 * block_size || original.1 > grid.1 * block_size {
            return Err(Error::dim("original dims exceed the block grid"));
        }
        Ok(MeasurementSet { block_size, rows, grid_rows: grid.0, grid_cols: grid.1, original, tau, values })
    }

    pub fn block_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.values[k * self.rows..(k + 1) * self.rows]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.rows)
    }

    /// Measurement tensor (1, m_a, r, c): channel `k` holds measurement `k` of every block.
    pub fn to_tensor(&self) -> Tensor4<f64> {
        let (r, c, m) = (self.grid_rows, self.grid_cols, self.rows);
        Tensor4::from_fn([1, m, r, c], |[_, k, i, j]| self.values[(i * c + j) * m + k])
    }

    pub fn from_tensor(t: &Tensor4<f64>, block_size: usize, original: (usize, usize), tau: f64) -> Result<Self> {
        if t.batch() != 1 {
            return Err(Error::dim("measurement tensor must have batch 1"));
        }
        let [_, m, r, c] = t.shape();
        let mut values = vec![0.0; m * r * c];
        for k in 0..m {
            for i in 0..r {
                for j in 0..c {
                    values[(i * c + j) * m + k] = t.get([0, k, i, j]);
                }
            }
        }
        Self::new(block_size, m, (r, c), original, tau, values)
    }
}

/// `y_i = B_A x_i`.
pub fn acquire_block(matrix: &SensingMatrix, block: &[f64]) -> Result<Vec<f64>> {
    if block.len() != matrix.cols() {
        return Err(Error::dim(format!("block has {} pixels, matrix expects {}", block.len(), matrix.cols())));
    }
    let y = matrix.entries() * DVector::from_column_slice(block);
    Ok(y.as_slice().to_vec())
}

/// `N_p` copies of `B_A` on the diagonal of an `(N_p*m_a) x (N_p*A^2)` matrix.
pub fn expand_block_diagonal(matrix: &SensingMatrix, blocks: usize) -> Result<DMatrix<f64>> {
    if blocks == 0 {
        return Err(Error::arg("block count must be >= 1"));
    }
    let (m, n) = (matrix.rows(), matrix.cols());
    let mut full = DMatrix::zeros(blocks * m, blocks * n);
    for b in 0..blocks {
        full.view_mut((b * m, b * n), (m, n)).copy_from(matrix.entries());
    }
    Ok(full)
}

fn measurement_set(matrix: &SensingMatrix, grid: &BlockGrid, values: Vec<f64>) -> Result<MeasurementSet> {
    MeasurementSet::new(
        matrix.block_size(),
        matrix.rows(),
        (grid.grid_rows, grid.grid_cols),
        grid.original,
        matrix.sampling_rate(),
        values,
    )
}

/// Block-by-block acquisition of a whole image.
pub fn acquire_image(matrix: &SensingMatrix, img: &GrayImage) -> Result<MeasurementSet> {
    let grid = block_partition(img, matrix.block_size())?;
    let mut values = Vec::with_capacity(grid.len() * matrix.rows());
    for b in &grid.blocks {
        values.extend(acquire_block(matrix, b)?);
    }
    measurement_set(matrix, &grid, values)
}

/// Acquisition through the block-diagonal full operator applied to the
/// concatenated block vectors.
pub fn acquire_image_full(matrix: &SensingMatrix, img: &GrayImage) -> Result<MeasurementSet> {
    let grid = block_partition(img, matrix.block_size())?;
    let full = expand_block_diagonal(matrix, grid.len())?;
    let x: Vec<f64> = grid.blocks.iter().flatten().copied().collect();
    let y = full * DVector::from_vec(x);
    measurement_set(matrix, &grid, y.as_slice().to_vec())
}

/// Acquisition as a convolution with kernel `A`, stride `A` and no bias.
pub fn acquire_image_conv(filters: &LayerParams<f64>, img: &GrayImage) -> Result<MeasurementSet> {
    let [m, c, kh, kw] = filters.weight.shape();
    if c != 1 || kh != kw || filters.bias.is_some() {
        return Err(Error::dim(format!(
            "sampling filters must be (m, 1, A, A) without bias, got {:?}",
            filters.weight.shape()
        )));
    }
    let block = kh;
    let padded = img.pad_to_multiple(block)?;
    let y = conv2d(&padded.to_tensor::<f64>(), filters, block, 0)?;
    MeasurementSet::from_tensor(&y, block, img.dims(), m as f64 / (block * block) as f64)
}
