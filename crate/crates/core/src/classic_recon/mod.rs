//! Classical block compressive-sensing reconstruction: linear MMSE, two-stage
//! iterative hard thresholding and IRLS for the DCT-ℓ1 objective.

mod dct;
mod iht;
mod irls;
mod mmse;

pub use dct::{dct2, dct_matrix, idct2, Dct2Basis};
pub use iht::{hard_threshold, iht_reconstruct};
pub use irls::{irls_reconstruct, l1_objective, smoothed_objective, IRLS_EPSILON};
pub use mmse::{
    ar1_autocorrelation, estimate_autocorrelation, mmse_matrix, AutocorrelationModel, AutocorrelationSource,
    MmseMatrix, DEFAULT_AR1, MAX_CONDITION,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::sensing::{assemble_blocks, MeasurementSet, SensingMatrix};

/// Solver settings shared by IHT (`sparsity`) and IRLS (`lambda`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub sparsity: usize,
    pub lambda: f64,
    pub max_iterations: usize,
    /// Relative iterate-change threshold.
    pub tolerance: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { sparsity: 16, lambda: 1e-3, max_iterations: 300, tolerance: 1e-8 }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 {
            return Err(Error::Config("sparsity must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be a finite non-negative number".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of an iterative solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖y − Bx‖` at the first iterate produced by the solver's update rule.
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Per-iterate objective (IRLS: smoothed ℓ1 objective; IHT: residual norm).
    pub history: Vec<f64>,
}

pub(crate) fn check_system(b: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if b.nrows() != y.len() {
        return Err(Error::dim(format!("{} measurements for a {}x{} matrix", y.len(), b.nrows(), b.ncols())));
    }
    if b.nrows() == 0 || b.ncols() == 0 {
        return Err(Error::dim("empty sensing matrix"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMethod {
    Mmse,
    Iht,
    Irls,
}

impl std::str::FromStr for ReconMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmse" => Ok(ReconMethod::Mmse),
            "iht" => Ok(ReconMethod::Iht),
            "irls" => Ok(ReconMethod::Irls),
            other => Err(Error::arg(format!("unknown method {other:?} (expected mmse, iht or irls)"))),
        }
    }
}

/// Reconstructs every block of `y` independently and assembles the cropped image.
///
/// `rho` is the prior for [`ReconMethod::Mmse`] (AR(1) with [`DEFAULT_AR1`] when
/// absent); the iterative solvers ignore it.
pub fn reconstruct_image(
    method: ReconMethod,
    matrix: &SensingMatrix,
    y: &MeasurementSet,
    rho: Option<&AutocorrelationModel>,
    cfg: &ReconConfig,
) -> Result<GrayImage> {
    if y.block_size != matrix.block_size() || y.rows != matrix.rows() {
        return Err(Error::dim(format!(
            "measurements (A={}, m={}) do not match matrix (A={}, m={})",
            y.block_size,
            y.rows,
            matrix.block_size(),
            matrix.rows()
        )));
    }
    cfg.validate()?;
    let b = matrix.entries();
    let blocks: Vec<Vec<f64>> = match method {
        ReconMethod::Mmse => {
            let owned;
            let rho = match rho {
                Some(r) => &r.matrix,
                None => {
                    owned = ar1_autocorrelation(matrix.block_size(), DEFAULT_AR1).matrix;
                    &owned
                }
            };
            let rec = mmse_matrix(b, rho)?.matrix;
            y.blocks().map(|v| (&rec * DVector::from_column_slice(v)).as_slice().to_vec()).collect()
        }
        ReconMethod::Iht => {
            y.blocks().map(|v| iht_reconstruct(b, v, cfg).map(|o| o.x.as_slice().to_vec())).collect::<Result<_>>()?
        }
        ReconMethod::Irls => {
            y.blocks().map(|v| irls_reconstruct(b, v, cfg).map(|o| o.x.as_slice().to_vec())).collect::<Result<_>>()?
        }
    };
    assemble_blocks(&blocks, y.grid_rows, y.grid_cols, y.block_size)?.with_original(y.original)?.crop_to_original()
}
