use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::unet::OctUnet;
use crate::classic_recon::{ar1_autocorrelation, estimate_autocorrelation, mmse_matrix, DEFAULT_AR1};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;
use crate::sensing::{block_partition, make_gaussian, rows_for_rate, MeasurementSet, SensingMatrix};
use crate::tensor::{depth_to_space, space_to_depth, Conv2d, Layer, LayerParams, ParamRef, Tensor4};

/// Architecture of an AutoBCS model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub block_size: usize,
    pub tau: f64,
    pub base_width: usize,
    pub depth: usize,
    /// Low-frequency channel share inside the U-net.
    pub octave_ratio: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { block_size: 32, tau: 0.1, base_width: 16, depth: 2, octave_ratio: 0.5 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.depth == 0 || self.base_width < 2 {
            return Err(Error::Config("depth must be >= 1 and base_width >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.octave_ratio) {
            return Err(Error::Config("octave_ratio outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Measurements per block, `floor(τ·A²)`.
    pub fn measurements(&self) -> Result<usize> {
        rows_for_rate(self.tau, self.block_size)
    }

    /// Spatial dims the refinement network needs to be divisible by.
    pub fn unet_alignment(&self) -> usize {
        1 << (self.depth + 1)
    }
}

/// Both network outputs for a batch: `initial` is `x̂`, `output` is `x̃ = x̂ + U(x̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub initial: Tensor4<T>,
    pub output: Tensor4<T>,
}

/// Learned sampling (`m_a` filters `A x A`, stride `A`), linear initial
/// reconstruction (`A²` filters `1 x 1`) with block reassembly, and the octave
/// U-net refinement with a residual skip. Neither linear layer has a bias.
#[derive(Clone, Debug)]
pub struct AutoBcsModel<T> {
    config: NetworkConfig,
    pub sampling: Conv2d<T>,
    pub init: Conv2d<T>,
    pub unet: OctUnet<T>,
}

fn cast_params<U: Scalar, T: Scalar>(p: &LayerParams<U>) -> LayerParams<T> {
    LayerParams::new(
        p.weight.cast(),
        p.bias.as_ref().map(|b| b.iter().map(|&v| T::from_f64_lossy(v.as_f64())).collect()),
    )
}

/// Zero-pads the bottom/right of a `(N, C, H, W)` tensor to `(h, w)`.
fn pad_tensor<T: Scalar>(x: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let [n, c, xh, xw] = x.shape();
    Tensor4::from_fn([n, c, h, w], |[a, b, i, j]| if i < xh && j < xw { x.get([a, b, i, j]) } else { T::zero() })
}

fn crop_tensor<T: Scalar>(x: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let [n, c, _, _] = x.shape();
    Tensor4::from_fn([n, c, h, w], |idx| x.get(idx))
}

fn tensor_to_image<T: Scalar>(t: &Tensor4<T>, original: (usize, usize)) -> Result<GrayImage> {
    let crop = crop_tensor(t, original.0, original.1);
    GrayImage::from_tensor(&crop)
}

impl<T: Scalar> AutoBcsModel<T> {
    /// Gaussian sampling filters, the matching MMSE initial reconstruction
    /// under an AR(1) prior, and fan-in scaled uniform U-net weights with a
    /// zeroed output convolution (so `x̃ = x̂` before training).
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = config.measurements()?;
        let a = config.block_size;
        let sensing = make_gaussian(m, a, seed)?;
        let rho = ar1_autocorrelation(a, DEFAULT_AR1).matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut unet = OctUnet::new(config.base_width, config.depth, config.octave_ratio, &mut rng)?;
        unet.zero_head();
        let mut model = AutoBcsModel {
            sampling: Conv2d::new(cast_params(&sensing.to_filters()), a, 0),
            init: Conv2d::new(LayerParams::zeros([a * a, m, 1, 1], None), 1, 0),
            unet,
            config,
        };
        model.set_init_matrix(&mmse_matrix(sensing.entries(), &rho)?.matrix)?;
        Ok(model)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn measurements(&self) -> usize {
        self.sampling.params.weight.shape()[0]
    }

    /// Replaces the sampling filters with the rows of `matrix`.
    pub fn set_sensing_matrix(&mut self, matrix: &SensingMatrix) -> Result<()> {
        if matrix.block_size() != self.config.block_size || matrix.rows() != self.measurements() {
            return Err(Error::dim(format!(
                "matrix {}x{} does not fit a model with {} measurements of {}x{} blocks",
                matrix.rows(),
                matrix.cols(),
                self.measurements(),
                self.config.block_size,
                self.config.block_size
            )));
        }
        self.sampling.params = cast_params(&matrix.to_filters());
        Ok(())
    }

    /// Sets the `A² x m_a` initial-reconstruction matrix.
    pub fn set_init_matrix(&mut self, matrix: &DMatrix<f64>) -> Result<()> {
        let (n, m) = (self.config.block_size * self.config.block_size, self.measurements());
        if matrix.shape() != (n, m) {
            return Err(Error::dim(format!("init matrix {:?}, expected ({n}, {m})", matrix.shape())));
        }
        let w = Tensor4::from_fn([n, m, 1, 1], |[i, j, _, _]| T::from_f64_lossy(matrix[(i, j)]));
        self.init.params = LayerParams::new(w, None);
        Ok(())
    }

    /// The `A² x m_a` matrix applied by the initial-reconstruction layer.
    pub fn init_matrix(&self) -> DMatrix<f64> {
        let [n, m, _, _] = self.init.params.weight.shape();
        DMatrix::from_fn(n, m, |i, j| self.init.params.weight.get([i, j, 0, 0]).as_f64())
    }

    /// The sampling filters as a learned sensing matrix, one raster-flattened filter per row.
    pub fn export_lsm(&self) -> Result<SensingMatrix> {
        SensingMatrix::from_filters(&cast_params(&self.sampling.params))
    }

    /// Re-derives the initial-reconstruction layer as the MMSE matrix of the
    /// current sampling filters, with the block autocorrelation estimated from
    /// `patches` (AR(1) when there are too few blocks).
    pub fn init_from_data(&mut self, patches: &[GrayImage]) -> Result<()> {
        let a = self.config.block_size;
        let mut blocks = Vec::new();
        for p in patches {
            blocks.extend(block_partition(p, a)?.blocks);
        }
        let rho = estimate_autocorrelation(&blocks, a)?;
        let lsm = self.export_lsm()?;
        self.set_init_matrix(&mmse_matrix(lsm.entries(), &rho.matrix)?.matrix)
    }

    fn check_batch(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.shape();
        let a = self.config.block_size;
        let u = self.config.unet_alignment();
        if c != 1 || h == 0 || w == 0 || h % a != 0 || w % a != 0 || h % u != 0 || w % u != 0 {
            return Err(Error::dim(format!(
                "training input {:?} must be single-channel with dims divisible by {a} and {u}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Measurement tensor `(N, m_a, H/A, W/A)`.
    pub fn sample(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.sampling.infer(x)
    }

    /// `x̂` from a measurement tensor: per-block linear map and reassembly.
    pub fn initial_from_measurements(&self, y: &Tensor4<T>) -> Result<Tensor4<T>> {
        depth_to_space(&self.init.infer(y)?, self.config.block_size)
    }

    /// `x̂ + U(x̂)`, zero-padding `x̂` as the refinement network requires.
    pub fn refine(&self, initial: &Tensor4<T>) -> Result<Tensor4<T>> {
        let [_, _, h, w] = initial.shape();
        let u = self.config.unet_alignment();
        let (ph, pw) = (h.div_ceil(u) * u, w.div_ceil(u) * u);
        let residual = if (ph, pw) == (h, w) {
            self.unet.infer(initial)?
        } else {
            crop_tensor(&self.unet.infer(&pad_tensor(initial, ph, pw))?, h, w)
        };
        initial.add(&residual)
    }

    /// Stateless forward pass over a batch of images whose dims are multiples of `A`.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<ForwardOutput<T>> {
        let initial = self.initial_from_measurements(&self.sample(x)?)?;
        let output = self.refine(&initial)?;
        Ok(ForwardOutput { initial, output })
    }

    /// Forward pass recording caches for [`backward`](Self::backward). Input
    /// dims must also be divisible by [`NetworkConfig::unet_alignment`].
    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<ForwardOutput<T>> {
        self.check_batch(x)?;
        let y = self.sampling.forward(x)?;
        let z = self.init.forward(&y)?;
        let initial = depth_to_space(&z, self.config.block_size)?;
        let residual = self.unet.forward(&initial)?;
        let output = initial.add(&residual)?;
        Ok(ForwardOutput { initial, output })
    }

    /// Back-propagates gradients with respect to `x̃` and (separately) `x̂`,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, d_output: &Tensor4<T>, d_initial: &Tensor4<T>) -> Result<()> {
        let mut d = self.unet.backward(d_output)?;
        d.add_assign(d_output)?;
        d.add_assign(d_initial)?;
        let dz = space_to_depth(&d, self.config.block_size)?;
        let dy = self.init.backward(&dz)?;
        self.sampling.backward(&dy)?;
        Ok(())
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.sampling.visit_params("sampling", f);
        self.init.visit_params("init", f);
        self.unet.visit_params("unet", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.grad.fill(T::zero()));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Euclidean norm of all parameters.
    pub fn param_norm(&mut self) -> f64 {
        let mut s = 0.0;
        self.visit_params(&mut |p| s += p.value.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>());
        s.sqrt()
    }

    /// Network acquisition of an image (zero-padded to multiples of `A`).
    pub fn measure(&self, img: &GrayImage) -> Result<MeasurementSet> {
        let a = self.config.block_size;
        let padded = img.pad_to_multiple(a)?;
        let y = self.sample(&padded.to_tensor::<T>())?;
        MeasurementSet::from_tensor(&y.cast(), a, img.dims(), self.measurements() as f64 / (a * a) as f64)
    }

    fn measurement_tensor(&self, y: &MeasurementSet) -> Result<Tensor4<T>> {
        if y.block_size != self.config.block_size || y.rows != self.measurements() {
            return Err(Error::dim(format!(
                "measurements (A={}, m={}) do not match the model (A={}, m={})",
                y.block_size,
                y.rows,
                self.config.block_size,
                self.measurements()
            )));
        }
        Ok(y.to_tensor().cast())
    }

    /// Initial reconstruction only, cropped to the original size.
    pub fn initial_image(&self, y: &MeasurementSet) -> Result<GrayImage> {
        let x0 = self.initial_from_measurements(&self.measurement_tensor(y)?)?;
        tensor_to_image(&x0, y.original)
    }

    /// Full reconstruction from measurements, cropped to the original size.
    pub fn reconstruct_measurements(&self, y: &MeasurementSet) -> Result<GrayImage> {
        let x0 = self.initial_from_measurements(&self.measurement_tensor(y)?)?;
        tensor_to_image(&self.refine(&x0)?, y.original)
    }

    /// Acquire then reconstruct.
    pub fn reconstruct(&self, img: &GrayImage) -> Result<GrayImage> {
        self.reconstruct_measurements(&self.measure(img)?)
    }
}

/// `(1/2N)·Σ‖a − b‖²` over the batch.
pub fn half_mse<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("loss between {:?} and {:?}", a.shape(), b.shape())));
    }
    let n = a.batch().max(1) as f64;
    Ok(a.data().iter().zip(b.data()).map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / (2.0 * n))
}

/// Reconstruction loss `L = (1/2N)·Σ‖x̃ − x‖²`.
pub fn loss_total<T: Scalar>(out: &ForwardOutput<T>, target: &Tensor4<T>) -> Result<f64> {
    half_mse(&out.output, target)
}

/// Initial-reconstruction loss `L_int = (1/2N)·Σ‖x̂ − x‖²`.
pub fn loss_init<T: Scalar>(out: &ForwardOutput<T>, target: &Tensor4<T>) -> Result<f64> {
    half_mse(&out.initial, target)
}
