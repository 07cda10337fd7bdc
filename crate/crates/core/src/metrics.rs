//! PSNR, SSIM and the noisy-acquisition helpers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::sensing::MeasurementSet;

/// PSNR in dB; identical inputs get a dedicated sentinel instead of `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    /// The dB value, `f64::INFINITY` for identical inputs.
    pub fn value(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Identical => f64::INFINITY,
        }
    }

    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.6}"),
            Psnr::Identical => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr: Psnr,
    pub ssim: f64,
}

/// `10·log10(peak² / MSE)` over two equally long value slices.
pub fn psnr_values(x: &[f64], y: &[f64], peak: f64) -> Result<Psnr> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::dim("empty input"));
    }
    if !(peak > 0.0) {
        return Err(Error::arg("peak must be positive"));
    }
    let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
}

/// PSNR of two images with unit peak.
pub fn psnr(x: &GrayImage, y: &GrayImage) -> Result<Psnr> {
    if x.dims() != y.dims() {
        return Err(Error::dim(format!("{:?} vs {:?}", x.dims(), y.dims())));
    }
    psnr_values(x.pixels(), y.pixels(), 1.0)
}

/// Window and stabilizing constants for SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimConfig {
    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> =
            (0..self.window).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Separable "valid" filtering of a row-major `h x w` plane.
fn filter_valid(v: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(t, g)| g * v[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, g)| g * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM over all fully-contained Gaussian windows.
pub fn ssim_values(h: usize, w: usize, x: &[f64], y: &[f64], cfg: &SsimConfig) -> Result<f64> {
    if x.len() != h * w || y.len() != h * w {
        return Err(Error::dim(format!("planes of {} and {} values for {h}x{w}", x.len(), y.len())));
    }
    if cfg.window == 0 || h < cfg.window || w < cfg.window {
        return Err(Error::dim(format!("{h}x{w} image is smaller than the {0}x{0} SSIM window", cfg.window)));
    }
    if x == y {
        return Ok(1.0);
    }
    let taps = cfg.taps();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let mxx = filter_valid(&prod(x, x), h, w, &taps);
    let myy = filter_valid(&prod(y, y), h, w, &taps);
    let mxy = filter_valid(&prod(x, y), h, w, &taps);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// SSIM with the default 11x11, σ = 1.5 window and unit dynamic range.
pub fn ssim(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::dim(format!("{:?} vs {:?}", x.dims(), y.dims())));
    }
    ssim_values(x.height(), x.width(), x.pixels(), y.pixels(), &SsimConfig::default())
}

pub fn quality(reference: &GrayImage, test: &GrayImage) -> Result<QualityReport> {
    Ok(QualityReport { psnr: psnr(reference, test)?, ssim: ssim(reference, test)? })
}

/// Where simulated acquisition noise is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePlacement {
    #[default]
    Measurements,
    Image,
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("noise level {sigma} must be finite and non-negative")));
    }
    Normal::new(0.0, sigma).map_err(|e| Error::arg(e.to_string()))
}

/// Adds i.i.d. `N(0, σ²)` to every measurement.
pub fn add_measurement_noise(y: &MeasurementSet, sigma: f64, seed: u64) -> Result<MeasurementSet> {
    let noise = gaussian(sigma)?;
    let mut out = y.clone();
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.values.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(out)
}

/// Adds i.i.d. `N(0, σ²)` to every pixel, clamping back into [0, 1].
pub fn add_image_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    let noise = gaussian(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<f64> = img.pixels().iter().map(|v| v + noise.sample(&mut rng)).collect();
    GrayImage::from_clamped(img.height(), img.width(), &noisy)?.with_original(img.original_dims())
}
