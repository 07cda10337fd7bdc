//! Grayscale images with values in [0, 1].

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// A row-major grayscale image. `original` records the size before any
/// zero padding so reconstructions can be cropped back.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    original: (usize, usize),
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim("image dims must be >= 1"));
        }
        if pixels.len() != height * width {
            return Err(Error::dim(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::arg(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(GrayImage { height, width, pixels, original: (height, width) })
    }

    /// Builds an image from arbitrary reconstructed values, clamping to [0, 1]
    /// and mapping NaN to 0.
    pub fn from_clamped(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let pixels = values.iter().map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }).collect();
        Self::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn original_dims(&self) -> (usize, usize) {
        self.original
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Zero-pads on the right and bottom up to multiples of `multiple`.
    pub fn pad_to_multiple(&self, multiple: usize) -> Result<Self> {
        if multiple == 0 {
            return Err(Error::arg("padding multiple must be >= 1"));
        }
        let h = self.height.div_ceil(multiple) * multiple;
        let w = self.width.div_ceil(multiple) * multiple;
        let mut pixels = vec![0.0; h * w];
        for y in 0..self.height {
            pixels[y * w..y * w + self.width].copy_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
        }
        Ok(GrayImage { height: h, width: w, pixels, original: self.original })
    }

    /// The top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        self.window(0, 0, height, width)
    }

    /// Crops back to the pre-padding size.
    pub fn crop_to_original(&self) -> Result<Self> {
        let (h, w) = self.original;
        self.crop(h, w)
    }

    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "window {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(height * width);
        for y in top..top + height {
            pixels.extend_from_slice(&self.pixels[y * self.width + left..y * self.width + left + width]);
        }
        Ok(GrayImage { height, width, pixels, original: (height, width) })
    }

    /// Overrides the recorded pre-padding size.
    pub fn with_original(mut self, original: (usize, usize)) -> Result<Self> {
        if original.0 > self.height || original.1 > self.width {
            return Err(Error::dim("original dims exceed image dims"));
        }
        self.original = original;
        Ok(self)
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let data = self.pixels.iter().map(|&v| T::from_f64_lossy(v)).collect();
        Tensor4::from_vec([1, 1, self.height, self.width], data).expect("image dims are valid")
    }

    /// Single-channel tensor to image, clamping values into [0, 1].
    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>) -> Result<Self> {
        if t.batch() != 1 || t.channels() != 1 {
            return Err(Error::dim(format!("expected a 1x1xHxW tensor, got {:?}", t.shape())));
        }
        let values: Vec<f64> = t.data().iter().map(|v| v.as_f64()).collect();
        Self::from_clamped(t.height(), t.width(), &values)
    }

    /// One of the eight symmetries of the square: `rotations` quarter turns
    /// counter-clockwise, preceded by a horizontal flip when `flip` is set.
    pub fn dihedral(&self, flip: bool, rotations: u8) -> Self {
        let mut img = if flip { self.flip_horizontal() } else { self.clone() };
        for _ in 0..rotations % 4 {
            img = img.rotate90();
        }
        img
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            pixels.extend(self.pixels[y * self.width..(y + 1) * self.width].iter().rev());
        }
        GrayImage { pixels, original: (self.height, self.width), ..*self }
    }

    pub fn flip_vertical(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in (0..self.height).rev() {
            pixels.extend_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
        }
        GrayImage { pixels, original: (self.height, self.width), ..*self }
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (h, w) = (self.width, self.height);
        let mut pixels = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                pixels[y * w + x] = self.get(x, self.width - 1 - y);
            }
        }
        GrayImage { height: h, width: w, pixels, original: (h, w) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(GrayImage::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn pad_then_crop_is_exact() {
        let img = GrayImage::from_fn(33, 35, |y, x| ((y * 7 + x * 3) % 11) as f64 / 10.0).unwrap();
        let padded = img.pad_to_multiple(32).unwrap();
        assert_eq!(padded.dims(), (64, 64));
        assert_eq!(padded.get(40, 40), 0.0);
        assert_eq!(padded.crop_to_original().unwrap(), img);
    }

    #[test]
    fn dihedral_group_has_eight_elements() {
        let img = GrayImage::from_fn(3, 3, |y, x| (y * 3 + x) as f64 / 8.0).unwrap();
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for flip in [false, true] {
            for r in 0..4 {
                let key: Vec<u64> = img.dihedral(flip, r).pixels().iter().map(|v| v.to_bits()).collect();
                if !seen.contains(&key) {
                    seen.push(key);
                }
            }
        }
        assert_eq!(seen.len(), 8);
        assert_eq!(img.rotate90().rotate90().rotate90().rotate90(), img);
        assert_eq!(img.flip_vertical(), img.dihedral(true, 2));
    }
}
