//! Dense NCHW tensors and the layer engine used by the reconstruction network.
//!
//! Every layer implements [`Layer`]: `forward` caches whatever the matching
//! `backward` needs, and `backward` consumes that cache, accumulates parameter
//! gradients into the layer and returns the gradient with respect to the input.

mod adam;
mod conv;
mod gradcheck;
mod layers;
mod ops;
mod pool;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_backward, conv_output_dim, conv_transpose2d, conv_transpose2d_backward, ConvGrads};
pub use gradcheck::{check_layer, grad_check, grad_check_piecewise, GradCheckReport};
pub use layers::{Concat, Conv2d, ConvTranspose2d, Layer, MaxPool2d, ParamRef, Relu, Vectorize};
pub use ops::{concat_channels, depth_to_space, relu, relu_backward, space_to_depth, split_channels};
pub use pool::{maxpool2d, maxpool2d_backward};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rank-4 dense array laid out as (batch, channel, height, width), row-major.
///
/// Any dimension may be zero. An absent octave branch is a tensor with zero
/// channels; the weights of a path into an empty branch have zero output channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: [usize; 4], value: T) -> Self {
        Tensor4 { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::dim(format!("shape {shape:?} needs {len} elements, got {}", data.len())));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut t = Self::zeros(shape);
        let [n, c, h, w] = shape;
        let mut i = 0;
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f([a, b, y, x]);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn offset(&self, [n, c, y, x]: [usize; 4]) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: T) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Elements of one batch entry, `C*H*W` long.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, k: T) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Tensor4 { shape: self.shape, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "compare")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect() }
    }

    /// Reinterpret with a new shape holding the same number of elements.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub(crate) fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!("{what}: shapes {:?} and {:?} differ", self.shape, other.shape)));
        }
        Ok(())
    }
}

/// Weights and optional per-output-channel bias of a convolution.
///
/// For `conv2d` the weight layout is (outC, inC, kH, kW). For
/// `conv_transpose2d` it is (inC, outC, kH, kW), so the same tensor drives a
/// convolution and its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor4<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weight: Tensor4<T>, bias: Option<Vec<T>>) -> Self {
        LayerParams { weight, bias }
    }

    pub fn zeros(shape: [usize; 4], bias_len: Option<usize>) -> Self {
        LayerParams { weight: Tensor4::zeros(shape), bias: bias_len.map(|n| vec![T::zero(); n]) }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        LayerParams {
            weight: Tensor4::zeros(self.weight.shape()),
            bias: self.bias.as_ref().map(|b| vec![T::zero(); b.len()]),
        }
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.height(), self.weight.width())
    }
}
