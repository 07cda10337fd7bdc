use super::conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward};
use super::ops::{concat_channels, relu, relu_backward, split_channels};
use super::pool::{maxpool2d, maxpool2d_backward};
use super::{LayerParams, Tensor4};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mutable view of one learnable tensor and its accumulated gradient.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub shape: [usize; 4],
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

/// Values a layer consumes or produces, flattenable for finite differences.
pub trait Vectorize<T>: Sized {
    fn flatten(&self) -> Vec<T>;
    /// A value with the same structure as `self` holding `data`.
    fn unflatten_like(&self, data: &[T]) -> Result<Self>;
}

impl<T: Scalar> Vectorize<T> for Tensor4<T> {
    fn flatten(&self) -> Vec<T> {
        self.data().to_vec()
    }

    fn unflatten_like(&self, data: &[T]) -> Result<Self> {
        Tensor4::from_vec(self.shape(), data.to_vec())
    }
}

impl<T: Scalar, A: Vectorize<T>, B: Vectorize<T>> Vectorize<T> for (A, B) {
    fn flatten(&self) -> Vec<T> {
        let mut v = self.0.flatten();
        v.extend(self.1.flatten());
        v
    }

    fn unflatten_like(&self, data: &[T]) -> Result<Self> {
        let split = self.0.flatten().len();
        if data.len() < split {
            return Err(Error::dim("pair unflatten: data too short"));
        }
        Ok((self.0.unflatten_like(&data[..split])?, self.1.unflatten_like(&data[split..])?))
    }
}

/// A differentiable building block with an explicit forward cache.
pub trait Layer<T: Scalar> {
    type Input: Vectorize<T>;
    type Output: Vectorize<T>;

    /// Stateless evaluation; does not touch the cache.
    fn infer(&self, x: &Self::Input) -> Result<Self::Output>;

    /// Evaluation that records what `backward` needs.
    fn forward(&mut self, x: &Self::Input) -> Result<Self::Output>;

    /// Consumes the cache, accumulates parameter gradients and returns the
    /// gradient with respect to the input.
    fn backward(&mut self, dy: &Self::Output) -> Result<Self::Input>;

    fn visit_params(&mut self, _prefix: &str, _f: &mut dyn FnMut(ParamRef<'_, T>)) {}

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |p| p.grad.fill(T::zero()));
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer}: backward called without a cached forward pass"))
}

pub(crate) fn visit_layer_params<T: Scalar>(
    prefix: &str,
    params: &mut LayerParams<T>,
    grads: &mut LayerParams<T>,
    f: &mut dyn FnMut(ParamRef<'_, T>),
) {
    let shape = params.weight.shape();
    f(ParamRef {
        name: format!("{prefix}.weight"),
        shape,
        value: params.weight.data_mut(),
        grad: grads.weight.data_mut(),
    });
    if let (Some(b), Some(gb)) = (params.bias.as_mut(), grads.bias.as_mut()) {
        f(ParamRef { name: format!("{prefix}.bias"), shape: [b.len(), 1, 1, 1], value: b, grad: gb });
    }
}

/// Zero-padded strided convolution layer.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub params: LayerParams<T>,
    pub grads: LayerParams<T>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(params: LayerParams<T>, stride: usize, pad: usize) -> Self {
        let grads = params.zeros_like();
        Conv2d { params, grads, stride, pad, input: None }
    }

    /// Stride 1 with `floor(k/2)` padding, which preserves spatial size for odd `k`.
    pub fn same(params: LayerParams<T>) -> Self {
        let pad = params.weight.height() / 2;
        Self::new(params, 1, pad)
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    type Input = Tensor4<T>;
    type Output = Tensor4<T>;

    fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d(x, &self.params, self.stride, self.pad)
    }

    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv2d"))?;
        let (dx, g) = conv2d_backward(&x, &self.params, self.stride, self.pad, dy)?;
        g.accumulate_into(&mut self.grads);
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        visit_layer_params(prefix, &mut self.params, &mut self.grads, f);
    }
}

/// Unpadded transposed convolution layer; weights are (inC, outC, k, k).
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub params: LayerParams<T>,
    pub grads: LayerParams<T>,
    pub stride: usize,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(params: LayerParams<T>, stride: usize) -> Self {
        let grads = params.zeros_like();
        ConvTranspose2d { params, grads, stride, input: None }
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    type Input = Tensor4<T>;
    type Output = Tensor4<T>;

    fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv_transpose2d(x, &self.params, self.stride)
    }

    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv_transpose2d"))?;
        let (dx, g) = conv_transpose2d_backward(&x, &self.params, self.stride, dy)?;
        g.accumulate_into(&mut self.grads);
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        visit_layer_params(prefix, &mut self.params, &mut self.grads, f);
    }
}

#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize) -> Self {
        MaxPool2d { kernel, cache: None }
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    type Input = Tensor4<T>;
    type Output = Tensor4<T>;

    fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(maxpool2d(x, self.kernel)?.0)
    }

    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (y, idx) = maxpool2d(x, self.kernel)?;
        self.cache = Some((x.shape(), idx));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (shape, idx) = self.cache.take().ok_or_else(|| missing_cache("maxpool2d"))?;
        maxpool2d_backward(shape, &idx, dy)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { input: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    type Input = Tensor4<T>;
    type Output = Tensor4<T>;

    fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(relu(x))
    }

    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.input = Some(x.clone());
        Ok(relu(x))
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("relu"))?;
        relu_backward(&x, dy)
    }
}

/// Channel concatenation of a pair of tensors.
#[derive(Clone, Debug, Default)]
pub struct Concat {
    first_channels: Option<usize>,
}

impl Concat {
    pub fn new() -> Self {
        Concat { first_channels: None }
    }
}

impl<T: Scalar> Layer<T> for Concat {
    type Input = (Tensor4<T>, Tensor4<T>);
    type Output = Tensor4<T>;

    fn infer(&self, (a, b): &(Tensor4<T>, Tensor4<T>)) -> Result<Tensor4<T>> {
        concat_channels(a, b)
    }

    fn forward(&mut self, x: &(Tensor4<T>, Tensor4<T>)) -> Result<Tensor4<T>> {
        let y = self.infer(x)?;
        self.first_channels = Some(x.0.channels());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<(Tensor4<T>, Tensor4<T>)> {
        let c = self.first_channels.take().ok_or_else(|| missing_cache("concat"))?;
        split_channels(dy, c)
    }
}
