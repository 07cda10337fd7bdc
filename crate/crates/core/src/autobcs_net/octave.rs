//! Octave feature maps and the two octave operators of the refinement network.
//!
//! The high-frequency branch lives at `(h, w)`, the low-frequency branch at
//! `(h/2, w/2)`. A ratio `t` assigns `round(t·u)` of `u` channels to the low
//! branch; an empty branch is a tensor with zero channels.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    concat_channels, split_channels, Conv2d, ConvTranspose2d, Layer, LayerParams, MaxPool2d, ParamRef, Relu, Tensor4,
    Vectorize,
};

/// `(high, low)` channel counts for `u` channels at ratio `t`.
pub fn octave_split(u: usize, t: f64) -> (usize, usize) {
    let low = ((t * u as f64).round() as usize).min(u);
    (u - low, low)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OctFeature<T> {
    pub high: Tensor4<T>,
    pub low: Tensor4<T>,
}

impl<T: Scalar> OctFeature<T> {
    pub fn new(high: Tensor4<T>, low: Tensor4<T>) -> Result<Self> {
        let f = OctFeature { high, low };
        f.check()?;
        Ok(f)
    }

    /// A feature with only the high-frequency branch (`t = 0`).
    pub fn from_high(high: Tensor4<T>) -> Result<Self> {
        let [n, _, h, w] = high.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim(format!("octave feature needs even spatial dims, got {h}x{w}")));
        }
        Ok(OctFeature { high, low: Tensor4::zeros([n, 0, h / 2, w / 2]) })
    }

    pub fn check(&self) -> Result<()> {
        let [nh, _, hh, wh] = self.high.shape();
        let [nl, _, hl, wl] = self.low.shape();
        if nh != nl || hh != 2 * hl || wh != 2 * wl {
            return Err(Error::dim(format!(
                "octave branches {:?} / {:?}: low must be half the high resolution",
                self.high.shape(),
                self.low.shape()
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> (usize, usize) {
        (self.high.channels(), self.low.channels())
    }

    /// Fraction of channels in the low branch.
    pub fn ratio(&self) -> f64 {
        let (h, l) = self.channels();
        if h + l == 0 {
            0.0
        } else {
            l as f64 / (h + l) as f64
        }
    }

    pub fn zeros_like(&self) -> Self {
        OctFeature { high: Tensor4::zeros(self.high.shape()), low: Tensor4::zeros(self.low.shape()) }
    }

    /// Branch-wise channel concatenation.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        OctFeature::new(concat_channels(&self.high, &other.high)?, concat_channels(&self.low, &other.low)?)
    }

    /// Inverse of [`concat`](Self::concat) given the first operand's channel counts.
    pub fn split(&self, first: (usize, usize)) -> Result<(Self, Self)> {
        let (ha, hb) = split_channels(&self.high, first.0)?;
        let (la, lb) = split_channels(&self.low, first.1)?;
        Ok((OctFeature { high: ha, low: la }, OctFeature { high: hb, low: lb }))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.high.add_assign(&other.high)?;
        self.low.add_assign(&other.low)
    }
}

impl<T: Scalar> Vectorize<T> for OctFeature<T> {
    fn flatten(&self) -> Vec<T> {
        let mut v = self.high.flatten();
        v.extend(self.low.flatten());
        v
    }

    fn unflatten_like(&self, data: &[T]) -> Result<Self> {
        let split = self.high.len();
        if data.len() != split + self.low.len() {
            return Err(Error::dim("octave unflatten: wrong length"));
        }
        Ok(OctFeature {
            high: Tensor4::from_vec(self.high.shape(), data[..split].to_vec())?,
            low: Tensor4::from_vec(self.low.shape(), data[split..].to_vec())?,
        })
    }
}

/// Uniform weights in `±sqrt(6 / fan_in)`; empty tensors stay empty.
pub(crate) fn he_uniform<T: Scalar>(shape: [usize; 4], fan_in: usize, rng: &mut impl Rng) -> Tensor4<T> {
    scaled_uniform(shape, fan_in, 2.0, rng)
}

/// `U(±sqrt(3·gain/fan_in))`, variance `gain/fan_in`.
fn scaled_uniform<T: Scalar>(shape: [usize; 4], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Tensor4<T> {
    let mut t = Tensor4::zeros(shape);
    if fan_in > 0 && !t.is_empty() {
        let b = (3.0 * gain / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-b, b);
        t.data_mut().iter_mut().for_each(|v| *v = T::from_f64_lossy(dist.sample(rng)));
    }
    t
}

// Both octave operators sum two paths into each output branch; every path is
// drawn with the fan-in of the whole branch so the sum keeps He variance.

fn conv3<T: Scalar>(out_c: usize, in_c: usize, fan_in: usize, rng: &mut impl Rng) -> Conv2d<T> {
    Conv2d::same(LayerParams::new(he_uniform([out_c, in_c, 3, 3], fan_in, rng), None))
}

/// Stride equals kernel, so each output pixel sees one tap per input channel.
fn conv_t<T: Scalar>(in_c: usize, out_c: usize, k: usize, fan_in: usize, rng: &mut impl Rng) -> ConvTranspose2d<T> {
    ConvTranspose2d::new(LayerParams::new(he_uniform([in_c, out_c, k, k], fan_in, rng), None), k)
}

/// Channel-wise sum over batch and space, the gradient of a broadcast bias.
fn bias_grad<T: Scalar>(dy: &Tensor4<T>, grad: &mut [T]) {
    let [n, c, h, w] = dy.shape();
    for i in 0..n {
        let s = dy.sample(i);
        for (ch, g) in grad.iter_mut().enumerate().take(c) {
            *g += s[ch * h * w..(ch + 1) * h * w].iter().copied().sum::<T>();
        }
    }
}

fn add_bias<T: Scalar>(x: &mut Tensor4<T>, bias: &[T]) {
    let [n, c, h, w] = x.shape();
    for i in 0..n {
        let s = x.sample_mut(i);
        for ch in 0..c {
            s[ch * h * w..(ch + 1) * h * w].iter_mut().for_each(|v| *v += bias[ch]);
        }
    }
}

fn active(input: usize, output: usize) -> bool {
    input > 0 && output > 0
}

/// Per-output-branch bias shared by both octave operators.
#[derive(Clone, Debug)]
pub struct OctBias<T> {
    pub high: Vec<T>,
    pub low: Vec<T>,
    pub grad_high: Vec<T>,
    pub grad_low: Vec<T>,
}

impl<T: Scalar> OctBias<T> {
    fn zeros(out: (usize, usize)) -> Self {
        OctBias {
            high: vec![T::zero(); out.0],
            low: vec![T::zero(); out.1],
            grad_high: vec![T::zero(); out.0],
            grad_low: vec![T::zero(); out.1],
        }
    }

    fn apply(&self, f: &mut OctFeature<T>) {
        add_bias(&mut f.high, &self.high);
        add_bias(&mut f.low, &self.low);
    }

    fn accumulate(&mut self, dy: &OctFeature<T>) {
        bias_grad(&dy.high, &mut self.grad_high);
        bias_grad(&dy.low, &mut self.grad_low);
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        let n = self.high.len();
        f(ParamRef {
            name: format!("{prefix}.bias_h"),
            shape: [n, 1, 1, 1],
            value: &mut self.high,
            grad: &mut self.grad_high,
        });
        let n = self.low.len();
        f(ParamRef {
            name: format!("{prefix}.bias_l"),
            shape: [n, 1, 1, 1],
            value: &mut self.low,
            grad: &mut self.grad_low,
        });
    }
}

/// Octave convolution with a learned upsampling on the low-to-high path:
///
/// `Y_H = conv(X_H, W_HH) + convT₂(conv(X_L, W_LH))`,
/// `Y_L = conv(X_L, W_LL) + conv(maxpool₂(X_H), W_HL)`,
///
/// all 3x3 "same" convolutions, followed by per-branch biases. `convT₂` is a
/// learned 2x2 stride-2 transposed convolution standing in for nearest
/// upsampling.
#[derive(Clone, Debug)]
pub struct ModOctConv<T> {
    pub hh: Conv2d<T>,
    pub lh: Conv2d<T>,
    pub up: ConvTranspose2d<T>,
    pub ll: Conv2d<T>,
    pub hl: Conv2d<T>,
    pub bias: OctBias<T>,
    pool: MaxPool2d,
    input_channels: Option<(usize, usize)>,
}

impl<T: Scalar> ModOctConv<T> {
    /// Channel counts are `(high, low)` pairs.
    pub fn new(input: (usize, usize), output: (usize, usize), rng: &mut impl Rng) -> Self {
        let fan = 9 * (input.0 + input.1);
        // no activation between lh and up: unit gain keeps the path linear-variance
        let up = scaled_uniform([output.0, output.0, 2, 2], output.0, 1.0, rng);
        ModOctConv {
            hh: conv3(output.0, input.0, fan, rng),
            lh: conv3(output.0, input.1, fan, rng),
            up: ConvTranspose2d::new(LayerParams::new(up, None), 2),
            ll: conv3(output.1, input.1, fan, rng),
            hl: conv3(output.1, input.0, fan, rng),
            bias: OctBias::zeros(output),
            pool: MaxPool2d::new(2),
            input_channels: None,
        }
    }

    pub fn input_channels(&self) -> (usize, usize) {
        (self.hh.params.weight.shape()[1], self.ll.params.weight.shape()[1])
    }

    pub fn output_channels(&self) -> (usize, usize) {
        (self.hh.params.weight.shape()[0], self.ll.params.weight.shape()[0])
    }

    fn check_input(&self, x: &OctFeature<T>) -> Result<()> {
        x.check()?;
        if x.channels() != self.input_channels() {
            return Err(Error::dim(format!(
                "mod_oct_conv expects {:?} channels, got {:?}",
                self.input_channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    fn empty_output(&self, x: &OctFeature<T>) -> OctFeature<T> {
        let (oh, ol) = self.output_channels();
        let [n, _, h, w] = x.high.shape();
        OctFeature { high: Tensor4::zeros([n, oh, h, w]), low: Tensor4::zeros([n, ol, h / 2, w / 2]) }
    }
}

fn missing(layer: &str) -> Error {
    Error::State(format!("{layer}: backward called without a cached forward pass"))
}

impl<T: Scalar> Layer<T> for ModOctConv<T> {
    type Input = OctFeature<T>;
    type Output = OctFeature<T>;

    fn infer(&self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        self.check_input(x)?;
        let ((ih, il), (oh, ol)) = (x.channels(), self.output_channels());
        let mut y = self.empty_output(x);
        if active(ih, oh) {
            y.high.add_assign(&self.hh.infer(&x.high)?)?;
        }
        if active(il, oh) {
            y.high.add_assign(&self.up.infer(&self.lh.infer(&x.low)?)?)?;
        }
        if active(il, ol) {
            y.low.add_assign(&self.ll.infer(&x.low)?)?;
        }
        if active(ih, ol) {
            y.low.add_assign(&self.hl.infer(&self.pool.infer(&x.high)?)?)?;
        }
        self.bias.apply(&mut y);
        Ok(y)
    }

    fn forward(&mut self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        self.check_input(x)?;
        let ((ih, il), (oh, ol)) = (x.channels(), self.output_channels());
        let mut y = self.empty_output(x);
        if active(ih, oh) {
            y.high.add_assign(&self.hh.forward(&x.high)?)?;
        }
        if active(il, oh) {
            let t = self.lh.forward(&x.low)?;
            y.high.add_assign(&self.up.forward(&t)?)?;
        }
        if active(il, ol) {
            y.low.add_assign(&self.ll.forward(&x.low)?)?;
        }
        if active(ih, ol) {
            let p = self.pool.forward(&x.high)?;
            y.low.add_assign(&self.hl.forward(&p)?)?;
        }
        self.bias.apply(&mut y);
        self.input_channels = Some((ih, il));
        Ok(y)
    }

    fn backward(&mut self, dy: &OctFeature<T>) -> Result<OctFeature<T>> {
        let (ih, il) = self.input_channels.take().ok_or_else(|| missing("mod_oct_conv"))?;
        let (oh, ol) = self.output_channels();
        self.bias.accumulate(dy);
        let [n, _, h, w] = dy.high.shape();
        let mut dx = OctFeature { high: Tensor4::zeros([n, ih, h, w]), low: Tensor4::zeros([n, il, h / 2, w / 2]) };
        if active(ih, oh) {
            dx.high.add_assign(&self.hh.backward(&dy.high)?)?;
        }
        if active(il, oh) {
            let d = self.up.backward(&dy.high)?;
            dx.low.add_assign(&self.lh.backward(&d)?)?;
        }
        if active(il, ol) {
            dx.low.add_assign(&self.ll.backward(&dy.low)?)?;
        }
        if active(ih, ol) {
            let d = self.hl.backward(&dy.low)?;
            dx.high.add_assign(&self.pool.backward(&d)?)?;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.hh.visit_params(&format!("{prefix}.hh"), f);
        self.lh.visit_params(&format!("{prefix}.lh"), f);
        self.up.visit_params(&format!("{prefix}.up"), f);
        self.ll.visit_params(&format!("{prefix}.ll"), f);
        self.hl.visit_params(&format!("{prefix}.hl"), f);
        self.bias.visit(prefix, f);
    }
}

/// Resolution-doubling octave operator of the expanding path:
///
/// `Y_H = convT₂(X_H, W_HH) + convT₄(X_L, W_LH)`,
/// `Y_L = convT₂(X_L, W_LL) + conv(X_H, W_HL)`,
///
/// where `convT_s` has kernel size equal to its stride `s` and `conv` is a 3x3
/// "same" convolution. Both branches double relative to their inputs.
#[derive(Clone, Debug)]
pub struct OctTransConv<T> {
    pub hh: ConvTranspose2d<T>,
    pub lh: ConvTranspose2d<T>,
    pub ll: ConvTranspose2d<T>,
    pub hl: Conv2d<T>,
    pub bias: OctBias<T>,
    input_channels: Option<(usize, usize)>,
}

impl<T: Scalar> OctTransConv<T> {
    pub fn new(input: (usize, usize), output: (usize, usize), rng: &mut impl Rng) -> Self {
        let (fan_h, fan_l) = (input.0 + input.1, input.1 + 9 * input.0);
        OctTransConv {
            hh: conv_t(input.0, output.0, 2, fan_h, rng),
            lh: conv_t(input.1, output.0, 4, fan_h, rng),
            ll: conv_t(input.1, output.1, 2, fan_l, rng),
            hl: conv3(output.1, input.0, fan_l, rng),
            bias: OctBias::zeros(output),
            input_channels: None,
        }
    }

    pub fn input_channels(&self) -> (usize, usize) {
        (self.hh.params.weight.shape()[0], self.ll.params.weight.shape()[0])
    }

    pub fn output_channels(&self) -> (usize, usize) {
        (self.hh.params.weight.shape()[1], self.ll.params.weight.shape()[1])
    }

    fn check_input(&self, x: &OctFeature<T>) -> Result<()> {
        x.check()?;
        if x.channels() != self.input_channels() {
            return Err(Error::dim(format!(
                "oct_transpose_conv expects {:?} channels, got {:?}",
                self.input_channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    fn empty_output(&self, x: &OctFeature<T>) -> OctFeature<T> {
        let (oh, ol) = self.output_channels();
        let [n, _, h, w] = x.high.shape();
        OctFeature { high: Tensor4::zeros([n, oh, 2 * h, 2 * w]), low: Tensor4::zeros([n, ol, h, w]) }
    }
}

impl<T: Scalar> Layer<T> for OctTransConv<T> {
    type Input = OctFeature<T>;
    type Output = OctFeature<T>;

    fn infer(&self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        self.check_input(x)?;
        let ((ih, il), (oh, ol)) = (x.channels(), self.output_channels());
        let mut y = self.empty_output(x);
        if active(ih, oh) {
            y.high.add_assign(&self.hh.infer(&x.high)?)?;
        }
        if active(il, oh) {
            y.high.add_assign(&self.lh.infer(&x.low)?)?;
        }
        if active(il, ol) {
            y.low.add_assign(&self.ll.infer(&x.low)?)?;
        }
        if active(ih, ol) {
            y.low.add_assign(&self.hl.infer(&x.high)?)?;
        }
        self.bias.apply(&mut y);
        Ok(y)
    }

    fn forward(&mut self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        self.check_input(x)?;
        let ((ih, il), (oh, ol)) = (x.channels(), self.output_channels());
        let mut y = self.empty_output(x);
        if active(ih, oh) {
            y.high.add_assign(&self.hh.forward(&x.high)?)?;
        }
        if active(il, oh) {
            y.high.add_assign(&self.lh.forward(&x.low)?)?;
        }
        if active(il, ol) {
            y.low.add_assign(&self.ll.forward(&x.low)?)?;
        }
        if active(ih, ol) {
            y.low.add_assign(&self.hl.forward(&x.high)?)?;
        }
        self.bias.apply(&mut y);
        self.input_channels = Some((ih, il));
        Ok(y)
    }

    fn backward(&mut self, dy: &OctFeature<T>) -> Result<OctFeature<T>> {
        let (ih, il) = self.input_channels.take().ok_or_else(|| missing("oct_transpose_conv"))?;
        let (oh, ol) = self.output_channels();
        self.bias.accumulate(dy);
        let [n, _, h, w] = dy.low.shape();
        let mut dx = OctFeature { high: Tensor4::zeros([n, ih, h, w]), low: Tensor4::zeros([n, il, h / 2, w / 2]) };
        if active(ih, oh) {
            dx.high.add_assign(&self.hh.backward(&dy.high)?)?;
        }
        if active(il, oh) {
            dx.low.add_assign(&self.lh.backward(&dy.high)?)?;
        }
        if active(il, ol) {
            dx.low.add_assign(&self.ll.backward(&dy.low)?)?;
        }
        if active(ih, ol) {
            dx.high.add_assign(&self.hl.backward(&dy.low)?)?;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.hh.visit_params(&format!("{prefix}.hh"), f);
        self.lh.visit_params(&format!("{prefix}.lh"), f);
        self.ll.visit_params(&format!("{prefix}.ll"), f);
        self.hl.visit_params(&format!("{prefix}.hl"), f);
        self.bias.visit(prefix, f);
    }
}

/// ReLU on both branches.
#[derive(Clone, Debug, Default)]
pub struct OctRelu<T> {
    high: Relu<T>,
    low: Relu<T>,
}

impl<T: Scalar> Layer<T> for OctRelu<T> {
    type Input = OctFeature<T>;
    type Output = OctFeature<T>;

    fn infer(&self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.infer(&x.high)?, low: self.low.infer(&x.low)? })
    }

    fn forward(&mut self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.forward(&x.high)?, low: self.low.forward(&x.low)? })
    }

    fn backward(&mut self, dy: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.backward(&dy.high)?, low: self.low.backward(&dy.low)? })
    }
}

/// 2x2 max pooling on both branches.
#[derive(Clone, Debug)]
pub struct OctPool {
    high: MaxPool2d,
    low: MaxPool2d,
}

impl Default for OctPool {
    fn default() -> Self {
        OctPool { high: MaxPool2d::new(2), low: MaxPool2d::new(2) }
    }
}

impl<T: Scalar> Layer<T> for OctPool {
    type Input = OctFeature<T>;
    type Output = OctFeature<T>;

    fn infer(&self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.infer(&x.high)?, low: self.low.infer(&x.low)? })
    }

    fn forward(&mut self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.forward(&x.high)?, low: self.low.forward(&x.low)? })
    }

    fn backward(&mut self, dy: &OctFeature<T>) -> Result<OctFeature<T>> {
        Ok(OctFeature { high: self.high.backward(&dy.high)?, low: self.low.backward(&dy.low)? })
    }
}

/// An octave layer followed by ReLU: the encoding block `F_e` when `L` is
/// [`ModOctConv`], the upsampling block `F_u` when `L` is [`OctTransConv`].
#[derive(Clone, Debug)]
pub struct Activated<L, T> {
    pub layer: L,
    relu: OctRelu<T>,
}

impl<T: Scalar, L> Activated<L, T> {
    pub fn new(layer: L) -> Self {
        Activated { layer, relu: OctRelu { high: Relu::new(), low: Relu::new() } }
    }
}

impl<T: Scalar, L: Layer<T, Input = OctFeature<T>, Output = OctFeature<T>>> Layer<T> for Activated<L, T> {
    type Input = OctFeature<T>;
    type Output = OctFeature<T>;

    fn infer(&self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        self.relu.infer(&self.layer.infer(x)?)
    }

    fn forward(&mut self, x: &OctFeature<T>) -> Result<OctFeature<T>> {
        let y = self.layer.forward(x)?;
        self.relu.forward(&y)
    }

    fn backward(&mut self, dy: &OctFeature<T>) -> Result<OctFeature<T>> {
        let d = self.relu.backward(dy)?;
        self.layer.backward(&d)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.layer.visit_params(prefix, f);
    }
}

pub type EncodeBlock<T> = Activated<ModOctConv<T>, T>;
pub type UpBlock<T> = Activated<OctTransConv<T>, T>;
