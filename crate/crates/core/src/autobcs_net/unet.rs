//! Octave U-net producing the residual refinement of the initial reconstruction.

use rand::Rng;

use super::octave::{
    he_uniform, octave_split, Activated, EncodeBlock, ModOctConv, OctFeature, OctPool, OctTransConv, UpBlock,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Conv2d, Layer, LayerParams, ParamRef, Tensor4};

type Pair<T> = (EncodeBlock<T>, EncodeBlock<T>);

/// Contracting path of `depth` levels (two encoding blocks then 2x2 pooling
/// each, widths `base·2^level`), a bottom level, and a mirrored expanding path
/// (octave-transposed upsampling, skip concatenation, two encoding blocks).
/// The entry block lifts the single-channel input from ratio 0 to `ratio`; the
/// last encoding block returns to ratio 0 and a 3x3 convolution with bias maps
/// to one channel.
#[derive(Clone, Debug)]
pub struct OctUnet<T> {
    depth: usize,
    splits: Vec<(usize, usize)>,
    down: Vec<Pair<T>>,
    pools: Vec<OctPool>,
    bottom: Pair<T>,
    ups: Vec<UpBlock<T>>,
    up_blocks: Vec<Pair<T>>,
    pub head: Conv2d<T>,
}

fn pair<T: Scalar>(a: (usize, usize), b: (usize, usize), c: (usize, usize), rng: &mut impl Rng) -> Pair<T> {
    (Activated::new(ModOctConv::new(a, b, rng)), Activated::new(ModOctConv::new(b, c, rng)))
}

fn double(s: (usize, usize)) -> (usize, usize) {
    (2 * s.0, 2 * s.1)
}

impl<T: Scalar> OctUnet<T> {
    pub fn new(base_width: usize, depth: usize, ratio: f64, rng: &mut impl Rng) -> Result<Self> {
        if depth == 0 || base_width < 2 || !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config(format!(
                "U-net needs depth >= 1, width >= 2 and ratio in [0, 1] (got {depth}, {base_width}, {ratio})"
            )));
        }
        let splits: Vec<(usize, usize)> = (0..=depth).map(|l| octave_split(base_width << l, ratio)).collect();
        let mut down = Vec::with_capacity(depth);
        for l in 0..depth {
            let input = if l == 0 { (1, 0) } else { splits[l - 1] };
            down.push(pair(input, splits[l], splits[l], rng));
        }
        let bottom = pair(splits[depth - 1], splits[depth], splits[depth], rng);
        let mut ups = Vec::with_capacity(depth);
        let mut up_blocks = Vec::with_capacity(depth);
        for l in 0..depth {
            ups.push(Activated::new(OctTransConv::new(splits[l + 1], splits[l], rng)));
            let out = if l == 0 { (base_width, 0) } else { splits[l] };
            up_blocks.push(pair(double(splits[l]), splits[l], out, rng));
        }
        let head = Conv2d::same(LayerParams::new(
            he_uniform([1, base_width, 3, 3], base_width * 9, rng),
            Some(vec![T::zero()]),
        ));
        Ok(OctUnet { depth, splits, down, pools: vec![OctPool::default(); depth], bottom, ups, up_blocks, head })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of skip concatenations, one per level.
    pub fn concat_count(&self) -> usize {
        self.ups.len()
    }

    /// Spatial dims must be divisible by this (the low branch of the deepest
    /// level sits at `1/2^(depth+1)` resolution).
    pub fn alignment(&self) -> usize {
        1 << (self.depth + 1)
    }

    /// Zeroes the output convolution so the residual vanishes.
    pub fn zero_head(&mut self) {
        self.head.params.weight.fill(T::zero());
        if let Some(b) = self.head.params.bias.as_mut() {
            b.fill(T::zero());
        }
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.shape();
        let a = self.alignment();
        if c != 1 || h % a != 0 || w % a != 0 || h == 0 || w == 0 {
            return Err(Error::dim(format!(
                "U-net input {:?} must be single-channel with dims divisible by {a}",
                x.shape()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Layer<T> for OctUnet<T> {
    type Input = Tensor4<T>;
    type Output = Tensor4<T>;

    fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut f = OctFeature::from_high(x.clone())?;
        let mut skips = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            f = self.down[l].1.infer(&self.down[l].0.infer(&f)?)?;
            skips.push(f.clone());
            f = self.pools[l].infer(&f)?;
        }
        f = self.bottom.1.infer(&self.bottom.0.infer(&f)?)?;
        for l in (0..self.depth).rev() {
            f = self.ups[l].infer(&f)?.concat(&skips[l])?;
            f = self.up_blocks[l].1.infer(&self.up_blocks[l].0.infer(&f)?)?;
        }
        self.head.infer(&f.high)
    }

    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut f = OctFeature::from_high(x.clone())?;
        let mut skips = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            let t = self.down[l].0.forward(&f)?;
            f = self.down[l].1.forward(&t)?;
            skips.push(f.clone());
            f = self.pools[l].forward(&f)?;
        }
        let t = self.bottom.0.forward(&f)?;
        f = self.bottom.1.forward(&t)?;
        for l in (0..self.depth).rev() {
            f = self.ups[l].forward(&f)?.concat(&skips[l])?;
            let t = self.up_blocks[l].0.forward(&f)?;
            f = self.up_blocks[l].1.forward(&t)?;
        }
        self.head.forward(&f.high)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let dh = self.head.backward(dy)?;
        let [n, _, h, w] = dh.shape();
        let mut d = OctFeature { high: dh, low: Tensor4::zeros([n, 0, h / 2, w / 2]) };
        let mut skip_grads: Vec<Option<OctFeature<T>>> = vec![None; self.depth];
        for l in 0..self.depth {
            d = self.up_blocks[l].1.backward(&d)?;
            d = self.up_blocks[l].0.backward(&d)?;
            let (d_up, d_skip) = d.split(self.splits[l])?;
            skip_grads[l] = Some(d_skip);
            d = self.ups[l].backward(&d_up)?;
        }
        d = self.bottom.1.backward(&d)?;
        d = self.bottom.0.backward(&d)?;
        for l in (0..self.depth).rev() {
            d = self.pools[l].backward(&d)?;
            let skip = skip_grads[l].take().ok_or_else(|| Error::State("missing skip gradient".into()))?;
            d.add_assign(&skip)?;
            d = self.down[l].1.backward(&d)?;
            d = self.down[l].0.backward(&d)?;
        }
        Ok(d.high)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        for (l, (a, b)) in self.down.iter_mut().enumerate() {
            a.visit_params(&format!("{prefix}.down{l}.a"), f);
            b.visit_params(&format!("{prefix}.down{l}.b"), f);
        }
        self.bottom.0.visit_params(&format!("{prefix}.bottom.a"), f);
        self.bottom.1.visit_params(&format!("{prefix}.bottom.b"), f);
        for l in (0..self.depth).rev() {
            self.ups[l].visit_params(&format!("{prefix}.up{l}"), f);
            self.up_blocks[l].0.visit_params(&format!("{prefix}.upblock{l}.a"), f);
            self.up_blocks[l].1.visit_params(&format!("{prefix}.upblock{l}.b"), f);
        }
        self.head.visit_params(&format!("{prefix}.head"), f);
    }
}
