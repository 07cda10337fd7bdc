use super::{LayerParams, Tensor4};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output length of a zero-padded strided convolution along one axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `ox` whose input column `ox*stride + kx - pad` lies in `[0, width)`.
fn valid_span(out_w: usize, width: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if width + pad > k { ((width + pad - k - 1) / stride + 1).min(out_w) } else { 0 };
    (lo.min(hi), hi)
}

/// Unfold one `C x H x W` sample into a `(C*kh*kw) x (out_h*out_w)` matrix.
fn im2col<T: Scalar>(src: &[T], g: &Geometry, cols: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &src[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                let (lo, hi) = valid_span(g.out_w, g.width, g.stride, kx, g.pad);
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy as usize >= g.height {
                        line.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let start = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src_row[start..start + hi - lo]);
                    } else {
                        for (v, &s) in line[lo..hi].iter_mut().zip(src_row[start..].iter().step_by(g.stride)) {
                            *v = s;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add the matrix back onto a `C x H x W` sample.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, dst: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &mut dst[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                let (lo, hi) = valid_span(g.out_w, g.width, g.stride, kx, g.pad);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    let line = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    let dst_row = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let start = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        for (d, &v) in dst_row[start..start + hi - lo].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in dst_row[start..].iter_mut().step_by(g.stride).zip(line) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_geometry<T: Scalar>(x: &Tensor4<T>, p: &LayerParams<T>, stride: usize, pad: usize) -> Result<Geometry> {
    let [out_c, in_c, kh, kw] = p.weight.shape();
    if x.channels() != in_c {
        return Err(Error::dim(format!("conv2d: input has {} channels, kernel expects {in_c}", x.channels())));
    }
    if stride == 0 {
        return Err(Error::arg("conv2d: stride must be >= 1"));
    }
    if let Some(b) = &p.bias {
        if b.len() != out_c {
            return Err(Error::dim(format!("conv2d: bias length {} != {out_c}", b.len())));
        }
    }
    let out_h = conv_output_dim(x.height(), kh, stride, pad);
    let out_w = conv_output_dim(x.width(), kw, stride, pad);
    match (out_h, out_w) {
        (Some(out_h), Some(out_w)) => {
            Ok(Geometry { channels: in_c, height: x.height(), width: x.width(), kh, kw, stride, pad, out_h, out_w })
        }
        _ => Err(Error::dim(format!(
            "conv2d: kernel {kh}x{kw} does not fit input {}x{} with pad {pad}",
            x.height(),
            x.width()
        ))),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

/// Zero-padded strided 2-D cross-correlation.
///
/// Output spatial size is `floor((H + 2*pad - kH)/stride) + 1`, and likewise for W.
pub fn conv2d<T: Scalar>(x: &Tensor4<T>, p: &LayerParams<T>, stride: usize, pad: usize) -> Result<Tensor4<T>> {
    let g = conv_geometry(x, p, stride, pad)?;
    let out_c = p.weight.shape()[0];
    let mut out = Tensor4::zeros([x.batch(), out_c, g.out_h, g.out_w]);
    if out_c == 0 {
        return Ok(out);
    }
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.rows() * g.cols()] };
    for n in 0..x.batch() {
        let rhs: &[T] = if g.is_pointwise() {
            x.sample(n)
        } else {
            im2col(x.sample(n), &g, &mut cols);
            &cols
        };
        let dst = out.sample_mut(n);
        if g.rows() > 0 {
            T::gemm(
                out_c,
                g.rows(),
                g.cols(),
                T::one(),
                p.weight.data(),
                (g.rows() as isize, 1),
                rhs,
                (g.cols() as isize, 1),
                T::zero(),
                dst,
                (g.cols() as isize, 1),
            );
        }
        if let Some(b) = &p.bias {
            add_bias(dst, b, g.cols());
        }
    }
    Ok(out)
}

/// Parameter gradients of a convolution-type layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Tensor4<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> ConvGrads<T> {
    pub(crate) fn accumulate_into(&self, target: &mut LayerParams<T>) {
        target.weight.add_assign(&self.weight).expect("grad shape matches parameter");
        if let (Some(acc), Some(g)) = (target.bias.as_mut(), self.bias.as_ref()) {
            acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
    }
}

fn bias_grad<T: Scalar>(dy: &Tensor4<T>) -> Vec<T> {
    let plane = dy.height() * dy.width();
    let mut g = vec![T::zero(); dy.channels()];
    for n in 0..dy.batch() {
        for (c, chunk) in dy.sample(n).chunks(plane.max(1)).enumerate() {
            g[c] += chunk.iter().copied().sum::<T>();
        }
    }
    g
}

/// Gradients of [`conv2d`] with respect to its input and parameters.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    p: &LayerParams<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvGrads<T>)> {
    let g = conv_geometry(x, p, stride, pad)?;
    let out_c = p.weight.shape()[0];
    if dy.shape() != [x.batch(), out_c, g.out_h, g.out_w] {
        return Err(Error::dim(format!(
            "conv2d backward: upstream gradient {:?} does not match output {:?}",
            dy.shape(),
            [x.batch(), out_c, g.out_h, g.out_w]
        )));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = Tensor4::zeros(p.weight.shape());
    let pointwise = g.is_pointwise();
    let mut cols = vec![T::zero(); if pointwise { 0 } else { g.rows() * g.cols() }];
    let mut dcols = vec![T::zero(); if pointwise { 0 } else { g.rows() * g.cols() }];
    if out_c > 0 && g.rows() > 0 {
        for n in 0..x.batch() {
            let dyn_ = dy.sample(n);
            // dW += dY * cols^T
            let cols_ref: &[T] = if pointwise {
                x.sample(n)
            } else {
                im2col(x.sample(n), &g, &mut cols);
                &cols
            };
            T::gemm(
                out_c,
                g.cols(),
                g.rows(),
                T::one(),
                dyn_,
                (g.cols() as isize, 1),
                cols_ref,
                (1, g.cols() as isize),
                T::one(),
                dw.data_mut(),
                (g.rows() as isize, 1),
            );
            // dcols = W^T * dY
            let dst: &mut [T] = if pointwise { dx.sample_mut(n) } else { &mut dcols };
            T::gemm(
                g.rows(),
                out_c,
                g.cols(),
                T::one(),
                p.weight.data(),
                (1, g.rows() as isize),
                dyn_,
                (g.cols() as isize, 1),
                T::zero(),
                dst,
                (g.cols() as isize, 1),
            );
            if !pointwise {
                col2im(&dcols, &g, dx.sample_mut(n));
            }
        }
    }
    let bias = p.bias.as_ref().map(|_| bias_grad(dy));
    Ok((dx, ConvGrads { weight: dw, bias }))
}

fn transpose_geometry<T: Scalar>(x: &Tensor4<T>, p: &LayerParams<T>, stride: usize) -> Result<Geometry> {
    let [in_c, out_c, kh, kw] = p.weight.shape();
    if x.channels() != in_c {
        return Err(Error::dim(format!(
            "conv_transpose2d: input has {} channels, kernel expects {in_c}",
            x.channels()
        )));
    }
    if stride == 0 {
        return Err(Error::arg("conv_transpose2d: stride must be >= 1"));
    }
    if let Some(b) = &p.bias {
        if b.len() != out_c {
            return Err(Error::dim(format!("conv_transpose2d: bias length {} != {out_c}", b.len())));
        }
    }
    // Geometry of the forward convolution this operator is the adjoint of.
    Ok(Geometry {
        channels: out_c,
        height: (x.height() - 1) * stride + kh,
        width: (x.width() - 1) * stride + kw,
        kh,
        kw,
        stride,
        pad: 0,
        out_h: x.height(),
        out_w: x.width(),
    })
}

/// Transposed convolution without padding: the exact adjoint of
/// `conv2d(., p, stride, 0)`. With kernel size equal to the stride the output
/// is `H*stride x W*stride`.
pub fn conv_transpose2d<T: Scalar>(x: &Tensor4<T>, p: &LayerParams<T>, stride: usize) -> Result<Tensor4<T>> {
    let g = transpose_geometry(x, p, stride)?;
    let in_c = x.channels();
    let mut out = Tensor4::zeros([x.batch(), g.channels, g.height, g.width]);
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    if g.rows() > 0 {
        for n in 0..x.batch() {
            // cols = W^T * x, with W viewed as in_c x (out_c*kh*kw)
            T::gemm(
                g.rows(),
                in_c,
                g.cols(),
                T::one(),
                p.weight.data(),
                (1, g.rows() as isize),
                x.sample(n),
                (g.cols() as isize, 1),
                T::zero(),
                &mut cols,
                (g.cols() as isize, 1),
            );
            col2im(&cols, &g, out.sample_mut(n));
        }
    }
    if let Some(b) = &p.bias {
        let plane = g.height * g.width;
        for n in 0..x.batch() {
            add_bias(out.sample_mut(n), b, plane);
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2d`] with respect to its input and parameters.
pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    p: &LayerParams<T>,
    stride: usize,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvGrads<T>)> {
    let g = transpose_geometry(x, p, stride)?;
    let in_c = x.channels();
    if dy.shape() != [x.batch(), g.channels, g.height, g.width] {
        return Err(Error::dim(format!(
            "conv_transpose2d backward: upstream gradient {:?} does not match output",
            dy.shape()
        )));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = Tensor4::zeros(p.weight.shape());
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    if g.rows() > 0 && in_c > 0 {
        for n in 0..x.batch() {
            im2col(dy.sample(n), &g, &mut cols);
            // dx = W * cols
            T::gemm(
                in_c,
                g.rows(),
                g.cols(),
                T::one(),
                p.weight.data(),
                (g.rows() as isize, 1),
                &cols,
                (g.cols() as isize, 1),
                T::zero(),
                dx.sample_mut(n),
                (g.cols() as isize, 1),
            );
            // dW += x * cols^T
            T::gemm(
                in_c,
                g.cols(),
                g.rows(),
                T::one(),
                x.sample(n),
                (g.cols() as isize, 1),
                &cols,
                (1, g.cols() as isize),
                T::one(),
                dw.data_mut(),
                (g.rows() as isize, 1),
            );
        }
    }
    let bias = p.bias.as_ref().map(|_| bias_grad(dy));
    Ok((dx, ConvGrads { weight: dw, bias }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<f64> {
        Tensor4::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct sliding-window oracle.
    fn naive_conv(x: &Tensor4<f64>, p: &LayerParams<f64>, stride: usize, pad: usize) -> Tensor4<f64> {
        let [oc, ic, kh, kw] = p.weight.shape();
        let oh = (x.height() + 2 * pad - kh) / stride + 1;
        let ow = (x.width() + 2 * pad - kw) / stride + 1;
        Tensor4::from_fn([x.batch(), oc, oh, ow], |[n, o, y, xx]| {
            let mut s = p.bias.as_ref().map_or(0.0, |b| b[o]);
            for c in 0..ic {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (y * stride + ky) as isize - pad as isize;
                        let ix = (xx * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < x.height() && (ix as usize) < x.width() {
                            s += x.get([n, c, iy as usize, ix as usize]) * p.weight.get([o, c, ky, kx]);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn scalar_product() {
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![5.0]).unwrap();
        let p = LayerParams::new(Tensor4::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(), None);
        assert_eq!(conv2d(&x, &p, 1, 0).unwrap().data(), &[10.0]);
    }

    #[test]
    fn sliding_window_sum() {
        let x = Tensor4::from_vec([1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let p = LayerParams::new(Tensor4::filled([1, 1, 2, 2], 1.0), None);
        let y = conv2d(&x, &p, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor4::zeros([2, 3, 5, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LayerParams::new(random([2, 3, 3, 3], &mut rng), Some(vec![0.25, -1.5]));
        let y = conv2d(&x, &p, 1, 1).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                for yy in 0..5 {
                    for xx in 0..4 {
                        assert_eq!(y.get([n, c, yy, xx]), [0.25, -1.5][c]);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_naive_over_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(h, w, k, s, pad) in &[
            (5, 7, 3, 1, 1),
            (8, 8, 2, 2, 0),
            (9, 6, 3, 2, 1),
            (4, 4, 1, 1, 0),
            (6, 6, 4, 3, 2),
            (5, 3, 1, 2, 2),
            (3, 7, 2, 3, 3),
        ] {
            let x = random([2, 3, h, w], &mut rng);
            let bias: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = LayerParams::new(random([4, 3, k, k], &mut rng), Some(bias));
            let got = conv2d(&x, &p, s, pad).unwrap();
            let want = naive_conv(&x, &p, s, pad);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor4::<f64>::zeros([1, 2, 4, 4]);
        let p = LayerParams::zeros([1, 3, 3, 3], None);
        assert!(matches!(conv2d(&x, &p, 1, 1), Err(Error::Dimension(_))));
        let pt = LayerParams::zeros([3, 1, 2, 2], None);
        assert!(matches!(conv_transpose2d(&x, &pt, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn transpose_single_pixel_broadcast() {
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![3.5]).unwrap();
        let p = LayerParams::new(Tensor4::filled([1, 1, 2, 2], 1.0), None);
        let y = conv_transpose2d(&x, &p, 2).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn transpose_block_expansion() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = LayerParams::new(Tensor4::filled([1, 1, 2, 2], 1.0), None);
        let y = conv_transpose2d(&x, &p, 2).unwrap();
        #[rustfmt::skip]
        let want = [1.0, 1.0, 2.0, 2.0,
                    1.0, 1.0, 2.0, 2.0,
                    3.0, 3.0, 4.0, 4.0,
                    3.0, 3.0, 4.0, 4.0];
        assert_eq!(y.data(), &want);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, s, oh, ow) in &[(2, 2, 3, 4), (4, 4, 2, 2), (3, 1, 4, 5), (3, 2, 3, 3)] {
            let p = LayerParams::new(random([3, 2, k, k], &mut rng), None);
            let y = random([2, 3, oh, ow], &mut rng);
            let t = conv_transpose2d(&y, &p, s).unwrap();
            let x = random(t.shape(), &mut rng);
            let cx = conv2d(&x, &p, s, 0).unwrap();
            assert_eq!(cx.shape(), y.shape());
            let lhs = t.dot(&x).unwrap();
            let rhs = y.dot(&cx).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn stride_then_transpose_restores_dims() {
        let x = Tensor4::<f64>::zeros([1, 2, 12, 8]);
        let down = LayerParams::zeros([3, 2, 2, 2], None);
        let up = LayerParams::zeros([3, 2, 2, 2], None);
        let y = conv2d(&x, &down, 2, 0).unwrap();
        let z = conv_transpose2d(&y, &up, 2).unwrap();
        assert_eq!(z.shape(), x.shape());
    }

    #[test]
    fn pointwise_weight_gradient_is_input() {
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![3.0]).unwrap();
        let p = LayerParams::new(Tensor4::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(), None);
        let dy = Tensor4::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        let (dx, g) = conv2d_backward(&x, &p, 1, 0, &dy).unwrap();
        assert_eq!(g.weight.data(), &[3.0]);
        assert_eq!(dx.data(), &[2.0]);
    }
}
