use super::Tensor4;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Upstream gradient masked by `x > 0`.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.check_same_shape(dy, "relu backward")?;
    let data = x.data().iter().zip(dy.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
    Tensor4::from_vec(x.shape(), data)
}

/// Stack `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::dim(format!("concat: {:?} and {:?} differ outside the channel axis", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..na {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor4::from_vec([na, ca + cb, ha, wa], data)
}

/// Inverse of [`concat_channels`]: the first `c_first` channels and the rest.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, c_first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let [n, c, h, w] = x.shape();
    if c_first > c {
        return Err(Error::dim(format!("split: {c_first} > {c} channels")));
    }
    let plane = h * w;
    let mut a = Vec::with_capacity(n * c_first * plane);
    let mut b = Vec::with_capacity(n * (c - c_first) * plane);
    for i in 0..n {
        let s = x.sample(i);
        a.extend_from_slice(&s[..c_first * plane]);
        b.extend_from_slice(&s[c_first * plane..]);
    }
    Ok((Tensor4::from_vec([n, c_first, h, w], a)?, Tensor4::from_vec([n, c - c_first, h, w], b)?))
}

/// Rearranges `(N, b*b, r, c)` into `(N, 1, r*b, c*b)`: channel `py*b + px`
/// of grid cell `(i, j)` lands at pixel `(i*b + py, j*b + px)`.
///
/// This is block reassembly: each channel vector is one raster-ordered block.
pub fn depth_to_space<T: Scalar>(z: &Tensor4<T>, block: usize) -> Result<Tensor4<T>> {
    let [n, c, r, cc] = z.shape();
    if c != block * block {
        return Err(Error::dim(format!("depth_to_space: {c} channels, block {block} needs {}", block * block)));
    }
    let (h, w) = (r * block, cc * block);
    let mut out = Tensor4::zeros([n, 1, h, w]);
    for s in 0..n {
        let src = z.sample(s);
        let dst = out.sample_mut(s);
        for py in 0..block {
            for px in 0..block {
                let ch = &src[(py * block + px) * r * cc..(py * block + px + 1) * r * cc];
                for i in 0..r {
                    for j in 0..cc {
                        dst[(i * block + py) * w + j * block + px] = ch[i * cc + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint and inverse of [`depth_to_space`].
pub fn space_to_depth<T: Scalar>(x: &Tensor4<T>, block: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.shape();
    if c != 1 || block == 0 || h % block != 0 || w % block != 0 {
        return Err(Error::dim(format!("space_to_depth: {:?} with block {block}", x.shape())));
    }
    let (r, cc) = (h / block, w / block);
    let mut out = Tensor4::zeros([n, block * block, r, cc]);
    for s in 0..n {
        let src = x.sample(s);
        let dst = out.sample_mut(s);
        for py in 0..block {
            for px in 0..block {
                let base = (py * block + px) * r * cc;
                for i in 0..r {
                    for j in 0..cc {
                        dst[base + i * cc + j] = src[(i * block + py) * w + j * block + px];
                    }
                }
            }
        }
    }
    Ok(out)
}
