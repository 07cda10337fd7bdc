use super::Tensor4;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-overlapping `k x k` max pooling.
///
/// Returns the pooled tensor and, per output element, the flat index of the
/// winning input element. Ties go to the first maximum in row-major order.
pub fn maxpool2d<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<(Tensor4<T>, Vec<usize>)> {
    if k == 0 {
        return Err(Error::arg("maxpool2d: kernel must be >= 1"));
    }
    let [n, c, h, w] = x.shape();
    if h % k != 0 || w % k != 0 {
        return Err(Error::dim(format!("maxpool2d: {h}x{w} not divisible by {k}")));
    }
    let (oh, ow) = (h / k, w / k);
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut idx = vec![0usize; out.len()];
    let src = x.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * k * w + ox * k;
                let mut best_v = src[best];
                for dy in 0..k {
                    for dx in 0..k {
                        let i = base + (oy * k + dy) * w + ox * k + dx;
                        if src[i] > best_v {
                            best = i;
                            best_v = src[i];
                        }
                    }
                }
                out.data_mut()[o] = best_v;
                idx[o] = best;
                o += 1;
            }
        }
    }
    Ok((out, idx))
}

/// Routes each upstream gradient entry to the recorded argmax position.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: [usize; 4],
    indices: &[usize],
    dy: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if indices.len() != dy.len() {
        return Err(Error::dim(format!(
            "maxpool2d backward: {} indices for {} gradient entries",
            indices.len(),
            dy.len()
        )));
    }
    let mut dx = Tensor4::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in indices.iter().zip(dy.data()) {
        d[i] += g;
    }
    Ok(dx)
}
