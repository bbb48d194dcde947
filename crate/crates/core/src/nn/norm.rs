use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor4};

/// Sum with eight partial accumulators so the loop vectorizes.
#[inline]
pub(crate) fn lane_sum<T: Scalar>(v: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut chunks = v.chunks_exact(8);
    for c in &mut chunks {
        for i in 0..8 {
            acc[i] += c[i];
        }
    }
    let tail = chunks.remainder().iter().fold(T::zero(), |s, &x| s + x);
    acc.iter().fold(tail, |s, &x| s + x)
}

#[inline]
fn centered_sq_sum<T: Scalar>(v: &[T], mean: T) -> T {
    let mut acc = [T::zero(); 8];
    let mut chunks = v.chunks_exact(8);
    for c in &mut chunks {
        for i in 0..8 {
            let d = c[i] - mean;
            acc[i] += d * d;
        }
    }
    let tail = chunks
        .remainder()
        .iter()
        .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean));
    acc.iter().fold(tail, |s, &x| s + x)
}

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Instance-normalized activations plus the per-plane `1/sqrt(var + eps)`
/// needed for the backward pass.
#[derive(Clone, Debug)]
pub struct Normalized<T> {
    pub output: Tensor4<T>,
    pub inv_std: Vec<T>,
}

/// Normalizes every `(sample, channel)` plane to zero mean and unit variance
/// (biased variance, no affine parameters). An all-zero plane stays zero.
pub fn instance_norm<T: Scalar>(x: &Tensor4<T>, eps: T) -> Normalized<T> {
    let [n, c, _, _] = x.shape();
    let len = T::from_usize(x.plane_len()).expect("plane size");
    let mut output = x.clone();
    let mut inv_std = Vec::with_capacity(n * c);
    for s in 0..n {
        for ch in 0..c {
            let plane = output.plane_mut(s, ch);
            let mean = lane_sum(plane) / len;
            let var = centered_sq_sum(plane, mean) / len;
            let is = (var + eps).sqrt().recip();
            for v in plane.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
    }
    Normalized { output, inv_std }
}

/// Input gradient of [`instance_norm`] given its output `y`:
/// `dx = inv_std * (dy - mean(dy) - y * mean(dy * y))`.
pub fn instance_norm_backward<T: Scalar>(
    y: &Tensor4<T>,
    inv_std: &[T],
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let [n, c, _, _] = y.shape();
    if grad_out.shape() != y.shape() || inv_std.len() != n * c {
        return Err(Error::Shape("instance norm backward shape mismatch".into()));
    }
    let len = T::from_usize(y.plane_len()).expect("plane size");
    let mut grad_in = grad_out.clone();
    for s in 0..n {
        for ch in 0..c {
            let yp = y.plane(s, ch);
            let g = grad_in.plane_mut(s, ch);
            let mean_g = lane_sum(g) / len;
            let mean_gy = super::conv::dot(g, yp) / len;
            let is = inv_std[s * c + ch];
            for (gv, &yv) in g.iter_mut().zip(yp) {
                *gv = is * (*gv - mean_g - yv * mean_gy);
            }
        }
    }
    Ok(grad_in)
}
