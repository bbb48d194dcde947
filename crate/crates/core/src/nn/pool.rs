use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor4};

/// Non-overlapping `k x k` average pooling (stride `k`); incomplete border
/// rows and columns are discarded.
pub fn avg_pool<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.shape();
    if k == 0 || k > h || k > w {
        return Err(Error::Shape(format!(
            "pool kernel {k} does not fit a {w}x{h} input"
        )));
    }
    let (oh, ow) = (h / k, w / k);
    let scale = T::from_usize(k * k).expect("pool size").recip();
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut rows = vec![T::zero(); ow * k];
    for s in 0..n {
        for ch in 0..c {
            let src = x.plane(s, ch);
            let dst = out.plane_mut(s, ch);
            for oy in 0..oh {
                rows.copy_from_slice(&src[oy * k * w..oy * k * w + ow * k]);
                for ky in 1..k {
                    let r = &src[(oy * k + ky) * w..(oy * k + ky) * w + ow * k];
                    for (a, &b) in rows.iter_mut().zip(r) {
                        *a += b;
                    }
                }
                for (ox, cell) in rows.chunks_exact(k).enumerate() {
                    dst[oy * ow + ox] = cell.iter().fold(T::zero(), |a, &b| a + b) * scale;
                }
            }
        }
    }
    Ok(out)
}

/// Spreads each output gradient uniformly (`/ k^2`) over its input cell.
pub fn avg_pool_backward<T: Scalar>(
    input_shape: [usize; 4],
    k: usize,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input_shape;
    if k == 0 || grad_out.shape() != [n, c, h / k, w / k] {
        return Err(Error::Shape("pool backward shape mismatch".into()));
    }
    let (oh, ow) = (h / k, w / k);
    let scale = T::from_usize(k * k).expect("pool size").recip();
    let mut grad_in = Tensor4::zeros(input_shape);
    for s in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(s, ch);
            let dst = grad_in.plane_mut(s, ch);
            for y in 0..oh * k {
                let g_row = &g[(y / k) * ow..(y / k + 1) * ow];
                for (x, d) in dst[y * w..y * w + ow * k].iter_mut().enumerate() {
                    *d = g_row[x / k] * scale;
                }
            }
        }
    }
    Ok(grad_in)
}

/// Output spatial size after pooling `(h, w)` by `k`.
pub fn pooled_dims(h: usize, w: usize, k: usize) -> (usize, usize) {
    (h / k, w / k)
}
