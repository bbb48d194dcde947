//! Bias-free "same"-padded convolutions: depthwise, pointwise (1x1) and
//! standard dense k x k.

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor4};

fn check_odd(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Shape(format!(
            "same padding needs an odd kernel size, got {k}"
        )));
    }
    Ok(())
}

/// Output index range `[lo, hi)` whose source `i + d` lies inside `0..len`.
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo.min(hi), hi)
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Copies plane `src` (`h x w`) into the centre of a zeroed `(h+2p) x (w+2p)`
/// buffer, with `2p` spare zeros at the end. Tap `(ky, kx)` of every output
/// then reads the contiguous run starting at `ky * (w+2p) + kx`, one output
/// per padded-width position ("wide" layout).
fn pad_plane<T: Scalar>(src: &[T], h: usize, w: usize, p: usize, out: &mut Vec<T>) {
    let wp = w + 2 * p;
    out.clear();
    out.resize((h + 2 * p) * wp + 2 * p, T::zero());
    for y in 0..h {
        out[(y + p) * wp + p..(y + p) * wp + p + w].copy_from_slice(&src[y * w..(y + 1) * w]);
    }
}

/// Lays `h x w` plane `g` out with row stride `wp`, zeros in the extra columns.
fn to_wide<T: Scalar>(g: &[T], h: usize, w: usize, wp: usize, out: &mut Vec<T>) {
    out.clear();
    out.resize(h * wp, T::zero());
    for y in 0..h {
        out[y * wp..y * wp + w].copy_from_slice(&g[y * w..(y + 1) * w]);
    }
}

/// Below this fraction of non-zero inputs the depthwise forward scatters
/// from the non-zero pixels instead of sweeping every output.
const SPARSE_SCATTER_FRACTION: usize = 16;

fn depthwise_plane_sparse<T: Scalar>(
    src: &[T],
    taps: &[T],
    h: usize,
    w: usize,
    k: usize,
    dst: &mut [T],
) {
    let pad = k / 2;
    for (i, &v) in src.iter().enumerate() {
        if v == T::zero() {
            continue;
        }
        let (iy, ix) = (i / w, i % w);
        // out[y][x] gets w[ky][kx] * in[y + ky - pad][x + kx - pad].
        for ky in 0..k {
            let y = iy + pad;
            if y < ky || y - ky >= h {
                continue;
            }
            let y = y - ky;
            for kx in 0..k {
                let x = ix + pad;
                if x < kx || x - kx >= w {
                    continue;
                }
                dst[y * w + x - kx] += taps[ky * k + kx] * v;
            }
        }
    }
}

/// Per-channel `k x k` correlation with zero "same" padding. `kernel` is
/// `[C][k][k]`. Very sparse planes are scattered from their non-zero pixels.
pub fn depthwise_conv2d<T: Scalar>(x: &Tensor4<T>, kernel: &[T], k: usize) -> Result<Tensor4<T>> {
    check_odd(k)?;
    let [n, c, h, w] = x.shape();
    if kernel.len() != c * k * k {
        return Err(Error::Shape(format!(
            "depthwise kernel has {} values, input has {c} channels of {k}x{k}",
            kernel.len()
        )));
    }
    let mut out = Tensor4::zeros(x.shape());
    let p = k / 2;
    let wp = w + 2 * p;
    let mut padded = Vec::new();
    let mut wide = Vec::new();
    for s in 0..n {
        for ch in 0..c {
            let src = x.plane(s, ch);
            let taps = &kernel[ch * k * k..(ch + 1) * k * k];
            let nnz = src.iter().filter(|&&v| v != T::zero()).count();
            let dst = out.plane_mut(s, ch);
            if nnz * SPARSE_SCATTER_FRACTION < src.len() {
                depthwise_plane_sparse(src, taps, h, w, k, dst);
                continue;
            }
            pad_plane(src, h, w, p, &mut padded);
            wide.clear();
            wide.resize(h * wp, T::zero());
            for ky in 0..k {
                for kx in 0..k {
                    let off = ky * wp + kx;
                    axpy(taps[ky * k + kx], &padded[off..off + h * wp], &mut wide);
                }
            }
            for y in 0..h {
                dst[y * w..(y + 1) * w].copy_from_slice(&wide[y * wp..y * wp + w]);
            }
        }
    }
    Ok(out)
}

/// Kernel gradient of [`depthwise_conv2d`] alone.
pub fn depthwise_conv2d_kernel_grad<T: Scalar>(
    x: &Tensor4<T>,
    k: usize,
    grad_out: &Tensor4<T>,
) -> Result<Vec<T>> {
    check_odd(k)?;
    if grad_out.shape() != x.shape() {
        return Err(Error::Shape("depthwise grad/input shape mismatch".into()));
    }
    let [n, c, h, w] = x.shape();
    let p = k / 2;
    let wp = w + 2 * p;
    let mut grad_k = vec![T::zero(); c * k * k];
    let mut padded = Vec::new();
    let mut gwide = Vec::new();
    for s in 0..n {
        for ch in 0..c {
            let src = x.plane(s, ch);
            let g = grad_out.plane(s, ch);
            let gk = &mut grad_k[ch * k * k..(ch + 1) * k * k];
            let nnz = src.iter().filter(|&&v| v != T::zero()).count();
            if nnz * SPARSE_SCATTER_FRACTION < src.len() {
                for (i, &v) in src.iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    let (iy, ix) = (i / w, i % w);
                    for ky in 0..k {
                        let y = iy + p;
                        if y < ky || y - ky >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let x = ix + p;
                            if x < kx || x - kx >= w {
                                continue;
                            }
                            gk[ky * k + kx] += g[(y - ky) * w + x - kx] * v;
                        }
                    }
                }
                continue;
            }
            pad_plane(src, h, w, p, &mut padded);
            to_wide(g, h, w, wp, &mut gwide);
            for ky in 0..k {
                for kx in 0..k {
                    let off = ky * wp + kx;
                    gk[ky * k + kx] += dot(&gwide, &padded[off..off + h * wp]);
                }
            }
        }
    }
    Ok(grad_k)
}

/// Gradients of [`depthwise_conv2d`]: `(d input, d kernel)`.
pub fn depthwise_conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    kernel: &[T],
    k: usize,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>)> {
    let [n, c, h, w] = x.shape();
    if kernel.len() != c * k * k {
        return Err(Error::Shape("depthwise kernel size mismatch".into()));
    }
    let grad_k = depthwise_conv2d_kernel_grad(x, k, grad_out)?;
    let p = k / 2;
    let wp = w + 2 * p;
    let mut grad_in = Tensor4::zeros(x.shape());
    let mut gpad = Vec::new();
    let mut gwide = Vec::new();
    for s in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(s, ch);
            let taps = &kernel[ch * k * k..(ch + 1) * k * k];
            gpad.clear();
            gpad.resize((h + 2 * p) * wp + 2 * p, T::zero());
            to_wide(g, h, w, wp, &mut gwide);
            for ky in 0..k {
                for kx in 0..k {
                    let off = ky * wp + kx;
                    axpy(taps[ky * k + kx], &gwide, &mut gpad[off..off + h * wp]);
                }
            }
            let gi = grad_in.plane_mut(s, ch);
            for y in 0..h {
                gi[y * w..(y + 1) * w]
                    .copy_from_slice(&gpad[(y + p) * wp + p..(y + p) * wp + p + w]);
            }
        }
    }
    Ok((grad_in, grad_k))
}

/// 1x1 convolution; `weights` is `(C_in, C_out)` row-major.
pub fn pointwise_conv2d<T: Scalar>(
    x: &Tensor4<T>,
    weights: &[T],
    c_out: usize,
) -> Result<Tensor4<T>> {
    let [n, c_in, h, w] = x.shape();
    if weights.len() != c_in * c_out {
        return Err(Error::Shape(format!(
            "pointwise weights have {} values, expected {c_in}x{c_out}",
            weights.len()
        )));
    }
    let p = h * w;
    let mut out = Tensor4::zeros([n, c_out, h, w]);
    for s in 0..n {
        // out (C_out x P) = W^T (C_out x C_in) * x (C_in x P)
        T::gemm(
            c_out,
            c_in,
            p,
            T::one(),
            weights,
            (1, c_out as isize),
            x.sample(s),
            (p as isize, 1),
            T::zero(),
            out.sample_mut(s),
            (p as isize, 1),
        );
    }
    Ok(out)
}

/// Gradients of [`pointwise_conv2d`]: `(d input, d weights)`.
pub fn pointwise_conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weights: &[T],
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>)> {
    let [n, c_in, h, w] = x.shape();
    let c_out = grad_out.channels();
    if weights.len() != c_in * c_out || grad_out.shape() != [n, c_out, h, w] {
        return Err(Error::Shape("pointwise backward shape mismatch".into()));
    }
    let p = h * w;
    let mut grad_in = Tensor4::zeros(x.shape());
    let mut grad_w = vec![T::zero(); weights.len()];
    for s in 0..n {
        // d x (C_in x P) = W (C_in x C_out) * g (C_out x P)
        T::gemm(
            c_in,
            c_out,
            p,
            T::one(),
            weights,
            (c_out as isize, 1),
            grad_out.sample(s),
            (p as isize, 1),
            T::zero(),
            grad_in.sample_mut(s),
            (p as isize, 1),
        );
        // d W (C_in x C_out) += x (C_in x P) * g^T (P x C_out)
        T::gemm(
            c_in,
            p,
            c_out,
            T::one(),
            x.sample(s),
            (p as isize, 1),
            grad_out.sample(s),
            (1, p as isize),
            T::one(),
            &mut grad_w,
            (c_out as isize, 1),
        );
    }
    Ok((grad_in, grad_w))
}

/// Unfolds one sample into `(C * k * k) x (H * W)` patch columns.
fn im2col<T: Scalar>(x: &Tensor4<T>, s: usize, k: usize, cols: &mut [T]) {
    let [_, c, h, w] = x.shape();
    let p = h * w;
    let pad = (k / 2) as isize;
    cols.fill(T::zero());
    for ch in 0..c {
        let src = x.plane(s, ch);
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                if x0 == x1 {
                    continue;
                }
                let row = &mut cols[((ch * k + ky) * k + kx) * p..((ch * k + ky) * k + kx + 1) * p];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    row[y * w + x0..y * w + x1]
                        .copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Inverse scatter of [`im2col`], accumulating into `grad_in`.
fn col2im<T: Scalar>(cols: &[T], s: usize, k: usize, grad_in: &mut Tensor4<T>) {
    let [_, c, h, w] = grad_in.shape();
    let p = h * w;
    let pad = (k / 2) as isize;
    for ch in 0..c {
        let dst = grad_in.plane_mut(s, ch);
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                if x0 == x1 {
                    continue;
                }
                let row = &cols[((ch * k + ky) * k + kx) * p..((ch * k + ky) * k + kx + 1) * p];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    for (d, &v) in dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[y * w + x0..y * w + x1])
                    {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Standard `k x k` convolution; `weights` is `[C_out][C_in][k][k]`.
pub fn conv2d<T: Scalar>(
    x: &Tensor4<T>,
    weights: &[T],
    c_out: usize,
    k: usize,
) -> Result<Tensor4<T>> {
    check_odd(k)?;
    let [n, c_in, h, w] = x.shape();
    let kk = c_in * k * k;
    if weights.len() != c_out * kk {
        return Err(Error::Shape(format!(
            "conv weights have {} values, expected {c_out}x{c_in}x{k}x{k}",
            weights.len()
        )));
    }
    let p = h * w;
    let mut cols = vec![T::zero(); kk * p];
    let mut out = Tensor4::zeros([n, c_out, h, w]);
    for s in 0..n {
        im2col(x, s, k, &mut cols);
        T::gemm(
            c_out,
            kk,
            p,
            T::one(),
            weights,
            (kk as isize, 1),
            &cols,
            (p as isize, 1),
            T::zero(),
            out.sample_mut(s),
            (p as isize, 1),
        );
    }
    Ok(out)
}

/// Gradients of [`conv2d`]: `(d input, d weights)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weights: &[T],
    k: usize,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>)> {
    check_odd(k)?;
    let [n, c_in, h, w] = x.shape();
    let c_out = grad_out.channels();
    let kk = c_in * k * k;
    if weights.len() != c_out * kk || grad_out.shape() != [n, c_out, h, w] {
        return Err(Error::Shape("conv backward shape mismatch".into()));
    }
    let p = h * w;
    let mut cols = vec![T::zero(); kk * p];
    let mut grad_cols = vec![T::zero(); kk * p];
    let mut grad_in = Tensor4::zeros(x.shape());
    let mut grad_w = vec![T::zero(); weights.len()];
    for s in 0..n {
        im2col(x, s, k, &mut cols);
        // dW (C_out x kk) += g (C_out x P) * cols^T (P x kk)
        T::gemm(
            c_out,
            p,
            kk,
            T::one(),
            grad_out.sample(s),
            (p as isize, 1),
            &cols,
            (1, p as isize),
            T::one(),
            &mut grad_w,
            (kk as isize, 1),
        );
        // d cols (kk x P) = W^T (kk x C_out) * g (C_out x P)
        T::gemm(
            kk,
            c_out,
            p,
            T::one(),
            weights,
            (1, kk as isize),
            grad_out.sample(s),
            (p as isize, 1),
            T::zero(),
            &mut grad_cols,
            (p as isize, 1),
        );
        col2im(&grad_cols, s, k, &mut grad_in);
    }
    Ok((grad_in, grad_w))
}
