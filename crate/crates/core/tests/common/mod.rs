//! Helpers shared by the integration tests and the acceptance binary:
//! a finite-difference gradient suite and plain-loop reference layers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeye::nn::{
    avg_pool, avg_pool_backward, conv2d, conv2d_backward, depthwise_conv2d,
    depthwise_conv2d_backward, instance_norm, instance_norm_backward, pointwise_conv2d,
    pointwise_conv2d_backward, relu_backward_inplace, relu_inplace, surrogate_grad, LifLayer,
    Tensor4,
};
use spikeye::train::{loss, LossKind};

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random values with roughly `density` of them non-zero.
pub fn sparse(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect()
}

fn tensor(shape: [usize; 4], data: Vec<f64>) -> Tensor4<f64> {
    Tensor4::from_vec(shape, data).expect("shape")
}

/// One finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCase {
    pub layer: &'static str,
    pub shape: String,
    pub wrt: &'static str,
    pub rel_err: f64,
}

impl GradCase {
    pub fn ok(&self) -> bool {
        self.rel_err <= GRAD_TOL
    }
}

fn small_shape(rng: &mut ChaCha8Rng, min_hw: usize) -> [usize; 4] {
    [
        rng.gen_range(1..=2),
        rng.gen_range(1..=4),
        rng.gen_range(min_hw..=8),
        rng.gen_range(min_hw..=8),
    ]
}

fn depthwise_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for i in 0..6 {
        let shape = small_shape(rng, 3);
        let k = [1, 3, 5][i % 3];
        let len = shape.iter().product();
        // Every other case is sparse enough for the scatter path.
        let x = if i % 2 == 0 { uniform(rng, len, -1.0, 1.0) } else { sparse(rng, len, 0.04) };
        let kern = uniform(rng, shape[1] * k * k, -1.0, 1.0);
        let r = uniform(rng, len, -1.0, 1.0);
        let xt = tensor(shape, x.clone());
        let (gx, gk) =
            depthwise_conv2d_backward(&xt, &kern, k, &tensor(shape, r.clone())).unwrap();
        let fx = |v: &[f64]| dot(&r, depthwise_conv2d(&tensor(shape, v.to_vec()), &kern, k).unwrap().data());
        let fk = |v: &[f64]| dot(&r, depthwise_conv2d(&xt, v, k).unwrap().data());
        let name = format!("{shape:?} k={k}");
        out.push(GradCase { layer: "depthwise", shape: name.clone(), wrt: "input", rel_err: rel_err(gx.data(), &numeric_grad(&x, fx)) });
        out.push(GradCase { layer: "depthwise", shape: name, wrt: "kernel", rel_err: rel_err(&gk, &numeric_grad(&kern, fk)) });
    }
}

fn pointwise_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for _ in 0..4 {
        let shape = small_shape(rng, 1);
        let c_out = rng.gen_range(1..=4);
        let x = uniform(rng, shape.iter().product(), -1.0, 1.0);
        let w = uniform(rng, shape[1] * c_out, -1.0, 1.0);
        let out_shape = [shape[0], c_out, shape[2], shape[3]];
        let r = uniform(rng, out_shape.iter().product(), -1.0, 1.0);
        let xt = tensor(shape, x.clone());
        let (gx, gw) = pointwise_conv2d_backward(&xt, &w, &tensor(out_shape, r.clone())).unwrap();
        let fx = |v: &[f64]| dot(&r, pointwise_conv2d(&tensor(shape, v.to_vec()), &w, c_out).unwrap().data());
        let fw = |v: &[f64]| dot(&r, pointwise_conv2d(&xt, v, c_out).unwrap().data());
        let name = format!("{shape:?} -> {c_out}");
        out.push(GradCase { layer: "pointwise", shape: name.clone(), wrt: "input", rel_err: rel_err(gx.data(), &numeric_grad(&x, fx)) });
        out.push(GradCase { layer: "pointwise", shape: name, wrt: "weights", rel_err: rel_err(&gw, &numeric_grad(&w, fw)) });
    }
}

fn conv_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for i in 0..4 {
        let shape = small_shape(rng, 3);
        let k = [1, 3][i % 2];
        let c_out = rng.gen_range(1..=3);
        let x = uniform(rng, shape.iter().product(), -1.0, 1.0);
        let w = uniform(rng, c_out * shape[1] * k * k, -1.0, 1.0);
        let out_shape = [shape[0], c_out, shape[2], shape[3]];
        let r = uniform(rng, out_shape.iter().product(), -1.0, 1.0);
        let xt = tensor(shape, x.clone());
        let (gx, gw) = conv2d_backward(&xt, &w, k, &tensor(out_shape, r.clone())).unwrap();
        let fx = |v: &[f64]| dot(&r, conv2d(&tensor(shape, v.to_vec()), &w, c_out, k).unwrap().data());
        let fw = |v: &[f64]| dot(&r, conv2d(&xt, v, c_out, k).unwrap().data());
        let name = format!("{shape:?} -> {c_out} k={k}");
        out.push(GradCase { layer: "conv", shape: name.clone(), wrt: "input", rel_err: rel_err(gx.data(), &numeric_grad(&x, fx)) });
        out.push(GradCase { layer: "conv", shape: name, wrt: "weights", rel_err: rel_err(&gw, &numeric_grad(&w, fw)) });
    }
}

fn pool_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for i in 0..4 {
        let shape = small_shape(rng, 4);
        let k = [2, 3, 4][i % 3];
        let x = uniform(rng, shape.iter().product(), -1.0, 1.0);
        let out_shape = [shape[0], shape[1], shape[2] / k, shape[3] / k];
        let r = uniform(rng, out_shape.iter().product(), -1.0, 1.0);
        let gx = avg_pool_backward(shape, k, &tensor(out_shape, r.clone())).unwrap();
        let f = |v: &[f64]| dot(&r, avg_pool(&tensor(shape, v.to_vec()), k).unwrap().data());
        out.push(GradCase { layer: "avg_pool", shape: format!("{shape:?} k={k}"), wrt: "input", rel_err: rel_err(gx.data(), &numeric_grad(&x, f)) });
    }
}

fn norm_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for _ in 0..4 {
        let shape = small_shape(rng, 2);
        let x = uniform(rng, shape.iter().product(), -2.0, 2.0);
        let r = uniform(rng, x.len(), -1.0, 1.0);
        let n = instance_norm(&tensor(shape, x.clone()), 1e-5);
        let gx = instance_norm_backward(&n.output, &n.inv_std, &tensor(shape, r.clone())).unwrap();
        let f = |v: &[f64]| dot(&r, instance_norm(&tensor(shape, v.to_vec()), 1e-5).output.data());
        out.push(GradCase { layer: "instance_norm", shape: format!("{shape:?}"), wrt: "input", rel_err: rel_err(gx.data(), &numeric_grad(&x, f)) });
    }
}

fn relu_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for _ in 0..2 {
        let shape = small_shape(rng, 2);
        // Keep inputs away from the kink so the step never crosses it.
        let x: Vec<f64> = uniform(rng, shape.iter().product(), 0.1, 1.0)
            .into_iter()
            .map(|v| if rng.gen_bool(0.5) { -v } else { v })
            .collect();
        let r = uniform(rng, x.len(), -1.0, 1.0);
        let mut act = tensor(shape, x.clone());
        relu_inplace(&mut act);
        let mut g = tensor(shape, r.clone());
        relu_backward_inplace(&mut g, &act);
        let f = |v: &[f64]| {
            let mut t = tensor(shape, v.to_vec());
            relu_inplace(&mut t);
            dot(&r, t.data())
        };
        out.push(GradCase { layer: "relu", shape: format!("{shape:?}"), wrt: "input", rel_err: rel_err(g.data(), &numeric_grad(&x, f)) });
    }
}

/// Largest |membrane| reached by a layer over `xs`.
fn max_membrane(layer: &LifLayer<f64>, xs: &[f64]) -> f64 {
    let mut st = layer.zero_state();
    let tr = layer.forward_sequence(&mut st, xs).unwrap();
    tr.pre_reset.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// LIF layers driven so the membrane stays below `0.5 * theta`: spiking
/// layers never fire, and the readout is a pure leaky integrator.
fn lif_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for i in 0..4 {
        let (n_in, n_out, steps) = (rng.gen_range(1..=6), rng.gen_range(1..=4), rng.gen_range(2..=8));
        let mut layer = LifLayer::<f64>::new(n_in, n_out, 0.0, false);
        layer.beta_learnable = true;
        layer.weights = uniform(rng, n_in * n_out, -1.0, 1.0);
        layer.bias = uniform(rng, n_out, -0.1, 0.1);
        layer.beta = uniform(rng, n_out, 0.9, 1.0);
        let mut xs = uniform(rng, n_in * steps, -1.0, 1.0);
        let peak = max_membrane(&layer, &xs);
        if peak > 0.4 {
            let s = 0.4 / peak;
            xs.iter_mut().for_each(|v| *v *= s);
            layer.weights.iter_mut().for_each(|v| *v *= s);
            layer.bias.iter_mut().for_each(|v| *v *= s);
        }
        assert!(max_membrane(&layer, &xs) < 0.5 * layer.theta, "regime not sub-threshold");
        if i % 2 == 1 {
            // A spiking layer in the same regime must behave identically.
            let mut spiking = layer.clone();
            spiking.spiking = true;
            let mut st = spiking.zero_state();
            let tr = spiking.forward_sequence(&mut st, &xs).unwrap();
            assert!(tr.outputs.iter().all(|&s| s == 0.0), "spike in sub-threshold regime");
        }
        let r = uniform(rng, n_out * steps, -1.0, 1.0);
        let mut st = layer.zero_state();
        let trace = layer.forward_sequence(&mut st, &xs).unwrap();
        let g = layer.backward(&trace, &r).unwrap();
        let run = |l: &LifLayer<f64>, x: &[f64]| {
            let mut st = l.zero_state();
            dot(&r, &l.forward_sequence(&mut st, x).unwrap().outputs)
        };
        let name = format!("{n_in}->{n_out} x{steps}");
        let fx = |v: &[f64]| run(&layer, v);
        out.push(GradCase { layer: "lif", shape: name.clone(), wrt: "input", rel_err: rel_err(&g.input, &numeric_grad(&xs, fx)) });
        let fw = |v: &[f64]| {
            let mut l = layer.clone();
            l.weights = v.to_vec();
            run(&l, &xs)
        };
        out.push(GradCase { layer: "lif", shape: name.clone(), wrt: "weights", rel_err: rel_err(&g.weights, &numeric_grad(&layer.weights, fw)) });
        let fb = |v: &[f64]| {
            let mut l = layer.clone();
            l.bias = v.to_vec();
            run(&l, &xs)
        };
        out.push(GradCase { layer: "lif", shape: name.clone(), wrt: "bias", rel_err: rel_err(&g.bias, &numeric_grad(&layer.bias, fb)) });
        let fbeta = |v: &[f64]| {
            let mut l = layer.clone();
            l.beta = v.to_vec();
            run(&l, &xs)
        };
        out.push(GradCase { layer: "lif", shape: name, wrt: "beta", rel_err: rel_err(&g.beta, &numeric_grad(&layer.beta, fbeta)) });
    }
}

/// The surrogate is the derivative of the fast sigmoid `x / (1 + k|x|)`.
fn surrogate_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    let k = 25.0;
    let xs: Vec<f64> = uniform(rng, 16, -0.5, 0.5).into_iter().filter(|x| x.abs() > 1e-3).collect();
    let analytic: Vec<f64> = xs.iter().map(|&x| surrogate_grad(x, k)).collect();
    let numeric: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let s = |v: f64| v / (1.0 + k * v.abs());
            (s(x + FD_STEP) - s(x - FD_STEP)) / (2.0 * FD_STEP)
        })
        .collect();
    out.push(GradCase { layer: "surrogate", shape: format!("{} points", xs.len()), wrt: "input", rel_err: rel_err(&analytic, &numeric) });
}

fn loss_cases(rng: &mut ChaCha8Rng, out: &mut Vec<GradCase>) {
    for i in 0..4 {
        let steps = rng.gen_range(1..=10);
        let pred = uniform(rng, 2 * steps, 0.0, 1.0);
        let target = uniform(rng, 2 * steps, 0.0, 1.0);
        let kind = if i % 2 == 0 { LossKind::Combined } else { LossKind::PositionOnly };
        let mask: Option<Vec<bool>> = (i >= 2).then(|| (0..steps).map(|_| rng.gen_bool(0.7)).collect());
        let (_, g) = loss(&pred, &target, kind, mask.as_deref());
        let f = |v: &[f64]| loss(v, &target, kind, mask.as_deref()).0.total();
        out.push(GradCase { layer: "loss", shape: format!("{steps} steps {kind:?} mask={}", mask.is_some()), wrt: "prediction", rel_err: rel_err(&g, &numeric_grad(&pred, f)) });
    }
}

/// Every layer's backward against 64-bit central differences.
pub fn gradient_suite(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    depthwise_cases(&mut rng, &mut out);
    pointwise_cases(&mut rng, &mut out);
    conv_cases(&mut rng, &mut out);
    pool_cases(&mut rng, &mut out);
    norm_cases(&mut rng, &mut out);
    relu_cases(&mut rng, &mut out);
    lif_cases(&mut rng, &mut out);
    surrogate_cases(&mut rng, &mut out);
    loss_cases(&mut rng, &mut out);
    out
}

// ---- plain-loop references ----

pub fn ref_depthwise(x: &[f64], shape: [usize; 4], kern: &[f64], k: usize) -> Vec<f64> {
    let [n, c, h, w] = shape;
    let p = (k / 2) as i64;
    let mut out = vec![0.0; x.len()];
    for s in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as i64 + ky as i64 - p;
                            let sx = xx as i64 + kx as i64 - p;
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                continue;
                            }
                            acc += kern[(ch * k + ky) * k + kx]
                                * x[((s * c + ch) * h + sy as usize) * w + sx as usize];
                        }
                    }
                    out[((s * c + ch) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn ref_pointwise(x: &[f64], shape: [usize; 4], wts: &[f64], c_out: usize) -> Vec<f64> {
    let [n, c, h, w] = shape;
    let mut out = vec![0.0; n * c_out * h * w];
    for s in 0..n {
        for o in 0..c_out {
            for i in 0..h * w {
                let mut acc = 0.0;
                for ci in 0..c {
                    acc += wts[ci * c_out + o] * x[(s * c + ci) * h * w + i];
                }
                out[(s * c_out + o) * h * w + i] = acc;
            }
        }
    }
    out
}

pub fn ref_conv(x: &[f64], shape: [usize; 4], wts: &[f64], c_out: usize, k: usize) -> Vec<f64> {
    let [n, c, h, w] = shape;
    let p = (k / 2) as i64;
    let mut out = vec![0.0; n * c_out * h * w];
    for s in 0..n {
        for o in 0..c_out {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as i64 + ky as i64 - p;
                                let sx = xx as i64 + kx as i64 - p;
                                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                    continue;
                                }
                                acc += wts[((o * c + ci) * k + ky) * k + kx]
                                    * x[((s * c + ci) * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[((s * c_out + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn ref_pool(x: &[f64], shape: [usize; 4], k: usize) -> Vec<f64> {
    let [n, c, h, w] = shape;
    let (oh, ow) = (h / k, w / k);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for s in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            acc += x[((s * c + ch) * h + oy * k + dy) * w + ox * k + dx];
                        }
                    }
                    out.push(acc / (k * k) as f64);
                }
            }
        }
    }
    out
}

pub fn ref_instance_norm(x: &[f64], shape: [usize; 4], eps: f64) -> Vec<f64> {
    let plane = shape[2] * shape[3];
    let mut out = Vec::with_capacity(x.len());
    for chunk in x.chunks(plane) {
        let mean = chunk.iter().sum::<f64>() / plane as f64;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        out.extend(chunk.iter().map(|v| (v - mean) / (var + eps).sqrt()));
    }
    out
}

/// `(l_pos, l_vel)` straight from the definitions.
pub fn ref_loss(pred: &[f64], target: &[f64], mask: &[bool], combined: bool) -> (f64, f64) {
    let steps = pred.len() / 2;
    let (mut sp, mut np) = (0.0, 0usize);
    for t in 0..steps {
        if mask[t] {
            for c in 0..2 {
                sp += (pred[2 * t + c] - target[2 * t + c]).powi(2);
            }
            np += 2;
        }
    }
    let (mut sv, mut nv) = (0.0, 0usize);
    if combined {
        for t in 1..steps {
            if mask[t] && mask[t - 1] {
                for c in 0..2 {
                    let dp = pred[2 * t + c] - pred[2 * (t - 1) + c];
                    let dy = target[2 * t + c] - target[2 * (t - 1) + c];
                    sv += (dp - dy).powi(2);
                }
                nv += 2;
            }
        }
    }
    let avg = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (avg(sp, np), avg(sv, nv))
}

/// `(P at each tolerance, mean distance)` over non-blink frames.
pub fn ref_metrics(pred: &[[f32; 2]], label: &[[f32; 2]], blink: &[bool], tols: &[f64]) -> (Vec<f64>, f64) {
    let mut hits = vec![0usize; tols.len()];
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if blink[i] {
            continue;
        }
        let dx = pred[i][0] as f64 - label[i][0] as f64;
        let dy = pred[i][1] as f64 - label[i][1] as f64;
        let d = (dx * dx + dy * dy).sqrt();
        for (j, &t) in tols.iter().enumerate() {
            if d <= t {
                hits[j] += 1;
            }
        }
        sum += d;
        n += 1;
    }
    if n == 0 {
        return (vec![0.0; tols.len()], f64::INFINITY);
    }
    (hits.iter().map(|&h| h as f64 / n as f64).collect(), sum / n as f64)
}

/// Counts multiply-accumulates of a "same"-padded depthwise layer by walking
/// every output pixel, tap and channel.
pub fn loop_count_depthwise(c: usize, h: usize, w: usize, k: usize) -> u64 {
    let mut n = 0u64;
    for _ in 0..c {
        for _ in 0..h {
            for _ in 0..w {
                for _ in 0..k * k {
                    n += 1;
                }
            }
        }
    }
    n
}

pub fn loop_count_pointwise(c_in: usize, c_out: usize, h: usize, w: usize) -> u64 {
    let mut n = 0u64;
    for _ in 0..c_out {
        for _ in 0..h * w {
            for _ in 0..c_in {
                n += 1;
            }
        }
    }
    n
}

pub fn loop_count_dense(n_in: usize, n_out: usize) -> u64 {
    let mut n = 0u64;
    for _ in 0..n_out {
        for _ in 0..n_in {
            n += 1;
        }
    }
    n
}

/// Per-layer MACs of the separable network by loop counting, in layer order
/// `dw1 pw1 dw2 pw2 dw3 pw3 lif1 lif2 lif3`.
pub fn loop_count_model(n: usize) -> Vec<u64> {
    let dims = [(60, 80), (20, 26), (6, 8)];
    let chans = [(2, 32, 7), (32, 128, 5), (128, n, 5)];
    let mut out = Vec::new();
    for ((h, w), (ci, co, k)) in dims.iter().zip(chans) {
        out.push(loop_count_depthwise(ci, *h, *w, k));
        out.push(loop_count_pointwise(ci, co, *h, *w));
    }
    out.push(loop_count_dense(2 * n, 256));
    out.push(loop_count_dense(256, 64));
    out.push(loop_count_dense(64, 2));
    out
}
