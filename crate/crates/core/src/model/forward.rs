//! Forward and backward passes of the full network.
//!
//! Streaming ([`ModelParams::forward_step`]) and offline
//! ([`ModelParams::forward_window`]) evaluation share every arithmetic
//! operation, so they produce bit-identical predictions from the same state.
//!
//! An all-zero frame maps to all-zero features exactly (the conv stack has no
//! bias and instance norm keeps a zero plane at zero), so such frames skip the
//! conv stack in both modes. The same reasoning makes their conv weight
//! gradients exactly zero.

use super::{ActivityProbe, ConvBlock, ConvWeights, ModelParams, NetState};
use crate::error::{Error, Result};
use crate::events::{BinnedWindow, CHANNELS, FRAME_LEN, GRID_HEIGHT, GRID_WIDTH};
use crate::nn::{
    avg_pool, avg_pool_backward, conv2d, conv2d_backward, depthwise_conv2d,
    depthwise_conv2d_backward, depthwise_conv2d_kernel_grad, instance_norm, instance_norm_backward,
    pointwise_conv2d, pointwise_conv2d_backward, relu_backward_inplace, relu_inplace, LifTrace,
    Tensor4, INSTANCE_NORM_EPS,
};

const EPS: f32 = INSTANCE_NORM_EPS as f32;

/// Conv output after instance norm: `y` before ReLU, `act` after.
#[derive(Clone, Debug)]
struct Stage {
    y: Tensor4<f32>,
    inv_std: Vec<f32>,
    act: Tensor4<f32>,
}

#[derive(Clone, Debug)]
struct BlockCache {
    input: Tensor4<f32>,
    stages: Vec<Stage>,
}

/// Intermediate activations of one frame through the conv stack.
#[derive(Clone, Debug)]
pub struct FrameCache {
    blocks: Vec<BlockCache>,
}

/// What the backward pass needs from a window's forward pass. The first LIF
/// trace's inputs are the flattened conv features of every frame.
#[derive(Clone, Debug)]
pub struct SequenceTrace {
    pub lif: Vec<LifTrace<f32>>,
}

#[derive(Clone, Debug)]
pub struct SequenceOutput {
    /// Normalized `(x, y)` per frame.
    pub predictions: Vec<[f32; 2]>,
    pub trace: SequenceTrace,
}

fn norm_relu(x: Tensor4<f32>, keep: bool) -> (Tensor4<f32>, Option<Stage>) {
    let n = instance_norm(&x, EPS);
    if keep {
        let mut act = n.output.clone();
        relu_inplace(&mut act);
        (
            act.clone(),
            Some(Stage {
                y: n.output,
                inv_std: n.inv_std,
                act,
            }),
        )
    } else {
        let mut act = n.output;
        relu_inplace(&mut act);
        (act, None)
    }
}

fn block_ops(block: &ConvBlock) -> usize {
    match block.weights {
        ConvWeights::Separable { .. } => 2,
        ConvWeights::Standard { .. } => 1,
    }
}

impl ModelParams {
    fn block_forward(
        &self,
        b: usize,
        x: Tensor4<f32>,
        probe: &mut Option<&mut ActivityProbe>,
        op: usize,
        keep: bool,
    ) -> Result<(Tensor4<f32>, Option<BlockCache>)> {
        let block = &self.blocks[b];
        let mut stages = Vec::new();
        let act = match &block.weights {
            ConvWeights::Separable {
                depthwise,
                pointwise,
            } => {
                if let Some(p) = probe.as_deref_mut() {
                    p.conv_input(op, x.data());
                }
                let (a1, s1) = norm_relu(depthwise_conv2d(&x, depthwise, block.kernel)?, keep);
                if let Some(p) = probe.as_deref_mut() {
                    p.conv_input(op + 1, a1.data());
                }
                let (a2, s2) =
                    norm_relu(pointwise_conv2d(&a1, pointwise, block.out_channels)?, keep);
                stages.extend(s1);
                stages.extend(s2);
                a2
            }
            ConvWeights::Standard { weights } => {
                if let Some(p) = probe.as_deref_mut() {
                    p.conv_input(op, x.data());
                }
                let (a, s) =
                    norm_relu(conv2d(&x, weights, block.out_channels, block.kernel)?, keep);
                stages.extend(s);
                a
            }
        };
        let pooled = avg_pool(&act, block.pool)?;
        let cache = keep.then(|| BlockCache { input: x, stages });
        Ok((pooled, cache))
    }

    /// Flattened conv features (`2N` values) of one `2 x 60 x 80` frame.
    pub fn conv_features(
        &self,
        frame: &[f32],
        probe: Option<&mut ActivityProbe>,
    ) -> Result<Vec<f32>> {
        Ok(self.features_impl(frame, probe, false)?.0)
    }

    fn features_impl(
        &self,
        frame: &[f32],
        mut probe: Option<&mut ActivityProbe>,
        keep: bool,
    ) -> Result<(Vec<f32>, Option<FrameCache>)> {
        if frame.len() != FRAME_LEN {
            return Err(Error::Shape(format!(
                "frame has {} values, expected {FRAME_LEN}",
                frame.len()
            )));
        }
        if frame.iter().all(|&v| v == 0.0) {
            if let Some(p) = probe.as_deref_mut() {
                let (mut h, mut w) = (GRID_HEIGHT, GRID_WIDTH);
                let mut op = 0;
                for block in &self.blocks {
                    for _ in 0..block_ops(block) {
                        p.conv_zero_input(op, block.in_channels * h * w);
                        op += 1;
                    }
                    h /= block.pool;
                    w /= block.pool;
                }
            }
            return Ok((vec![0.0; self.config.flatten_width()], None));
        }
        let mut x = Tensor4::from_vec([1, CHANNELS, GRID_HEIGHT, GRID_WIDTH], frame.to_vec())?;
        let mut caches = Vec::new();
        let mut op = 0;
        for b in 0..self.blocks.len() {
            let (out, cache) = self.block_forward(b, x, &mut probe, op, keep)?;
            op += block_ops(&self.blocks[b]);
            caches.extend(cache);
            x = out;
        }
        let cache = keep.then_some(FrameCache { blocks: caches });
        Ok((x.into_vec(), cache))
    }

    /// One 1 ms step: conv features, then the three LIF layers. Returns the
    /// normalized `(x, y)` prediction.
    pub fn forward_step(
        &self,
        state: &mut NetState,
        frame: &[f32],
        mut probe: Option<&mut ActivityProbe>,
    ) -> Result<[f32; 2]> {
        let mut x = self.conv_features(frame, probe.as_deref_mut())?;
        if let Some(p) = probe.as_deref_mut() {
            p.features(&x);
        }
        for (i, layer) in self.lif.iter().enumerate() {
            let out = layer.step(&mut state.lif[i], &x)?.to_vec();
            if let Some(p) = probe.as_deref_mut() {
                p.layer_output(i, &out, layer.spiking);
            }
            x = out;
        }
        if let Some(p) = probe {
            p.end_step();
        }
        Ok([x[0], x[1]])
    }

    /// Runs a whole window from `state` (which is advanced), keeping what
    /// [`ModelParams::backward_window`] needs.
    pub fn forward_window(
        &self,
        state: &mut NetState,
        window: &BinnedWindow,
    ) -> Result<SequenceOutput> {
        let width = self.config.flatten_width();
        let mut features = Vec::with_capacity(window.len() * width);
        let mut frame = vec![0.0f32; FRAME_LEN];
        for t in 0..window.len() {
            window.frame_f32(t, &mut frame);
            features.extend(self.conv_features(&frame, None)?);
        }
        let mut traces: Vec<LifTrace<f32>> = Vec::with_capacity(self.lif.len());
        for (i, layer) in self.lif.iter().enumerate() {
            let trace = {
                let input = traces.last().map_or(&features, |t| &t.outputs);
                layer.forward_sequence(&mut state.lif[i], input)?
            };
            traces.push(trace);
        }
        let predictions = traces
            .last()
            .expect("three layers")
            .outputs
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        Ok(SequenceOutput {
            predictions,
            trace: SequenceTrace { lif: traces },
        })
    }

    /// Gradients of a loss with `dL/d prediction_t = grad_pred[2t..2t+2]`.
    /// The conv stack is recomputed per non-empty frame instead of stored.
    pub fn backward_window(
        &self,
        window: &BinnedWindow,
        trace: &SequenceTrace,
        grad_pred: &[f32],
    ) -> Result<ModelParams> {
        if grad_pred.len() != 2 * window.len() || trace.lif.len() != self.lif.len() {
            return Err(Error::Shape(
                "backward: gradient/window length mismatch".into(),
            ));
        }
        let mut grads = self.zeros_like();
        let mut g = grad_pred.to_vec();
        for i in (0..self.lif.len()).rev() {
            let lg = self.lif[i].backward(&trace.lif[i], &g)?;
            let dst = &mut grads.lif[i];
            dst.weights = lg.weights;
            dst.bias = lg.bias;
            if self.lif[i].beta_learnable {
                dst.beta = lg.beta;
            }
            g = lg.input;
        }
        let width = self.config.flatten_width();
        let mut frame = vec![0.0f32; FRAME_LEN];
        for t in 0..window.len() {
            let g_t = &g[t * width..(t + 1) * width];
            if g_t.iter().all(|&v| v == 0.0) || window.frame(t).iter().all(|&c| c == 0) {
                continue;
            }
            window.frame_f32(t, &mut frame);
            let (_, cache) = self.features_impl(&frame, None, true)?;
            let cache = cache.expect("non-empty frame keeps a cache");
            self.conv_backward(&cache, g_t, &mut grads)?;
        }
        Ok(grads)
    }

    fn conv_backward(
        &self,
        cache: &FrameCache,
        grad_features: &[f32],
        grads: &mut ModelParams,
    ) -> Result<()> {
        let last = self.blocks.len() - 1;
        let out_shape = {
            let stage = cache.blocks[last].stages.last().expect("stage");
            let [n, c, h, w] = stage.act.shape();
            let k = self.blocks[last].pool;
            [n, c, h / k, w / k]
        };
        let mut g = Tensor4::from_vec(out_shape, grad_features.to_vec())?;
        for b in (0..self.blocks.len()).rev() {
            let block = &self.blocks[b];
            let bc = &cache.blocks[b];
            let act_shape = bc.stages.last().expect("stage").act.shape();
            let mut gp = avg_pool_backward(act_shape, block.pool, &g)?;
            let need_input_grad = b > 0;
            match (&block.weights, &mut grads.blocks[b].weights) {
                (
                    ConvWeights::Separable {
                        depthwise,
                        pointwise,
                    },
                    ConvWeights::Separable {
                        depthwise: gdw,
                        pointwise: gpw,
                    },
                ) => {
                    let (s_dw, s_pw) = (&bc.stages[0], &bc.stages[1]);
                    relu_backward_inplace(&mut gp, &s_pw.act);
                    let gy = instance_norm_backward(&s_pw.y, &s_pw.inv_std, &gp)?;
                    let (mut gx, gw) = pointwise_conv2d_backward(&s_dw.act, pointwise, &gy)?;
                    add_into(gpw, &gw);
                    relu_backward_inplace(&mut gx, &s_dw.act);
                    let gy = instance_norm_backward(&s_dw.y, &s_dw.inv_std, &gx)?;
                    if need_input_grad {
                        let (gx, gk) =
                            depthwise_conv2d_backward(&bc.input, depthwise, block.kernel, &gy)?;
                        add_into(gdw, &gk);
                        g = gx;
                    } else {
                        add_into(
                            gdw,
                            &depthwise_conv2d_kernel_grad(&bc.input, block.kernel, &gy)?,
                        );
                    }
                }
                (ConvWeights::Standard { weights }, ConvWeights::Standard { weights: gw_acc }) => {
                    let s = &bc.stages[0];
                    relu_backward_inplace(&mut gp, &s.act);
                    let gy = instance_norm_backward(&s.y, &s.inv_std, &gp)?;
                    let (gx, gw) = conv2d_backward(&bc.input, weights, block.kernel, &gy)?;
                    add_into(gw_acc, &gw);
                    g = gx;
                }
                _ => {
                    return Err(Error::Shape(
                        "gradient layout differs from parameters".into(),
                    ))
                }
            }
            if !need_input_grad {
                break;
            }
        }
        Ok(())
    }
}

fn add_into(acc: &mut [f32], v: &[f32]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += *b;
    }
}

/// Normalized prediction to grid pixels.
pub fn to_grid_pixels(p: [f32; 2]) -> [f32; 2] {
    [p[0] * GRID_WIDTH as f32, p[1] * GRID_HEIGHT as f32]
}
