//! The pupil-tracking network.
//!
//! Three convolution blocks extract spatial features from each 2x60x80 frame:
//!
//! | block | layers                                  | channels  | pool |
//! |-------|-----------------------------------------|-----------|------|
//! | conv1 | DW 7x7, IN, ReLU, PW, IN, ReLU           | 2 -> 32   | 3x3  |
//! | conv2 | DW 5x5, IN, ReLU, PW, IN, ReLU           | 32 -> 128 | 3x3  |
//! | conv3 | DW 5x5, IN, ReLU, PW, IN, ReLU           | 128 -> N  | 4x4  |
//!
//! The spatial size goes 80x60 -> 26x20 -> 8x6 -> 2x1, so flattening yields
//! `2N` features. Three dense LIF layers (2N -> 256 -> 64 -> 2) follow; the
//! last one does not spike and its membrane potential is the prediction in
//! normalized `[0, 1]^2` coordinates.
//!
//! With `use_dsc = false` each DW+PW pair is replaced by one standard conv of
//! the same kernel size and channel map (conv, IN, ReLU, pool).

mod activity;
mod forward;
mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{GRID_HEIGHT, GRID_WIDTH};
use crate::nn::{pooled_dims, LifLayer, LifState};

pub use activity::{ActivityProbe, ActivityStats};
pub use forward::{to_grid_pixels, FrameCache, SequenceOutput, SequenceTrace};
pub use io::{FORMAT_VERSION, MAGIC};

/// `(in channels, out channels, kernel, pool)` of the three conv blocks; the
/// last block's output width is `N`.
const BLOCKS: [(usize, usize, usize, usize); 3] = [(2, 32, 7, 3), (32, 128, 5, 3), (128, 0, 5, 4)];
pub const LIF_WIDTHS: [usize; 3] = [256, 64, 2];
pub const SUPPORTED_N: [usize; 3] = [128, 256, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MembraneInit {
    Zero,
    /// Uniform in `[0, theta)`, drawn from the model seed.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Output channels of the last conv block.
    pub n: usize,
    pub use_dsc: bool,
    pub seed: u64,
    pub surrogate_slope: f32,
    pub theta: f32,
    /// Let the output layer spike (ablation; the default readout does not).
    pub output_spiking: bool,
    pub membrane_init: MembraneInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n: 128,
            use_dsc: true,
            seed: 0,
            surrogate_slope: 25.0,
            theta: 1.0,
            output_spiking: false,
            membrane_init: MembraneInit::Zero,
        }
    }
}

impl ModelConfig {
    pub fn with_n(n: usize) -> Self {
        ModelConfig {
            n,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidArgument("theta must be positive".into()));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::InvalidArgument(
                "surrogate slope must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Flattened feature width fed to the first LIF layer.
    pub fn flatten_width(&self) -> usize {
        let (h, w) = spatial_trace().last().copied().expect("trace");
        self.n * h * w
    }
}

/// Spatial `(h, w)` at the input and after each pooling stage.
pub fn spatial_trace() -> Vec<(usize, usize)> {
    let mut dims = vec![(GRID_HEIGHT, GRID_WIDTH)];
    for &(_, _, _, pool) in &BLOCKS {
        let (h, w) = *dims.last().expect("non-empty");
        dims.push(pooled_dims(h, w, pool));
    }
    dims
}

/// Closed-form trainable parameter count of the separable model.
pub fn dsc_param_formula(n: usize) -> usize {
    640 * n + 25_094
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvWeights {
    Separable {
        /// `[C][k][k]`
        depthwise: Vec<f32>,
        /// `[C_in][C_out]`
        pointwise: Vec<f32>,
    },
    Standard {
        /// `[C_out][C_in][k][k]`
        weights: Vec<f32>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: usize,
    pub weights: ConvWeights,
}

impl ConvBlock {
    fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pool: usize,
        dsc: bool,
    ) -> Self {
        let weights = if dsc {
            ConvWeights::Separable {
                depthwise: vec![0.0; in_channels * kernel * kernel],
                pointwise: vec![0.0; in_channels * out_channels],
            }
        } else {
            ConvWeights::Standard {
                weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            }
        };
        ConvBlock {
            in_channels,
            out_channels,
            kernel,
            pool,
            weights,
        }
    }
}

/// All parameters of one network. The same layout doubles as the gradient
/// accumulator (see [`ModelParams::zeros_like`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    pub lif: Vec<LifLayer<f32>>,
}

/// One named parameter tensor.
#[derive(Debug)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
    pub trainable: bool,
}

#[derive(Debug)]
pub struct TensorViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f32],
    pub trainable: bool,
}

/// Membrane state of the three LIF layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState {
    pub lif: Vec<LifState<f32>>,
}

impl NetState {
    pub fn zeros() -> Self {
        NetState {
            lif: LIF_WIDTHS.iter().map(|&w| LifState::zeros(w)).collect(),
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.lif {
            s.reset();
        }
    }
}

impl ModelParams {
    /// Parameters with every value zero and the architecture of `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = BLOCKS
            .iter()
            .map(|&(cin, cout, k, pool)| {
                let cout = if cout == 0 { config.n } else { cout };
                ConvBlock::zeros(cin, cout, k, pool, config.use_dsc)
            })
            .collect();
        let widths = [
            config.flatten_width(),
            LIF_WIDTHS[0],
            LIF_WIDTHS[1],
            LIF_WIDTHS[2],
        ];
        let lif = (0..3)
            .map(|i| {
                let last = i == 2;
                let mut layer = LifLayer::new(
                    widths[i],
                    widths[i + 1],
                    0.0,
                    !last || config.output_spiking,
                );
                layer.theta = config.theta;
                layer.surrogate_slope = config.surrogate_slope;
                layer.beta_learnable = last;
                layer
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            blocks,
            lif,
        })
    }

    /// Builds and initializes a model: He-uniform conv and dense weights,
    /// zero biases, hidden decays drawn once from U(0.9, 1) and a learnable
    /// output decay of 0.9.
    pub fn build(config: &ModelConfig) -> Result<(Self, NetState)> {
        let mut params = ModelParams::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let he = |data: &mut [f32], fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in data {
                *v = rng.gen_range(-bound..bound) as f32;
            }
        };
        for block in &mut params.blocks {
            let (cin, k) = (block.in_channels, block.kernel);
            match &mut block.weights {
                ConvWeights::Separable {
                    depthwise,
                    pointwise,
                } => {
                    he(depthwise, k * k, &mut rng);
                    he(pointwise, cin, &mut rng);
                }
                ConvWeights::Standard { weights } => he(weights, cin * k * k, &mut rng),
            }
        }
        for (i, layer) in params.lif.iter_mut().enumerate() {
            let fan_in = layer.inputs;
            he(&mut layer.weights, fan_in, &mut rng);
            if i < 2 {
                for b in &mut layer.beta {
                    *b = rng.gen_range(0.9f64..1.0) as f32;
                }
            } else {
                layer.beta.fill(0.9);
                // The readout integrates without resets, so its steady-state
                // gain is 1/(1-beta); shrink the weights to match.
                for w in &mut layer.weights {
                    *w *= 1.0 - 0.9;
                }
            }
        }
        let state = params.initial_state();
        Ok((params, state))
    }

    /// Fresh state per the configured membrane initialization. Uniform
    /// initialization is reproducible: it is drawn from a stream derived from
    /// the model seed.
    pub fn initial_state(&self) -> NetState {
        match self.config.membrane_init {
            MembraneInit::Zero => NetState::zeros(),
            MembraneInit::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5EED_57A7_E000_0001);
                NetState {
                    lif: LIF_WIDTHS
                        .iter()
                        .map(|&w| LifState::uniform(w, self.config.theta, &mut rng))
                        .collect(),
                }
            }
        }
    }

    /// Same architecture, every value zero; used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("conv{}", i + 1);
            match &b.weights {
                ConvWeights::Separable {
                    depthwise,
                    pointwise,
                } => {
                    out.push(TensorView {
                        name: format!("{p}.dw"),
                        shape: vec![b.in_channels, b.kernel, b.kernel],
                        data: depthwise,
                        trainable: true,
                    });
                    out.push(TensorView {
                        name: format!("{p}.pw"),
                        shape: vec![b.in_channels, b.out_channels],
                        data: pointwise,
                        trainable: true,
                    });
                }
                ConvWeights::Standard { weights } => out.push(TensorView {
                    name: format!("{p}.conv"),
                    shape: vec![b.out_channels, b.in_channels, b.kernel, b.kernel],
                    data: weights,
                    trainable: true,
                }),
            }
        }
        for (i, l) in self.lif.iter().enumerate() {
            let p = format!("lif{}", i + 1);
            out.push(TensorView {
                name: format!("{p}.weight"),
                shape: vec![l.inputs, l.outputs],
                data: &l.weights,
                trainable: true,
            });
            out.push(TensorView {
                name: format!("{p}.bias"),
                shape: vec![l.outputs],
                data: &l.bias,
                trainable: true,
            });
            out.push(TensorView {
                name: format!("{p}.beta"),
                shape: vec![l.outputs],
                data: &l.beta,
                trainable: l.beta_learnable,
            });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("conv{}", i + 1);
            let (cin, cout, k) = (b.in_channels, b.out_channels, b.kernel);
            match &mut b.weights {
                ConvWeights::Separable {
                    depthwise,
                    pointwise,
                } => {
                    out.push(TensorViewMut {
                        name: format!("{p}.dw"),
                        shape: vec![cin, k, k],
                        data: depthwise,
                        trainable: true,
                    });
                    out.push(TensorViewMut {
                        name: format!("{p}.pw"),
                        shape: vec![cin, cout],
                        data: pointwise,
                        trainable: true,
                    });
                }
                ConvWeights::Standard { weights } => out.push(TensorViewMut {
                    name: format!("{p}.conv"),
                    shape: vec![cout, cin, k, k],
                    data: weights,
                    trainable: true,
                }),
            }
        }
        for (i, l) in self.lif.iter_mut().enumerate() {
            let p = format!("lif{}", i + 1);
            let (inputs, outputs, learnable) = (l.inputs, l.outputs, l.beta_learnable);
            out.push(TensorViewMut {
                name: format!("{p}.weight"),
                shape: vec![inputs, outputs],
                data: &mut l.weights,
                trainable: true,
            });
            out.push(TensorViewMut {
                name: format!("{p}.bias"),
                shape: vec![outputs],
                data: &mut l.bias,
                trainable: true,
            });
            out.push(TensorViewMut {
                name: format!("{p}.beta"),
                shape: vec![outputs],
                data: &mut l.beta,
                trainable: learnable,
            });
        }
        out
    }

    /// Total trainable values, summed over the actual tensors.
    pub fn count_params(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Trainable parameters per architectural row (conv layers, then LIF layers).
    pub fn param_rows(&self) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = Vec::new();
        for t in self.tensors() {
            if !t.trainable {
                continue;
            }
            let (layer, kind) = t.name.split_once('.').expect("dotted name");
            if layer.starts_with("lif") {
                match rows.last_mut() {
                    Some((name, count)) if name == layer => *count += t.data.len(),
                    _ => rows.push((layer.to_string(), t.data.len())),
                }
            } else {
                rows.push((format!("{layer}.{kind}"), t.data.len()));
            }
        }
        rows
    }

    /// `self += other` element-wise over every tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for t in self.tensors_mut() {
            for v in t.data.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Clamps learnable decays into `(0, 1]`.
    pub fn clamp_decays(&mut self) {
        for l in &mut self.lif {
            if l.beta_learnable {
                l.clamp_beta();
            }
        }
    }
}
