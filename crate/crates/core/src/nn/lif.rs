//! Dense leaky integrate-and-fire layers and their backpropagation through time.
//!
//! One step of a layer with input `x`:
//!
//! ```text
//! I  = W^T x + b
//! V  = beta * U + I          (pre-reset membrane)
//! S  = [V > theta]           (spiking layers only)
//! U' = V - theta * S         (reset by subtraction)
//! ```
//!
//! A non-spiking layer never fires and exposes `U'` as its output (membrane
//! readout). The backward pass treats the reset term as a constant and uses
//! the fast-sigmoid surrogate `dS/dV = 1 / (1 + k |V - theta|)^2`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// `out = W^T x + b` with `W` stored `[in][out]`; zero inputs are skipped.
pub fn dense_forward<T: Scalar>(x: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
    let n_out = bias.len();
    debug_assert_eq!(weights.len(), x.len() * n_out);
    out.copy_from_slice(bias);
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &weights[i * n_out..(i + 1) * n_out];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += xi * w;
        }
    }
}

/// Gradients of a dense layer applied to `steps` stacked inputs
/// (`xs: steps x in`, `grad_out: steps x out`). Returns `(dW, db, dx)`.
pub fn dense_backward<T: Scalar>(
    xs: &[T],
    weights: &[T],
    grad_out: &[T],
    inputs: usize,
    outputs: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let steps = grad_out.len() / outputs;
    debug_assert_eq!(xs.len(), steps * inputs);
    let mut gw = vec![T::zero(); inputs * outputs];
    let mut gx = vec![T::zero(); steps * inputs];
    let mut gb = vec![T::zero(); outputs];
    for row in grad_out.chunks_exact(outputs) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    // dW (in x out) = X^T (in x steps) * G (steps x out)
    T::gemm(
        inputs,
        steps,
        outputs,
        T::one(),
        xs,
        (1, inputs as isize),
        grad_out,
        (outputs as isize, 1),
        T::zero(),
        &mut gw,
        (outputs as isize, 1),
    );
    // dX (steps x in) = G (steps x out) * W^T (out x in)
    T::gemm(
        steps,
        outputs,
        inputs,
        T::one(),
        grad_out,
        (outputs as isize, 1),
        weights,
        (1, outputs as isize),
        T::zero(),
        &mut gx,
        (inputs as isize, 1),
    );
    (gw, gb, gx)
}

/// Fast-sigmoid surrogate derivative of the spike function at `v - theta`.
#[inline]
pub fn surrogate_grad<T: Scalar>(offset: T, slope: T) -> T {
    let d = T::one() + slope * offset.abs();
    (d * d).recip()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[in][out]` row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    /// Per-neuron decay in `(0, 1]`.
    pub beta: Vec<T>,
    pub beta_learnable: bool,
    pub theta: T,
    pub spiking: bool,
    pub surrogate_slope: T,
}

/// Per-neuron membrane potential and last-step spikes.
#[derive(Clone, Debug, PartialEq)]
pub struct LifState<T> {
    pub membrane: Vec<T>,
    pub spikes: Vec<T>,
}

impl<T: Scalar> LifState<T> {
    pub fn zeros(width: usize) -> Self {
        LifState {
            membrane: vec![T::zero(); width],
            spikes: vec![T::zero(); width],
        }
    }

    /// Membranes drawn uniformly from `[0, theta)`.
    pub fn uniform<R: Rng + ?Sized>(width: usize, theta: T, rng: &mut R) -> Self {
        let theta = theta.to_f64().unwrap_or(1.0);
        LifState {
            membrane: (0..width)
                .map(|_| T::from_f64_lossy(rng.gen::<f64>() * theta))
                .collect(),
            spikes: vec![T::zero(); width],
        }
    }

    pub fn width(&self) -> usize {
        self.membrane.len()
    }

    pub fn reset(&mut self) {
        self.membrane.fill(T::zero());
        self.spikes.fill(T::zero());
    }
}

/// Values recorded by [`LifLayer::forward_sequence`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct LifTrace<T> {
    pub steps: usize,
    /// `steps x in`
    pub inputs: Vec<T>,
    /// Membrane before this step's decay (`U_{t-1}`), `steps x out`.
    pub prev_membrane: Vec<T>,
    /// Pre-reset membrane `V_t`, `steps x out`.
    pub pre_reset: Vec<T>,
    /// Layer output per step (spikes or membrane), `steps x out`.
    pub outputs: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LifGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub beta: Vec<T>,
    /// `steps x in`
    pub input: Vec<T>,
}

impl<T: Scalar> LifLayer<T> {
    /// A zero-initialized layer with every `beta` set to `beta`.
    pub fn new(inputs: usize, outputs: usize, beta: T, spiking: bool) -> Self {
        LifLayer {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            beta: vec![beta; outputs],
            beta_learnable: false,
            theta: T::one(),
            spiking,
            surrogate_slope: T::from_f64_lossy(25.0),
        }
    }

    /// Number of trainable values.
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs
            + self.outputs
            + if self.beta_learnable { self.outputs } else { 0 }
    }

    pub fn zero_state(&self) -> LifState<T> {
        LifState::zeros(self.outputs)
    }

    /// The value this layer passes downstream: spikes, or the membrane for a
    /// readout layer.
    pub fn output<'a>(&self, state: &'a LifState<T>) -> &'a [T] {
        if self.spiking {
            &state.spikes
        } else {
            &state.membrane
        }
    }

    /// Advances `state` by one step, leaving the pre-reset membrane in `pre_reset`.
    fn advance(&self, state: &mut LifState<T>, x: &[T], pre_reset: &mut [T]) {
        dense_forward(x, &self.weights, &self.bias, pre_reset);
        for (i, v) in pre_reset.iter_mut().enumerate() {
            *v += self.beta[i] * state.membrane[i];
            let spike = self.spiking && *v > self.theta;
            state.spikes[i] = if spike { T::one() } else { T::zero() };
            state.membrane[i] = if spike { *v - self.theta } else { *v };
        }
        debug_assert!(
            state.membrane.iter().all(|u| u.is_finite()),
            "non-finite membrane potential"
        );
    }

    /// One time step. Returns the layer output (see [`LifLayer::output`]).
    pub fn step<'a>(&self, state: &'a mut LifState<T>, x: &[T]) -> Result<&'a [T]> {
        if x.len() != self.inputs || state.width() != self.outputs {
            return Err(Error::Shape(format!(
                "LIF layer {}->{} got input {} and state {}",
                self.inputs,
                self.outputs,
                x.len(),
                state.width()
            )));
        }
        let mut scratch = vec![T::zero(); self.outputs];
        self.advance(state, x, &mut scratch);
        Ok(if self.spiking {
            &state.spikes
        } else {
            &state.membrane
        })
    }

    /// Runs `xs.len() / inputs` steps from `state`, recording a trace.
    pub fn forward_sequence(&self, state: &mut LifState<T>, xs: &[T]) -> Result<LifTrace<T>> {
        if xs.len() % self.inputs != 0 || state.width() != self.outputs {
            return Err(Error::Shape("LIF sequence input shape mismatch".into()));
        }
        let steps = xs.len() / self.inputs;
        let n = self.outputs;
        let mut trace = LifTrace {
            steps,
            inputs: xs.to_vec(),
            prev_membrane: vec![T::zero(); steps * n],
            pre_reset: vec![T::zero(); steps * n],
            outputs: vec![T::zero(); steps * n],
        };
        for t in 0..steps {
            trace.prev_membrane[t * n..(t + 1) * n].copy_from_slice(&state.membrane);
            self.advance(
                state,
                &xs[t * self.inputs..(t + 1) * self.inputs],
                &mut trace.pre_reset[t * n..(t + 1) * n],
            );
            trace.outputs[t * n..(t + 1) * n].copy_from_slice(self.output(state));
        }
        Ok(trace)
    }

    /// Backpropagation through time given `dL/d output_t` for every step.
    pub fn backward(&self, trace: &LifTrace<T>, grad_out: &[T]) -> Result<LifGrads<T>> {
        let n = self.outputs;
        let steps = trace.steps;
        if grad_out.len() != steps * n {
            return Err(Error::Shape("LIF backward gradient shape mismatch".into()));
        }
        let mut grad_v = vec![T::zero(); steps * n];
        let mut grad_beta = vec![T::zero(); n];
        let mut carry = vec![T::zero(); n];
        for t in (0..steps).rev() {
            let row = t * n..(t + 1) * n;
            let g_out = &grad_out[row.clone()];
            let v = &trace.pre_reset[row.clone()];
            let u_prev = &trace.prev_membrane[row.clone()];
            let gv = &mut grad_v[row];
            for i in 0..n {
                let mut g = carry[i];
                if self.spiking {
                    g += g_out[i] * surrogate_grad(v[i] - self.theta, self.surrogate_slope);
                } else {
                    g += g_out[i];
                }
                gv[i] = g;
                grad_beta[i] += g * u_prev[i];
                carry[i] = self.beta[i] * g;
            }
        }
        let (weights, bias, input) =
            dense_backward(&trace.inputs, &self.weights, &grad_v, self.inputs, n);
        Ok(LifGrads {
            weights,
            bias,
            beta: grad_beta,
            input,
        })
    }

    /// Keeps every decay inside `(0, 1]`.
    pub fn clamp_beta(&mut self) {
        let lo = T::from_f64_lossy(1e-4);
        for b in &mut self.beta {
            *b = b.max(lo).min(T::one());
        }
    }
}
