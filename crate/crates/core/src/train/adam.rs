//! Adam with bias correction.

use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a flat list of tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    skipped: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Steps rejected because a gradient was not finite.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// One update of `params[i]` with `grads[i]` for every tensor. Returns
    /// `false` (and changes nothing) if any gradient is NaN or infinite.
    pub fn step_slices(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]]) -> bool {
        assert_eq!(params.len(), grads.len(), "tensor count mismatch");
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            self.skipped += 1;
            return false;
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (c.beta2 as f64).powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "tensor {i} shape mismatch");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let m_hat = m[j] as f64 / bc1;
                let v_hat = v[j] as f64 / bc2;
                p[j] -= (c.lr as f64 * m_hat / (v_hat.sqrt() + c.eps as f64)) as f32;
            }
        }
        true
    }

    /// Updates every trainable tensor of `params`, then clamps learnable
    /// decays into `(0, 1]`.
    pub fn step_model(&mut self, params: &mut ModelParams, grads: &ModelParams) -> bool {
        let g: Vec<&[f32]> = grads
            .tensors()
            .into_iter()
            .filter(|t| t.trainable)
            .map(|t| t.data)
            .collect();
        let mut views = params.tensors_mut();
        let mut p: Vec<&mut [f32]> = views
            .iter_mut()
            .filter(|t| t.trainable)
            .map(|t| &mut *t.data)
            .collect();
        let ok = self.step_slices(&mut p, &g);
        drop(p);
        drop(views);
        if ok {
            params.clamp_decays();
        }
        ok
    }
}
