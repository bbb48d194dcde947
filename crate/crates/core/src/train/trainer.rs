//! Sliding-window BPTT training with streaming validation.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::loss::{loss, LossKind, LossTerms};
use super::metrics::{MetricAccumulator, MetricReport, DEFAULT_TOLERANCES};
use crate::augment::{apply_plan, AugmentConfig, AugmentPlan};
use crate::dataset::{window_starts, Session};
use crate::error::{Error, Result};
use crate::events::FRAME_LEN;
use crate::model::{to_grid_pixels, ModelConfig, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub window_ms: usize,
    pub stride_ms: usize,
    /// Windows per optimizer step; gradients are averaged over the batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Upper bound on windows drawn per epoch (after shuffling); `None` uses
    /// every window.
    pub max_windows_per_epoch: Option<usize>,
    pub loss: LossKind,
    pub exclude_blinks_from_loss: bool,
    /// Global L2 norm bound on the averaged gradient.
    pub grad_clip: Option<f32>,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 40,
            window_ms: 450,
            stride_ms: 10,
            batch_size: 32,
            seed: 0,
            max_windows_per_epoch: None,
            loss: LossKind::Combined,
            exclude_blinks_from_loss: false,
            grad_clip: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("window_ms", self.window_ms),
            ("stride_ms", self.stride_ms),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.max_windows_per_epoch == Some(0) {
            return Err(Error::InvalidArgument(
                "max_windows_per_epoch must be positive".into(),
            ));
        }
        self.augment.validate()
    }
}

/// One row of the training history. Epoch 0 is the untrained model, so its
/// loss fields are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: Option<LossTerms>,
    pub val: MetricReport,
    pub optimizer_steps: u32,
    pub skipped_steps: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation Euclidean distance.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Streams a whole session through the network from a fresh state and
/// returns per-frame predictions in grid pixels.
pub fn predict_session(params: &ModelParams, session: &Session) -> Result<Vec<[f32; 2]>> {
    let mut state = params.initial_state();
    let mut frame = vec![0.0f32; FRAME_LEN];
    let mut out = Vec::with_capacity(session.len());
    for k in 0..session.len() {
        session.frames.write_dense_f32(k, &mut frame);
        out.push(to_grid_pixels(
            params.forward_step(&mut state, &frame, None)?,
        ));
    }
    Ok(out)
}

/// Metrics over every frame of every session, each streamed from a fresh state.
pub fn evaluate_sessions(params: &ModelParams, sessions: &[Session]) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(&DEFAULT_TOLERANCES);
    for s in sessions {
        let preds = predict_session(params, s)?;
        for (p, l) in preds.iter().zip(s.label_points()) {
            acc.push(*p, [l.x as f32, l.y as f32], l.blink);
        }
    }
    Ok(acc.report())
}

/// Metrics of a model that always predicts the grid center.
pub fn center_baseline(sessions: &[Session]) -> MetricReport {
    let center = [40.0f32, 30.0];
    let mut acc = MetricAccumulator::new(&DEFAULT_TOLERANCES);
    for s in sessions {
        for l in s.label_points() {
            acc.push(center, [l.x as f32, l.y as f32], l.blink);
        }
    }
    acc.report()
}

fn global_norm(grads: &ModelParams) -> f64 {
    grads
        .tensors()
        .iter()
        .filter(|t| t.trainable)
        .flat_map(|t| t.data.iter())
        .map(|&g| g as f64 * g as f64)
        .sum::<f64>()
        .sqrt()
}

/// Loss and gradient of one (already augmented) window.
pub fn window_gradient(
    params: &ModelParams,
    window: &crate::events::BinnedWindow,
    labels: &crate::labels::LabelTrack,
    kind: LossKind,
    exclude_blinks: bool,
) -> Result<(LossTerms, ModelParams)> {
    let mut state = params.initial_state();
    let out = params.forward_window(&mut state, window)?;
    let pred: Vec<f32> = out.predictions.iter().flatten().copied().collect();
    let target: Vec<f32> = (0..labels.len())
        .flat_map(|i| labels.normalized(i))
        .collect();
    let mask: Option<Vec<bool>> =
        exclude_blinks.then(|| labels.samples.iter().map(|s| !s.blink).collect());
    let (terms, grad) = loss(&pred, &target, kind, mask.as_deref());
    let grads = params.backward_window(window, &out.trace, &grad)?;
    Ok((terms, grads))
}

pub fn train(
    train_sessions: &[Session],
    val_sessions: &[Session],
    tc: &TrainConfig,
    mc: &ModelConfig,
) -> Result<TrainOutcome> {
    let (params, _) = ModelParams::build(mc)?;
    train_from(params, train_sessions, val_sessions, tc)
}

/// Trains starting from `params`.
pub fn train_from(
    mut params: ModelParams,
    train_sessions: &[Session],
    val_sessions: &[Session],
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let mut windows = Vec::new();
    for (i, s) in train_sessions.iter().enumerate() {
        let starts = window_starts(s.len(), tc.window_ms, tc.stride_ms);
        if starts.is_empty() {
            warn!(
                "session `{}` ({} ms) is shorter than the window",
                s.name,
                s.len()
            );
        }
        windows.extend(starts.into_iter().map(|st| (i, st)));
    }
    if windows.is_empty() {
        return Err(Error::NoWindows {
            window_ms: tc.window_ms,
        });
    }
    if val_sessions.is_empty() {
        warn!("no validation sessions; the last epoch is kept");
    }
    info!("{} training windows", windows.len());

    let mut adam = Adam::new(tc.adam);
    let clock = Instant::now();
    let init = evaluate_sessions(&params, val_sessions)?;
    info!("epoch 0: val euclidean {:.3}", init.euclidean);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_euc = init.euclidean;
    let mut history = vec![EpochRecord {
        epoch: 0,
        loss: None,
        val: init,
        optimizer_steps: 0,
        skipped_steps: 0,
        seconds: clock.elapsed().as_secs_f64(),
    }];

    for epoch in 1..=tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            tc.seed.wrapping_mul(1_000_003) ^ tc.augment.seed.rotate_left(32) ^ epoch as u64,
        );
        let mut order = windows.clone();
        order.shuffle(&mut rng);
        if let Some(cap) = tc.max_windows_per_epoch {
            order.truncate(cap);
        }
        let mut sum = LossTerms::default();
        for batch in order.chunks(tc.batch_size) {
            let mut acc = params.zeros_like();
            for &(si, start) in batch {
                let session = &train_sessions[si];
                let mut plan = AugmentPlan::sample(&tc.augment, &mut rng);
                let mut start = start;
                if plan.dt != 0 {
                    let moved = start as i64 - plan.dt as i64;
                    if moved >= 0 && moved as usize + tc.window_ms <= session.len() {
                        start = moved as usize;
                        plan.dt = 0;
                    }
                }
                let (mut w, mut labels) = session.window(start, tc.window_ms);
                apply_plan(&mut w, &mut labels, &plan, &tc.augment, &mut rng);
                let (terms, g) =
                    window_gradient(&params, &w, &labels, tc.loss, tc.exclude_blinks_from_loss)?;
                sum.l_pos += terms.l_pos;
                sum.l_vel += terms.l_vel;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f32);
            if let Some(clip) = tc.grad_clip {
                let norm = global_norm(&acc);
                if norm > clip as f64 {
                    acc.scale((clip as f64 / norm) as f32);
                }
            }
            adam.step_model(&mut params, &acc);
        }
        let n = order.len() as f64;
        let terms = LossTerms {
            l_pos: sum.l_pos / n,
            l_vel: sum.l_vel / n,
        };
        let val = evaluate_sessions(&params, val_sessions)?;
        info!(
            "epoch {epoch}: loss {:.6} (pos {:.6}, vel {:.6}), val euclidean {:.3}, P10 {:.3}",
            terms.total(),
            terms.l_pos,
            terms.l_vel,
            val.euclidean,
            val.p(10.0).unwrap_or(0.0)
        );
        if val.euclidean < best_euc || val_sessions.is_empty() {
            best_euc = val.euclidean;
            best = params.clone();
            best_epoch = epoch;
        }
        history.push(EpochRecord {
            epoch,
            loss: Some(terms),
            val,
            optimizer_steps: adam.steps(),
            skipped_steps: adam.skipped(),
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

pub const HISTORY_HEADER: &str =
    "epoch,loss,l_pos,l_vel,val_euc,val_p10,val_p5,val_p3,val_p1,val_scored,optimizer_steps,skipped_steps,seconds";

/// Writes the history as CSV. Loss cells of epoch 0 are empty; an
/// unscored validation set prints `inf` as its distance.
pub fn write_history<W: Write>(mut out: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in history {
        let (loss, pos, vel) = match r.loss {
            Some(t) => (
                format!("{:.6}", t.total()),
                format!("{:.6}", t.l_pos),
                format!("{:.6}", t.l_vel),
            ),
            None => Default::default(),
        };
        let p = |t: f64| r.val.p(t).unwrap_or(0.0);
        writeln!(
            out,
            "{},{loss},{pos},{vel},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{},{:.1}",
            r.epoch,
            r.val.euclidean,
            p(10.0),
            p(5.0),
            p(3.0),
            p(1.0),
            r.val.frames_scored,
            r.optimizer_steps,
            r.skipped_steps,
            r.seconds
        )?;
    }
    Ok(())
}
