//! Training-time augmentation of `(window, labels)` pairs.
//!
//! Spatial flips and shifts move events and labels together. A temporal flip
//! reverses frame order and swaps the polarity channels, since a brightness
//! increase played backwards is a decrease. Spatial shifts discard events that
//! leave the grid and zero-fill the exposed border; shifted labels are clamped
//! to the grid.

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::{BinnedWindow, CHANNELS, FRAME_LEN, GRID_AREA, GRID_HEIGHT, GRID_WIDTH};
use crate::labels::LabelTrack;

/// Augmentation knobs. Magnitudes are this crate's defaults, not published values.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_tflip: f64,
    /// Maximum |dx|, |dy| in grid pixels.
    pub max_spatial_shift: usize,
    /// Maximum |dt| in bins.
    pub max_temporal_shift: usize,
    pub cutout_count: usize,
    pub cutout_max_x: usize,
    pub cutout_max_y: usize,
    pub cutout_max_t: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            p_hflip: 0.5,
            p_vflip: 0.5,
            p_tflip: 0.5,
            max_spatial_shift: 8,
            max_temporal_shift: 50,
            cutout_count: 1,
            cutout_max_x: 20,
            cutout_max_y: 20,
            cutout_max_t: 50,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A configuration that leaves every window untouched.
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_hflip", self.p_hflip),
            ("p_vflip", self.p_vflip),
            ("p_tflip", self.p_tflip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        if self.cutout_count > 0 {
            if self.cutout_max_x == 0 || self.cutout_max_y == 0 || self.cutout_max_t == 0 {
                return Err(Error::InvalidArgument(
                    "cutout extents must be positive".into(),
                ));
            }
            if self.cutout_max_x > GRID_WIDTH || self.cutout_max_y > GRID_HEIGHT {
                return Err(Error::InvalidArgument(
                    "cutout extent exceeds the 80x60 grid".into(),
                ));
            }
        }
        if self.max_spatial_shift >= GRID_HEIGHT {
            return Err(Error::InvalidArgument(
                "spatial shift must be smaller than the grid".into(),
            ));
        }
        Ok(())
    }
}

/// The random choices for one window, drawn before the window is extracted so
/// that temporal shifts can move the window start inside the session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AugmentPlan {
    pub hflip: bool,
    pub vflip: bool,
    pub tflip: bool,
    pub dx: i32,
    pub dy: i32,
    pub dt: i32,
}

impl AugmentPlan {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        if !cfg.enabled {
            return AugmentPlan::default();
        }
        let s = cfg.max_spatial_shift as i32;
        let t = cfg.max_temporal_shift as i32;
        AugmentPlan {
            hflip: rng.gen_bool(cfg.p_hflip),
            vflip: rng.gen_bool(cfg.p_vflip),
            tflip: rng.gen_bool(cfg.p_tflip),
            dx: rng.gen_range(-s..=s),
            dy: rng.gen_range(-s..=s),
            dt: rng.gen_range(-t..=t),
        }
    }
}

/// Applies a sampled plan, then cutout.
pub fn apply_plan<R: Rng + ?Sized>(
    window: &mut BinnedWindow,
    labels: &mut LabelTrack,
    plan: &AugmentPlan,
    cfg: &AugmentConfig,
    rng: &mut R,
) {
    if !cfg.enabled {
        return;
    }
    if plan.hflip {
        hflip(window, labels);
    }
    if plan.vflip {
        vflip(window, labels);
    }
    if plan.tflip {
        tflip(window, labels);
    }
    shift(window, labels, plan.dx, plan.dy, plan.dt);
    event_cutout(window, cfg, rng);
}

pub fn hflip(window: &mut BinnedWindow, labels: &mut LabelTrack) {
    for row in window.counts_mut().chunks_exact_mut(GRID_WIDTH) {
        row.reverse();
    }
    for s in &mut labels.samples {
        s.x = (GRID_WIDTH - 1) as f64 - s.x;
    }
}

pub fn vflip(window: &mut BinnedWindow, labels: &mut LabelTrack) {
    for plane in window.counts_mut().chunks_exact_mut(GRID_AREA) {
        for y in 0..GRID_HEIGHT / 2 {
            let (top, bottom) = plane.split_at_mut((GRID_HEIGHT - 1 - y) * GRID_WIDTH);
            top[y * GRID_WIDTH..(y + 1) * GRID_WIDTH].swap_with_slice(&mut bottom[..GRID_WIDTH]);
        }
    }
    for s in &mut labels.samples {
        s.y = (GRID_HEIGHT - 1) as f64 - s.y;
    }
}

/// Reverses time and swaps the polarity channels.
pub fn tflip(window: &mut BinnedWindow, labels: &mut LabelTrack) {
    let t_len = window.len();
    for t in 0..t_len / 2 {
        let (head, tail) = window
            .counts_mut()
            .split_at_mut((t_len - 1 - t) * FRAME_LEN);
        head[t * FRAME_LEN..(t + 1) * FRAME_LEN].swap_with_slice(&mut tail[..FRAME_LEN]);
    }
    for frame in window.counts_mut().chunks_exact_mut(FRAME_LEN) {
        let (on, off) = frame.split_at_mut(GRID_AREA);
        on.swap_with_slice(off);
    }
    labels.samples.reverse();
}

/// Translates counts by `(dx, dy)` grid pixels and `dt` bins with zero fill.
/// Labels follow the spatial shift (clamped to the grid) and the temporal
/// shift (edge samples repeated into the exposed span).
pub fn shift(window: &mut BinnedWindow, labels: &mut LabelTrack, dx: i32, dy: i32, dt: i32) {
    if dx != 0 || dy != 0 {
        let mut plane = vec![0u32; GRID_AREA];
        for frame in window.counts_mut().chunks_exact_mut(GRID_AREA) {
            plane.fill(0);
            for y in 0..GRID_HEIGHT as i32 {
                let sy = y - dy;
                if !(0..GRID_HEIGHT as i32).contains(&sy) {
                    continue;
                }
                for x in 0..GRID_WIDTH as i32 {
                    let sx = x - dx;
                    if (0..GRID_WIDTH as i32).contains(&sx) {
                        plane[(y as usize) * GRID_WIDTH + x as usize] =
                            frame[(sy as usize) * GRID_WIDTH + sx as usize];
                    }
                }
            }
            frame.copy_from_slice(&plane);
        }
        for s in &mut labels.samples {
            s.x = (s.x + dx as f64).clamp(0.0, (GRID_WIDTH - 1) as f64);
            s.y = (s.y + dy as f64).clamp(0.0, (GRID_HEIGHT - 1) as f64);
        }
    }
    if dt != 0 {
        let t_len = window.len() as i32;
        let src = window.clone();
        let src_labels = labels.samples.clone();
        for t in 0..t_len {
            let st = t - dt;
            let frame = window.frame_mut(t as usize);
            if (0..t_len).contains(&st) {
                frame.copy_from_slice(src.frame(st as usize));
            } else {
                frame.fill(0);
            }
            labels.samples[t as usize] = src_labels[st.clamp(0, t_len - 1) as usize];
        }
    }
}

/// Zeroes `cfg.cutout_count` random axis-aligned `(t, y, x)` boxes in both
/// channels. Labels are untouched.
pub fn event_cutout<R: Rng + ?Sized>(window: &mut BinnedWindow, cfg: &AugmentConfig, rng: &mut R) {
    if window.is_empty() {
        return;
    }
    for _ in 0..cfg.cutout_count {
        let b = CutoutBox::sample(cfg, window.len(), rng);
        b.apply(window);
    }
}

/// A half-open `(t, y, x)` box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutoutBox {
    pub t: (usize, usize),
    pub y: (usize, usize),
    pub x: (usize, usize),
}

impl CutoutBox {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, t_len: usize, rng: &mut R) -> Self {
        let mut span = |max_extent: usize, len: usize| {
            let extent = rng.gen_range(1..=max_extent.clamp(1, len));
            let start = rng.gen_range(0..=len - extent);
            (start, start + extent)
        };
        let t = span(cfg.cutout_max_t, t_len);
        let y = span(cfg.cutout_max_y, GRID_HEIGHT);
        let x = span(cfg.cutout_max_x, GRID_WIDTH);
        CutoutBox { t, y, x }
    }

    pub fn contains(&self, t: usize, y: usize, x: usize) -> bool {
        (self.t.0..self.t.1).contains(&t)
            && (self.y.0..self.y.1).contains(&y)
            && (self.x.0..self.x.1).contains(&x)
    }

    pub fn apply(&self, window: &mut BinnedWindow) {
        for t in self.t.0..self.t.1.min(window.len()) {
            let frame = window.frame_mut(t);
            for c in 0..CHANNELS {
                for y in self.y.0..self.y.1 {
                    let row = c * GRID_AREA + y * GRID_WIDTH;
                    frame[row + self.x.0..row + self.x.1].fill(0);
                }
            }
        }
    }
}
