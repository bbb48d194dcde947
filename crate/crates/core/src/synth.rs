//! Deterministic synthetic eye and DVS emulator.
//!
//! The scene is a dark pupil disk on a bright iris field, with an eyelid
//! that sweeps down and back up during blinks. The pupil follows fixations
//! with Ornstein-Uhlenbeck jitter, minimum-jerk saccades and linear smooth
//! pursuit. Events are rendered by the usual per-pixel model: a pixel fires
//! whenever its log intensity moved by at least the contrast threshold since
//! its last event, once per threshold crossing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::dataset::Session;
use crate::error::{Error, Result};
use crate::events::{Event, Polarity, SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::labels::{LabelRow, LabelTrack};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub duration_ms: usize,
    /// Scene size in sensor pixels (the real sensor is 640x480).
    pub width: usize,
    pub height: usize,
    /// Pupil radius in sensor pixels.
    pub pupil_radius: f64,
    pub background_intensity: f64,
    pub pupil_intensity: f64,
    pub eyelid_intensity: f64,
    /// DVS contrast threshold in log-intensity units.
    pub contrast_threshold: f64,
    /// Sensor pixels per degree of eye rotation.
    pub px_per_deg: f64,
    pub fixation_min_ms: f64,
    pub fixation_max_ms: f64,
    pub saccade_min_deg: f64,
    pub saccade_max_deg: f64,
    /// Saccade duration = slope * amplitude(deg) + intercept (ms).
    pub saccade_slope_ms_per_deg: f64,
    pub saccade_intercept_ms: f64,
    /// Chance that a fixation ends in smooth pursuit instead of a saccade.
    pub pursuit_probability: f64,
    pub pursuit_speed_deg_s: f64,
    /// Stationary standard deviation of the fixation jitter, sensor pixels.
    pub jitter_px: f64,
    pub jitter_tau_ms: f64,
    /// Mean blinks per second (gaps between blinks are exponential).
    pub blink_rate_hz: f64,
    pub blink_min_ms: f64,
    pub blink_max_ms: f64,
    /// Render substeps per millisecond (5 gives 200 us timestamps).
    pub substeps: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            duration_ms: 10_000,
            width: SENSOR_WIDTH as usize,
            height: SENSOR_HEIGHT as usize,
            pupil_radius: 40.0,
            background_intensity: 0.6,
            pupil_intensity: 0.15,
            eyelid_intensity: 0.4,
            contrast_threshold: 0.25,
            px_per_deg: 8.0,
            fixation_min_ms: 150.0,
            fixation_max_ms: 500.0,
            saccade_min_deg: 2.0,
            saccade_max_deg: 15.0,
            saccade_slope_ms_per_deg: 2.2,
            saccade_intercept_ms: 21.0,
            pursuit_probability: 0.2,
            pursuit_speed_deg_s: 15.0,
            jitter_px: 1.5,
            jitter_tau_ms: 30.0,
            blink_rate_hz: 0.25,
            blink_min_ms: 100.0,
            blink_max_ms: 250.0,
            substeps: 5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.width == 0
            || self.height == 0
            || self.width > u16::MAX as usize
            || self.height > u16::MAX as usize
        {
            return bad("scene size must be positive and fit in 16 bits");
        }
        if !(self.pupil_radius > 0.0)
            || 2.0 * self.pupil_radius >= self.width.min(self.height) as f64
        {
            return bad("pupil radius must be positive and fit in the scene");
        }
        for v in [
            self.background_intensity,
            self.pupil_intensity,
            self.eyelid_intensity,
        ] {
            if !(v > 0.0) {
                return bad("intensities must be positive");
            }
        }
        if !(self.contrast_threshold > 0.0) {
            return bad("contrast threshold must be positive");
        }
        if !(self.px_per_deg > 0.0) {
            return bad("px_per_deg must be positive");
        }
        if !(self.fixation_min_ms > 0.0 && self.fixation_min_ms <= self.fixation_max_ms) {
            return bad("fixation range must be positive and ordered");
        }
        if !(self.saccade_min_deg >= 0.0 && self.saccade_min_deg <= self.saccade_max_deg) {
            return bad("saccade amplitude range must be non-negative and ordered");
        }
        if !(0.0..=1.0).contains(&self.pursuit_probability) {
            return bad("pursuit probability must be in [0, 1]");
        }
        if self.jitter_px < 0.0 || !(self.jitter_tau_ms > 0.0) {
            return bad("jitter must be non-negative with a positive time constant");
        }
        if self.blink_rate_hz < 0.0
            || !(self.blink_min_ms > 0.0 && self.blink_min_ms <= self.blink_max_ms)
        {
            return bad("blink rate must be non-negative and durations positive and ordered");
        }
        if self.substeps == 0 {
            return bad("substeps must be positive");
        }
        Ok(())
    }

    /// Long-run fraction of time spent blinking.
    pub fn expected_blink_fraction(&self) -> f64 {
        if self.blink_rate_hz == 0.0 {
            return 0.0;
        }
        let mean = 0.5 * (self.blink_min_ms + self.blink_max_ms);
        mean / (mean + 1000.0 / self.blink_rate_hz)
    }

    fn margin(&self) -> f64 {
        self.pupil_radius + 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyeSample {
    /// Pupil center in sensor pixels (continuous; pixel `i` spans `[i, i+1)`).
    pub x: f64,
    pub y: f64,
    /// Eyelid closure, 0 open to 1 closed.
    pub lid: f64,
    pub blink: bool,
}

/// Ground truth at 1 kHz; sample `k` is the scene at `t = k` ms.
#[derive(Clone, Debug, PartialEq)]
pub struct EyeTrack {
    pub samples: Vec<EyeSample>,
}

fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Generates the 1 kHz trajectory.
pub fn gen_trajectory(cfg: &SceneConfig) -> Result<EyeTrack> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.duration_ms;
    let m = cfg.margin();
    let (lo_x, hi_x) = (m, cfg.width as f64 - m);
    let (lo_y, hi_y) = (m, cfg.height as f64 - m);
    let clamp = |x: f64, y: f64| (x.clamp(lo_x, hi_x), y.clamp(lo_y, hi_y));

    // Gaze without jitter: fixation holds, saccades and pursuit move.
    let mut base = Vec::with_capacity(n);
    let (mut gx, mut gy) = (
        rng.gen_range(lo_x..=hi_x) * 0.5 + cfg.width as f64 * 0.25,
        rng.gen_range(lo_y..=hi_y) * 0.5 + cfg.height as f64 * 0.25,
    );
    (gx, gy) = clamp(gx, gy);
    while base.len() < n {
        let fix = rng
            .gen_range(cfg.fixation_min_ms..=cfg.fixation_max_ms)
            .round() as usize;
        for _ in 0..fix.max(1) {
            base.push((gx, gy));
        }
        let pursuit = rng.gen_bool(cfg.pursuit_probability);
        let amp_deg = rng.gen_range(cfg.saccade_min_deg..=cfg.saccade_max_deg);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (tx, ty) = clamp(
            gx + amp_deg * cfg.px_per_deg * angle.cos(),
            gy + amp_deg * cfg.px_per_deg * angle.sin(),
        );
        let dist_deg = ((tx - gx).hypot(ty - gy)) / cfg.px_per_deg;
        if dist_deg == 0.0 {
            continue;
        }
        let (dur, profile): (f64, fn(f64) -> f64) = if pursuit {
            (1000.0 * dist_deg / cfg.pursuit_speed_deg_s, |s| {
                s.clamp(0.0, 1.0)
            })
        } else {
            (
                cfg.saccade_slope_ms_per_deg * dist_deg + cfg.saccade_intercept_ms,
                min_jerk,
            )
        };
        let steps = dur.round().max(1.0) as usize;
        for i in 1..=steps {
            let s = profile(i as f64 / steps as f64);
            base.push((gx + (tx - gx) * s, gy + (ty - gy) * s));
        }
        (gx, gy) = (tx, ty);
    }
    base.truncate(n);

    // Blinks: exponential gaps, uniform durations, lid closing over the first
    // third and reopening over the last third.
    let mut lid = vec![0.0; n];
    let mut blink = vec![false; n];
    if cfg.blink_rate_hz > 0.0 {
        let gap = Exp::new(cfg.blink_rate_hz / 1000.0).expect("positive rate");
        let mut t = gap.sample(&mut rng);
        while (t as usize) < n {
            let d = rng.gen_range(cfg.blink_min_ms..=cfg.blink_max_ms);
            let start = t.round() as usize;
            let len = d.round() as usize;
            for i in 0..len {
                let k = start + i;
                if k >= n {
                    break;
                }
                let u = (i as f64 + 0.5) / len as f64;
                lid[k] = (3.0 * u.min(1.0 - u)).min(1.0);
                blink[k] = true;
            }
            t += d + gap.sample(&mut rng);
        }
    }

    // Fixation jitter, an Ornstein-Uhlenbeck process per axis.
    let a = (-1.0 / cfg.jitter_tau_ms).exp();
    let b = cfg.jitter_px * (1.0 - a * a).sqrt();
    let (mut jx, mut jy) = (0.0, 0.0);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        if cfg.jitter_px > 0.0 {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            jx = a * jx + b * nx;
            jy = a * jy + b * ny;
        }
        let (x, y) = clamp(base[k].0 + jx, base[k].1 + jy);
        samples.push(EyeSample {
            x,
            y,
            lid: lid[k],
            blink: blink[k],
        });
    }
    Ok(EyeTrack { samples })
}

/// Scene brightness of pixel `(px, py)` (sampled at its center) with the
/// pupil at `(cx, cy)` and the lid closed by `lid`.
pub fn scene_intensity(cfg: &SceneConfig, cx: f64, cy: f64, lid: f64, px: usize, py: usize) -> f64 {
    let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
    let d = (fx - cx).hypot(fy - cy);
    let cover = (cfg.pupil_radius + 0.5 - d).clamp(0.0, 1.0);
    let eye = cfg.background_intensity * (1.0 - cover) + cfg.pupil_intensity * cover;
    let edge = lid_edge(cfg, lid);
    let shut = (edge - fy + 0.5).clamp(0.0, 1.0);
    eye * (1.0 - shut) + cfg.eyelid_intensity * shut
}

/// Row (continuous) reached by the lid; past the bottom when fully closed.
fn lid_edge(cfg: &SceneConfig, lid: f64) -> f64 {
    lid * (cfg.height as f64 + 2.0)
}

/// Per-pixel DVS state: the log intensity at each pixel's last event and the
/// current intensity.
struct Retina {
    width: usize,
    reference: Vec<f64>,
    current: Vec<f64>,
}

impl Retina {
    fn new(cfg: &SceneConfig, s: &EyeSample) -> Self {
        let mut current = Vec::with_capacity(cfg.width * cfg.height);
        for py in 0..cfg.height {
            for px in 0..cfg.width {
                current.push(scene_intensity(cfg, s.x, s.y, s.lid, px, py));
            }
        }
        Retina {
            width: cfg.width,
            reference: current.iter().map(|v| v.ln()).collect(),
            current,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_region(
        &mut self,
        cfg: &SceneConfig,
        pos: (f64, f64, f64),
        x0: usize,
        x1: usize,
        y0: usize,
        y1: usize,
        t: u64,
        out: &mut Vec<Event>,
    ) {
        let c = cfg.contrast_threshold;
        for py in y0..y1 {
            for px in x0..x1 {
                let i = py * self.width + px;
                let v = scene_intensity(cfg, pos.0, pos.1, pos.2, px, py);
                if v == self.current[i] {
                    continue;
                }
                self.current[i] = v;
                let diff = v.ln() - self.reference[i];
                let n = (diff.abs() / c).floor();
                if n < 1.0 {
                    continue;
                }
                let p = if diff > 0.0 {
                    Polarity::On
                } else {
                    Polarity::Off
                };
                self.reference[i] += diff.signum() * n * c;
                for _ in 0..n as usize {
                    out.push(Event::new(t, px as u16, py as u16, p));
                }
            }
        }
    }
}

/// Renders a track into a time-sorted event stream. The scene at `t = 0`
/// sets every pixel's reference silently; between millisecond samples the
/// pupil and lid move linearly over `cfg.substeps` substeps.
pub fn render_events(track: &EyeTrack, cfg: &SceneConfig) -> Result<Vec<Event>> {
    cfg.validate()?;
    let Some(first) = track.samples.first() else {
        return Ok(Vec::new());
    };
    let mut retina = Retina::new(cfg, first);
    let mut events = Vec::new();
    let sub = cfg.substeps;
    let step_us = 1000 / sub as u64;
    let reach = cfg.pupil_radius + 2.0;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut prev = (first.x, first.y, first.lid);
    for k in 0..track.samples.len().saturating_sub(1) {
        let (a, b) = (&track.samples[k], &track.samples[k + 1]);
        for s in 1..=sub {
            let f = s as f64 / sub as f64;
            let pos = (
                a.x + (b.x - a.x) * f,
                a.y + (b.y - a.y) * f,
                a.lid + (b.lid - a.lid) * f,
            );
            let t = if s == sub {
                (k as u64 + 1) * 1000
            } else {
                k as u64 * 1000 + s as u64 * step_us
            };
            let clip = |v: f64, hi: f64| v.clamp(0.0, hi) as usize;
            let x0 = clip(prev.0.min(pos.0) - reach, w);
            let x1 = clip(prev.0.max(pos.0) + reach + 1.0, w);
            let y0 = clip(prev.1.min(pos.1) - reach, h);
            let y1 = clip(prev.1.max(pos.1) + reach + 1.0, h);
            if (x0, y0) != (x1, y1) {
                retina.update_region(cfg, pos, x0, x1, y0, y1, t, &mut events);
            }
            if prev.2 != pos.2 {
                let (e0, e1) = (lid_edge(cfg, prev.2), lid_edge(cfg, pos.2));
                let ly0 = clip(e0.min(e1) - 2.0, h);
                let ly1 = clip(e0.max(e1) + 2.0, h);
                retina.update_region(cfg, pos, 0, cfg.width, ly0, ly1, t, &mut events);
            }
            prev = pos;
        }
    }
    Ok(events)
}

#[derive(Clone, Debug)]
pub struct SyntheticSession {
    pub track: EyeTrack,
    pub events: Vec<Event>,
    /// Ground truth subsampled to 100 Hz, in sensor pixels.
    pub labels: Vec<LabelRow>,
}

impl SyntheticSession {
    /// Builds a training session through the same path as recorded data:
    /// 100 Hz labels scaled by 8 and spline-upsampled to 1 kHz.
    pub fn to_session(&self, name: impl Into<String>) -> Result<Session> {
        let track = LabelTrack::from_rows(&self.labels, 8.0)?;
        Session::from_raw(name, &self.events, &track)
    }
}

pub const EXPORT_STRIDE_MS: usize = 10;

pub fn generate(cfg: &SceneConfig) -> Result<SyntheticSession> {
    let track = gen_trajectory(cfg)?;
    let events = render_events(&track, cfg)?;
    let labels = track
        .samples
        .iter()
        .enumerate()
        .step_by(EXPORT_STRIDE_MS)
        .map(|(k, s)| LabelRow {
            t_us: k as u64 * 1000,
            x: s.x,
            y: s.y,
            blink: s.blink,
            line: 0,
        })
        .collect();
    Ok(SyntheticSession {
        track,
        events,
        labels,
    })
}

/// `count` sessions with seeds derived from `cfg.seed`.
/// Scene of the `index`-th session of a multi-session run seeded by `cfg.seed`.
pub fn session_config(cfg: &SceneConfig, index: usize) -> SceneConfig {
    SceneConfig {
        seed: cfg
            .seed
            .wrapping_mul(0x9E37_79B9)
            .wrapping_add(index as u64),
        ..cfg.clone()
    }
}

pub fn generate_sessions(cfg: &SceneConfig, count: usize) -> Result<Vec<Session>> {
    (0..count)
        .map(|i| generate(&session_config(cfg, i))?.to_session(format!("synth-{}-{i}", cfg.seed)))
        .collect()
}
