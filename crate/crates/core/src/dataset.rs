//! Sessions: binned events paired with 1 kHz labels, and window slicing.

use log::warn;

use crate::error::{Error, Result};
use crate::events::{BinnedSession, BinnedWindow, Event};
use crate::labels::{interpolate_labels, LabelSample, LabelTrack};

pub const LABEL_RATE_HZ: f64 = 1000.0;

/// One recording: frame `k` covers `[start + k ms, start + (k+1) ms)` and is
/// paired with label sample `k`.
#[derive(Clone, Debug)]
pub struct Session {
    pub name: String,
    pub frames: BinnedSession,
    pub labels: LabelTrack,
}

impl Session {
    /// Builds a session from events and a 1 kHz label track. The label track
    /// defines the time origin and length.
    pub fn new(name: impl Into<String>, events: &[Event], labels: LabelTrack) -> Result<Self> {
        if (labels.rate_hz - LABEL_RATE_HZ).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "session labels must be at 1 kHz, got {} Hz",
                labels.rate_hz
            )));
        }
        let mut labels = labels;
        for s in &mut labels.samples {
            s.x = s.x.clamp(0.0, (crate::events::GRID_WIDTH - 1) as f64);
            s.y = s.y.clamp(0.0, (crate::events::GRID_HEIGHT - 1) as f64);
        }
        let frames = BinnedSession::from_events(events, labels.start_us, labels.len());
        Ok(Session {
            name: name.into(),
            frames,
            labels,
        })
    }

    /// Like [`Session::new`] but accepts labels at any rate, upsampling to 1 kHz.
    pub fn from_raw(
        name: impl Into<String>,
        events: &[Event],
        labels: &LabelTrack,
    ) -> Result<Self> {
        if (labels.rate_hz - LABEL_RATE_HZ).abs() < 1e-9 {
            return Session::new(name, events, labels.clone());
        }
        Session::new(name, events, interpolate_labels(labels, LABEL_RATE_HZ)?)
    }

    /// Length in 1 ms frames.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self, start: usize, len: usize) -> (BinnedWindow, LabelTrack) {
        (
            self.frames.window(start, len),
            self.labels.slice(start, len),
        )
    }

    pub fn blink_flags(&self) -> Vec<bool> {
        self.labels.samples.iter().map(|s| s.blink).collect()
    }

    pub fn label_points(&self) -> &[LabelSample] {
        &self.labels.samples
    }
}

/// Start offsets of every full window inside a session of `len` frames.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if window == 0 || stride == 0 || len < window {
        return Vec::new();
    }
    (0..=(len - window) / stride).map(|i| i * stride).collect()
}

/// Slices one session into `(window, labels)` pairs. Windows never extend past
/// the session; a session shorter than the window yields nothing.
pub fn session_to_tensors(
    events: &[Event],
    labels: &LabelTrack,
    window_ms: usize,
    stride_ms: usize,
) -> Result<Vec<(BinnedWindow, LabelTrack)>> {
    if window_ms == 0 || stride_ms == 0 {
        return Err(Error::InvalidArgument(
            "window and stride must be positive".into(),
        ));
    }
    let session = Session::new("session", events, labels.clone())?;
    let starts = window_starts(session.len(), window_ms, stride_ms);
    if starts.is_empty() {
        warn!(
            "session of {} ms is shorter than the {} ms window; no windows produced",
            session.len(),
            window_ms
        );
    }
    Ok(starts
        .into_iter()
        .map(|s| session.window(s, window_ms))
        .collect())
}
