//! Event ingestion and 1 ms binning.
//!
//! Raw events arrive in sensor coordinates (640x480). Binning downsamples by
//! 8 in both axes onto the 80x60 grid the network works at and keeps the two
//! polarities in separate count channels (channel 0 positive, channel 1
//! negative). Bins are half-open: bin `k` holds `k*bin <= t < (k+1)*bin`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SENSOR_WIDTH: u32 = 640;
pub const SENSOR_HEIGHT: u32 = 480;
/// Integer downsampling factor from sensor pixels to grid cells.
pub const DOWNSAMPLE: u32 = 8;
pub const GRID_WIDTH: usize = 80;
pub const GRID_HEIGHT: usize = 60;
pub const CHANNELS: usize = 2;
pub const GRID_AREA: usize = GRID_WIDTH * GRID_HEIGHT;
/// Number of values in one binned frame (2x60x80).
pub const FRAME_LEN: usize = CHANNELS * GRID_AREA;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    /// Count channel this polarity is binned into.
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn inverted(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// One DVS event in sensor coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }

    /// Flat index of this event's cell in a 2x60x80 frame.
    #[inline]
    pub fn frame_index(&self) -> usize {
        let gx = (self.x as u32 / DOWNSAMPLE) as usize;
        let gy = (self.y as u32 / DOWNSAMPLE) as usize;
        self.p.channel() * GRID_AREA + gy * GRID_WIDTH + gx
    }
}

/// Reads an event CSV (`t_us,x,y,p`, header optional) from disk.
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(BufReader::new(file))
}

/// Parses event CSV rows and returns them stably sorted by timestamp.
///
/// Polarity accepts `1`/`+1` for positive and `-1`/`0` for negative.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if events.is_empty() && is_header(line, "t_us") {
            continue;
        }
        events.push(parse_event_row(line, line_no)?);
    }
    events.sort_by_key(|e| e.t);
    Ok(events)
}

fn is_header(line: &str, first: &str) -> bool {
    line.split(',').next().map(str::trim) == Some(first)
}

fn parse_event_row(line: &str, line_no: usize) -> Result<Event> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 4 fields `t_us,x,y,p`, found {}", fields.len()),
        });
    }
    let num = |s: &str, what: &str| -> Result<i64> {
        s.parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid {what} `{s}`"),
        })
    };
    let t = num(fields[0], "timestamp")?;
    let x = num(fields[1], "x")?;
    let y = num(fields[2], "y")?;
    let p = num(fields[3], "polarity")?;
    if t < 0 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("negative timestamp {t}"),
        });
    }
    if !(0..SENSOR_WIDTH as i64).contains(&x) || !(0..SENSOR_HEIGHT as i64).contains(&y) {
        return Err(Error::OutOfBounds {
            line: line_no,
            x,
            y,
            width: SENSOR_WIDTH,
            height: SENSOR_HEIGHT,
        });
    }
    let p = match p {
        1 => Polarity::On,
        -1 | 0 => Polarity::Off,
        other => {
            return Err(Error::Parse {
                line: line_no,
                message: format!("polarity must be 1 or -1, got {other}"),
            })
        }
    };
    Ok(Event::new(t as u64, x as u16, y as u16, p))
}

/// Writes events as `t_us,x,y,p` CSV with a header row.
pub fn write_events<W: Write>(mut out: W, events: &[Event]) -> std::io::Result<()> {
    writeln!(out, "t_us,x,y,p")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.sign())?;
    }
    Ok(())
}

/// Event counts of one bin on the 80x60 grid, channel-major (`[c][y][x]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinnedFrame {
    pub bin_index: u64,
    counts: Vec<u32>,
}

impl BinnedFrame {
    pub fn empty(bin_index: u64) -> Self {
        BinnedFrame {
            bin_index,
            counts: vec![0; FRAME_LEN],
        }
    }

    pub fn count(&self, channel: usize, y: usize, x: usize) -> u32 {
        self.counts[channel * GRID_AREA + y * GRID_WIDTH + x]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn add(&mut self, event: &Event) {
        self.counts[event.frame_index()] += 1;
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.counts.iter().map(|&c| c as f32).collect()
    }
}

/// Output of [`bin_events`].
#[derive(Clone, Debug)]
pub struct Binned {
    pub frames: Vec<BinnedFrame>,
    /// Events at or beyond `duration_ms` that were not binned.
    pub dropped: usize,
}

/// Bins sorted events into `ceil(duration_ms / bin_ms)` frames starting at t = 0.
pub fn bin_events(events: &[Event], bin_ms: u64, duration_ms: u64) -> Result<Binned> {
    if bin_ms == 0 {
        return Err(Error::InvalidArgument("bin_ms must be positive".into()));
    }
    let n_bins = duration_ms.div_ceil(bin_ms);
    let bin_us = bin_ms * 1000;
    let limit_us = duration_ms * 1000;
    let mut frames: Vec<BinnedFrame> = (0..n_bins).map(BinnedFrame::empty).collect();
    let mut dropped = 0;
    for e in events {
        if e.t >= limit_us {
            dropped += 1;
            continue;
        }
        frames[(e.t / bin_us) as usize].add(e);
    }
    Ok(Binned { frames, dropped })
}

/// A binned session stored sparsely: only non-zero cells are kept per frame.
///
/// Frame `k` covers `[origin + k*bin, origin + (k+1)*bin)`.
#[derive(Clone, Debug, Default)]
pub struct BinnedSession {
    offsets: Vec<usize>,
    cells: Vec<(u16, u32)>,
    pub dropped: usize,
}

impl BinnedSession {
    /// Bins sorted events relative to `origin_us` into `n_bins` 1 ms frames.
    /// Events before the origin or after the last bin are counted as dropped.
    pub fn from_events(events: &[Event], origin_us: u64, n_bins: usize) -> Self {
        let mut offsets = Vec::with_capacity(n_bins + 1);
        let mut cells = Vec::new();
        let mut dropped = 0;
        let mut scratch = vec![0u32; FRAME_LEN];
        let mut touched: Vec<u16> = Vec::new();
        let end_us = origin_us + n_bins as u64 * 1000;
        let mut i = 0;
        while i < events.len() && events[i].t < origin_us {
            dropped += 1;
            i += 1;
        }
        for k in 0..n_bins {
            offsets.push(cells.len());
            let bin_end = origin_us + (k as u64 + 1) * 1000;
            while i < events.len() && events[i].t < bin_end {
                let idx = events[i].frame_index();
                if scratch[idx] == 0 {
                    touched.push(idx as u16);
                }
                scratch[idx] += 1;
                i += 1;
            }
            touched.sort_unstable();
            for &idx in &touched {
                cells.push((idx, scratch[idx as usize]));
                scratch[idx as usize] = 0;
            }
            touched.clear();
        }
        offsets.push(cells.len());
        dropped += events[i..].iter().filter(|e| e.t >= end_us).count();
        BinnedSession {
            offsets,
            cells,
            dropped,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Non-zero `(flat index, count)` cells of frame `k`, sorted by index.
    pub fn cells(&self, k: usize) -> &[(u16, u32)] {
        &self.cells[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn total_events(&self) -> u64 {
        self.cells.iter().map(|&(_, c)| c as u64).sum()
    }

    /// Writes frame `k` into a dense `f32` buffer of length [`FRAME_LEN`].
    pub fn write_dense_f32(&self, k: usize, out: &mut [f32]) {
        out.fill(0.0);
        for &(idx, c) in self.cells(k) {
            out[idx as usize] = c as f32;
        }
    }

    pub fn frame(&self, k: usize) -> BinnedFrame {
        let mut f = BinnedFrame::empty(k as u64);
        for &(idx, c) in self.cells(k) {
            f.counts[idx as usize] = c;
        }
        f
    }

    /// Dense window of `len` frames starting at frame `start`. Frames past the
    /// end of the session are zero.
    pub fn window(&self, start: usize, len: usize) -> BinnedWindow {
        let mut w = BinnedWindow::zeros(start as u64, len);
        for t in 0..len {
            let k = start + t;
            if k >= self.len() {
                break;
            }
            let frame = w.frame_mut(t);
            for &(idx, c) in self.cells(k) {
                frame[idx as usize] = c;
            }
        }
        w
    }
}

/// `T` consecutive binned frames as one dense `T x 2 x 60 x 80` tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinnedWindow {
    /// Start time of frame 0 in ms, relative to the session origin.
    pub start_ms: u64,
    len: usize,
    counts: Vec<u32>,
}

impl BinnedWindow {
    pub fn zeros(start_ms: u64, len: usize) -> Self {
        BinnedWindow {
            start_ms,
            len,
            counts: vec![0; len * FRAME_LEN],
        }
    }

    pub fn from_frames(start_ms: u64, frames: &[BinnedFrame]) -> Self {
        let mut counts = Vec::with_capacity(frames.len() * FRAME_LEN);
        for f in frames {
            counts.extend_from_slice(f.counts());
        }
        BinnedWindow {
            start_ms,
            len: frames.len(),
            counts,
        }
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frame(&self, t: usize) -> &[u32] {
        &self.counts[t * FRAME_LEN..(t + 1) * FRAME_LEN]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u32] {
        &mut self.counts[t * FRAME_LEN..(t + 1) * FRAME_LEN]
    }

    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> u32 {
        self.counts[t * FRAME_LEN + c * GRID_AREA + y * GRID_WIDTH + x]
    }

    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, value: u32) {
        self.counts[t * FRAME_LEN + c * GRID_AREA + y * GRID_WIDTH + x] = value;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Frame `t` converted to the network's `f32` input layout.
    pub fn frame_f32(&self, t: usize, out: &mut [f32]) {
        for (o, &c) in out.iter_mut().zip(self.frame(t)) {
            *o = c as f32;
        }
    }
}
