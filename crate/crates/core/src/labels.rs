//! Pupil-center label tracks and their 100 Hz to 1 kHz upsampling.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::events::{DOWNSAMPLE, GRID_HEIGHT, GRID_WIDTH};
use crate::spline::NaturalCubicSpline;

/// Minimum number of source samples for cubic interpolation.
pub const MIN_SPLINE_SAMPLES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelSample {
    /// Pupil center in grid pixels (80x60 space).
    pub x: f64,
    pub y: f64,
    pub blink: bool,
}

/// A uniformly sampled pupil trajectory in grid coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTrack {
    pub rate_hz: f64,
    /// Timestamp of sample 0 in microseconds.
    pub start_us: u64,
    pub samples: Vec<LabelSample>,
}

impl LabelTrack {
    pub fn new(rate_hz: f64, start_us: u64, samples: Vec<LabelSample>) -> Self {
        LabelTrack {
            rate_hz,
            start_us,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_us(&self) -> f64 {
        1e6 / self.rate_hz
    }

    /// Timestamp of sample `i` in microseconds.
    pub fn time_us(&self, i: usize) -> f64 {
        self.start_us as f64 + i as f64 * self.period_us()
    }

    /// Builds a track from sensor-space CSV rows, dividing coordinates by
    /// `scale` and clamping onto the 80x60 grid.
    pub fn from_rows(rows: &[LabelRow], scale: f64) -> Result<Self> {
        if rows.is_empty() {
            return Ok(LabelTrack::new(100.0, 0, Vec::new()));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidArgument(
                "label scale must be positive".into(),
            ));
        }
        let rate_hz = if rows.len() >= 2 {
            let period = rows[1].t_us as f64 - rows[0].t_us as f64;
            if period <= 0.0 {
                return Err(Error::Parse {
                    line: rows[1].line,
                    message: "label timestamps must be strictly increasing".into(),
                });
            }
            for pair in rows.windows(2) {
                let dt = pair[1].t_us as f64 - pair[0].t_us as f64;
                if (dt - period).abs() > 0.01 * period {
                    return Err(Error::Parse {
                        line: pair[1].line,
                        message: format!(
                            "non-uniform label spacing: {dt} us where {period} us expected"
                        ),
                    });
                }
            }
            1e6 / period
        } else {
            100.0
        };
        let samples = rows
            .iter()
            .map(|r| LabelSample {
                x: (r.x / scale).clamp(0.0, (GRID_WIDTH - 1) as f64),
                y: (r.y / scale).clamp(0.0, (GRID_HEIGHT - 1) as f64),
                blink: r.blink,
            })
            .collect();
        Ok(LabelTrack::new(rate_hz, rows[0].t_us, samples))
    }

    /// Sample `(x, y)` normalized to the unit square, the regression target.
    pub fn normalized(&self, i: usize) -> [f32; 2] {
        let s = &self.samples[i];
        [
            (s.x / GRID_WIDTH as f64) as f32,
            (s.y / GRID_HEIGHT as f64) as f32,
        ]
    }

    pub fn slice(&self, start: usize, len: usize) -> LabelTrack {
        LabelTrack {
            rate_hz: self.rate_hz,
            start_us: (self.time_us(start)).round() as u64,
            samples: self.samples[start..start + len].to_vec(),
        }
    }
}

/// One raw row of a label CSV (`t_us,x,y,blink`, sensor pixels).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelRow {
    pub t_us: u64,
    pub x: f64,
    pub y: f64,
    pub blink: bool,
    /// Source line, for error reporting.
    pub line: usize,
}

pub fn load_label_rows(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_label_rows(BufReader::new(file))
}

/// Loads a label CSV and maps it into grid space with the given scale
/// (8 for labels recorded in 640x480 sensor pixels).
pub fn load_labels(path: impl AsRef<Path>, scale: f64) -> Result<LabelTrack> {
    LabelTrack::from_rows(&load_label_rows(path)?, scale)
}

pub fn read_label_rows<R: BufRead>(reader: R) -> Result<Vec<LabelRow>> {
    let mut rows = Vec::new();
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
        if rows.is_empty() && line.split(',').next().map(str::trim) == Some("t_us") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields `t_us,x,y,blink`, found {}", fields.len()),
            });
        }
        let bad = |what: &str, s: &str| Error::Parse {
            line: line_no,
            message: format!("invalid {what} `{s}`"),
        };
        let t_us = fields[0]
            .parse::<u64>()
            .map_err(|_| bad("timestamp", fields[0]))?;
        let x = fields[1].parse::<f64>().map_err(|_| bad("x", fields[1]))?;
        let y = fields[2].parse::<f64>().map_err(|_| bad("y", fields[2]))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(bad("coordinate", line));
        }
        let blink = match fields[3] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(bad("blink flag", other)),
        };
        rows.push(LabelRow {
            t_us,
            x,
            y,
            blink,
            line: line_no,
        });
    }
    Ok(rows)
}

/// Writes label rows as `t_us,x,y,blink` CSV with a header.
pub fn write_label_rows<W: Write>(mut out: W, rows: &[LabelRow]) -> std::io::Result<()> {
    writeln!(out, "t_us,x,y,blink")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.3},{:.3},{}",
            r.t_us,
            r.x,
            r.y,
            u8::from(r.blink)
        )?;
    }
    Ok(())
}

/// Resamples a track to `target_rate_hz` with a natural cubic spline per
/// coordinate. Output samples cover `[start, last source sample]`; blink
/// flags come from the nearest source sample.
pub fn interpolate_labels(track: &LabelTrack, target_rate_hz: f64) -> Result<LabelTrack> {
    let n = track.len();
    if n < MIN_SPLINE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SPLINE_SAMPLES,
            got: n,
        });
    }
    if !(target_rate_hz > 0.0) {
        return Err(Error::InvalidArgument(
            "target rate must be positive".into(),
        ));
    }
    // Knots in source-sample units keep the system well conditioned.
    let knots: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let xs: Vec<f64> = track.samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = track.samples.iter().map(|s| s.y).collect();
    let sx = NaturalCubicSpline::fit(&knots, &xs)?;
    let sy = NaturalCubicSpline::fit(&knots, &ys)?;

    let ratio = track.rate_hz / target_rate_hz;
    let last = (n - 1) as f64;
    let count = (last / ratio + 1e-9).floor() as usize + 1;
    let samples = (0..count)
        .map(|k| {
            let u = k as f64 * ratio;
            let nearest = (u.round() as usize).min(n - 1);
            LabelSample {
                x: sx.eval(u),
                y: sy.eval(u),
                blink: track.samples[nearest].blink,
            }
        })
        .collect();
    Ok(LabelTrack::new(target_rate_hz, track.start_us, samples))
}

/// Converts a sensor-space sample back into a CSV row (used by generators).
pub fn grid_to_row(t_us: u64, sample: &LabelSample) -> LabelRow {
    LabelRow {
        t_us,
        x: sample.x * DOWNSAMPLE as f64,
        y: sample.y * DOWNSAMPLE as f64,
        blink: sample.blink,
        line: 0,
    }
}
