//! Spiking pupil tracking on event-camera streams.
//!
//! The crate covers the whole path from raw DVS events to projected hardware
//! cost:
//!
//! * [`events`], [`labels`], [`dataset`]: CSV ingestion, 1 ms binning onto an
//!   80x60 grid, 100 Hz to 1 kHz label upsampling and window slicing.
//! * [`augment`]: flips, shifts and event cutout for training windows.
//! * [`nn`]: the layer library (depthwise/pointwise conv, instance norm,
//!   pooling, LIF) with hand-written backward passes.
//! * [`model`]: the depthwise-separable conv + LIF network, parameterized by
//!   its output channel count `N`, and its weight file format.
//! * [`train`]: loss, Adam, the training loop and tracking metrics.
//! * [`stream`]: tick-driven 1 kHz inference with persistent membrane state.
//! * [`cost`]: operation counts, energy, power and latency projections.
//! * [`synth`]: a deterministic synthetic eye and DVS emulator.
//! * [`config`]: flat `key = value` run configuration.

pub mod augment;
pub mod config;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod events;
pub mod labels;
pub mod model;
pub mod nn;
pub mod spline;
pub mod stream;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
