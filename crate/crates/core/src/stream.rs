//! Tick-driven 1 kHz inference with persistent membrane state.
//!
//! Events are accumulated into the open 1 ms bin; [`StreamEngine::tick`]
//! runs one network step on that bin, clears it and opens the next one. The
//! membrane state is carried across ticks and only [`StreamEngine::reset`]
//! clears it.

use crate::error::{Error, Result};
use crate::events::{Event, FRAME_LEN};
use crate::model::{to_grid_pixels, ModelParams, NetState};

pub use crate::model::{ActivityProbe, ActivityStats};

#[derive(Clone, Debug)]
pub struct StreamEngine {
    params: ModelParams,
    state: NetState,
    frame: Vec<f32>,
    origin_us: u64,
    clock: u64,
    stale: u64,
    probe: ActivityProbe,
}

impl StreamEngine {
    /// Engine whose bin 0 starts at `t = 0`.
    pub fn new(params: ModelParams) -> Self {
        Self::with_origin(params, 0)
    }

    /// Engine whose bin 0 starts at `origin_us`.
    pub fn with_origin(params: ModelParams, origin_us: u64) -> Self {
        let state = params.initial_state();
        StreamEngine {
            params,
            state,
            frame: vec![0.0; FRAME_LEN],
            origin_us,
            clock: 0,
            stale: 0,
            probe: ActivityProbe::new(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state(&self) -> &NetState {
        &self.state
    }

    /// Index of the open bin (number of ticks so far).
    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Events dropped because their bin had already been closed.
    pub fn stale_events(&self) -> u64 {
        self.stale
    }

    /// Start of the open bin in microseconds.
    pub fn open_bin_start_us(&self) -> u64 {
        self.origin_us + self.clock * 1000
    }

    /// Adds one event to the open bin. Events from closed bins are dropped
    /// and counted; events from a future bin are an error (tick first).
    pub fn push_event(&mut self, e: &Event) -> Result<()> {
        let start = self.open_bin_start_us();
        if e.t < start {
            self.stale += 1;
            return Ok(());
        }
        if e.t >= start + 1000 {
            return Err(Error::FutureEvent {
                t_us: e.t,
                open_bin: self.clock,
            });
        }
        self.frame[e.frame_index()] += 1.0;
        Ok(())
    }

    pub fn push_events(&mut self, events: &[Event]) -> Result<()> {
        events.iter().try_for_each(|e| self.push_event(e))
    }

    /// Counts accumulated in the open bin.
    pub fn pending_frame(&self) -> &[f32] {
        &self.frame
    }

    /// Steps the network on the open bin and returns the prediction in grid
    /// pixels.
    pub fn tick(&mut self) -> Result<[f32; 2]> {
        let pred = self
            .params
            .forward_step(&mut self.state, &self.frame, Some(&mut self.probe))?;
        self.frame.fill(0.0);
        self.clock += 1;
        Ok(to_grid_pixels(pred))
    }

    /// Feeds a time-sorted event list, ticking through `n_ticks` bins.
    /// Returns one prediction per tick.
    pub fn run(&mut self, events: &[Event], n_ticks: usize) -> Result<Vec<[f32; 2]>> {
        let mut out = Vec::with_capacity(n_ticks);
        let mut i = 0;
        for _ in 0..n_ticks {
            let end = self.open_bin_start_us() + 1000;
            while i < events.len() && events[i].t < end {
                self.push_event(&events[i])?;
                i += 1;
            }
            out.push(self.tick()?);
        }
        Ok(out)
    }

    /// Restores the initial membrane state and clears the open bin. The clock
    /// and activity counters are kept.
    pub fn reset(&mut self) {
        self.state = self.params.initial_state();
        self.frame.fill(0.0);
    }

    pub fn reset_activity(&mut self) {
        self.probe.reset();
    }

    /// Activity averaged since start or the last [`StreamEngine::reset_activity`].
    pub fn snapshot_activity(&self) -> Result<ActivityStats> {
        self.probe.stats().ok_or(Error::NoSteps)
    }
}
