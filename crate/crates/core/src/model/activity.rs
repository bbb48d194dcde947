/// Running counters of input occupancy and spiking, collected during inference.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivityProbe {
    steps: u64,
    conv_nonzero: Vec<u64>,
    conv_total: Vec<u64>,
    feature_nonzero: u64,
    feature_total: u64,
    spikes: Vec<u64>,
    neurons: Vec<u64>,
}

/// Measured activity averaged over every step seen by a probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityStats {
    pub steps: u64,
    /// Fraction of non-zero inputs to each conv op, in network order
    /// (DW1, PW1, DW2, PW2, DW3, PW3; or conv1..conv3 without DSC).
    pub conv_input_occupancy: Vec<f64>,
    /// Fraction of non-zero flattened features entering the first LIF layer.
    pub lif_input_occupancy: f64,
    /// Mean spikes per neuron per step for each LIF layer (0 for a
    /// non-spiking readout).
    pub firing_rates: Vec<f64>,
}

fn nonzero(values: &[f32]) -> u64 {
    values.iter().filter(|&&v| v != 0.0).count() as u64
}

fn bump(counts: &mut Vec<u64>, totals: &mut Vec<u64>, slot: usize, hit: u64, total: u64) {
    if counts.len() <= slot {
        counts.resize(slot + 1, 0);
        totals.resize(slot + 1, 0);
    }
    counts[slot] += hit;
    totals[slot] += total;
}

impl ActivityProbe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn conv_input(&mut self, op: usize, values: &[f32]) {
        bump(
            &mut self.conv_nonzero,
            &mut self.conv_total,
            op,
            nonzero(values),
            values.len() as u64,
        );
    }

    /// Records an all-zero input to conv op `op` without scanning it.
    pub(crate) fn conv_zero_input(&mut self, op: usize, len: usize) {
        bump(
            &mut self.conv_nonzero,
            &mut self.conv_total,
            op,
            0,
            len as u64,
        );
    }

    pub(crate) fn features(&mut self, values: &[f32]) {
        self.feature_nonzero += nonzero(values);
        self.feature_total += values.len() as u64;
    }

    pub(crate) fn layer_output(&mut self, layer: usize, spikes: &[f32], spiking: bool) {
        let hit = if spiking { nonzero(spikes) } else { 0 };
        bump(
            &mut self.spikes,
            &mut self.neurons,
            layer,
            hit,
            spikes.len() as u64,
        );
    }

    pub(crate) fn end_step(&mut self) {
        self.steps += 1;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn stats(&self) -> Option<ActivityStats> {
        if self.steps == 0 {
            return None;
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Some(ActivityStats {
            steps: self.steps,
            conv_input_occupancy: self
                .conv_nonzero
                .iter()
                .zip(&self.conv_total)
                .map(|(&a, &b)| ratio(a, b))
                .collect(),
            lif_input_occupancy: ratio(self.feature_nonzero, self.feature_total),
            firing_rates: self
                .spikes
                .iter()
                .zip(&self.neurons)
                .map(|(&a, &b)| ratio(a, b))
                .collect(),
        })
    }
}
