//! Operation counts, energy, power and latency projections.
//!
//! Counting conventions:
//!
//! * conv layers: one MAC per output pixel per kernel tap per input channel
//!   that feeds it (same padding, so output size = input size);
//! * dense LIF layers: `inputs x outputs` MACs, one bias add per neuron, a
//!   state update of two ops (decay multiply, integrate add) per neuron and a
//!   threshold comparison per spiking neuron;
//! * instance norm, ReLU and pooling are not counted.
//!
//! FLOPs are reported twice: with a MAC as two operations
//! (`2 * macs + adds + state_updates`) and as one.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{spatial_trace, ActivityStats, ConvWeights, ModelConfig, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Depthwise,
    Pointwise,
    Conv,
    Lif,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerOps {
    pub name: String,
    pub kind: LayerKind,
    /// Fractional once scaled by activity.
    pub macs: f64,
    pub adds: f64,
    pub comparisons: f64,
    pub state_updates: f64,
    /// Neurons whose state is updated every step (LIF layers only).
    pub neurons: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpCount {
    pub layers: Vec<LayerOps>,
    /// `"dense"` or `"sparse"`.
    pub convention: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpTotals {
    pub macs: f64,
    pub adds: f64,
    pub comparisons: f64,
    pub state_updates: f64,
    pub neurons: f64,
}

impl OpCount {
    pub fn totals(&self) -> OpTotals {
        let mut t = OpTotals::default();
        for l in &self.layers {
            t.macs += l.macs;
            t.adds += l.adds;
            t.comparisons += l.comparisons;
            t.state_updates += l.state_updates;
            t.neurons += l.neurons;
        }
        t
    }

    /// `2 * MACs + adds + state updates`.
    pub fn flops_mac2(&self) -> f64 {
        let t = self.totals();
        2.0 * t.macs + t.adds + t.state_updates
    }

    /// `MACs + adds + state updates`.
    pub fn flops_mac1(&self) -> f64 {
        let t = self.totals();
        t.macs + t.adds + t.state_updates
    }
}

/// Dense per-step operation counts of the architecture in `config`.
pub fn count_dense_ops(config: &ModelConfig) -> Result<OpCount> {
    let params = ModelParams::zeros(config)?;
    let dims = spatial_trace();
    let mut layers = Vec::new();
    for (b, block) in params.blocks.iter().enumerate() {
        let (h, w) = dims[b];
        let pixels = (h * w) as f64;
        let (cin, cout, kk) = (
            block.in_channels as f64,
            block.out_channels as f64,
            (block.kernel * block.kernel) as f64,
        );
        let conv = |name: String, kind, macs| LayerOps {
            name,
            kind,
            macs,
            adds: 0.0,
            comparisons: 0.0,
            state_updates: 0.0,
            neurons: 0.0,
        };
        match block.weights {
            ConvWeights::Separable { .. } => {
                layers.push(conv(
                    format!("dw{}", b + 1),
                    LayerKind::Depthwise,
                    cin * kk * pixels,
                ));
                layers.push(conv(
                    format!("pw{}", b + 1),
                    LayerKind::Pointwise,
                    cin * cout * pixels,
                ));
            }
            ConvWeights::Standard { .. } => {
                layers.push(conv(
                    format!("conv{}", b + 1),
                    LayerKind::Conv,
                    cin * cout * kk * pixels,
                ));
            }
        }
    }
    for (i, l) in params.lif.iter().enumerate() {
        let out = l.outputs as f64;
        layers.push(LayerOps {
            name: format!("lif{}", i + 1),
            kind: LayerKind::Lif,
            macs: (l.inputs * l.outputs) as f64,
            adds: out,
            comparisons: if l.spiking { out } else { 0.0 },
            state_updates: 2.0 * out,
            neurons: out,
        });
    }
    Ok(OpCount {
        layers,
        convention: "dense".into(),
    })
}

/// Scales synaptic work by measured activity: conv MACs by the occupancy of
/// their input, LIF1 MACs by the occupancy of the flattened features, and
/// each later LIF layer by the firing rate of the layer feeding it. Adds,
/// comparisons and state updates are not scaled.
pub fn count_sparse_ops(dense: &OpCount, stats: &ActivityStats) -> Result<OpCount> {
    let convs = dense
        .layers
        .iter()
        .filter(|l| l.kind != LayerKind::Lif)
        .count();
    if stats.conv_input_occupancy.len() != convs || stats.firing_rates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "activity has {} conv occupancies and {} firing rates; the model has {convs} conv ops",
            stats.conv_input_occupancy.len(),
            stats.firing_rates.len()
        )));
    }
    let mut layers = dense.layers.clone();
    let mut conv_i = 0;
    let mut lif_i = 0;
    for l in &mut layers {
        let factor = if l.kind == LayerKind::Lif {
            let f = if lif_i == 0 {
                stats.lif_input_occupancy
            } else {
                stats.firing_rates[lif_i - 1]
            };
            lif_i += 1;
            f
        } else {
            let f = stats.conv_input_occupancy[conv_i];
            conv_i += 1;
            f
        };
        l.macs *= factor.clamp(0.0, 1.0);
    }
    Ok(OpCount {
        layers,
        convention: "sparse".into(),
    })
}

/// Energy coefficients and the policy that maps operations onto arithmetic
/// operations and memory loads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyModel {
    pub e_arith_pj: f64,
    pub e_mem_pj: f64,
    /// Arithmetic operations charged per MAC.
    pub arith_per_mac: f64,
    /// Loads charged per synaptic operation (weight fetch).
    pub loads_per_synop: f64,
    /// Loads charged per neuron state update.
    pub loads_per_neuron_update: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_arith_pj: 1.4,
            e_mem_pj: 3.7,
            arith_per_mac: 1.0,
            loads_per_synop: 1.0,
            loads_per_neuron_update: 1.0,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_arith_pj > 0.0 && self.e_mem_pj > 0.0) {
            return Err(Error::InvalidArgument(
                "energy coefficients must be positive".into(),
            ));
        }
        if self.arith_per_mac < 0.0
            || self.loads_per_synop < 0.0
            || self.loads_per_neuron_update < 0.0
        {
            return Err(Error::InvalidArgument(
                "load policy factors must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn arith_ops(&self, ops: &OpCount) -> f64 {
        let t = ops.totals();
        self.arith_per_mac * t.macs + t.adds + t.comparisons + t.state_updates
    }

    pub fn loads(&self, ops: &OpCount) -> f64 {
        let t = ops.totals();
        self.loads_per_synop * t.macs + self.loads_per_neuron_update * t.neurons
    }

    pub fn assumptions(&self) -> Vec<String> {
        vec![
            format!(
                "{} pJ per arithmetic operation, {} pJ per data load",
                self.e_arith_pj, self.e_mem_pj
            ),
            format!(
                "arithmetic ops = {} per MAC + adds + comparisons + state updates",
                self.arith_per_mac
            ),
            format!(
                "loads = {} per synaptic op (weight fetch) + {} per neuron state update",
                self.loads_per_synop, self.loads_per_neuron_update
            ),
        ]
    }
}

/// `E = e_arith * N_arith + e_mem * N_load` in microjoules.
pub fn energy_uj(n_arith: f64, n_load: f64, model: &EnergyModel) -> f64 {
    (model.e_arith_pj * n_arith + model.e_mem_pj * n_load) * 1e-6
}

/// `(energy per inference in uJ, power in mW)` at `frequency_hz` inferences/s.
pub fn project_power(ops: &OpCount, model: &EnergyModel, frequency_hz: f64) -> (f64, f64) {
    let e = energy_uj(model.arith_ops(ops), model.loads(ops), model);
    (e, e * frequency_hz * 1e-3)
}

/// Pipelined latency: each spiking stage adds one time step.
pub fn project_latency(spiking_stages: usize, frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::InvalidArgument("frequency must be positive".into()));
    }
    Ok(spiking_stages as f64 * 1000.0 / frequency_hz)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub config: ModelConfig,
    pub params: usize,
    pub dense: OpCount,
    pub sparse: Option<OpCount>,
    pub energy: EnergyModel,
    pub frequency_hz: f64,
    /// Energy and power of the sparse counts if present, else the dense ones.
    pub energy_uj: f64,
    pub power_mw: f64,
    pub latency_ms: f64,
    pub assumptions: Vec<String>,
}

/// Builds the full report. Without activity the power projection uses dense
/// counts, which is an upper bound.
pub fn cost_report(
    config: &ModelConfig,
    stats: Option<&ActivityStats>,
    energy: &EnergyModel,
    frequency_hz: f64,
) -> Result<CostReport> {
    energy.validate()?;
    let params = ModelParams::zeros(config)?;
    let dense = count_dense_ops(config)?;
    let sparse = stats.map(|s| count_sparse_ops(&dense, s)).transpose()?;
    let (energy_uj, power_mw) =
        project_power(sparse.as_ref().unwrap_or(&dense), energy, frequency_hz);
    let stages = params.lif.len();
    let latency_ms = project_latency(stages, frequency_hz)?;
    let mut assumptions = vec![
        "conv: one MAC per output pixel per tap per input channel; IN/ReLU/pool not counted".to_string(),
        "LIF: in*out MACs, 1 bias add, 2-op state update per neuron, 1 comparison per spiking neuron".to_string(),
        "FLOPs reported with MAC = 2 ops and MAC = 1 op".to_string(),
    ];
    assumptions.extend(energy.assumptions());
    match stats {
        Some(s) => assumptions.push(format!(
            "sparse: conv MACs x input occupancy, LIF MACs x presynaptic rate; measured over {} steps",
            s.steps
        )),
        None => assumptions.push("no activity supplied: power uses dense counts (upper bound)".into()),
    }
    assumptions.push(format!(
        "latency: {stages} pipelined spiking stages, one step each"
    ));
    Ok(CostReport {
        config: config.clone(),
        params: params.count_params(),
        dense,
        sparse,
        energy: *energy,
        frequency_hz,
        energy_uj,
        power_mw,
        latency_ms,
        assumptions,
    })
}

impl CostReport {
    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model N={} use_dsc={} params={}",
            self.config.n, self.config.use_dsc, self.params
        );
        let _ = writeln!(
            s,
            "{:<6} {:>14} {:>14} {:>8} {:>8} {:>8}",
            "layer", "dense_macs", "sparse_macs", "adds", "cmp", "updates"
        );
        for (i, l) in self.dense.layers.iter().enumerate() {
            let sparse = self
                .sparse
                .as_ref()
                .map_or("-".to_string(), |sp| format!("{:.0}", sp.layers[i].macs));
            let _ = writeln!(
                s,
                "{:<6} {:>14.0} {:>14} {:>8.0} {:>8.0} {:>8.0}",
                l.name, l.macs, sparse, l.adds, l.comparisons, l.state_updates
            );
        }
        let _ = writeln!(
            s,
            "dense FLOPs: {:.0} (MAC=2), {:.0} (MAC=1)",
            self.dense.flops_mac2(),
            self.dense.flops_mac1()
        );
        if let Some(sp) = &self.sparse {
            let _ = writeln!(
                s,
                "sparse FLOPs: {:.0} (MAC=2), {:.0} (MAC=1)",
                sp.flops_mac2(),
                sp.flops_mac1()
            );
        }
        let _ = writeln!(
            s,
            "energy {:.4} uJ/inference, power {:.4} mW @ {} Hz, latency {:.2} ms",
            self.energy_uj, self.power_mw, self.frequency_hz, self.latency_ms
        );
        let _ = writeln!(s, "assumptions:");
        for a in &self.assumptions {
            let _ = writeln!(s, "  - {a}");
        }
        s
    }

    /// Machine-readable `key=value` summary followed by a per-layer CSV.
    pub fn render_csv(&self) -> String {
        let mut s = String::new();
        let sparse_flops = self.sparse.as_ref().map(|sp| sp.flops_mac2());
        let _ = writeln!(s, "key,value");
        let _ = writeln!(s, "n,{}", self.config.n);
        let _ = writeln!(s, "use_dsc,{}", self.config.use_dsc);
        let _ = writeln!(s, "params,{}", self.params);
        let _ = writeln!(s, "dense_flops_mac2,{:.0}", self.dense.flops_mac2());
        let _ = writeln!(s, "dense_flops_mac1,{:.0}", self.dense.flops_mac1());
        if let Some(f) = sparse_flops {
            let _ = writeln!(s, "sparse_flops_mac2,{f:.0}");
            let _ = writeln!(
                s,
                "sparse_flops_mac1,{:.0}",
                self.sparse.as_ref().unwrap().flops_mac1()
            );
        }
        let _ = writeln!(s, "energy_uj,{:.6}", self.energy_uj);
        let _ = writeln!(s, "power_mw,{:.6}", self.power_mw);
        let _ = writeln!(s, "frequency_hz,{}", self.frequency_hz);
        let _ = writeln!(s, "latency_ms,{:.3}", self.latency_ms);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "layer,dense_macs,sparse_macs,adds,comparisons,state_updates"
        );
        for (i, l) in self.dense.layers.iter().enumerate() {
            let sparse = self
                .sparse
                .as_ref()
                .map_or(String::new(), |sp| format!("{:.1}", sp.layers[i].macs));
            let _ = writeln!(
                s,
                "{},{:.0},{},{:.0},{:.0},{:.0}",
                l.name, l.macs, sparse, l.adds, l.comparisons, l.state_updates
            );
        }
        s
    }
}
