//! Flat `key = value` run configuration.
//!
//! Every knob of the model, training, augmentation, synthetic scene and
//! energy model has one key. Blank lines and `#` comments are ignored;
//! unknown keys are rejected. [`RunConfig::render`] writes the fully resolved
//! configuration back in the same format, so a run can be repeated from it.

use std::fmt::Display;
use std::str::FromStr;

use crate::cost::EnergyModel;
use crate::error::{Error, Result};
use crate::model::{MembraneInit, ModelConfig};
use crate::synth::SceneConfig;
use crate::train::{LossKind, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scene: SceneConfig,
    pub energy: EnergyModel,
    pub frequency_hz: f64,
    /// Divisor mapping label CSV coordinates onto the 80x60 grid.
    pub label_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            scene: SceneConfig::default(),
            energy: EnergyModel::default(),
            frequency_hz: 1000.0,
            label_scale: 8.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| Error::ConfigValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".to_string(), |v| v.to_string())
}

impl RunConfig {
    /// Every key with its current value, in rendering order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let t = &self.train;
        let a = &t.augment;
        let s = &self.scene;
        let e = &self.energy;
        vec![
            ("n", m.n.to_string()),
            ("use_dsc", m.use_dsc.to_string()),
            ("model_seed", m.seed.to_string()),
            ("surrogate_slope", m.surrogate_slope.to_string()),
            ("theta", m.theta.to_string()),
            ("output_spiking", m.output_spiking.to_string()),
            (
                "membrane_init",
                match m.membrane_init {
                    MembraneInit::Zero => "zero".into(),
                    MembraneInit::Uniform => "uniform".into(),
                },
            ),
            ("lr", t.adam.lr.to_string()),
            ("adam_beta1", t.adam.beta1.to_string()),
            ("adam_beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
            ("epochs", t.epochs.to_string()),
            ("window_ms", t.window_ms.to_string()),
            ("stride_ms", t.stride_ms.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("train_seed", t.seed.to_string()),
            ("max_windows_per_epoch", opt(&t.max_windows_per_epoch)),
            (
                "loss",
                match t.loss {
                    LossKind::Combined => "combined".into(),
                    LossKind::PositionOnly => "position".into(),
                },
            ),
            (
                "exclude_blinks_from_loss",
                t.exclude_blinks_from_loss.to_string(),
            ),
            ("grad_clip", opt(&t.grad_clip)),
            ("augment", a.enabled.to_string()),
            ("p_hflip", a.p_hflip.to_string()),
            ("p_vflip", a.p_vflip.to_string()),
            ("p_tflip", a.p_tflip.to_string()),
            ("max_spatial_shift", a.max_spatial_shift.to_string()),
            ("max_temporal_shift", a.max_temporal_shift.to_string()),
            ("cutout_count", a.cutout_count.to_string()),
            ("cutout_max_x", a.cutout_max_x.to_string()),
            ("cutout_max_y", a.cutout_max_y.to_string()),
            ("cutout_max_t", a.cutout_max_t.to_string()),
            ("augment_seed", a.seed.to_string()),
            ("scene_seed", s.seed.to_string()),
            ("duration_ms", s.duration_ms.to_string()),
            ("scene_width", s.width.to_string()),
            ("scene_height", s.height.to_string()),
            ("pupil_radius", s.pupil_radius.to_string()),
            ("background_intensity", s.background_intensity.to_string()),
            ("pupil_intensity", s.pupil_intensity.to_string()),
            ("eyelid_intensity", s.eyelid_intensity.to_string()),
            ("contrast_threshold", s.contrast_threshold.to_string()),
            ("px_per_deg", s.px_per_deg.to_string()),
            ("fixation_min_ms", s.fixation_min_ms.to_string()),
            ("fixation_max_ms", s.fixation_max_ms.to_string()),
            ("saccade_min_deg", s.saccade_min_deg.to_string()),
            ("saccade_max_deg", s.saccade_max_deg.to_string()),
            (
                "saccade_slope_ms_per_deg",
                s.saccade_slope_ms_per_deg.to_string(),
            ),
            ("saccade_intercept_ms", s.saccade_intercept_ms.to_string()),
            ("pursuit_probability", s.pursuit_probability.to_string()),
            ("pursuit_speed_deg_s", s.pursuit_speed_deg_s.to_string()),
            ("jitter_px", s.jitter_px.to_string()),
            ("jitter_tau_ms", s.jitter_tau_ms.to_string()),
            ("blink_rate_hz", s.blink_rate_hz.to_string()),
            ("blink_min_ms", s.blink_min_ms.to_string()),
            ("blink_max_ms", s.blink_max_ms.to_string()),
            ("substeps", s.substeps.to_string()),
            ("e_arith_pj", e.e_arith_pj.to_string()),
            ("e_mem_pj", e.e_mem_pj.to_string()),
            ("arith_per_mac", e.arith_per_mac.to_string()),
            ("loads_per_synop", e.loads_per_synop.to_string()),
            (
                "loads_per_neuron_update",
                e.loads_per_neuron_update.to_string(),
            ),
            ("frequency_hz", self.frequency_hz.to_string()),
            ("label_scale", self.label_scale.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default()
            .entries()
            .into_iter()
            .map(|(k, _)| k)
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        let s = &mut self.scene;
        let e = &mut self.energy;
        match key {
            "n" => m.n = parse(key, v)?,
            "use_dsc" => m.use_dsc = parse(key, v)?,
            "model_seed" => m.seed = parse(key, v)?,
            "surrogate_slope" => m.surrogate_slope = parse(key, v)?,
            "theta" => m.theta = parse(key, v)?,
            "output_spiking" => m.output_spiking = parse(key, v)?,
            "membrane_init" => {
                m.membrane_init = match v {
                    "zero" => MembraneInit::Zero,
                    "uniform" => MembraneInit::Uniform,
                    _ => {
                        return Err(Error::ConfigValue {
                            key: key.into(),
                            message: format!("`{v}`: expected `zero` or `uniform`"),
                        })
                    }
                }
            }
            "lr" => t.adam.lr = parse(key, v)?,
            "adam_beta1" => t.adam.beta1 = parse(key, v)?,
            "adam_beta2" => t.adam.beta2 = parse(key, v)?,
            "adam_eps" => t.adam.eps = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "window_ms" => t.window_ms = parse(key, v)?,
            "stride_ms" => t.stride_ms = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "train_seed" => t.seed = parse(key, v)?,
            "max_windows_per_epoch" => t.max_windows_per_epoch = parse_opt(key, v)?,
            "loss" => {
                t.loss = match v {
                    "combined" => LossKind::Combined,
                    "position" => LossKind::PositionOnly,
                    _ => {
                        return Err(Error::ConfigValue {
                            key: key.into(),
                            message: format!("`{v}`: expected `combined` or `position`"),
                        })
                    }
                }
            }
            "exclude_blinks_from_loss" => t.exclude_blinks_from_loss = parse(key, v)?,
            "grad_clip" => t.grad_clip = parse_opt(key, v)?,
            "augment" => t.augment.enabled = parse(key, v)?,
            "p_hflip" => t.augment.p_hflip = parse(key, v)?,
            "p_vflip" => t.augment.p_vflip = parse(key, v)?,
            "p_tflip" => t.augment.p_tflip = parse(key, v)?,
            "max_spatial_shift" => t.augment.max_spatial_shift = parse(key, v)?,
            "max_temporal_shift" => t.augment.max_temporal_shift = parse(key, v)?,
            "cutout_count" => t.augment.cutout_count = parse(key, v)?,
            "cutout_max_x" => t.augment.cutout_max_x = parse(key, v)?,
            "cutout_max_y" => t.augment.cutout_max_y = parse(key, v)?,
            "cutout_max_t" => t.augment.cutout_max_t = parse(key, v)?,
            "augment_seed" => t.augment.seed = parse(key, v)?,
            "scene_seed" => s.seed = parse(key, v)?,
            "duration_ms" => s.duration_ms = parse(key, v)?,
            "scene_width" => s.width = parse(key, v)?,
            "scene_height" => s.height = parse(key, v)?,
            "pupil_radius" => s.pupil_radius = parse(key, v)?,
            "background_intensity" => s.background_intensity = parse(key, v)?,
            "pupil_intensity" => s.pupil_intensity = parse(key, v)?,
            "eyelid_intensity" => s.eyelid_intensity = parse(key, v)?,
            "contrast_threshold" => s.contrast_threshold = parse(key, v)?,
            "px_per_deg" => s.px_per_deg = parse(key, v)?,
            "fixation_min_ms" => s.fixation_min_ms = parse(key, v)?,
            "fixation_max_ms" => s.fixation_max_ms = parse(key, v)?,
            "saccade_min_deg" => s.saccade_min_deg = parse(key, v)?,
            "saccade_max_deg" => s.saccade_max_deg = parse(key, v)?,
            "saccade_slope_ms_per_deg" => s.saccade_slope_ms_per_deg = parse(key, v)?,
            "saccade_intercept_ms" => s.saccade_intercept_ms = parse(key, v)?,
            "pursuit_probability" => s.pursuit_probability = parse(key, v)?,
            "pursuit_speed_deg_s" => s.pursuit_speed_deg_s = parse(key, v)?,
            "jitter_px" => s.jitter_px = parse(key, v)?,
            "jitter_tau_ms" => s.jitter_tau_ms = parse(key, v)?,
            "blink_rate_hz" => s.blink_rate_hz = parse(key, v)?,
            "blink_min_ms" => s.blink_min_ms = parse(key, v)?,
            "blink_max_ms" => s.blink_max_ms = parse(key, v)?,
            "substeps" => s.substeps = parse(key, v)?,
            "e_arith_pj" => e.e_arith_pj = parse(key, v)?,
            "e_mem_pj" => e.e_mem_pj = parse(key, v)?,
            "arith_per_mac" => e.arith_per_mac = parse(key, v)?,
            "loads_per_synop" => e.loads_per_synop = parse(key, v)?,
            "loads_per_neuron_update" => e.loads_per_neuron_update = parse(key, v)?,
            "frequency_hz" => self.frequency_hz = parse(key, v)?,
            "label_scale" => self.label_scale = parse(key, v)?,
            _ => {
                return Err(Error::UnknownKey {
                    key: key.to_string(),
                    valid: RunConfig::keys().join(", "),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.scene.validate()?;
        self.energy.validate()?;
        if !(self.frequency_hz > 0.0) {
            return Err(Error::ConfigValue {
                key: "frequency_hz".into(),
                message: "must be positive".into(),
            });
        }
        if !(self.label_scale > 0.0) {
            return Err(Error::ConfigValue {
                key: "label_scale".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}
