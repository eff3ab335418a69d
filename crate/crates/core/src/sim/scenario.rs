//! Scenario files: everything a closed-loop run needs besides the feeder.
//!
//! Powers and DER limits are in p.u. on the feeder base; voltages and
//! voltage bounds are magnitudes in p.u.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::loads::LoadShape;
use super::noise::{NoiseModel, SnrReference};
use crate::error::{Error, Result};
use crate::estimator::RankTolerance;
use crate::feeder::Feeder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Feeder file, relative to the scenario file's directory.
    pub feeder: PathBuf,
    /// Number of 1 s steps; steps are numbered `1..=horizon`.
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_config")]
    pub initial_config: String,
    #[serde(default)]
    pub load: LoadSettings,
    /// Substation voltage magnitude.
    #[serde(default = "one")]
    pub v0: f64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub noise: NoiseSettings,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub controller: ControllerSettings,
    #[serde(default)]
    pub ders: Vec<DerSpec>,
    #[serde(default)]
    pub mode: Mode,
    /// Configuration whose true sensitivities the model-based mode uses;
    /// defaults to the initial configuration.
    #[serde(default)]
    pub baseline_config: Option<String>,
    /// Estimate and control every `decimation` steps.
    #[serde(default = "one_usize")]
    pub decimation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSettings {
    /// Multiplier on the feeder's nominal demand.
    pub scale: f64,
    pub anchor_std: f64,
    pub jitter_std: f64,
    pub anchor_spacing: usize,
}

impl Default for LoadSettings {
    fn default() -> Self {
        let shape = LoadShape::default();
        LoadSettings {
            scale: 1.0,
            anchor_std: shape.anchor_std,
            jitter_std: shape.jitter_std,
            anchor_spacing: shape.anchor_spacing,
        }
    }
}

impl LoadSettings {
    pub fn shape(&self) -> LoadShape {
        LoadShape {
            anchor_std: self.anchor_std,
            jitter_std: self.jitter_std,
            anchor_spacing: self.anchor_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    /// Step at which the event takes effect.
    pub t: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Reconfigure { config: String },
    LoadScale { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    /// Omitted or null for noise-free measurements.
    pub snr_db: Option<f64>,
    pub reference: SnrReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    /// Snapshots kept, `m + 1`.
    pub window: usize,
    pub gamma: f64,
    /// SVD cutoff; defaults to exact for noise-free runs and relative 1e-8
    /// otherwise.
    pub tolerance: Option<ToleranceSetting>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            window: 60,
            gamma: 1.0,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceSetting {
    Exact,
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            beta1: crate::controller::DEFAULT_BETA,
            beta2: crate::controller::DEFAULT_BETA,
            v_min: 0.95,
            v_max: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerSpec {
    /// Bus name as it appears in the feeder file.
    pub bus: String,
    #[serde(default)]
    pub p_min: f64,
    #[serde(default)]
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Cost weights; default `1 + 0.1·i` for the i-th DER (from 1).
    #[serde(default)]
    pub wp: Option<f64>,
    #[serde(default)]
    pub wq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Estimate topology and sensitivities from measurements every step.
    #[default]
    DataDriven,
    /// Use the true sensitivities of a fixed configuration.
    ModelBased,
    /// Estimate but never actuate DERs.
    OpenLoop,
}

fn default_config() -> String {
    "0".into()
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a scenario and resolves its feeder path against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::from_json(&text)?;
        if s.feeder.is_relative() {
            if let Some(dir) = path.parent() {
                s.feeder = dir.join(&s.feeder);
            }
        }
        Ok(s)
    }

    pub fn load_feeder(&self) -> Result<Feeder> {
        Feeder::load(&self.feeder)
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            snr_db: self.noise.snr_db,
            seed: self.seed,
            reference: self.noise.reference,
        }
    }

    pub fn rank_tolerance(&self) -> RankTolerance {
        match self.estimator.tolerance {
            Some(ToleranceSetting::Exact) => RankTolerance::Exact,
            Some(ToleranceSetting::Relative(r)) => RankTolerance::Relative(r),
            None if self.noise.snr_db.is_some() => RankTolerance::NOISY,
            None => RankTolerance::Exact,
        }
    }

    pub fn baseline(&self) -> &str {
        self.baseline_config.as_deref().unwrap_or(&self.initial_config)
    }

    /// Checks the scenario against the feeder it runs on.
    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.decimation == 0 {
            return bad("decimation must be at least 1".into());
        }
        if !(self.v0 > 0.0) {
            return bad(format!("substation voltage {} must be positive", self.v0));
        }
        if !(self.load.scale >= 0.0) || !(self.load.jitter_std >= 0.0) || !(self.load.anchor_std >= 0.0) {
            return bad("load settings must be nonnegative".into());
        }
        if let Some(db) = self.noise.snr_db {
            if !(db > 0.0) {
                return bad(format!("SNR {db} dB must be positive"));
            }
        }
        if self.estimator.window == 0 || !(self.estimator.gamma > 0.0 && self.estimator.gamma <= 1.0) {
            return bad("estimator window must be ≥ 1 and gamma in (0, 1]".into());
        }
        let c = &self.controller;
        if !(0.0 < c.v_min && c.v_min < c.v_max) || !(c.beta1 >= 0.0 && c.beta2 >= 0.0) {
            return bad("controller bounds or penalties are invalid".into());
        }
        feeder.config_index(&self.initial_config)?;
        feeder.config_index(self.baseline())?;
        for e in &self.events {
            if e.t == 0 || e.t > self.horizon {
                return bad(format!("event at step {} outside 1..={}", e.t, self.horizon));
            }
            match &e.kind {
                EventKind::Reconfigure { config } => {
                    feeder.config_index(config)?;
                }
                EventKind::LoadScale { factor } if !(*factor >= 0.0) => {
                    return bad(format!("load scale factor {factor} must be nonnegative"));
                }
                EventKind::LoadScale { .. } => {}
            }
        }
        for d in &self.ders {
            let bus = feeder.bus_by_name(&d.bus)?;
            if bus == 0 {
                return bad("a DER cannot sit at the substation bus".into());
            }
            if !(d.p_min <= d.p_max && d.q_min <= d.q_max) {
                return bad(format!("DER at bus {} has an empty capacity box", d.bus));
            }
        }
        Ok(())
    }
}
