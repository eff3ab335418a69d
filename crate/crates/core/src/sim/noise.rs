//! Additive white Gaussian measurement noise at a target SNR.
//!
//! Every measured channel (substation voltage, each bus voltage magnitude,
//! each active and reactive injection) gets zero-mean noise with standard
//! deviation `rms · 10^(−snr/20)`, where `rms` is the channel's reference
//! level.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rng_for, Stream};
use crate::error::Result;
use crate::measurement::MeasurementSnapshot;

/// What a channel's SNR is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// RMS of the channel's most recent `window` true values.
    RunningRms { window: usize },
    /// Magnitude of the current true value.
    Instantaneous,
    /// A fixed RMS level shared by all channels.
    Nominal { rms: f64 },
}

impl Default for SnrReference {
    fn default() -> Self {
        SnrReference::RunningRms { window: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `None` disables noise.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: SnrReference,
}

impl NoiseModel {
    pub fn disabled() -> Self {
        NoiseModel {
            snr_db: None,
            seed: 0,
            reference: SnrReference::default(),
        }
    }

    pub fn with_snr(snr_db: f64, seed: u64) -> Self {
        NoiseModel {
            snr_db: Some(snr_db),
            seed,
            reference: SnrReference::default(),
        }
    }

    /// Noise standard deviation per unit of reference RMS.
    pub fn relative_std(&self) -> f64 {
        self.snr_db.map_or(0.0, |db| 10f64.powf(-db / 20.0))
    }
}

/// Stateful noise source tracking each channel's reference level.
#[derive(Debug, Clone)]
pub struct NoiseInjector {
    model: NoiseModel,
    history: Vec<VecDeque<f64>>,
}

impl NoiseInjector {
    pub fn new(model: NoiseModel) -> Self {
        NoiseInjector {
            model,
            history: Vec::new(),
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Returns a noisy copy of a true snapshot. Voltage noise is added to
    /// magnitudes. The draw depends only on the seed and `snapshot.t`.
    pub fn apply(&mut self, snapshot: &MeasurementSnapshot) -> Result<MeasurementSnapshot> {
        let n = snapshot.n();
        let mut channels = Vec::with_capacity(1 + 3 * n);
        channels.push(snapshot.v0.sqrt());
        channels.extend(snapshot.v.iter().map(|v| v.sqrt()));
        channels.extend(snapshot.p.iter());
        channels.extend(snapshot.q.iter());
        if self.history.len() != channels.len() {
            self.history = vec![VecDeque::new(); channels.len()];
        }
        let scales: Vec<f64> = match self.model.reference {
            SnrReference::RunningRms { window } => {
                let window = window.max(1);
                channels
                    .iter()
                    .zip(self.history.iter_mut())
                    .map(|(&y, h)| {
                        if h.len() == window {
                            h.pop_front();
                        }
                        h.push_back(y);
                        (h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt()
                    })
                    .collect()
            }
            SnrReference::Instantaneous => channels.iter().map(|y| y.abs()).collect(),
            SnrReference::Nominal { rms } => vec![rms; channels.len()],
        };
        let rel = self.model.relative_std();
        if rel == 0.0 {
            return Ok(snapshot.clone());
        }
        let mut rng = rng_for(self.model.seed, Stream::Noise, snapshot.t);
        let noisy: Vec<f64> = channels
            .iter()
            .zip(&scales)
            .map(|(&y, &s)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                y + rel * s * e
            })
            .collect();
        MeasurementSnapshot::from_magnitudes(
            snapshot.t,
            noisy[0],
            &noisy[1..1 + n],
            DVector::from_row_slice(&noisy[1 + n..1 + 2 * n]),
            DVector::from_row_slice(&noisy[1 + 2 * n..]),
        )
    }
}

/// One-shot noise against the snapshot's own values.
pub fn apply_noise(snapshot: &MeasurementSnapshot, model: &NoiseModel) -> Result<MeasurementSnapshot> {
    NoiseInjector::new(*model).apply(snapshot)
}
