//! Metrics, Monte Carlo fan-out and trace output.

mod files;
mod monte_carlo;
mod output;

pub use files::{read_demand, read_demand_file, LineValue, SensitivityFile};

pub use monte_carlo::{run_monte_carlo, worker_count, MonteCarloSummary, RunOutcome, THREADS_ENV};
pub use output::{write_monte_carlo, write_trace};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::closed_loop::Trace;

/// Entries whose true value is smaller than this are left out of MAPE.
pub const MAPE_MASK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// MAPE of `x̂` (%).
    pub mape_x: Option<f64>,
    /// MAPE of the entries of `X̂` (%).
    #[serde(rename = "mape_X")]
    pub mape_xx: Option<f64>,
    /// Fraction of estimates that picked the true configuration.
    pub config_accuracy: Option<f64>,
    /// `Σ_t ‖[v̲ − v]₊‖² + ‖[v − v̄]₊‖²` on true squared voltages.
    pub violation_energy: f64,
}

impl Metrics {
    /// Final-estimate errors and per-step selection accuracy of one run.
    pub fn from_trace(trace: &Trace) -> Self {
        let last = trace.last_estimate();
        let estimated: Vec<_> = trace.steps.iter().filter(|s| s.selected_config.is_some()).collect();
        let correct = estimated
            .iter()
            .filter(|s| s.selected_config.as_deref() == Some(s.true_config.as_str()))
            .count();
        Metrics {
            mape_x: last.and_then(|s| s.mape_x),
            mape_xx: last.and_then(|s| s.mape_xx),
            config_accuracy: (!estimated.is_empty()).then(|| correct as f64 / estimated.len() as f64),
            violation_energy: trace.violation_energy(),
        }
    }
}

/// Mean of `|est − truth| / |truth|` over entries with `|truth| ≥ mask`, in
/// percent.
pub fn compute_mape(estimate: &[f64], truth: &[f64], mask: f64) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::dims("MAPE operands", truth.len(), estimate.len()));
    }
    let (sum, count) = estimate
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.abs() >= mask)
        .fold((0.0, 0usize), |(s, c), (e, t)| (s + ((e - t) / t).abs(), c + 1));
    if count == 0 {
        return Err(Error::AllMasked);
    }
    Ok(100.0 * sum / count as f64)
}

/// `‖[v̲ − v]₊‖² + ‖[v − v̄]₊‖²`.
pub fn violation(v: &DVector<f64>, v_lo: &DVector<f64>, v_hi: &DVector<f64>) -> f64 {
    v.iter()
        .zip(v_lo.iter().zip(v_hi.iter()))
        .map(|(&v, (&lo, &hi))| (lo - v).max(0.0).powi(2) + (v - hi).max(0.0).powi(2))
        .sum()
}
