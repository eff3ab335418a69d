use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::sim::closed_loop::run_closed_loop;
use crate::sim::scenario::Scenario;
use crate::sim::{rng_for, Stream};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GRIDSENSE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    /// True configuration at the final step.
    pub true_config: String,
    /// Configuration chosen by the last estimate of the run.
    pub selected_config: Option<String>,
    /// Residual error per candidate at the last estimate.
    pub residual_errors: Vec<f64>,
    pub metrics: Metrics,
}

impl RunOutcome {
    pub fn correct(&self) -> bool {
        self.selected_config.as_deref() == Some(self.true_config.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub scenario: String,
    pub runs: usize,
    pub config_names: Vec<String>,
    /// Means over runs; `config_accuracy` is the fraction of runs whose last
    /// estimate picked the true configuration.
    pub metrics: Metrics,
    pub outcomes: Vec<RunOutcome>,
}

/// Worker threads: available parallelism, capped by `GRIDSENSE_THREADS`.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap.min(available),
        _ => available,
    }
}

/// Seed of run `run`, split from the scenario seed.
pub fn run_seed(base: u64, run: usize) -> u64 {
    rng_for(base, Stream::MonteCarlo, run as u64).next_u64()
}

/// Repeats a scenario with independent seeds and aggregates the outcomes.
pub fn run_monte_carlo(feeder: &Feeder, scenario: &Scenario, runs: usize) -> Result<MonteCarloSummary> {
    if runs == 0 {
        return Err(Error::Invalid("at least one Monte Carlo run is required".into()));
    }
    scenario.validate(feeder)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(RunOutcome, Vec<String>)>> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|run| {
                let mut s = scenario.clone();
                s.seed = run_seed(scenario.seed, run);
                let trace = run_closed_loop(feeder, &s)?;
                let last = trace.last_estimate();
                let outcome = RunOutcome {
                    run,
                    seed: s.seed,
                    true_config: trace.steps.last().map(|r| r.true_config.clone()).unwrap_or_default(),
                    selected_config: last.and_then(|r| r.selected_config.clone()),
                    residual_errors: last.map(|r| r.residual_errors.clone()).unwrap_or_default(),
                    metrics: Metrics::from_trace(&trace),
                };
                Ok((outcome, trace.config_names))
            })
            .collect()
    });
    let mut outcomes = Vec::with_capacity(runs);
    let mut config_names = Vec::new();
    for r in results {
        let (o, names) = r?;
        config_names = names;
        outcomes.push(o);
    }
    outcomes.sort_by_key(|o| o.run);
    Ok(MonteCarloSummary {
        scenario: scenario.name.clone(),
        runs,
        config_names,
        metrics: aggregate(&outcomes),
        outcomes,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn aggregate(outcomes: &[RunOutcome]) -> Metrics {
    let with_estimate: Vec<_> = outcomes.iter().filter(|o| o.selected_config.is_some()).collect();
    Metrics {
        mape_x: mean(outcomes.iter().filter_map(|o| o.metrics.mape_x)),
        mape_xx: mean(outcomes.iter().filter_map(|o| o.metrics.mape_xx)),
        config_accuracy: (!with_estimate.is_empty())
            .then(|| with_estimate.iter().filter(|o| o.correct()).count() as f64 / with_estimate.len() as f64),
        violation_energy: mean(outcomes.iter().map(|o| o.metrics.violation_energy)).unwrap_or(0.0),
    }
}
