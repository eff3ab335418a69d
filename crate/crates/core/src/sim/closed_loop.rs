//! The measure → estimate → control loop against nonlinear ground truth.

use std::collections::HashMap;

use nalgebra::DVector;

use super::loads::synthesize_loads_with;
use super::noise::NoiseInjector;
use super::power_flow::{solve_power_flow, PowerFlowOptions};
use super::scenario::{DerSpec, EventKind, Mode, Scenario};
use crate::controller::{default_weights, solve_control, ControlProblem, DerFleet};
use crate::error::{Error, Result};
use crate::estimator::estimate;
use crate::feeder::{ConfiguredTopology, Feeder};
use crate::harness::{compute_mape, violation, MAPE_MASK};
use crate::measurement::{MeasurementSnapshot, MeasurementWindow};
use crate::sensitivity::{sensitivity_matrices, SensitivityMatrices};

/// What happened during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub true_config: String,
    /// Set on steps where the estimator ran.
    pub selected_config: Option<String>,
    /// Residual error per candidate configuration, in candidate order.
    pub residual_errors: Vec<f64>,
    /// MAPE (%) of the selected configuration's `x̂` against the true line
    /// reactances.
    pub mape_x: Option<f64>,
    /// MAPE (%) of `X̂` against the true `X`.
    pub mape_xx: Option<f64>,
    /// True bus voltage magnitudes, buses `1..=N`.
    pub v_true: Vec<f64>,
    /// DER injections in effect during this step.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Controller objective when a new setpoint was computed this step.
    pub objective: Option<f64>,
    /// `‖[v̲ − v]₊‖² + ‖[v − v̄]₊‖²` on true squared voltages.
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub scenario: String,
    /// Candidate configuration names, in the order of `residual_errors`.
    pub config_names: Vec<String>,
    /// Names of buses `1..=N`.
    pub bus_names: Vec<String>,
    pub der_buses: Vec<String>,
    pub steps: Vec<StepRecord>,
    /// Measurements as the estimator saw them.
    pub measurements: Vec<MeasurementSnapshot>,
}

impl Trace {
    pub fn violation_energy(&self) -> f64 {
        self.steps.iter().map(|s| s.violation).sum()
    }

    pub fn last_estimate(&self) -> Option<&StepRecord> {
        self.steps.iter().rev().find(|s| s.selected_config.is_some())
    }
}

struct Truth {
    candidate: usize,
    sens: SensitivityMatrices,
}

/// Runs a scenario on a feeder; see [`Scenario`] for the knobs.
pub fn run_closed_loop(feeder: &Feeder, scenario: &Scenario) -> Result<Trace> {
    scenario.validate(feeder)?;
    let candidates = feeder.enumerate_configurations()?.feasible;
    let n = feeder.n();
    let position = |name: &str| -> Result<usize> {
        let idx = feeder.config_index(name)?;
        candidates
            .iter()
            .position(|c| c.index == idx)
            .ok_or_else(|| Error::Invalid(format!("configuration {name} is not radial")))
    };
    // True sensitivities of every configuration the run can visit.
    let mut visited = vec![position(&scenario.initial_config)?, position(scenario.baseline())?];
    for e in &scenario.events {
        if let EventKind::Reconfigure { config } = &e.kind {
            visited.push(position(config)?);
        }
    }
    let mut truths: HashMap<usize, Truth> = HashMap::new();
    for k in visited {
        if !truths.contains_key(&k) {
            let c = &candidates[k];
            truths.insert(
                k,
                Truth {
                    candidate: k,
                    sens: sensitivity_matrices(&c.topology, &c.params)?,
                },
            );
        }
    }

    let fleet = der_fleet(feeder, scenario)?;
    let der_index: Vec<usize> = fleet.buses.clone();
    let ctl = &scenario.controller;
    let v_lo = DVector::from_element(n, ctl.v_min * ctl.v_min);
    let v_hi = DVector::from_element(n, ctl.v_max * ctl.v_max);
    let baseline = position(scenario.baseline())?;

    let profile = synthesize_loads_with(
        &(feeder.base_pd.clone() * scenario.load.scale),
        &(feeder.base_qd.clone() * scenario.load.scale),
        scenario.horizon,
        scenario.seed,
        scenario.load.shape(),
    );
    let mut injector = NoiseInjector::new(scenario.noise_model());
    let mut window = MeasurementWindow::new(scenario.estimator.window, scenario.estimator.gamma)?;
    let tolerance = scenario.rank_tolerance();

    let mut active = position(&scenario.initial_config)?;
    let mut load_factor = 1.0;
    let mut pg = DVector::zeros(fleet.len());
    let mut qg = DVector::zeros(fleet.len());
    let mut steps = Vec::with_capacity(scenario.horizon);
    let mut measurements = Vec::with_capacity(scenario.horizon);

    for t in 1..=scenario.horizon {
        for e in scenario.events.iter().filter(|e| e.t == t) {
            match &e.kind {
                EventKind::Reconfigure { config } => active = position(config)?,
                EventKind::LoadScale { factor } => load_factor = *factor,
            }
        }
        let truth = &truths[&active];
        let config = &candidates[truth.candidate];
        let (pd, qd) = profile.demand(t - 1);
        let mut p = -pd * load_factor;
        let mut q = -qd * load_factor;
        for (j, &bus) in der_index.iter().enumerate() {
            p[bus - 1] += pg[j];
            q[bus - 1] += qg[j];
        }
        let at = |e: Error| e.at_step(t);
        let flow = solve_power_flow(&config.topology, &config.params, &p, &q, scenario.v0, PowerFlowOptions::default())
            .map_err(at)?;
        let v_true = flow.magnitudes();
        let v_sq = flow.squared_magnitudes();
        let exact = MeasurementSnapshot::new(t as u64, scenario.v0 * scenario.v0, v_sq.clone(), p, q).map_err(at)?;
        let measured = injector.apply(&exact).map_err(at)?;
        window.push(measured.clone()).map_err(at)?;

        let mut record = StepRecord {
            t,
            true_config: config.name.clone(),
            selected_config: None,
            residual_errors: Vec::new(),
            mape_x: None,
            mape_xx: None,
            v_true: v_true.iter().copied().collect(),
            pg: pg.iter().copied().collect(),
            qg: qg.iter().copied().collect(),
            objective: None,
            violation: violation(&v_sq, &v_lo, &v_hi),
        };

        if t % scenario.decimation == 0 {
            let sens = match scenario.mode {
                Mode::ModelBased => Some(truths[&baseline].sens.clone()),
                Mode::DataDriven | Mode::OpenLoop => {
                    let est = estimate(&candidates, &window, tolerance).map_err(at)?;
                    record.selected_config = Some(est.config_name.clone());
                    record.residual_errors = est.residual_errors.iter().map(|(_, e)| *e).collect();
                    record.mape_x = line_mape(config, &candidates[est.config_index], &est.x_hat);
                    record.mape_xx = compute_mape(est.sens.x.as_slice(), truth.sens.x.as_slice(), MAPE_MASK).ok();
                    (scenario.mode == Mode::DataDriven).then(|| est.controller_sensitivities())
                }
            };
            if let Some(sens) = sens.filter(|_| !fleet.is_empty()) {
                // Demand as measured: net injection minus our own DER output.
                let mut pd_m = -measured.p.clone();
                let mut qd_m = -measured.q.clone();
                for (j, &bus) in der_index.iter().enumerate() {
                    pd_m[bus - 1] += pg[j];
                    qd_m[bus - 1] += qg[j];
                }
                let mut problem = ControlProblem::new(sens, fleet.clone(), pd_m, qd_m, measured.v0);
                problem.v_lo = v_lo.clone();
                problem.v_hi = v_hi.clone();
                problem.beta1 = ctl.beta1;
                problem.beta2 = ctl.beta2;
                let set = solve_control(&problem).map_err(at)?;
                record.objective = Some(set.objective);
                pg = set.pg;
                qg = set.qg;
            }
        }
        steps.push(record);
        measurements.push(measured);
    }

    Ok(Trace {
        scenario: scenario.name.clone(),
        config_names: candidates.iter().map(|c| c.name.clone()).collect(),
        bus_names: feeder.buses[1..].iter().map(|b| b.name.clone()).collect(),
        der_buses: scenario.ders.iter().map(|d| d.bus.clone()).collect(),
        steps,
        measurements,
    })
}

/// The DER fleet a scenario describes.
pub fn der_fleet(feeder: &Feeder, scenario: &Scenario) -> Result<DerFleet> {
    fleet_from_specs(feeder, &scenario.ders)
}

/// Builds a fleet from DER descriptions, resolving bus names on `feeder`.
pub fn fleet_from_specs(feeder: &Feeder, d: &[DerSpec]) -> Result<DerFleet> {
    let k = d.len();
    let w = default_weights(k);
    let buses = d
        .iter()
        .map(|d| feeder.bus_by_name(&d.bus))
        .collect::<Result<Vec<_>>>()?;
    if buses.contains(&0) {
        return Err(Error::Invalid("a DER cannot sit at the substation bus".into()));
    }
    let col = |f: &dyn Fn(usize) -> f64| DVector::from_fn(k, |j, _| f(j));
    DerFleet::new(
        buses,
        (col(&|j| d[j].p_min), col(&|j| d[j].p_max)),
        (col(&|j| d[j].q_min), col(&|j| d[j].q_max)),
        col(&|j| d[j].wp.unwrap_or(w[j])),
        col(&|j| d[j].wq.unwrap_or(w[j])),
    )
}

/// Compares estimated and true reactances line by line; a true line absent
/// from the selected topology counts as estimated zero.
fn line_mape(truth: &ConfiguredTopology, selected: &ConfiguredTopology, x_hat: &DVector<f64>) -> Option<f64> {
    let est: Vec<f64> = truth
        .topology
        .lines()
        .iter()
        .map(|l| selected.topology.column(l.id).map_or(0.0, |c| x_hat[c]))
        .collect();
    compute_mape(&est, truth.params.x.as_slice(), MAPE_MASK).ok()
}
