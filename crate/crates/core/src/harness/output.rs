use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{Metrics, MonteCarloSummary};
use crate::error::{Error, Result};
use crate::measurement::write_measurements;
use crate::sim::closed_loop::Trace;

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

/// Writes a run's trace as CSV files plus `summary.json` into `dir`.
///
/// * `voltages.csv`: true voltage magnitude per bus and step
/// * `setpoints.csv`: DER injections in effect and the controller objective
/// * `residual_errors.csv`: residual error per candidate configuration
/// * `estimates.csv`: true and selected configuration, MAPEs, violation
/// * `measurements.csv`: the measurements the estimator saw
pub fn write_trace(trace: &Trace, dir: impl AsRef<Path>) -> Result<Metrics> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(dir, "voltages.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(trace.bus_names.iter().cloned());
    w.write_record(&header)?;
    for s in &trace.steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.v_true.iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(dir, "setpoints.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(trace.der_buses.iter().map(|b| format!("pg_{b}")));
    header.extend(trace.der_buses.iter().map(|b| format!("qg_{b}")));
    header.push("objective".into());
    w.write_record(&header)?;
    for s in &trace.steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.pg.iter().chain(&s.qg).map(|&v| fmt(v)));
        row.push(opt(s.objective));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(dir, "residual_errors.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(trace.config_names.iter().map(|c| format!("config_{c}")));
    w.write_record(&header)?;
    for s in trace.steps.iter().filter(|s| !s.residual_errors.is_empty()) {
        let mut row = vec![s.t.to_string()];
        row.extend(s.residual_errors.iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(dir, "estimates.csv")?;
    w.write_record(["t", "true_config", "selected_config", "mape_x", "mape_X", "violation"])?;
    for s in &trace.steps {
        w.write_record([
            s.t.to_string(),
            s.true_config.clone(),
            s.selected_config.clone().unwrap_or_default(),
            opt(s.mape_x),
            opt(s.mape_xx),
            fmt(s.violation),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    write_measurements(create(dir, "measurements.csv")?, &trace.measurements)?;

    let metrics = Metrics::from_trace(trace);
    let summary = serde_json::json!({
        "scenario": trace.scenario,
        "steps": trace.steps.len(),
        "metrics": metrics,
    });
    serde_json::to_writer_pretty(create(dir, "summary.json")?, &summary)?;
    Ok(metrics)
}

/// Writes `runs.csv` (one row per run) and `summary.json` into `dir`.
pub fn write_monte_carlo(summary: &MonteCarloSummary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv_writer(dir, "runs.csv")?;
    let mut header: Vec<String> = ["run", "seed", "true_config", "selected_config", "mape_x", "mape_X", "violation_energy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(summary.config_names.iter().map(|c| format!("eps_{c}")));
    w.write_record(&header)?;
    for o in &summary.outcomes {
        let mut row = vec![
            o.run.to_string(),
            o.seed.to_string(),
            o.true_config.clone(),
            o.selected_config.clone().unwrap_or_default(),
            opt(o.metrics.mape_x),
            opt(o.metrics.mape_xx),
            fmt(o.metrics.violation_energy),
        ];
        row.extend(o.residual_errors.iter().map(|&v| fmt(v)));
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    let json = serde_json::json!({
        "scenario": summary.scenario,
        "runs": summary.runs,
        "metrics": summary.metrics,
    });
    serde_json::to_writer_pretty(create(dir, "summary.json")?, &json)?;
    Ok(())
}
