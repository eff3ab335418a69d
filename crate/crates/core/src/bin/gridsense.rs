use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use gridsense::controller::{solve_control, ControlProblem};
use gridsense::error::{Error, Result};
use gridsense::estimator::{assemble_regression, check_identifiability, estimate, estimate_parameters, RankTolerance, IDENTIFIABILITY_TOL};
use gridsense::feeder::Feeder;
use gridsense::harness::{read_demand_file, run_monte_carlo, worker_count, write_monte_carlo, write_trace, SensitivityFile};
use gridsense::measurement::{read_measurements_file, MeasurementWindow};
use gridsense::sim::closed_loop::{fleet_from_specs, run_closed_loop};
use gridsense::sim::scenario::{DerSpec, Scenario};

#[derive(Parser)]
#[command(name = "gridsense", version, about = "Data-driven voltage regulation on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a feeder file and count its radial configurations.
    ValidateFeeder { file: PathBuf },
    /// Select the configuration and estimate line parameters from measurements.
    Estimate {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Snapshots used, counting back from the last row.
        #[arg(long, default_value_t = 60)]
        window: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// SVD cutoff: `exact` or a relative tolerance such as `1e-8`.
        #[arg(long, default_value = "exact")]
        tolerance: String,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted and numerical rank of the regression for each configuration.
    Identifiability {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Only this configuration.
        #[arg(long)]
        config: Option<String>,
    },
    /// Compute DER setpoints from line parameters and measured demand.
    Control {
        #[arg(long)]
        feeder: PathBuf,
        /// Line parameters as written by `estimate`.
        #[arg(long)]
        sens: PathBuf,
        /// CSV with columns `bus,pd,qd` in p.u.
        #[arg(long)]
        demand: PathBuf,
        /// JSON list of DERs, as in a scenario's `ders`.
        #[arg(long)]
        ders: PathBuf,
        /// Substation voltage magnitude.
        #[arg(long, default_value_t = 1.0)]
        v0: f64,
        #[arg(long, default_value_t = 0.95)]
        v_min: f64,
        #[arg(long, default_value_t = 1.05)]
        v_max: f64,
        #[arg(long, default_value_t = gridsense::controller::DEFAULT_BETA)]
        beta1: f64,
        #[arg(long, default_value_t = gridsense::controller::DEFAULT_BETA)]
        beta2: f64,
    },
    /// Run a closed-loop scenario and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a scenario with independent seeds.
    MonteCarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // A failure here only means a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build_global();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::ValidateFeeder { file } => validate_feeder(&file),
        Command::Estimate {
            feeder,
            measurements,
            window,
            gamma,
            tolerance,
            out,
        } => run_estimate(&feeder, &measurements, window, gamma, &tolerance, out.as_deref()),
        Command::Identifiability {
            feeder,
            measurements,
            config,
        } => identifiability(&feeder, &measurements, config.as_deref()),
        Command::Control {
            feeder,
            sens,
            demand,
            ders,
            v0,
            v_min,
            v_max,
            beta1,
            beta2,
        } => control(&feeder, &sens, &demand, &ders, v0, (v_min, v_max), (beta1, beta2)),
        Command::Run { scenario, out } => {
            let scenario = Scenario::load(&scenario)?;
            let feeder = scenario.load_feeder()?;
            let trace = run_closed_loop(&feeder, &scenario)?;
            let metrics = write_trace(&trace, &out)?;
            print_json(&json!({ "scenario": scenario.name, "steps": trace.steps.len(), "metrics": metrics }))
        }
        Command::MonteCarlo { scenario, runs, out } => {
            let scenario = Scenario::load(&scenario)?;
            let feeder = scenario.load_feeder()?;
            let summary = run_monte_carlo(&feeder, &scenario, runs)?;
            write_monte_carlo(&summary, &out)?;
            print_json(&json!({ "scenario": scenario.name, "runs": runs, "metrics": summary.metrics }))
        }
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn validate_feeder(file: &Path) -> Result<()> {
    let feeder = Feeder::load(file)?;
    let e = feeder.enumerate_configurations()?;
    for (name, err) in &e.rejected {
        eprintln!("configuration {name} rejected: {err}");
    }
    println!("{} feasible configurations", e.feasible.len());
    Ok(())
}

fn parse_tolerance(text: &str) -> Result<RankTolerance> {
    if text.eq_ignore_ascii_case("exact") {
        return Ok(RankTolerance::Exact);
    }
    match text.parse::<f64>() {
        Ok(t) if t > 0.0 && t < 1.0 => Ok(RankTolerance::Relative(t)),
        _ => Err(Error::Invalid(format!("tolerance {text:?} is neither `exact` nor a number in (0, 1)"))),
    }
}

fn load_window(feeder: &Feeder, measurements: &Path, size: Option<usize>, gamma: f64) -> Result<MeasurementWindow> {
    let snapshots = read_measurements_file(measurements, feeder.n())?;
    if snapshots.is_empty() {
        return Err(Error::EmptyWindow);
    }
    MeasurementWindow::from_snapshots(size.unwrap_or(snapshots.len()), gamma, snapshots)
}

fn run_estimate(
    feeder_path: &Path,
    measurements: &Path,
    window: usize,
    gamma: f64,
    tolerance: &str,
    out: Option<&Path>,
) -> Result<()> {
    let tolerance = parse_tolerance(tolerance)?;
    let feeder = Feeder::load(feeder_path)?;
    let window = load_window(&feeder, measurements, Some(window), gamma)?;
    let candidates = feeder.enumerate_configurations()?.feasible;
    let est = estimate(&candidates, &window, tolerance)?;
    let file = SensitivityFile::from_estimate(&est);
    let report = json!({
        "config": file.config,
        "lines": file.lines,
        "snapshots": window.len(),
        "effective_rank": est.effective_rank,
        "unidentifiable_lines": est.unidentifiable_lines,
        "residual_errors": est.residual_errors.iter().map(|(c, e)| json!({ "config": c, "eps": e })).collect::<Vec<_>>(),
    });
    match out {
        Some(path) => {
            let text = serde_json::to_string_pretty(&report)?;
            std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
            println!("selected configuration {}", est.config_name);
            Ok(())
        }
        None => print_json(&report),
    }
}

fn identifiability(feeder_path: &Path, measurements: &Path, only: Option<&str>) -> Result<()> {
    let feeder = Feeder::load(feeder_path)?;
    let window = load_window(&feeder, measurements, None, 1.0)?;
    let mut candidates = feeder.enumerate_configurations()?.feasible;
    if let Some(name) = only {
        let idx = feeder.config_index(name)?;
        candidates.retain(|c| c.index == idx);
        if candidates.is_empty() {
            return Err(Error::Invalid(format!("configuration {name} is not radial")));
        }
    }
    let mut rows = Vec::new();
    for c in &candidates {
        let id = check_identifiability(&c.topology, &c.z, &window, IDENTIFIABILITY_TOL)?;
        let system = assemble_regression(&c.topology, &c.z, &window)?;
        let fit = estimate_parameters(&system, &c.z, RankTolerance::Exact)?;
        rows.push(json!({
            "config": c.name,
            "lines": c.topology.n(),
            "predicted_rank": id.predicted_rank,
            "numerical_rank": fit.effective_rank,
            "unidentifiable_lines": id.unidentifiable_lines(),
        }));
    }
    print_json(&serde_json::Value::Array(rows))
}

fn control(
    feeder_path: &Path,
    sens_path: &Path,
    demand: &Path,
    ders_path: &Path,
    v0: f64,
    (v_min, v_max): (f64, f64),
    (beta1, beta2): (f64, f64),
) -> Result<()> {
    let feeder = Feeder::load(feeder_path)?;
    let file = SensitivityFile::load(sens_path)?;
    let sens = file.controller_sensitivities(&feeder)?;
    let (pd, qd) = read_demand_file(demand, &feeder)?;
    let text = std::fs::read_to_string(ders_path).map_err(|e| Error::io(ders_path, e))?;
    let specs: Vec<DerSpec> = serde_json::from_str(&text)?;
    let fleet = fleet_from_specs(&feeder, &specs)?;
    let n = feeder.n();
    let mut problem = ControlProblem::new(sens, fleet, pd, qd, v0 * v0);
    problem.v_lo = nalgebra::DVector::from_element(n, v_min * v_min);
    problem.v_hi = nalgebra::DVector::from_element(n, v_max * v_max);
    problem.beta1 = beta1;
    problem.beta2 = beta2;
    let set = solve_control(&problem)?;
    let v = set.v_pred.map(f64::sqrt);
    let ders: Vec<_> = specs
        .iter()
        .enumerate()
        .map(|(j, d)| json!({ "bus": d.bus, "pg": set.pg[j], "qg": set.qg[j] }))
        .collect();
    print_json(&json!({
        "config": file.config,
        "objective": set.objective,
        "iterations": set.iterations,
        "ders": ders,
        "v_pred_min": v.min(),
        "v_pred_max": v.max(),
    }))
}
