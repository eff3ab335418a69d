//! Simulates noisy measurements on one configuration and recovers both the
//! configuration and the line reactances from them.
//!
//! cargo run --release --example estimate_topology -- [true-config] [snapshots] [snr-db]

use gridsense::estimator::{estimate, RankTolerance};
use gridsense::feeder::Feeder;
use gridsense::harness::{compute_mape, MAPE_MASK};
use gridsense::measurement::{MeasurementSnapshot, MeasurementWindow};
use gridsense::sensitivity::sensitivity_matrices;
use gridsense::sim::loads::synthesize_loads;
use gridsense::sim::noise::{NoiseInjector, NoiseModel};
use gridsense::sim::power_flow::{solve_power_flow, PowerFlowOptions};

fn main() -> gridsense::error::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let truth = args.get(1).map_or("6", String::as_str);
    let snapshots: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let snr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(92.0);

    let feeder = Feeder::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee123.json"))?;
    let candidates = feeder.enumerate_configurations()?.feasible;
    let config = feeder.configure(feeder.config_index(truth)?)?;
    let loads = synthesize_loads(&(&feeder.base_pd * 0.3), &(&feeder.base_qd * 0.3), snapshots, 11);
    let mut noise = NoiseInjector::new(NoiseModel::with_snr(snr, 11));
    let mut window = MeasurementWindow::new(snapshots, 1.0)?;
    for t in 0..snapshots {
        let (pd, qd) = loads.demand(t);
        let (p, q) = (-pd, -qd);
        let flow = solve_power_flow(&config.topology, &config.params, &p, &q, 1.0, PowerFlowOptions::default())?;
        let exact = MeasurementSnapshot::from_magnitudes(t as u64 + 1, 1.0, flow.magnitudes().as_slice(), p, q)?;
        window.push(noise.apply(&exact)?)?;
    }

    let est = estimate(&candidates, &window, RankTolerance::NOISY)?;
    let best = est.residual_error();
    for (name, eps) in &est.residual_errors {
        println!("config {name:>2}: residual {eps:.4e} ({:.1}× the best)", eps / best);
    }
    println!("selected {} (true {truth})", est.config_name);
    if est.config_name == truth {
        let true_sens = sensitivity_matrices(&config.topology, &config.params)?;
        let mx = compute_mape(est.x_hat.as_slice(), config.params.x.as_slice(), MAPE_MASK)?;
        let mxx = compute_mape(est.sens.x.as_slice(), true_sens.x.as_slice(), MAPE_MASK)?;
        println!("MAPE of line reactances {mx:.2}%, of X {mxx:.2}%");
    }
    Ok(())
}
