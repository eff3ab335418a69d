//! Runs the closed-loop reconfiguration scenario and prints, per step, the
//! true and selected configuration, the lowest true voltage and the DER
//! reactive output. Pass `baseline` to run the frozen model instead.
//!
//! cargo run --release --example reconfiguration -- [baseline]

use gridsense::sim::closed_loop::run_closed_loop;
use gridsense::sim::scenario::Scenario;

fn main() -> gridsense::error::Result<()> {
    let name = match std::env::args().nth(1).as_deref() {
        Some("baseline") => "reconfiguration_baseline.json",
        _ => "reconfiguration.json",
    };
    let scenario = Scenario::load(format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR")))?;
    let feeder = scenario.load_feeder()?;
    let trace = run_closed_loop(&feeder, &scenario)?;
    println!("  t  true  selected  min |V|   MAPE X    Σq (kVAr)");
    for s in &trace.steps {
        let vmin = s.v_true.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:3}  {:>4}  {:>8}  {vmin:.4}  {:>7}  {:+9.1}",
            s.t,
            s.true_config,
            s.selected_config.as_deref().unwrap_or("-"),
            s.mape_xx.map_or("-".into(), |m| format!("{m:.2}%")),
            s.qg.iter().sum::<f64>() * 1000.0
        );
    }
    println!("violation energy {:.3e}", trace.violation_energy());
    Ok(())
}
