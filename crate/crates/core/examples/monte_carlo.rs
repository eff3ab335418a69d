//! Repeats a short estimation scenario over independent seeds and reports
//! how often the true configuration is selected.
//!
//! cargo run --release --example monte_carlo -- [runs]

use gridsense::harness::{run_monte_carlo, worker_count};
use gridsense::sim::scenario::Scenario;

fn main() -> gridsense::error::Result<()> {
    let runs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/selection_92db.json"))?;
    let feeder = scenario.load_feeder()?;
    println!("{runs} runs of {} on {} workers", scenario.name, worker_count());
    let summary = run_monte_carlo(&feeder, &scenario, runs)?;
    for o in &summary.outcomes {
        println!(
            "run {:3} seed {:20}: selected {:>2} (true {})",
            o.run,
            o.seed,
            o.selected_config.as_deref().unwrap_or("-"),
            o.true_config
        );
    }
    let m = summary.metrics;
    println!(
        "accuracy {:.2}, mean MAPE x {:.2}%, mean MAPE X {:.2}%",
        m.config_accuracy.unwrap_or(0.0),
        m.mape_x.unwrap_or(f64::NAN),
        m.mape_xx.unwrap_or(f64::NAN)
    );
    Ok(())
}
