//! Compares LinDistFlow voltages `v = R·p + X·q + v0` with the nonlinear
//! sweep power flow on the 123-bus feeder at a few loading levels.
//!
//! cargo run --example linear_vs_nonlinear

use gridsense::feeder::Feeder;
use gridsense::sensitivity::{predict_squared_voltages, sensitivity_matrices, InjectionState};
use gridsense::sim::power_flow::{solve_power_flow, PowerFlowOptions};

fn main() -> gridsense::error::Result<()> {
    let feeder = Feeder::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee123.json"))?;
    let config = feeder.configure(feeder.config_index("0")?)?;
    let sens = sensitivity_matrices(&config.topology, &config.params)?;
    for scale in [0.1, 0.5, 1.0] {
        let p = -&feeder.base_pd * scale;
        let q = -&feeder.base_qd * scale;
        let flow = solve_power_flow(&config.topology, &config.params, &p, &q, 1.0, PowerFlowOptions::default())?;
        let exact = flow.squared_magnitudes();
        let linear = predict_squared_voltages(&sens, &InjectionState { p, q, v0: 1.0 })?;
        let gap = (&linear - &exact).amax();
        println!(
            "load ×{scale}: min |V| {:.4}, losses {:.2} kW, largest squared-voltage gap {gap:.2e} ({} sweeps)",
            exact.min().sqrt(),
            flow.losses(&config.params) * 1000.0,
            flow.iterations
        );
    }
    Ok(())
}
