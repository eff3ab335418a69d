//! Solves one DER setpoint problem on the 123-bus feeder: four reactive-power
//! DERs lift an undervoltage caused by heavy loading.
//!
//! cargo run --example der_setpoints

use gridsense::controller::{evaluate_cost, solve_control, ControlProblem, DerFleet};
use gridsense::feeder::Feeder;
use gridsense::sensitivity::sensitivity_matrices;
use nalgebra::DVector;

fn main() -> gridsense::error::Result<()> {
    let feeder = Feeder::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee123.json"))?;
    let config = feeder.configure(feeder.config_index("0")?)?;
    let sens = sensitivity_matrices(&config.topology, &config.params)?;
    let buses = ["76", "97", "105", "112"]
        .iter()
        .map(|b| feeder.bus_by_name(b))
        .collect::<gridsense::error::Result<Vec<_>>>()?;
    // ±200 kVAr on a 1 MVA base
    let fleet = DerFleet::reactive_only(buses, 0.2)?;
    let problem = ControlProblem::new(sens, fleet.clone(), &feeder.base_pd * 0.8, &feeder.base_qd * 0.8, 1.0);

    let zero = DVector::zeros(fleet.len());
    let idle = evaluate_cost(&problem, &zero, &zero)?;
    let before = problem.predict(&zero, &zero);
    println!("without DERs: cost {:.3}, lowest voltage {:.4}", idle.objective, before.min().sqrt());

    let set = solve_control(&problem)?;
    println!(
        "with DERs:    cost {:.3}, lowest voltage {:.4} after {} iterations",
        set.objective,
        set.v_pred.min().sqrt(),
        set.iterations
    );
    for (j, bus) in ["76", "97", "105", "112"].iter().enumerate() {
        println!("  bus {bus}: q = {:+.1} kVAr", set.qg[j] * 1000.0);
    }
    Ok(())
}
