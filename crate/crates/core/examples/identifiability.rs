//! Shows a line becoming unidentifiable when nothing downstream of it draws
//! or injects power, and the regression rank dropping with it.
//!
//! cargo run --example identifiability

use gridsense::estimator::{assemble_regression, check_identifiability, estimate_parameters, RankTolerance, IDENTIFIABILITY_TOL};
use gridsense::measurement::{MeasurementSnapshot, MeasurementWindow};
use gridsense::sensitivity::{predict_from_lines, InjectionState};
use gridsense::topology::{Bus, FeederTopology, Line};
use nalgebra::DVector;

fn main() -> gridsense::error::Result<()> {
    // 0 - 1 - 2 - 3, with a lateral 1 - 4
    let topo = FeederTopology::new(
        (0..5).map(Bus::new).collect(),
        &[Line::new(1, 0, 1), Line::new(2, 1, 2), Line::new(3, 2, 3), Line::new(4, 1, 4)],
    )?;
    let r = [0.01, 0.02, 0.015, 0.03];
    let x = [0.02, 0.03, 0.02, 0.04];
    let z = DVector::from_iterator(4, r.iter().zip(&x).map(|(a, b)| a / b));

    for (label, p3) in [("bus 3 loaded", -0.05), ("bus 3 idle", 0.0)] {
        let p = DVector::from_row_slice(&[-0.1, 0.0, p3, -0.05]);
        let q = p.map(|v| 0.5 * v);
        let v = predict_from_lines(&topo, &r, &x, &InjectionState { p: p.clone(), q: q.clone(), v0: 1.0 })?;
        let window = MeasurementWindow::from_snapshots(1, 1.0, [MeasurementSnapshot::new(1, 1.0, v, p, q)?])?;
        let id = check_identifiability(&topo, &z, &window, IDENTIFIABILITY_TOL)?;
        let fit = estimate_parameters(&assemble_regression(&topo, &z, &window)?, &z, RankTolerance::Exact)?;
        println!(
            "{label}: predicted rank {}, numerical rank {}, unidentifiable lines {:?}, x̂ = {:.4?}",
            id.predicted_rank,
            fit.effective_rank,
            id.unidentifiable_lines(),
            fit.x_hat.as_slice()
        );
    }
    Ok(())
}
