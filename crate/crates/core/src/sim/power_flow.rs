//! Nonlinear radial power flow by backward/forward sweep.
//!
//! This is the ground-truth physics for the simulator: it keeps the line
//! losses and angle differences that LinDistFlow drops.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sensitivity::LineParameters;
use crate::topology::FeederTopology;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest voltage update (p.u.).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Complex bus voltages for buses `1..=N`; the substation is at angle 0.
    pub voltages: Vec<Complex64>,
    /// Sending-end complex power on each line column.
    pub flows: Vec<Complex64>,
    /// Squared branch current magnitude on each line column.
    pub current_sq: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerFlowSolution {
    pub fn magnitudes(&self) -> DVector<f64> {
        DVector::from_iterator(self.voltages.len(), self.voltages.iter().map(|v| v.norm()))
    }

    pub fn squared_magnitudes(&self) -> DVector<f64> {
        DVector::from_iterator(self.voltages.len(), self.voltages.iter().map(|v| v.norm_sqr()))
    }

    /// Total active losses (p.u.).
    pub fn losses(&self, params: &LineParameters) -> f64 {
        self.current_sq.iter().zip(params.r.iter()).map(|(l, r)| l * r).sum()
    }
}

/// Solves for bus voltages given net injections `p`, `q` (generation
/// positive) and the substation voltage magnitude `v0_mag`.
pub fn solve_power_flow(
    topology: &FeederTopology,
    params: &LineParameters,
    p: &DVector<f64>,
    q: &DVector<f64>,
    v0_mag: f64,
    opts: PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    let n = topology.n();
    if params.len() != n {
        return Err(Error::dims("line parameters", n, params.len()));
    }
    if p.len() != n || q.len() != n {
        return Err(Error::dims("power-flow injections", n, p.len().min(q.len())));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("power-flow tolerance must be positive".into()));
    }
    let order = topology.breadth_first();
    let source = Complex64::new(v0_mag, 0.0);
    let impedance: Vec<Complex64> = (0..n).map(|c| Complex64::new(params.r[c], params.x[c])).collect();
    let injection: Vec<Complex64> = (0..n).map(|i| Complex64::new(p[i], q[i])).collect();

    let mut v = vec![source; n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut update = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        // Backward: branch current drawn through the line ending at each bus.
        for (c, b) in branch.iter_mut().enumerate() {
            *b = -(injection[c] / v[c]).conj();
        }
        for &bus in order.iter().rev() {
            let parent = topology.parent(bus).unwrap();
            if parent != 0 {
                let child = branch[bus - 1];
                branch[parent - 1] += child;
            }
        }
        // Forward: voltage drop along each line.
        update = 0.0;
        for &bus in order {
            let parent = topology.parent(bus).unwrap();
            let upstream = if parent == 0 { source } else { v[parent - 1] };
            let next = upstream - impedance[bus - 1] * branch[bus - 1];
            update = f64::max(update, (next - v[bus - 1]).norm());
            v[bus - 1] = next;
        }
        if update < opts.tol {
            let mut flows = vec![Complex64::new(0.0, 0.0); n];
            for &bus in order {
                let parent = topology.parent(bus).unwrap();
                let upstream = if parent == 0 { source } else { v[parent - 1] };
                flows[bus - 1] = upstream * branch[bus - 1].conj();
            }
            let current_sq = branch.iter().map(|b| b.norm_sqr()).collect();
            return Ok(PowerFlowSolution {
                voltages: v,
                flows,
                current_sq,
                iterations: iter,
                converged: true,
            });
        }
        if !update.is_finite() {
            break;
        }
    }
    Err(Error::PowerFlowNotConverged {
        iterations: opts.max_iter,
        update,
        voltages: v.iter().map(|x| x.norm()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Bus, Line};

    fn two_bus(r: f64, x: f64) -> (FeederTopology, LineParameters) {
        let t = FeederTopology::new(vec![Bus::new(0), Bus::new(1)], &[Line::new(1, 0, 1)]).unwrap();
        let p = LineParameters::new(DVector::from_row_slice(&[r]), DVector::from_row_slice(&[x])).unwrap();
        (t, p)
    }

    #[test]
    fn no_load_is_flat() {
        let (t, params) = two_bus(0.01, 0.02);
        let sol = solve_power_flow(&t, &params, &DVector::zeros(1), &DVector::zeros(1), 1.03, Default::default()).unwrap();
        assert!((sol.voltages[0].norm() - 1.03).abs() < 1e-15);
        assert_eq!(sol.flows[0].norm(), 0.0);
    }

    #[test]
    fn single_reactive_line_matches_closed_form() {
        // Receiving end voltage of a lossless line feeding a pure reactive
        // load Q: V² = (V0² − 2xQ + sqrt((V0² − 2xQ)² − 4x²Q²)) / 2 ... with
        // r = 0 this reduces to V⁴ − (V0² − 2xQ)V² + x²Q² = 0.
        let (x, qload, v0) = (0.1, 0.1, 1.0);
        let (t, params) = two_bus(0.0, x);
        let sol = solve_power_flow(
            &t,
            &params,
            &DVector::zeros(1),
            &DVector::from_row_slice(&[-qload]),
            v0,
            PowerFlowOptions { tol: 1e-14, max_iter: 200 },
        )
        .unwrap();
        let b = v0 * v0 - 2.0 * x * qload;
        let v_sq = (b + (b * b - 4.0 * x * x * qload * qload).sqrt()) / 2.0;
        assert!((sol.voltages[0].norm() - v_sq.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn divergence_is_reported() {
        let (t, params) = two_bus(0.5, 0.5);
        let err = solve_power_flow(
            &t,
            &params,
            &DVector::from_row_slice(&[-5.0]),
            &DVector::from_row_slice(&[-5.0]),
            1.0,
            Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::PowerFlowNotConverged { .. }));
    }
}
