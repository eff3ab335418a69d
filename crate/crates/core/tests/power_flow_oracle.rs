//! The sweep power flow against an independent Newton–Raphson solver in
//! polar coordinates built on the bus admittance matrix.

mod common;

use gridsense::sensitivity::{predict_from_lines, InjectionState, LineParameters};
use gridsense::sim::power_flow::{solve_power_flow, PowerFlowOptions};
use gridsense::topology::FeederTopology;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Bus admittance matrix over buses `0..=N`.
fn admittance(topology: &FeederTopology, params: &LineParameters) -> DMatrix<Complex64> {
    let n = topology.n();
    let mut y = DMatrix::from_element(n + 1, n + 1, Complex64::new(0.0, 0.0));
    for bus in 1..=n {
        let parent = topology.parent(bus).unwrap();
        let c = bus - 1;
        let yl = Complex64::new(1.0, 0.0) / Complex64::new(params.r[c], params.x[c]);
        y[(bus, bus)] += yl;
        y[(parent, parent)] += yl;
        y[(bus, parent)] -= yl;
        y[(parent, bus)] -= yl;
    }
    y
}

/// Complex power injected at every bus by the voltages `v` (bus 0 first).
fn injected_power(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let current = y * DVector::from_column_slice(v);
    v.iter().zip(current.iter()).map(|(vi, ii)| vi * ii.conj()).collect()
}

/// Polar Newton–Raphson with the analytic Jacobian. Returns voltages for
/// buses `0..=N`.
fn newton_power_flow(y: &DMatrix<Complex64>, p: &[f64], q: &[f64], v0: f64) -> Vec<Complex64> {
    let n = p.len();
    let mut theta = vec![0.0; n + 1];
    let mut mag = vec![v0; n + 1];
    for _ in 0..50 {
        let v: Vec<Complex64> = (0..=n).map(|i| Complex64::from_polar(mag[i], theta[i])).collect();
        let s = injected_power(y, &v);
        let mismatch = DVector::from_fn(2 * n, |k, _| {
            if k < n {
                p[k] - s[k + 1].re
            } else {
                q[k - n] - s[k - n + 1].im
            }
        });
        if mismatch.amax() < 1e-14 {
            return v;
        }
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for i in 1..=n {
            let (pi, qi) = (s[i].re, s[i].im);
            for j in 1..=n {
                let (g, b) = (y[(i, j)].re, y[(i, j)].im);
                let (r, c) = (i - 1, j - 1);
                if i == j {
                    jac[(r, c)] = -qi - b * mag[i] * mag[i];
                    jac[(r, n + c)] = pi / mag[i] + g * mag[i];
                    jac[(n + r, c)] = pi - g * mag[i] * mag[i];
                    jac[(n + r, n + c)] = qi / mag[i] - b * mag[i];
                } else if g != 0.0 || b != 0.0 {
                    let t = theta[i] - theta[j];
                    let (sn, cs) = t.sin_cos();
                    jac[(r, c)] = mag[i] * mag[j] * (g * sn - b * cs);
                    jac[(r, n + c)] = mag[i] * (g * cs + b * sn);
                    jac[(n + r, c)] = -mag[i] * mag[j] * (g * cs + b * sn);
                    jac[(n + r, n + c)] = mag[i] * (g * sn - b * cs);
                }
            }
        }
        let step = jac.lu().solve(&mismatch).expect("Jacobian is nonsingular near the solution");
        for i in 1..=n {
            theta[i] += step[i - 1];
            mag[i] += step[n + i - 1];
        }
        // Admittances near 1e3 put the mismatch floor at roundoff; a
        // negligible step is the reliable stop.
        if step.amax() < 1e-14 {
            return (0..=n).map(|i| Complex64::from_polar(mag[i], theta[i])).collect();
        }
    }
    panic!("Newton–Raphson did not converge");
}

fn nominal(scale: f64) -> Vec<(String, FeederTopology, LineParameters, DVector<f64>, DVector<f64>)> {
    let feeder = common::ieee123();
    let p = -&feeder.base_pd * scale;
    let q = -&feeder.base_qd * scale;
    feeder
        .enumerate_configurations()
        .unwrap()
        .feasible
        .into_iter()
        .map(|c| (c.name, (*c.topology).clone(), c.params, p.clone(), q.clone()))
        .collect()
}

#[test]
fn sweep_solution_balances_power_at_every_bus() {
    for (name, topo, params, p, q) in nominal(1.0) {
        let opts = PowerFlowOptions {
            tol: 1e-13,
            max_iter: 200,
        };
        let sol = solve_power_flow(&topo, &params, &p, &q, 1.0, opts).unwrap();
        assert!(sol.converged);
        let y = admittance(&topo, &params);
        let mut v = vec![Complex64::new(1.0, 0.0)];
        v.extend(sol.voltages.iter().copied());
        let s = injected_power(&y, &v);
        let worst = (1..=topo.n())
            .map(|i| (s[i] - Complex64::new(p[i - 1], q[i - 1])).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "configuration {name}: power mismatch {worst:e}");
    }
}

#[test]
fn sweep_matches_newton_raphson() {
    for (name, topo, params, p, q) in nominal(1.0) {
        let sol = solve_power_flow(&topo, &params, &p, &q, 1.02, PowerFlowOptions::default()).unwrap();
        let y = admittance(&topo, &params);
        let reference = newton_power_flow(&y, p.as_slice(), q.as_slice(), 1.02);
        let worst = sol
            .voltages
            .iter()
            .zip(&reference[1..])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "configuration {name}: voltage difference {worst:e}");
    }
}

#[test]
fn sweep_matches_newton_raphson_with_generation() {
    let mut rng = common::rng(17);
    for _ in 0..20 {
        let n = 30;
        let topo = common::random_tree(n, &mut rng);
        let r = common::positive(n, 1e-3, 2e-2, &mut rng);
        let x = common::positive(n, 1e-3, 2e-2, &mut rng);
        let params = LineParameters::new(DVector::from_vec(r), DVector::from_vec(x)).unwrap();
        let p = DVector::from_vec(common::positive(n, -0.05, 0.03, &mut rng));
        let q = DVector::from_vec(common::positive(n, -0.03, 0.03, &mut rng));
        let sol = solve_power_flow(&topo, &params, &p, &q, 1.0, PowerFlowOptions::default()).unwrap();
        let reference = newton_power_flow(&admittance(&topo, &params), p.as_slice(), q.as_slice(), 1.0);
        for (a, b) in sol.voltages.iter().zip(&reference[1..]) {
            assert!((a - b).norm() < 1e-8);
        }
    }
}

#[test]
fn linear_model_error_shrinks_with_load() {
    let (_, topo, params, p, q) = nominal(1.0).swap_remove(0);
    let mut errors = Vec::new();
    for scale in [1.0, 0.1, 0.01] {
        let (ps, qs) = (&p * scale, &q * scale);
        let sol = solve_power_flow(&topo, &params, &ps, &qs, 1.0, PowerFlowOptions::default()).unwrap();
        let inj = InjectionState { p: ps, q: qs, v0: 1.0 };
        let lin = predict_from_lines(&topo, params.r.as_slice(), params.x.as_slice(), &inj).unwrap();
        errors.push((sol.squared_magnitudes() - lin).amax());
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "errors {errors:?}");
    // Losses are second order in the load.
    assert!(errors[2] < errors[0] * 1e-3, "errors {errors:?}");
}
