//! DER setpoint optimization.
//!
//! Decision variables are the DER injections `u = (p^g, q^g)`. Predicted
//! squared voltages are affine in `u`,
//!
//! ```text
//! v(u) = v0·1 − R p^d − X q^d + R C p^g + X C q^g,
//! ```
//!
//! and the cost is
//!
//! ```text
//! c(u) = p^gᵀ W^p p^g + q^gᵀ W^q q^g + β₁‖[v̲ − v]₊‖² + β₂‖[v − v̄]₊‖²
//! ```
//!
//! minimized over the DER capacity box. The objective is convex and C¹, so
//! a projected method with a line search converges to the global minimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sensitivity::SensitivityMatrices;
use crate::topology::{DEFAULT_V_MAX, DEFAULT_V_MIN};

pub const DEFAULT_BETA: f64 = 1e5;

#[derive(Debug, Clone, PartialEq)]
pub struct DerFleet {
    /// Bus id (1..=N) of each DER.
    pub buses: Vec<usize>,
    pub p_min: DVector<f64>,
    pub p_max: DVector<f64>,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub wp: DVector<f64>,
    pub wq: DVector<f64>,
}

impl DerFleet {
    pub fn new(
        buses: Vec<usize>,
        p_bounds: (DVector<f64>, DVector<f64>),
        q_bounds: (DVector<f64>, DVector<f64>),
        wp: DVector<f64>,
        wq: DVector<f64>,
    ) -> Result<Self> {
        let fleet = DerFleet {
            buses,
            p_min: p_bounds.0,
            p_max: p_bounds.1,
            q_min: q_bounds.0,
            q_max: q_bounds.1,
            wp,
            wq,
        };
        fleet.validate()?;
        Ok(fleet)
    }

    /// DERs that only inject reactive power within `±q_limit`, with the
    /// default weights.
    pub fn reactive_only(buses: Vec<usize>, q_limit: f64) -> Result<Self> {
        let n = buses.len();
        let w = default_weights(n);
        Self::new(
            buses,
            (DVector::zeros(n), DVector::zeros(n)),
            (DVector::from_element(n, -q_limit), DVector::from_element(n, q_limit)),
            w.clone(),
            w,
        )
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.buses.len();
        for (name, v) in [
            ("DER p_min", &self.p_min),
            ("DER p_max", &self.p_max),
            ("DER q_min", &self.q_min),
            ("DER q_max", &self.q_max),
            ("DER p weights", &self.wp),
            ("DER q weights", &self.wq),
        ] {
            if v.len() != n {
                return Err(Error::dims(name, n, v.len()));
            }
        }
        for j in 0..n {
            if !(self.p_min[j] <= self.p_max[j]) || !(self.q_min[j] <= self.q_max[j]) {
                return Err(Error::Invalid(format!("DER {j} has an empty capacity box")));
            }
            if !(self.wp[j] >= 0.0 && self.wq[j] >= 0.0) {
                return Err(Error::Invalid(format!("DER {j} has a negative cost weight")));
            }
        }
        Ok(())
    }
}

/// `w_i = 1 + 0.1·i` for DERs numbered from 1.
pub fn default_weights(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| 1.0 + 0.1 * (j + 1) as f64)
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub sens: SensitivityMatrices,
    pub fleet: DerFleet,
    pub pd: DVector<f64>,
    pub qd: DVector<f64>,
    /// Squared substation voltage.
    pub v0: f64,
    /// Squared-voltage bounds per bus.
    pub v_lo: DVector<f64>,
    pub v_hi: DVector<f64>,
    pub beta1: f64,
    pub beta2: f64,
}

impl ControlProblem {
    /// Problem with uniform 0.95/1.05 p.u. bounds and `β₁ = β₂ = 1e5`.
    pub fn new(sens: SensitivityMatrices, fleet: DerFleet, pd: DVector<f64>, qd: DVector<f64>, v0: f64) -> Self {
        let n = sens.n();
        ControlProblem {
            sens,
            fleet,
            pd,
            qd,
            v0,
            v_lo: DVector::from_element(n, DEFAULT_V_MIN),
            v_hi: DVector::from_element(n, DEFAULT_V_MAX),
            beta1: DEFAULT_BETA,
            beta2: DEFAULT_BETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sens.n();
        if self.sens.x.nrows() != n || self.sens.x.ncols() != n || self.sens.r.ncols() != n {
            return Err(Error::dims("sensitivity matrices", n, self.sens.x.nrows()));
        }
        for (name, v) in [
            ("active demand", &self.pd),
            ("reactive demand", &self.qd),
            ("lower voltage bounds", &self.v_lo),
            ("upper voltage bounds", &self.v_hi),
        ] {
            if v.len() != n {
                return Err(Error::dims(name, n, v.len()));
            }
        }
        self.fleet.validate()?;
        if let Some(&b) = self.fleet.buses.iter().find(|&&b| b == 0 || b > n) {
            return Err(Error::UnknownBus(b.to_string()));
        }
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::Invalid("penalty weights must be nonnegative".into()));
        }
        if (0..n).any(|i| !(0.0 < self.v_lo[i] && self.v_lo[i] < self.v_hi[i])) {
            return Err(Error::Invalid("voltage bounds must satisfy 0 < v_lo < v_hi".into()));
        }
        Ok(())
    }

    /// Predicted squared voltages for the given DER injections.
    pub fn predict(&self, pg: &DVector<f64>, qg: &DVector<f64>) -> DVector<f64> {
        let a = Affine::new(self);
        a.eval(&stack(pg, qg))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSetpoints {
    pub pg: DVector<f64>,
    pub qg: DVector<f64>,
    /// Predicted squared voltages at the setpoints.
    pub v_pred: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective at every accepted iterate, starting point included.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cost {
    pub objective: f64,
    pub grad_p: DVector<f64>,
    pub grad_q: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `‖P(u − ∇c) − u‖ ≤ tol·(1 + |c|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// `v(u) = base + A u` with `A = [R C, X C]`.
struct Affine {
    a: DMatrix<f64>,
    base: DVector<f64>,
}

impl Affine {
    fn new(problem: &ControlProblem) -> Self {
        let n = problem.sens.n();
        let k = problem.fleet.len();
        let mut a = DMatrix::zeros(n, 2 * k);
        for (j, &bus) in problem.fleet.buses.iter().enumerate() {
            a.set_column(j, &problem.sens.r.column(bus - 1));
            a.set_column(k + j, &problem.sens.x.column(bus - 1));
        }
        let base = (&problem.sens.r * &problem.pd + &problem.sens.x * &problem.qd).map(|d| problem.v0 - d);
        Affine { a, base }
    }

    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.base + &self.a * u
    }
}

struct Objective<'a> {
    problem: &'a ControlProblem,
    affine: Affine,
    w: DVector<f64>,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a ControlProblem) -> Self {
        let w = stack(&problem.fleet.wp, &problem.fleet.wq);
        Objective {
            problem,
            affine: Affine::new(problem),
            w,
        }
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        let v = self.affine.eval(u);
        let p = self.problem;
        let mut f: f64 = u.iter().zip(self.w.iter()).map(|(x, w)| w * x * x).sum();
        for i in 0..v.len() {
            let lo = (p.v_lo[i] - v[i]).max(0.0);
            let hi = (v[i] - p.v_hi[i]).max(0.0);
            f += p.beta1 * lo * lo + p.beta2 * hi * hi;
        }
        f
    }

    /// Objective, gradient and the per-bus curvature weights of the active
    /// penalty pieces.
    fn full(&self, u: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let v = self.affine.eval(u);
        let p = self.problem;
        let n = v.len();
        let mut f: f64 = u.iter().zip(self.w.iter()).map(|(x, w)| w * x * x).sum();
        let mut dv = DVector::zeros(n);
        let mut curv = DVector::zeros(n);
        for i in 0..n {
            let lo = p.v_lo[i] - v[i];
            let hi = v[i] - p.v_hi[i];
            if lo > 0.0 {
                f += p.beta1 * lo * lo;
                dv[i] = -2.0 * p.beta1 * lo;
                curv[i] = p.beta1;
            } else if hi > 0.0 {
                f += p.beta2 * hi * hi;
                dv[i] = 2.0 * p.beta2 * hi;
                curv[i] = p.beta2;
            }
        }
        let grad = self.affine.a.tr_mul(&dv) + self.w.component_mul(u) * 2.0;
        (f, grad, curv)
    }

    /// Generalized Hessian `2W + 2AᵀDA`.
    fn hessian(&self, curv: &DVector<f64>) -> DMatrix<f64> {
        let a = &self.affine.a;
        let da = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| curv[i] * a[(i, j)]);
        let mut h = a.tr_mul(&da) * 2.0;
        for j in 0..h.nrows() {
            h[(j, j)] += 2.0 * self.w[j];
        }
        h
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn project(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(u.len(), |j, _| u[j].clamp(lo[j], hi[j]))
}

/// Cost and gradient at the given injections.
pub fn evaluate_cost(problem: &ControlProblem, pg: &DVector<f64>, qg: &DVector<f64>) -> Result<Cost> {
    problem.validate()?;
    let k = problem.fleet.len();
    if pg.len() != k {
        return Err(Error::dims("DER active setpoints", k, pg.len()));
    }
    if qg.len() != k {
        return Err(Error::dims("DER reactive setpoints", k, qg.len()));
    }
    let (objective, grad, _) = Objective::new(problem).full(&stack(pg, qg));
    Ok(Cost {
        objective,
        grad_p: grad.rows(0, k).into_owned(),
        grad_q: grad.rows(k, k).into_owned(),
    })
}

pub fn solve_control(problem: &ControlProblem) -> Result<ControlSetpoints> {
    solve_control_with(problem, SolverOptions::default())
}

/// Projected Newton iterations on the generalized Hessian, restricted to the
/// variables not held at a bound, with a diagonally preconditioned projected
/// gradient step as fallback. Every accepted step passes an Armijo test, so
/// the objective never increases.
pub fn solve_control_with(problem: &ControlProblem, opts: SolverOptions) -> Result<ControlSetpoints> {
    problem.validate()?;
    let k = problem.fleet.len();
    let fleet = &problem.fleet;
    let lo = stack(&fleet.p_min, &fleet.q_min);
    let hi = stack(&fleet.p_max, &fleet.q_max);
    let obj = Objective::new(problem);
    let dim = 2 * k;

    let mut u = project(&DVector::zeros(dim), &lo, &hi);
    let (mut f, mut g, mut curv) = obj.full(&u);
    let mut history = vec![f];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let finish = |u: &DVector<f64>, f: f64, iterations: usize, history: Vec<f64>| ControlSetpoints {
        pg: u.rows(0, k).into_owned(),
        qg: u.rows(k, k).into_owned(),
        v_pred: obj.affine.eval(u),
        objective: f,
        iterations,
        objective_history: history,
    };

    while iterations < opts.max_iter {
        residual = (project(&(&u - &g), &lo, &hi) - &u).norm();
        if residual <= opts.tol * (1.0 + f.abs()) {
            return Ok(finish(&u, f, iterations, history));
        }
        iterations += 1;
        let h = obj.hessian(&curv);

        let mut accepted = None;
        if let Some(d) = newton_direction(&h, &g, &u, &lo, &hi) {
            accepted = line_search(&obj, &u, f, &g, &d, &lo, &hi);
        }
        if accepted.is_none() {
            let d = DVector::from_fn(dim, |j, _| {
                let hjj = h[(j, j)];
                -g[j] / if hjj > 0.0 { hjj } else { 1.0 }
            });
            accepted = line_search(&obj, &u, f, &g, &d, &lo, &hi);
        }
        match accepted {
            Some((next, f_next)) => {
                u = next;
                (f, g, curv) = obj.full(&u);
                debug_assert!(f <= f_next + 1e-12 * (1.0 + f_next.abs()));
                history.push(f);
            }
            // No descent is representable from here.
            None => break,
        }
    }
    residual = residual.min((project(&(&u - &g), &lo, &hi) - &u).norm());
    if residual <= opts.tol * (1.0 + f.abs()) {
        return Ok(finish(&u, f, iterations, history));
    }
    Err(Error::ControlNotConverged {
        iterations,
        residual,
        best: Box::new(finish(&u, f, iterations, history)),
    })
}

/// Newton step on the free variables; bound variables whose gradient points
/// outward stay fixed.
fn newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    u: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<DVector<f64>> {
    let free: Vec<usize> = (0..u.len())
        .filter(|&j| lo[j] < hi[j] && !(u[j] <= lo[j] && g[j] > 0.0) && !(u[j] >= hi[j] && g[j] < 0.0))
        .collect();
    if free.is_empty() {
        return None;
    }
    let m = free.len();
    let mut hff = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let scale = (0..m).map(|a| hff[(a, a)]).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for a in 0..m {
        hff[(a, a)] += 1e-14 * scale;
    }
    let rhs = DVector::from_fn(m, |a, _| -g[free[a]]);
    let step = hff.cholesky()?.solve(&rhs);
    let mut d = DVector::zeros(u.len());
    for (a, &j) in free.iter().enumerate() {
        d[j] = step[a];
    }
    Some(d)
}

/// Projected backtracking with the Armijo condition
/// `c(P(u + αd)) ≤ c(u) + σ ∇cᵀ(P(u + αd) − u)`.
fn line_search(
    obj: &Objective<'_>,
    u: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    const SIGMA: f64 = 1e-4;
    let mut alpha = 1.0;
    for _ in 0..60 {
        let next = project(&(u + d * alpha), lo, hi);
        let step = &next - u;
        let decrease = g.dot(&step);
        if decrease < 0.0 {
            let f_next = obj.value(&next);
            if f_next <= f + SIGMA * decrease {
                return Some((next, f_next));
            }
        } else if step.amax() == 0.0 {
            return None;
        }
        alpha *= 0.5;
    }
    None
}
