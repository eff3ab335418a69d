//! Shared generators for the integration tests.
#![allow(dead_code)]

use gridsense::controller::ControlProblem;
use gridsense::feeder::Feeder;
use gridsense::topology::{Bus, FeederTopology, Line};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random tree on buses `0..=n`: each bus attaches to a uniformly drawn
/// earlier bus under a random relabelling, line ids are shuffled and about
/// half of the lines are listed child-to-parent.
pub fn random_tree_lines(n: usize, rng: &mut impl Rng) -> Vec<Line> {
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(rng);
    let label = |k: usize| if k == 0 { 0 } else { labels[k - 1] };
    let mut ids: Vec<usize> = (1..=n).map(|k| 1000 + 7 * k).collect();
    ids.shuffle(rng);
    let mut lines: Vec<Line> = (1..=n)
        .map(|k| {
            let parent = rng.random_range(0..k);
            let (a, b) = (label(parent), label(k));
            if rng.random_bool(0.5) {
                Line::new(ids[k - 1], a, b)
            } else {
                Line::new(ids[k - 1], b, a)
            }
        })
        .collect();
    lines.shuffle(rng);
    lines
}

pub fn random_tree(n: usize, rng: &mut impl Rng) -> FeederTopology {
    let lines = random_tree_lines(n, rng);
    FeederTopology::new((0..=n).map(Bus::new).collect(), &lines).expect("generated tree is radial")
}

/// Random positive per-line values in `[lo, hi)`.
pub fn positive(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Independent breadth-first traversal on an adjacency list: the buses
/// below each line, found without using the topology's own structures.
pub fn downstream_by_traversal(n: usize, lines: &[Line]) -> Vec<(usize, Vec<usize>)> {
    let mut adj = vec![Vec::new(); n + 1];
    for l in lines {
        adj[l.from_bus].push(l.to_bus);
        adj[l.to_bus].push(l.from_bus);
    }
    let mut dist = vec![usize::MAX; n + 1];
    dist[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    lines
        .iter()
        .map(|l| {
            let child = if dist[l.from_bus] > dist[l.to_bus] { l.from_bus } else { l.to_bus };
            let parent = if child == l.from_bus { l.to_bus } else { l.from_bus };
            let mut seen = vec![false; n + 1];
            seen[parent] = true;
            seen[child] = true;
            let mut stack = vec![child];
            let mut out = Vec::new();
            while let Some(u) = stack.pop() {
                out.push(u);
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            out.sort_unstable();
            (l.id, out)
        })
        .collect()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn ieee123() -> Feeder {
    Feeder::load(data_path("ieee123.json")).expect("shipped feeder loads")
}

/// Injections on `topology` for which the lines in `zeroed` carry no
/// combined flow `Σ_{i∈𝓝_ℓ} z_ℓ p_i + q_i`, and the buses in `silent` (with
/// everything below them) draw nothing. Deeper lines are cancelled first so
/// later corrections, which only touch a line's own bus, keep them at zero.
pub fn adversarial_injection(
    topology: &FeederTopology,
    z: &[f64],
    zeroed: &[usize],
    silent: &[usize],
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let n = topology.n();
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.05)).collect();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
    for &b in silent {
        for &d in topology.downstream_of_column(b - 1) {
            p[d - 1] = 0.0;
            q[d - 1] = 0.0;
        }
    }
    let mut order: Vec<usize> = zeroed.to_vec();
    order.sort_by_key(|&c| std::cmp::Reverse(topology.depth(c + 1)));
    for c in order {
        let s: f64 = topology
            .downstream_of_column(c)
            .iter()
            .map(|&i| z[c] * p[i - 1] + q[i - 1])
            .sum();
        q[c] -= s;
    }
    (p, q)
}

/// Objective of a control problem evaluated from its definition.
pub fn control_objective(problem: &ControlProblem, u: &DVector<f64>) -> f64 {
    let k = problem.fleet.len();
    let (pg, qg) = (u.rows(0, k), u.rows(k, k));
    let mut inj_p = -&problem.pd;
    let mut inj_q = -&problem.qd;
    for (j, &b) in problem.fleet.buses.iter().enumerate() {
        inj_p[b - 1] += pg[j];
        inj_q[b - 1] += qg[j];
    }
    let v = (&problem.sens.r * inj_p + &problem.sens.x * inj_q).add_scalar(problem.v0);
    let mut f = 0.0;
    for j in 0..k {
        f += problem.fleet.wp[j] * pg[j] * pg[j] + problem.fleet.wq[j] * qg[j] * qg[j];
    }
    for i in 0..v.len() {
        f += problem.beta1 * (problem.v_lo[i] - v[i]).max(0.0).powi(2);
        f += problem.beta2 * (v[i] - problem.v_hi[i]).max(0.0).powi(2);
    }
    f
}

/// Accelerated projected gradient (FISTA with restart on increase) with the
/// fixed step `1/L`, where `L` bounds the gradient's Lipschitz constant.
pub fn first_order_control(problem: &ControlProblem) -> (DVector<f64>, f64) {
    let k = problem.fleet.len();
    let n = problem.sens.n();
    let mut a = DMatrix::zeros(n, 2 * k);
    for (j, &b) in problem.fleet.buses.iter().enumerate() {
        a.set_column(j, &problem.sens.r.column(b - 1));
        a.set_column(k + j, &problem.sens.x.column(b - 1));
    }
    let w: DVector<f64> = DVector::from_iterator(2 * k, problem.fleet.wp.iter().chain(problem.fleet.wq.iter()).copied());
    let lo: DVector<f64> = DVector::from_iterator(2 * k, problem.fleet.p_min.iter().chain(problem.fleet.q_min.iter()).copied());
    let hi: DVector<f64> = DVector::from_iterator(2 * k, problem.fleet.p_max.iter().chain(problem.fleet.q_max.iter()).copied());
    let base = (&problem.sens.r * &problem.pd + &problem.sens.x * &problem.qd).map(|d| problem.v0 - d);
    let beta = problem.beta1.max(problem.beta2);
    let lipschitz = 2.0 * w.max() + 2.0 * beta * a.norm_squared();
    let step = 1.0 / lipschitz.max(1e-12);
    let grad = |u: &DVector<f64>| {
        let v = &base + &a * u;
        let dv = DVector::from_fn(n, |i, _| {
            let lo = problem.v_lo[i] - v[i];
            let hi = v[i] - problem.v_hi[i];
            if lo > 0.0 {
                -2.0 * problem.beta1 * lo
            } else if hi > 0.0 {
                2.0 * problem.beta2 * hi
            } else {
                0.0
            }
        });
        a.tr_mul(&dv) + w.component_mul(u) * 2.0
    };
    let project = |u: DVector<f64>| DVector::from_fn(2 * k, |j, _| u[j].clamp(lo[j], hi[j]));
    let mut x = project(DVector::zeros(2 * k));
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = control_objective(problem, &x);
    for _ in 0..2_000_000 {
        let next = project(&y - grad(&y) * step);
        let f_next = control_objective(problem, &next);
        if f_next > fx {
            // Restart the momentum.
            y = x.clone();
            t = 1.0;
            continue;
        }
        let moved = (&next - &x).amax();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        fx = f_next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    (x, fx)
}

/// A random control problem on a tree of 4..=20 buses with 1..=4 DERs and
/// the default penalty weights. Demand is heavy enough that some instances
/// cannot reach the voltage band.
pub fn random_control_problem(rng: &mut impl Rng) -> ControlProblem {
    use gridsense::controller::DerFleet;
    use gridsense::sensitivity::SensitivityMatrices;
    let n = rng.random_range(4..=20);
    let topo = random_tree(n, rng);
    let r = positive(n, 0.002, 0.02, rng);
    let x = positive(n, 0.002, 0.02, rng);
    let sens = SensitivityMatrices::from_lines(&topo, &r, &x).expect("dimensions match");
    let k = rng.random_range(1..=4);
    let buses = (0..k).map(|_| rng.random_range(1..=n)).collect();
    let mut fleet = DerFleet::reactive_only(buses, rng.random_range(0.02..0.3)).expect("valid fleet");
    if rng.random_bool(0.5) {
        fleet.p_min = DVector::from_element(k, -0.05);
        fleet.p_max = DVector::from_element(k, 0.1);
    }
    let pd = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.3));
    let qd = DVector::from_fn(n, |_, _| rng.random_range(-0.02..0.15));
    let v0 = rng.random_range(0.95f64..1.06).powi(2);
    ControlProblem::new(sens, fleet, pd, qd, v0)
}
