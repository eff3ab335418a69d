//! Radial feeder graphs and their incidence/path-matrix algebra.
//!
//! A [`FeederTopology`] is always canonical: bus `0` is the substation, every
//! line is oriented away from the root, and line columns are ordered by their
//! receiving bus, so column `c` is the unique line that ends at bus `c + 1`.
//! Every `N`-vector in this crate indexes bus `i` at position `i - 1`, and every
//! `L`-vector indexes the line ending at bus `i` at the same position.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Squared-voltage bounds used when a feeder file does not give any.
pub const DEFAULT_V_MIN: f64 = 0.95 * 0.95;
pub const DEFAULT_V_MAX: f64 = 1.05 * 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub name: String,
    /// Squared-voltage lower bound (p.u.²).
    pub v_min: f64,
    /// Squared-voltage upper bound (p.u.²).
    pub v_max: f64,
}

impl Bus {
    pub fn new(id: usize) -> Self {
        Bus {
            id,
            name: id.to_string(),
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub switchable: bool,
}

impl Line {
    pub fn new(id: usize, from_bus: usize, to_bus: usize) -> Self {
        Line {
            id,
            from_bus,
            to_bus,
            switchable: false,
        }
    }

    pub fn switch(id: usize, from_bus: usize, to_bus: usize) -> Self {
        Line {
            switchable: true,
            ..Line::new(id, from_bus, to_bus)
        }
    }
}

/// A validated radial configuration of a feeder.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct FeederTopology {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    column_of: HashMap<usize, usize>,
    parent: Vec<Option<usize>>,
    /// Non-root buses in breadth-first order from the root.
    order: Vec<usize>,
    depth: Vec<usize>,
    incidence_full: DMatrix<i32>,
    incidence: DMatrix<i32>,
    path: DMatrix<i32>,
    paths: Vec<Vec<usize>>,
    downstream: Vec<Vec<usize>>,
}

/// Builds the topology induced by `switch_states` (line id → closed).
///
/// Non-switchable lines are always active; every switchable line must have an
/// entry in `switch_states`.
pub fn build_topology(
    buses: Vec<Bus>,
    lines: &[Line],
    switch_states: &BTreeMap<usize, bool>,
) -> Result<FeederTopology> {
    let mut active = Vec::with_capacity(lines.len());
    for line in lines {
        if line.switchable {
            match switch_states.get(&line.id) {
                Some(true) => active.push(*line),
                Some(false) => {}
                None => {
                    return Err(Error::Invalid(format!(
                        "no state given for switch line {}",
                        line.id
                    )))
                }
            }
        } else {
            active.push(*line);
        }
    }
    FeederTopology::new(buses, &active)
}

impl FeederTopology {
    /// Canonicalizes a set of active lines into a rooted tree.
    pub fn new(mut buses: Vec<Bus>, active: &[Line]) -> Result<Self> {
        buses.sort_by_key(|b| b.id);
        for (k, bus) in buses.iter().enumerate() {
            if bus.id != k {
                return Err(Error::Invalid(format!(
                    "bus ids must be contiguous from 0, found {} at position {k}",
                    bus.id
                )));
            }
            if !(bus.v_min > 0.0 && bus.v_min < bus.v_max) {
                return Err(Error::Invalid(format!(
                    "bus {} has invalid voltage bounds [{}, {}]",
                    bus.id, bus.v_min, bus.v_max
                )));
            }
        }
        if buses.is_empty() {
            return Err(Error::Invalid("feeder has no substation bus".into()));
        }
        let n_nodes = buses.len();
        let n = n_nodes - 1;

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        let mut seen_pairs = HashSet::new();
        let mut seen_ids = HashSet::new();
        for (k, line) in active.iter().enumerate() {
            for end in [line.from_bus, line.to_bus] {
                if end >= n_nodes {
                    return Err(Error::UnknownBus(end.to_string()));
                }
            }
            if !seen_ids.insert(line.id) {
                return Err(Error::Invalid(format!("line id {} used twice", line.id)));
            }
            if line.from_bus == line.to_bus {
                return Err(Error::CycleDetected { line: line.id });
            }
            let pair = (
                line.from_bus.min(line.to_bus),
                line.from_bus.max(line.to_bus),
            );
            if !seen_pairs.insert(pair) {
                return Err(Error::DuplicateEdge {
                    from: pair.0,
                    to: pair.1,
                });
            }
            adjacency[line.from_bus].push((line.to_bus, k));
            adjacency[line.to_bus].push((line.from_bus, k));
        }

        // Breadth-first search from the substation orients every line.
        let mut parent = vec![None; n_nodes];
        let mut parent_edge: Vec<Option<usize>> = vec![None; n_nodes];
        let mut depth = vec![0usize; n_nodes];
        let mut visited = vec![false; n_nodes];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(w, edge) in &adjacency[u] {
                if parent_edge[u] == Some(edge) {
                    continue;
                }
                if visited[w] {
                    return Err(Error::CycleDetected {
                        line: active[edge].id,
                    });
                }
                visited[w] = true;
                parent[w] = Some(u);
                parent_edge[w] = Some(edge);
                depth[w] = depth[u] + 1;
                order.push(w);
                queue.push_back(w);
            }
        }
        if let Some(bus) = visited.iter().position(|v| !v) {
            return Err(Error::Disconnected { bus });
        }
        debug_assert_eq!(active.len(), n);

        let mut lines = Vec::with_capacity(n);
        let mut column_of = HashMap::with_capacity(n);
        let mut incidence_full = DMatrix::<i32>::zeros(n_nodes, n);
        for bus in 1..n_nodes {
            let edge = &active[parent_edge[bus].expect("reached bus has a parent line")];
            let from = parent[bus].expect("reached bus has a parent");
            let col = bus - 1;
            lines.push(Line {
                id: edge.id,
                from_bus: from,
                to_bus: bus,
                switchable: edge.switchable,
            });
            column_of.insert(edge.id, col);
            incidence_full[(from, col)] = 1;
            incidence_full[(bus, col)] = -1;
        }
        let incidence = incidence_full.rows(1, n).into_owned();

        let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for &bus in &order {
            let mut p = paths[parent[bus].unwrap()].clone();
            p.push(bus - 1);
            paths[bus] = p;
        }
        let mut path = DMatrix::<i32>::zeros(n, n);
        let mut downstream = vec![Vec::new(); n];
        for bus in 1..n_nodes {
            for &col in &paths[bus] {
                path[(col, bus - 1)] = 1;
                downstream[col].push(bus);
            }
        }

        Ok(FeederTopology {
            buses,
            lines,
            column_of,
            parent,
            order,
            depth,
            incidence_full,
            incidence,
            path,
            paths,
            downstream,
        })
    }

    /// Number of non-root buses `N` (equal to the number of active lines).
    pub fn n(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// Active lines in column order.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line_ids(&self) -> Vec<usize> {
        self.lines.iter().map(|l| l.id).collect()
    }

    /// Column index of a physical line id, if the line is active.
    pub fn column(&self, line_id: usize) -> Option<usize> {
        self.column_of.get(&line_id).copied()
    }

    pub fn parent(&self, bus: usize) -> Option<usize> {
        self.parent.get(bus).copied().flatten()
    }

    /// Number of lines between the substation and `bus`.
    pub fn depth(&self, bus: usize) -> usize {
        self.depth[bus]
    }

    /// Reduced incidence matrix `M` (N×L).
    pub fn incidence(&self) -> &DMatrix<i32> {
        &self.incidence
    }

    /// Full incidence matrix including the substation row ((N+1)×L).
    pub fn incidence_full(&self) -> &DMatrix<i32> {
        &self.incidence_full
    }

    /// Path matrix `P` (L×N): `P[c, i-1] = 1` iff line column `c` lies on the
    /// root path of bus `i`. Equals `-M⁻¹`.
    pub fn path_matrix(&self) -> &DMatrix<i32> {
        &self.path
    }

    pub fn path_matrix_f64(&self) -> DMatrix<f64> {
        self.path.map(f64::from)
    }

    /// Line columns on the root path of `bus`, ordered from the root.
    pub fn path_columns(&self, bus: usize) -> &[usize] {
        &self.paths[bus]
    }

    /// Downstream buses of the line in column `col`.
    pub fn downstream_of_column(&self, col: usize) -> &[usize] {
        &self.downstream[col]
    }

    /// Downstream buses `𝓝_ℓ` of a physical line.
    pub fn downstream_buses(&self, line_id: usize) -> Result<&[usize]> {
        let col = self.column(line_id).ok_or(Error::UnknownLine(line_id))?;
        Ok(&self.downstream[col])
    }

    /// Computes `P·u`: for each line, the sum of `per_bus` over its downstream
    /// buses. Runs in O(N).
    pub fn subtree_sums(&self, per_bus: &[f64]) -> Vec<f64> {
        assert_eq!(per_bus.len(), self.n(), "per-bus vector length");
        let mut acc = per_bus.to_vec();
        for &bus in self.order.iter().rev() {
            let parent = self.parent[bus].unwrap();
            if parent != 0 {
                acc[parent - 1] += acc[bus - 1];
            }
        }
        acc
    }

    /// Computes `Pᵀ·y`: for each bus, the sum of `per_line` along its root
    /// path. Runs in O(N).
    pub fn path_sums(&self, per_line: &[f64]) -> Vec<f64> {
        assert_eq!(per_line.len(), self.n(), "per-line vector length");
        let mut acc = vec![0.0; self.n()];
        for &bus in &self.order {
            let parent = self.parent[bus].unwrap();
            let up = if parent == 0 { 0.0 } else { acc[parent - 1] };
            acc[bus - 1] = up + per_line[bus - 1];
        }
        acc
    }

    /// Non-root buses in breadth-first order (parents before children).
    pub fn breadth_first(&self) -> &[usize] {
        &self.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buses(n: usize) -> Vec<Bus> {
        (0..=n).map(Bus::new).collect()
    }

    #[test]
    fn three_bus_chain_matrices() {
        let topo =
            FeederTopology::new(buses(2), &[Line::new(1, 0, 1), Line::new(2, 1, 2)]).unwrap();
        assert_eq!(topo.incidence(), &DMatrix::from_row_slice(2, 2, &[-1, 1, 0, -1]));
        assert_eq!(topo.path_matrix(), &DMatrix::from_row_slice(2, 2, &[1, 1, 0, 1]));
        assert_eq!(topo.downstream_buses(1).unwrap(), &[1, 2]);
        assert_eq!(topo.downstream_buses(2).unwrap(), &[2]);
        assert!(matches!(topo.downstream_buses(7), Err(Error::UnknownLine(7))));
    }

    #[test]
    fn reversed_lines_are_reoriented() {
        let topo =
            FeederTopology::new(buses(2), &[Line::new(2, 2, 1), Line::new(1, 1, 0)]).unwrap();
        assert_eq!(topo.lines()[0], Line::new(1, 0, 1));
        assert_eq!(topo.lines()[1], Line::new(2, 1, 2));
        assert_eq!(topo.path_matrix(), &DMatrix::from_row_slice(2, 2, &[1, 1, 0, 1]));
    }

    #[test]
    fn ring_is_rejected() {
        let err = FeederTopology::new(
            buses(2),
            &[Line::new(1, 0, 1), Line::new(2, 1, 2), Line::new(3, 2, 0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::CycleDetected { .. }));
    }

    #[test]
    fn missing_line_is_disconnected() {
        let err = FeederTopology::new(buses(3), &[Line::new(1, 0, 1), Line::new(2, 1, 2)])
            .unwrap_err();
        assert!(matches!(err, Error::Disconnected { bus: 3 }));
    }

    #[test]
    fn parallel_lines_are_duplicates() {
        let err = FeederTopology::new(buses(2), &[Line::new(1, 0, 1), Line::new(2, 1, 0)])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { from: 0, to: 1 }));
    }

    #[test]
    fn switch_states_select_lines() {
        let lines = [
            Line::new(1, 0, 1),
            Line::new(2, 1, 2),
            Line::switch(3, 0, 2),
        ];
        let open = BTreeMap::from([(3, false)]);
        assert!(build_topology(buses(2), &lines, &open).is_ok());
        let closed = BTreeMap::from([(3, true)]);
        assert!(matches!(
            build_topology(buses(2), &lines, &closed),
            Err(Error::CycleDetected { .. })
        ));
        assert!(matches!(
            build_topology(buses(2), &lines, &BTreeMap::new()),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn tree_sums_match_matrix_products() {
        // 0-1, 1-2, 1-3, 3-4
        let topo = FeederTopology::new(
            buses(4),
            &[
                Line::new(1, 0, 1),
                Line::new(2, 1, 2),
                Line::new(3, 1, 3),
                Line::new(4, 3, 4),
            ],
        )
        .unwrap();
        let u = [1.0, 2.0, 3.0, 4.0];
        let p = topo.path_matrix_f64();
        let pu = &p * nalgebra::DVector::from_row_slice(&u);
        let ptu = p.transpose() * nalgebra::DVector::from_row_slice(&u);
        assert_eq!(topo.subtree_sums(&u), pu.as_slice());
        assert_eq!(topo.path_sums(&u), ptu.as_slice());
        assert_eq!(topo.depth(4), 3);
    }

    #[test]
    fn bad_voltage_bounds_are_rejected() {
        let mut b = buses(1);
        b[1].v_min = 1.2;
        assert!(matches!(
            FeederTopology::new(b, &[Line::new(1, 0, 1)]),
            Err(Error::Invalid(_))
        ));
    }
}
