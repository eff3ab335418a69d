//! LinDistFlow voltage sensitivities.
//!
//! All voltages here are squared magnitudes `v = V²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::topology::FeederTopology;

/// Per-line resistance, reactance and r-to-x ratio, aligned with topology
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParameters {
    pub r: DVector<f64>,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
}

impl LineParameters {
    /// Requires `x > 0` and `r ≥ 0` elementwise; `z` is derived as `r / x`.
    pub fn new(r: DVector<f64>, x: DVector<f64>) -> Result<Self> {
        if r.len() != x.len() {
            return Err(Error::dims("line parameters", x.len(), r.len()));
        }
        if let Some(k) = x.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Invalid(format!("reactance of column {k} is not positive")));
        }
        if let Some(k) = r.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::Invalid(format!("resistance of column {k} is negative")));
        }
        let z = r.component_div(&x);
        Ok(LineParameters { r, x, z })
    }

    /// Parameters from reactances and known ratios, `r = diag(z)·x`.
    pub fn from_ratio(x: DVector<f64>, z: DVector<f64>) -> Result<Self> {
        if z.len() != x.len() {
            return Err(Error::dims("line ratios", x.len(), z.len()));
        }
        let r = z.component_mul(&x);
        let mut params = LineParameters::new(r, x)?;
        params.z = z;
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `R` and `X`, mapping active/reactive injections to squared-voltage
/// deviations from the substation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrices {
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// Net injections at buses `1..=N` and the squared substation voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionState {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub v0: f64,
}

/// `2·Pᵀ·diag(w)·P`, evaluated through shared root paths:
/// entry `(i, j)` is twice the sum of `w` over lines common to both paths.
fn path_gram(topology: &FeederTopology, w: &[f64]) -> DMatrix<f64> {
    let n = topology.n();
    // cumulative[i-1] = Σ w over the root path of bus i
    let cumulative = topology.path_sums(w);
    let mut out = DMatrix::zeros(n, n);
    for i in 1..=n {
        out[(i - 1, i - 1)] = 2.0 * cumulative[i - 1];
    }
    // Off-diagonal: the shared path ends at the deepest common ancestor.
    for i in 1..=n {
        for j in (i + 1)..=n {
            let a = common_ancestor(topology, i, j);
            let val = if a == 0 { 0.0 } else { 2.0 * cumulative[a - 1] };
            out[(i - 1, j - 1)] = val;
            out[(j - 1, i - 1)] = val;
        }
    }
    out
}

fn common_ancestor(topology: &FeederTopology, mut a: usize, mut b: usize) -> usize {
    while topology.depth(a) > topology.depth(b) {
        a = topology.parent(a).unwrap();
    }
    while topology.depth(b) > topology.depth(a) {
        b = topology.parent(b).unwrap();
    }
    while a != b {
        a = topology.parent(a).unwrap();
        b = topology.parent(b).unwrap();
    }
    a
}

impl SensitivityMatrices {
    /// Sensitivities from raw per-line resistance and reactance vectors.
    /// Values need not be positive (estimates may not be).
    pub fn from_lines(topology: &FeederTopology, r: &[f64], x: &[f64]) -> Result<Self> {
        let l = topology.n();
        if r.len() != l {
            return Err(Error::dims("resistance vector", l, r.len()));
        }
        if x.len() != l {
            return Err(Error::dims("reactance vector", l, x.len()));
        }
        Ok(SensitivityMatrices {
            r: path_gram(topology, r),
            x: path_gram(topology, x),
        })
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }
}

/// `R = 2 Pᵀ diag(r) P` and `X = 2 Pᵀ diag(x) P`.
pub fn sensitivity_matrices(
    topology: &FeederTopology,
    params: &LineParameters,
) -> Result<SensitivityMatrices> {
    SensitivityMatrices::from_lines(topology, params.r.as_slice(), params.x.as_slice())
}

/// The factors `π_ℓ` (column `ℓ` of `Pᵀ`) with `Ξ_ℓ = 2 π_ℓ π_ℓᵀ`.
pub fn rank_one_terms(topology: &FeederTopology) -> Vec<DVector<f64>> {
    let n = topology.n();
    (0..n)
        .map(|col| {
            let mut pi = DVector::zeros(n);
            for &bus in topology.downstream_of_column(col) {
                pi[bus - 1] = 1.0;
            }
            pi
        })
        .collect()
}

/// `v = R·p + X·q + v0·1`.
pub fn predict_squared_voltages(
    sens: &SensitivityMatrices,
    injection: &InjectionState,
) -> Result<DVector<f64>> {
    let n = sens.n();
    if injection.p.len() != n {
        return Err(Error::dims("active injection", n, injection.p.len()));
    }
    if injection.q.len() != n {
        return Err(Error::dims("reactive injection", n, injection.q.len()));
    }
    let mut v = &sens.r * &injection.p + &sens.x * &injection.q;
    v.add_scalar_mut(injection.v0);
    Ok(v)
}

/// LinDistFlow prediction straight from line parameters in O(N), without
/// forming `R` or `X`: `v - v0 = 2 Pᵀ (r∘Pp + x∘Pq)`.
pub fn predict_from_lines(
    topology: &FeederTopology,
    r: &[f64],
    x: &[f64],
    injection: &InjectionState,
) -> Result<DVector<f64>> {
    let n = topology.n();
    if injection.p.len() != n || injection.q.len() != n {
        return Err(Error::dims("injection", n, injection.p.len()));
    }
    let pp = topology.subtree_sums(injection.p.as_slice());
    let pq = topology.subtree_sums(injection.q.as_slice());
    let drop: Vec<f64> = (0..n).map(|c| 2.0 * (r[c] * pp[c] + x[c] * pq[c])).collect();
    let v = topology.path_sums(&drop);
    Ok(DVector::from_iterator(n, v.into_iter().map(|d| d + injection.v0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Bus, Line};
    use approx::assert_relative_eq;

    fn chain() -> FeederTopology {
        FeederTopology::new(
            (0..3).map(Bus::new).collect(),
            &[Line::new(1, 0, 1), Line::new(2, 1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn chain_resistance_matrix() {
        let (r1, r2) = (0.3, 0.7);
        let s = SensitivityMatrices::from_lines(&chain(), &[r1, r2], &[0.1, 0.1]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0 * r1, 2.0 * r1, 2.0 * r1, 2.0 * (r1 + r2)]);
        assert_relative_eq!(s.r, expected, epsilon = 1e-15);
    }

    #[test]
    fn zero_reactance_gives_zero_matrix() {
        let s = SensitivityMatrices::from_lines(&chain(), &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_prediction() {
        let params = LineParameters::new(
            DVector::from_row_slice(&[0.0, 0.0]),
            DVector::from_row_slice(&[0.05, 0.05]),
        )
        .unwrap();
        let topo = chain();
        let sens = sensitivity_matrices(&topo, &params).unwrap();
        let inj = InjectionState {
            p: DVector::zeros(2),
            q: DVector::from_row_slice(&[0.0, -0.1]),
            v0: 1.0,
        };
        let v = predict_squared_voltages(&sens, &inj).unwrap();
        assert_relative_eq!(v[0], 0.99, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.98, epsilon = 1e-14);
        let fast = predict_from_lines(&topo, params.r.as_slice(), params.x.as_slice(), &inj).unwrap();
        assert_relative_eq!(fast, v, epsilon = 1e-14);
    }

    #[test]
    fn zero_injection_is_flat() {
        let s = SensitivityMatrices::from_lines(&chain(), &[0.1, 0.2], &[0.3, 0.4]).unwrap();
        let inj = InjectionState {
            p: DVector::zeros(2),
            q: DVector::zeros(2),
            v0: 1.02,
        };
        let v = predict_squared_voltages(&s, &inj).unwrap();
        assert!(v.iter().all(|&x| x == 1.02));
    }

    #[test]
    fn rank_one_factor_of_first_chain_line() {
        let pis = rank_one_terms(&chain());
        assert_eq!(pis[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(pis[1].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn dimension_errors() {
        let topo = chain();
        assert!(matches!(
            SensitivityMatrices::from_lines(&topo, &[0.1], &[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
        let s = SensitivityMatrices::from_lines(&topo, &[0.1, 0.1], &[0.1, 0.2]).unwrap();
        let inj = InjectionState {
            p: DVector::zeros(3),
            q: DVector::zeros(2),
            v0: 1.0,
        };
        assert!(predict_squared_voltages(&s, &inj).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(LineParameters::new(DVector::from_row_slice(&[0.1]), DVector::from_row_slice(&[0.0])).is_err());
        assert!(LineParameters::new(DVector::from_row_slice(&[-0.1]), DVector::from_row_slice(&[0.1])).is_err());
        let p = LineParameters::from_ratio(DVector::from_row_slice(&[0.2]), DVector::from_row_slice(&[0.5])).unwrap();
        assert_relative_eq!(p.r[0], 0.1);
    }
}
