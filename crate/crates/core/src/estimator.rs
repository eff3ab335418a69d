//! Line-parameter and topology estimation from a measurement window.
//!
//! For a hypothesized topology the reactances solve the stacked regression
//! `min ‖Ψx − ψ‖²`, whose columns are `2 π_ℓ (π_ℓᵀ ρ_ℓ[k'])` with
//! `ρ_ℓ[k'] = γ^{(k−k')/2} (z_ℓ p[k'] + q[k'])`. The configuration with the
//! smallest discounted residual is selected.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feeder::ConfiguredTopology;
use crate::measurement::MeasurementWindow;
use crate::sensitivity::{predict_from_lines, InjectionState, SensitivityMatrices};
use crate::topology::FeederTopology;

/// Tolerance below which a combined downstream flow counts as zero.
pub const IDENTIFIABILITY_TOL: f64 = 1e-9;

/// Rank cutoff for the pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankTolerance {
    /// `max(rows, cols) · σ_max · 1e-12`, for noise-free data.
    Exact,
    /// `tol · σ_max`.
    Relative(f64),
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance::Exact
    }
}

impl RankTolerance {
    /// Relative tolerance suggested for noisy measurements.
    pub const NOISY: RankTolerance = RankTolerance::Relative(1e-8);

    fn threshold(self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self {
            RankTolerance::Exact => rows.max(cols) as f64 * sigma_max * 1e-12,
            RankTolerance::Relative(tol) => tol * sigma_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSystem {
    /// Stacked regressor `Ψ`, `(m+1)N × L`, oldest snapshot first.
    pub psi_matrix: DMatrix<f64>,
    /// Stacked response `ψ`.
    pub psi: DVector<f64>,
    /// `π_ℓᵀ ρ_ℓ[k']` per snapshot (outer) and line column (inner): the
    /// discounted combined flow through each line.
    pub flows: Vec<Vec<f64>>,
}

/// Assembles `Ψ` and `ψ` using the factored rank-one terms.
pub fn assemble_regression(
    topology: &FeederTopology,
    z: &DVector<f64>,
    window: &MeasurementWindow,
) -> Result<RegressionSystem> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = topology.n();
    if z.len() != n {
        return Err(Error::dims("r-to-x ratio vector", n, z.len()));
    }
    let rows = window.len() * n;
    let mut psi_matrix = DMatrix::zeros(rows, n);
    let mut psi = DVector::zeros(rows);
    let mut flows = Vec::with_capacity(window.len());
    for (block, snap) in window.iter().enumerate() {
        if snap.n() != n {
            return Err(Error::dims("snapshot", n, snap.n()));
        }
        let w = window.discount(snap).sqrt();
        let flow = discounted_flows(topology, z, snap.p.as_slice(), snap.q.as_slice(), w);
        let base = block * n;
        for (col, &f) in flow.iter().enumerate() {
            // Flows at the identifiability tolerance are roundoff; keeping
            // them would let noise columns set the rank of an empty system.
            if f.abs() <= IDENTIFIABILITY_TOL * w {
                continue;
            }
            for &bus in topology.downstream_of_column(col) {
                psi_matrix[(base + bus - 1, col)] = 2.0 * f;
            }
        }
        for i in 0..n {
            psi[base + i] = w * (snap.v[i] - snap.v0);
        }
        flows.push(flow);
    }
    Ok(RegressionSystem {
        psi_matrix,
        psi,
        flows,
    })
}

/// `w · Σ_{i∈𝓝_ℓ} (z_ℓ p_i + q_i)` for every line.
fn discounted_flows(topology: &FeederTopology, z: &DVector<f64>, p: &[f64], q: &[f64], w: f64) -> Vec<f64> {
    let pp = topology.subtree_sums(p);
    let pq = topology.subtree_sums(q);
    (0..pp.len()).map(|c| w * (z[c] * pp[c] + pq[c])).collect()
}

#[derive(Debug, Clone)]
pub struct ParameterFit {
    pub x_hat: DVector<f64>,
    pub r_hat: DVector<f64>,
    pub effective_rank: usize,
    /// Line columns whose parameter the data cannot determine.
    pub unidentifiable: Vec<usize>,
    pub singular_values: DVector<f64>,
}

/// Minimum-norm least-squares solution of `Ψx = ψ` through a truncated SVD,
/// with `r̂ = diag(z)·x̂`.
pub fn estimate_parameters(
    system: &RegressionSystem,
    z: &DVector<f64>,
    tolerance: RankTolerance,
) -> Result<ParameterFit> {
    let (rows, cols) = system.psi_matrix.shape();
    if z.len() != cols {
        return Err(Error::dims("r-to-x ratio vector", cols, z.len()));
    }
    let (x_hat, singular_values, null_weight) =
        truncated_lstsq(system.psi_matrix.clone(), system.psi.clone(), tolerance)?;
    let threshold = tolerance.threshold(rows, cols, singular_values.max());
    let effective_rank = singular_values.iter().filter(|&&s| s > threshold).count();
    let unidentifiable = null_weight
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= 0.5)
        .map(|(c, _)| c)
        .collect();
    let r_hat = z.component_mul(&x_hat);
    Ok(ParameterFit {
        x_hat,
        r_hat,
        effective_rank,
        unidentifiable,
        singular_values,
    })
}

/// Returns the solution, the singular values of `a`, and for each column the
/// squared norm of its unit vector projected onto the numerical null space.
fn truncated_lstsq(
    a: DMatrix<f64>,
    b: DVector<f64>,
    tolerance: RankTolerance,
) -> Result<(DVector<f64>, DVector<f64>, Vec<f64>)> {
    let (rows, cols) = a.shape();
    // Reduce the tall system to its triangular factor; the SVD of R carries
    // the singular values of Ψ and Qᵀψ the relevant part of the response.
    let (r, qtb) = if rows > cols {
        let qr = a.qr();
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, cols).into_owned())
    } else {
        (a, b)
    };
    let (u, sigma, v_t) = thin_svd(&r)?;
    let threshold = tolerance.threshold(rows, cols, sigma.max());
    let mut x = DVector::zeros(cols);
    let mut null_weight = vec![0.0; cols];
    for k in 0..sigma.len() {
        let vk = v_t.row(k);
        if sigma[k] > threshold {
            let coef = u.column(k).dot(&qtb) / sigma[k];
            x.axpy(coef, &vk.transpose(), 1.0);
        } else {
            for c in 0..cols {
                null_weight[c] += vk[c] * vk[c];
            }
        }
    }
    // A wide or square-deficient R has fewer singular values than columns.
    if sigma.len() < cols {
        let covered: Vec<f64> = (0..cols)
            .map(|c| (0..sigma.len()).map(|k| v_t[(k, c)].powi(2)).sum())
            .collect();
        for c in 0..cols {
            null_weight[c] += (1.0 - covered[c]).max(0.0);
        }
    }
    Ok((x, sigma, null_weight))
}

/// Thin SVD `(U, σ, Vᵀ)` with singular values in nonincreasing order.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm
        .thin_svd()
        .map_err(|e| Error::Invalid(format!("singular value decomposition failed: {e:?}")))?;
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    Ok((
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        DVector::from_fn(s.nrows(), |i, _| s[i]),
        DMatrix::from_fn(v.ncols(), v.nrows(), |i, j| v[(j, i)]),
    ))
}

#[derive(Debug, Clone)]
pub struct ResidualFit {
    pub fit: ParameterFit,
    /// `ε_M = Σ γ^{k−k'} ‖ε[k']‖`.
    pub residual_error: f64,
    /// `‖ε[k']‖` per snapshot, oldest first.
    pub snapshot_residuals: Vec<f64>,
}

/// Fits parameters for one topology and evaluates its residual error.
pub fn residual_error(
    topology: &FeederTopology,
    z: &DVector<f64>,
    window: &MeasurementWindow,
    tolerance: RankTolerance,
) -> Result<ResidualFit> {
    let system = assemble_regression(topology, z, window)?;
    let fit = estimate_parameters(&system, z, tolerance)?;
    let mut total = 0.0;
    let mut snapshot_residuals = Vec::with_capacity(window.len());
    for snap in window.iter() {
        let inj = InjectionState {
            p: snap.p.clone(),
            q: snap.q.clone(),
            v0: snap.v0,
        };
        let predicted = predict_from_lines(topology, fit.r_hat.as_slice(), fit.x_hat.as_slice(), &inj)?;
        let norm = (predicted - &snap.v).norm();
        total += window.discount(snap) * norm;
        snapshot_residuals.push(norm);
    }
    Ok(ResidualFit {
        fit,
        residual_error: total,
        snapshot_residuals,
    })
}

#[derive(Debug, Clone)]
pub struct SensitivityEstimate {
    /// Index of the selected configuration within the candidate list.
    pub config_index: usize,
    pub config_name: String,
    pub topology: Arc<FeederTopology>,
    pub x_hat: DVector<f64>,
    pub r_hat: DVector<f64>,
    /// `R̂`, `X̂` from the unclipped estimates.
    pub sens: SensitivityMatrices,
    /// `(configuration name, ε_M)` for every candidate, in candidate order.
    pub residual_errors: Vec<(String, f64)>,
    pub effective_rank: usize,
    /// Physical ids of lines whose parameters were imputed.
    pub unidentifiable_lines: Vec<usize>,
}

impl SensitivityEstimate {
    pub fn residual_error(&self) -> f64 {
        self.residual_errors[self.config_index].1
    }

    /// Sensitivities for the controller, with negative estimates clipped to 0.
    pub fn controller_sensitivities(&self) -> SensitivityMatrices {
        let clip = |v: &DVector<f64>| v.iter().map(|&e| e.max(0.0)).collect::<Vec<_>>();
        SensitivityMatrices::from_lines(&self.topology, &clip(&self.r_hat), &clip(&self.x_hat))
            .expect("estimate is dimensioned to its topology")
    }
}

/// Runs the residual fit for every candidate configuration and keeps the
/// argmin (ties go to the earliest candidate).
pub fn estimate(
    candidates: &[ConfiguredTopology],
    window: &MeasurementWindow,
    tolerance: RankTolerance,
) -> Result<SensitivityEstimate> {
    if candidates.is_empty() {
        return Err(Error::NoFeasibleConfiguration);
    }
    let fits = candidates
        .par_iter()
        .map(|c| residual_error(&c.topology, &c.z, window, tolerance))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, f) in fits.iter().enumerate() {
        if f.residual_error < fits[best].residual_error {
            best = k;
        }
    }
    let chosen = &candidates[best];
    let fit = &fits[best].fit;
    let sens = SensitivityMatrices::from_lines(&chosen.topology, fit.r_hat.as_slice(), fit.x_hat.as_slice())?;
    let unidentifiable_lines = fit
        .unidentifiable
        .iter()
        .map(|&c| chosen.topology.lines()[c].id)
        .collect();
    Ok(SensitivityEstimate {
        config_index: best,
        config_name: chosen.name.clone(),
        topology: Arc::clone(&chosen.topology),
        x_hat: fit.x_hat.clone(),
        r_hat: fit.r_hat.clone(),
        sens,
        residual_errors: candidates
            .iter()
            .zip(&fits)
            .map(|(c, f)| (c.name.clone(), f.residual_error))
            .collect(),
        effective_rank: fit.effective_rank,
        unidentifiable_lines,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identifiability {
    /// Per line column.
    pub identifiable: Vec<bool>,
    pub line_ids: Vec<usize>,
    /// Number of identifiable lines, the rank `Ψ` must have.
    pub predicted_rank: usize,
}

impl Identifiability {
    pub fn unidentifiable_lines(&self) -> Vec<usize> {
        self.line_ids
            .iter()
            .zip(&self.identifiable)
            .filter(|(_, &ok)| !ok)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// A line is identifiable iff its downstream combined injection
/// `Σ_{i∈𝓝_ℓ} z_ℓ p_i + q_i` is nonzero in some snapshot of the window.
pub fn check_identifiability(
    topology: &FeederTopology,
    z: &DVector<f64>,
    window: &MeasurementWindow,
    tol: f64,
) -> Result<Identifiability> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = topology.n();
    if z.len() != n {
        return Err(Error::dims("r-to-x ratio vector", n, z.len()));
    }
    let mut identifiable = vec![false; n];
    for snap in window.iter() {
        if snap.n() != n {
            return Err(Error::dims("snapshot", n, snap.n()));
        }
        let flow = discounted_flows(topology, z, snap.p.as_slice(), snap.q.as_slice(), 1.0);
        for (ok, f) in identifiable.iter_mut().zip(flow) {
            *ok |= f.abs() > tol;
        }
    }
    let predicted_rank = identifiable.iter().filter(|&&b| b).count();
    Ok(Identifiability {
        identifiable,
        line_ids: topology.line_ids(),
        predicted_rank,
    })
}
