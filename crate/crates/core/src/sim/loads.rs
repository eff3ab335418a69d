//! Synthetic 1 s load profiles.
//!
//! A smooth daily-style shape is interpolated through hourly anchor points
//! drawn around 1.0 and scales each bus's nominal demand; independent
//! per-step, per-bus Gaussian jitter in p.u. is then added and the result
//! clipped at zero.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadShape {
    /// Standard deviation of the hourly anchors around 1.0.
    pub anchor_std: f64,
    /// Standard deviation of the per-step, per-bus jitter (p.u.).
    pub jitter_std: f64,
    /// Seconds between anchors.
    pub anchor_spacing: usize,
}

impl Default for LoadShape {
    fn default() -> Self {
        LoadShape {
            anchor_std: 0.1,
            jitter_std: 0.01,
            anchor_spacing: 3600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadProfile {
    pub horizon: usize,
    pub pd_series: Vec<DVector<f64>>,
    pub qd_series: Vec<DVector<f64>>,
}

impl LoadProfile {
    pub fn demand(&self, step: usize) -> (&DVector<f64>, &DVector<f64>) {
        (&self.pd_series[step], &self.qd_series[step])
    }
}

pub fn synthesize_loads(base_pd: &DVector<f64>, base_qd: &DVector<f64>, horizon: usize, seed: u64) -> LoadProfile {
    synthesize_loads_with(base_pd, base_qd, horizon, seed, LoadShape::default())
}

pub fn synthesize_loads_with(
    base_pd: &DVector<f64>,
    base_qd: &DVector<f64>,
    horizon: usize,
    seed: u64,
    shape: LoadShape,
) -> LoadProfile {
    let horizon = horizon.max(1);
    let mut rng = rng_for(seed, Stream::Loads, 0);
    let spacing = shape.anchor_spacing.max(1);
    let n_anchors = horizon / spacing + 2;
    let anchors: Vec<f64> = (0..n_anchors)
        .map(|_| 1.0 + shape.anchor_std * standard_normal(&mut rng))
        .collect();
    let mut profile: Vec<f64> = (0..horizon)
        .map(|t| cubic_through(&anchors, t as f64 / spacing as f64))
        .collect();
    // Centre the shape so the profile averages to the nominal loading.
    let mean = profile.iter().sum::<f64>() / horizon as f64;
    for s in &mut profile {
        *s += 1.0 - mean;
    }
    let jitter = Normal::new(0.0, shape.jitter_std.max(0.0)).expect("finite jitter");
    let n = base_pd.len();
    let mut pd_series = Vec::with_capacity(horizon);
    let mut qd_series = Vec::with_capacity(horizon);
    for &s in &profile {
        let pd = DVector::from_fn(n, |i, _| (base_pd[i] * s + jitter.sample(&mut rng)).max(0.0));
        let qd = DVector::from_fn(n, |i, _| (base_qd[i] * s + jitter.sample(&mut rng)).max(0.0));
        pd_series.push(pd);
        qd_series.push(qd);
    }
    LoadProfile {
        horizon,
        pd_series,
        qd_series,
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// Catmull-Rom interpolation through equally spaced anchors at positions
/// `0, 1, 2, …`, with clamped end tangents.
fn cubic_through(anchors: &[f64], pos: f64) -> f64 {
    let last = anchors.len() - 1;
    let k = (pos.floor() as usize).min(last.saturating_sub(1));
    let u = pos - k as f64;
    let at = |i: isize| anchors[i.clamp(0, last as isize) as usize];
    let (p0, p1, p2, p3) = (at(k as isize - 1), at(k as isize), at(k as isize + 1), at(k as isize + 2));
    let m1 = 0.5 * (p2 - p0);
    let m2 = 0.5 * (p3 - p1);
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * p1 + (u3 - 2.0 * u2 + u) * m1 + (-2.0 * u3 + 3.0 * u2) * p2 + (u3 - u2) * m2
}
