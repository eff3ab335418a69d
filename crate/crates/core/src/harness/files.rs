//! Small file formats used by the command line: line-parameter estimates
//! and per-bus demand tables.

use std::io::Read;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SensitivityEstimate;
use crate::feeder::Feeder;
use crate::sensitivity::SensitivityMatrices;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineValue {
    pub id: usize,
    pub r: f64,
    pub x: f64,
}

/// Per-line resistance and reactance for one named configuration. Unknown
/// fields are ignored, so a full estimate report can be read back directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityFile {
    pub config: String,
    pub lines: Vec<LineValue>,
}

impl SensitivityFile {
    pub fn from_estimate(est: &SensitivityEstimate) -> Self {
        let lines = est
            .topology
            .lines()
            .iter()
            .enumerate()
            .map(|(c, l)| LineValue {
                id: l.id,
                r: est.r_hat[c],
                x: est.x_hat[c],
            })
            .collect();
        SensitivityFile {
            config: est.config_name.clone(),
            lines,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `R` and `X` on the named configuration of `feeder`, with negative
    /// parameters clipped to zero. Every line of the configuration needs a
    /// value.
    pub fn controller_sensitivities(&self, feeder: &Feeder) -> Result<SensitivityMatrices> {
        let config = feeder.configure(feeder.config_index(&self.config)?)?;
        let topology = &config.topology;
        let n = topology.n();
        let mut r = vec![f64::NAN; n];
        let mut x = vec![f64::NAN; n];
        for l in &self.lines {
            let c = topology.column(l.id).ok_or(Error::UnknownLine(l.id))?;
            r[c] = l.r.max(0.0);
            x[c] = l.x.max(0.0);
        }
        if let Some(c) = r.iter().position(|v| v.is_nan()) {
            return Err(Error::Invalid(format!(
                "no parameters for line {} of configuration {}",
                topology.lines()[c].id,
                self.config
            )));
        }
        SensitivityMatrices::from_lines(topology, &r, &x)
    }
}

#[derive(Debug, Deserialize)]
struct DemandRow {
    bus: String,
    pd: f64,
    qd: f64,
}

/// Reads a `bus,pd,qd` table (bus names, p.u.). Buses not listed have zero
/// demand.
pub fn read_demand<R: Read>(reader: R, feeder: &Feeder) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = feeder.n();
    let mut pd = DVector::zeros(n);
    let mut qd = DVector::zeros(n);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize() {
        let row: DemandRow = row?;
        let bus = feeder.bus_by_name(&row.bus)?;
        if bus == 0 {
            return Err(Error::Invalid("demand listed at the substation bus".into()));
        }
        pd[bus - 1] = row.pd;
        qd[bus - 1] = row.qd;
    }
    Ok((pd, qd))
}

pub fn read_demand_file(path: impl AsRef<Path>, feeder: &Feeder) -> Result<(DVector<f64>, DVector<f64>)> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_demand(f, feeder)
}
