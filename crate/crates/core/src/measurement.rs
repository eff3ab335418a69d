//! Measurement snapshots, sliding windows and the measurement CSV format.
//!
//! CSV columns are `t, v0, v_1..v_N, p_1..p_N, q_1..q_N` with voltage
//! magnitudes in p.u.; snapshots store squared voltages.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSnapshot {
    pub t: u64,
    /// Squared substation voltage (p.u.²).
    pub v0: f64,
    /// Squared bus voltages (p.u.²).
    pub v: DVector<f64>,
    /// Net active injection (p.u.).
    pub p: DVector<f64>,
    /// Net reactive injection (p.u.).
    pub q: DVector<f64>,
}

impl MeasurementSnapshot {
    pub fn new(t: u64, v0: f64, v: DVector<f64>, p: DVector<f64>, q: DVector<f64>) -> Result<Self> {
        let n = v.len();
        if p.len() != n {
            return Err(Error::dims("snapshot active injections", n, p.len()));
        }
        if q.len() != n {
            return Err(Error::dims("snapshot reactive injections", n, q.len()));
        }
        if !(v0 > 0.0) || v.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Invalid(format!("snapshot {t} has non-positive voltages")));
        }
        Ok(MeasurementSnapshot { t, v0, v, p, q })
    }

    /// Builds a snapshot from voltage magnitudes.
    pub fn from_magnitudes(
        t: u64,
        v0_mag: f64,
        v_mag: &[f64],
        p: DVector<f64>,
        q: DVector<f64>,
    ) -> Result<Self> {
        let v = DVector::from_iterator(v_mag.len(), v_mag.iter().map(|m| m * m));
        Self::new(t, v0_mag * v0_mag, v, p, q)
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// `ṽ = v − v0·1`.
    pub fn deviation(&self) -> DVector<f64> {
        self.v.add_scalar(-self.v0)
    }
}

/// The `m + 1` most recent snapshots with discount factor `γ`.
#[derive(Debug, Clone)]
pub struct MeasurementWindow {
    snapshots: VecDeque<MeasurementSnapshot>,
    capacity: usize,
    gamma: f64,
}

impl MeasurementWindow {
    /// `size` is `m + 1`, the number of snapshots retained.
    pub fn new(size: usize, gamma: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Invalid("window size must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Invalid(format!("discount factor {gamma} outside (0, 1]")));
        }
        Ok(MeasurementWindow {
            snapshots: VecDeque::with_capacity(size),
            capacity: size,
            gamma,
        })
    }

    /// Window holding `snapshots` (the most recent `size` are kept).
    pub fn from_snapshots(
        size: usize,
        gamma: f64,
        snapshots: impl IntoIterator<Item = MeasurementSnapshot>,
    ) -> Result<Self> {
        let mut w = Self::new(size, gamma)?;
        for s in snapshots {
            w.push(s)?;
        }
        Ok(w)
    }

    pub fn push(&mut self, snapshot: MeasurementSnapshot) -> Result<()> {
        if let Some(last) = self.snapshots.back() {
            if snapshot.t <= last.t {
                return Err(Error::Invalid(format!(
                    "snapshot t={} does not follow t={}",
                    snapshot.t, last.t
                )));
            }
            if snapshot.n() != last.n() {
                return Err(Error::dims("snapshot", last.n(), snapshot.n()));
            }
        }
        if self.snapshots.len() == self.capacity {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(snapshot);
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn latest(&self) -> Option<&MeasurementSnapshot> {
        self.snapshots.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MeasurementSnapshot> {
        self.snapshots.iter()
    }

    /// Discount `γ^(k − k')` of a snapshot relative to the most recent one.
    pub fn discount(&self, snapshot: &MeasurementSnapshot) -> f64 {
        let k = self.latest().map_or(snapshot.t, |s| s.t);
        self.gamma.powi((k - snapshot.t) as i32)
    }
}

/// Reads snapshots for a feeder with `n` non-root buses.
pub fn read_measurements<R: Read>(reader: R, n: usize) -> Result<Vec<MeasurementSnapshot>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = 2 + 3 * n;
    let width = rdr.headers()?.len();
    if width != expected {
        return Err(Error::dims("measurement CSV columns", expected, width));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != expected {
            return Err(Error::dims("measurement CSV row", expected, record.len()));
        }
        let vals = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad number {s:?} in measurement CSV")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = vals[0];
        if t < 0.0 || t.fract() != 0.0 {
            return Err(Error::Invalid(format!("bad time index {t}")));
        }
        out.push(MeasurementSnapshot::from_magnitudes(
            t as u64,
            vals[1],
            &vals[2..2 + n],
            DVector::from_row_slice(&vals[2 + n..2 + 2 * n]),
            DVector::from_row_slice(&vals[2 + 2 * n..]),
        )?);
    }
    Ok(out)
}

pub fn read_measurements_file(path: impl AsRef<Path>, n: usize) -> Result<Vec<MeasurementSnapshot>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_measurements(f, n)
}

pub fn write_measurements<W: Write>(writer: W, snapshots: &[MeasurementSnapshot]) -> Result<()> {
    let n = snapshots.first().map_or(0, |s| s.n());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "v0".to_string()];
    for prefix in ["v", "p", "q"] {
        header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header)?;
    for s in snapshots {
        let mut row = vec![s.t.to_string(), fmt(s.v0.sqrt())];
        row.extend(s.v.iter().map(|v| fmt(v.sqrt())));
        row.extend(s.p.iter().map(|&v| fmt(v)));
        row.extend(s.q.iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<measurements>", e))?;
    Ok(())
}

fn fmt(v: f64) -> String {
    // Shortest round-trip representation.
    format!("{v:?}")
}
