//! Feeder description files and their switch-defined configuration sets.
//!
//! ```json
//! {"buses":[{"id":0},{"id":1,"pd":0.04,"qd":0.02}],
//!  "lines":[{"id":1,"from":0,"to":1,"r":0.001,"x":0.002,"switch":false}],
//!  "configurations":[{"name":"0","switch_states":{}}]}
//! ```
//!
//! Impedances and loads are per-unit. Bus voltage bounds, when given, are
//! magnitudes (`v_min`, `v_max`) and are squared on load.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::LineParameters;
use crate::topology::{build_topology, Bus, FeederTopology, Line, DEFAULT_V_MAX, DEFAULT_V_MIN};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeederFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseRecord>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(default)]
    pub configurations: Vec<ConfigurationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseRecord {
    pub kv: f64,
    pub mva: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub pd: f64,
    #[serde(default)]
    pub qd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub switch: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigurationRecord {
    pub name: String,
    #[serde(default)]
    pub switch_states: BTreeMap<String, bool>,
    /// Optional r-to-x ratio overrides keyed by line id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<BTreeMap<String, f64>>,
}

/// A physical line with its electrical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederLine {
    pub line: Line,
    pub name: String,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub name: String,
    /// Closed/open state per entry of [`ConfigurationSet::switches`].
    pub states: Vec<bool>,
    /// r-to-x overrides keyed by line id.
    pub z_overrides: BTreeMap<usize, f64>,
}

/// The feasible configuration set `𝓜` and its ratio vectors `𝓩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationSet {
    /// Switchable line ids.
    pub switches: Vec<usize>,
    pub configs: Vec<Configuration>,
}

impl ConfigurationSet {
    pub fn switch_states(&self, config: &Configuration) -> BTreeMap<usize, bool> {
        self.switches
            .iter()
            .copied()
            .zip(config.states.iter().copied())
            .collect()
    }
}

/// A validated feeder: buses, all physical lines and the configuration set.
#[derive(Debug, Clone)]
pub struct Feeder {
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<FeederLine>,
    /// Nominal active demand at buses `1..=N` (p.u.).
    pub base_pd: DVector<f64>,
    /// Nominal reactive demand at buses `1..=N` (p.u.).
    pub base_qd: DVector<f64>,
    pub configurations: ConfigurationSet,
}

/// One feasible configuration with its true line parameters and the ratio
/// vector the estimator should assume for it.
#[derive(Debug, Clone)]
pub struct ConfiguredTopology {
    /// Position in the feeder's configuration list.
    pub index: usize,
    pub name: String,
    pub topology: Arc<FeederTopology>,
    pub params: LineParameters,
    pub z: DVector<f64>,
}

#[derive(Debug)]
pub struct Enumeration {
    pub feasible: Vec<ConfiguredTopology>,
    pub rejected: Vec<(String, Error)>,
}

impl Feeder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FeederFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn from_file(file: FeederFile) -> Result<Self> {
        let mut records = file.buses;
        records.sort_by_key(|b| b.id);
        let mut buses = Vec::with_capacity(records.len());
        for (k, rec) in records.iter().enumerate() {
            if rec.id != k {
                return Err(Error::Invalid(format!(
                    "bus ids must be 0..N without gaps; found {} at position {k}",
                    rec.id
                )));
            }
            let v_min = rec.v_min.map_or(DEFAULT_V_MIN, |v| v * v);
            let v_max = rec.v_max.map_or(DEFAULT_V_MAX, |v| v * v);
            buses.push(Bus {
                id: rec.id,
                name: rec.name.clone().unwrap_or_else(|| rec.id.to_string()),
                v_min,
                v_max,
            });
        }
        if buses.is_empty() {
            return Err(Error::Invalid("feeder has no buses".into()));
        }
        let n = buses.len() - 1;
        let base_pd = DVector::from_iterator(n, records[1..].iter().map(|b| b.pd));
        let base_qd = DVector::from_iterator(n, records[1..].iter().map(|b| b.qd));

        let mut lines = Vec::with_capacity(file.lines.len());
        for rec in &file.lines {
            if !(rec.x > 0.0) || !(rec.r >= 0.0) {
                return Err(Error::Invalid(format!(
                    "line {} needs x > 0 and r >= 0",
                    rec.id
                )));
            }
            if rec.from > n || rec.to > n {
                return Err(Error::UnknownBus(format!(
                    "{} (line {})",
                    rec.from.max(rec.to),
                    rec.id
                )));
            }
            lines.push(FeederLine {
                line: Line {
                    id: rec.id,
                    from_bus: rec.from,
                    to_bus: rec.to,
                    switchable: rec.switch,
                },
                name: rec.name.clone().unwrap_or_else(|| rec.id.to_string()),
                r: rec.r,
                x: rec.x,
            });
        }

        let switches: Vec<usize> = lines
            .iter()
            .filter(|l| l.line.switchable)
            .map(|l| l.line.id)
            .collect();
        let mut configs = Vec::with_capacity(file.configurations.len());
        for rec in &file.configurations {
            let mut states = vec![None; switches.len()];
            for (key, &state) in &rec.switch_states {
                let pos = lines
                    .iter()
                    .filter(|l| l.line.switchable)
                    .position(|l| &l.name == key || l.line.id.to_string() == *key)
                    .ok_or_else(|| {
                        Error::Invalid(format!(
                            "configuration {}: {key} is not a switchable line",
                            rec.name
                        ))
                    })?;
                states[pos] = Some(state);
            }
            let states = states
                .into_iter()
                .enumerate()
                .map(|(k, s)| {
                    s.ok_or_else(|| {
                        Error::Invalid(format!(
                            "configuration {} omits switch line {}",
                            rec.name, switches[k]
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut z_overrides = BTreeMap::new();
            for (key, &z) in rec.z.iter().flatten() {
                let id: usize = key
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad line id {key} in z overrides")))?;
                z_overrides.insert(id, z);
            }
            configs.push(Configuration {
                name: rec.name.clone(),
                states,
                z_overrides,
            });
        }
        if configs.is_empty() {
            // A feeder without switches has exactly one configuration.
            configs.push(Configuration {
                name: "0".into(),
                states: vec![false; switches.len()],
                z_overrides: BTreeMap::new(),
            });
        }

        Ok(Feeder {
            name: file.name.unwrap_or_else(|| "feeder".into()),
            buses,
            lines,
            base_pd,
            base_qd,
            configurations: ConfigurationSet { switches, configs },
        })
    }

    /// Number of non-root buses.
    pub fn n(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn bus_by_name(&self, name: &str) -> Result<usize> {
        self.buses
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.id)
            .ok_or_else(|| Error::UnknownBus(name.to_string()))
    }

    pub fn config_index(&self, name: &str) -> Result<usize> {
        self.configurations
            .configs
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Invalid(format!("unknown configuration {name}")))
    }

    pub fn line(&self, id: usize) -> Option<&FeederLine> {
        self.lines.iter().find(|l| l.line.id == id)
    }

    /// Topology and parameters of one configuration.
    pub fn configure(&self, index: usize) -> Result<ConfiguredTopology> {
        let set = &self.configurations;
        let config = set
            .configs
            .get(index)
            .ok_or_else(|| Error::Invalid(format!("no configuration at index {index}")))?;
        let physical: Vec<Line> = self.lines.iter().map(|l| l.line).collect();
        let topology = build_topology(self.buses.clone(), &physical, &set.switch_states(config))?;
        let mut r = DVector::zeros(topology.n());
        let mut x = DVector::zeros(topology.n());
        let mut z = DVector::zeros(topology.n());
        for (col, line) in topology.lines().iter().enumerate() {
            let data = self.line(line.id).expect("active line comes from the feeder");
            r[col] = data.r;
            x[col] = data.x;
            z[col] = config
                .z_overrides
                .get(&line.id)
                .copied()
                .unwrap_or(data.r / data.x);
        }
        let params = LineParameters::new(r, x)?;
        Ok(ConfiguredTopology {
            index,
            name: config.name.clone(),
            topology: Arc::new(topology),
            params,
            z,
        })
    }

    /// Validates every listed configuration. Infeasible ones are collected
    /// with their diagnostics; it is an error only if none survive.
    pub fn enumerate_configurations(&self) -> Result<Enumeration> {
        let mut feasible = Vec::new();
        let mut rejected = Vec::new();
        for (index, config) in self.configurations.configs.iter().enumerate() {
            match self.configure(index) {
                Ok(c) => feasible.push(c),
                Err(e) => rejected.push((config.name.clone(), e)),
            }
        }
        if feasible.is_empty() {
            return Err(Error::NoFeasibleConfiguration);
        }
        Ok(Enumeration { feasible, rejected })
    }
}
