//! Scenario files and the runs built on them.
//!
//! A scenario is a JSON document describing the network, the loads with
//! their demand ramps, the controller gain, simulation settings and output
//! locations. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "network": { "E": 2.0, "g_l": 1.0 },
//!   "loads": [
//!     { "kind": "flexible", "theta": 1.0, "P0": [[0, 0.25], [40, 0.4]] },
//!     { "kind": "inflexible", "P0": [[0, 0.3]] }
//!   ],
//!   "controller": { "kappa": 10 },
//!   "simulation": { "t_end": 300, "dt": 0.001 },
//!   "outputs": { "trace_path": "trace.csv", "report_path": "report.json", "sample_stride": 100 }
//! }
//! ```

pub mod analysis;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControllerParams, DemandSchedule, DynamicsError, IntegrationError, SimOptions};
use crate::equilibrium::{self, Branch, EquilibriumError, Region};
use crate::network::{ConfigError, IndexSet, LoadSpec, NetworkParams, SystemConfig, DEFAULT_KAPPA};
use crate::stability::{self, Classification, StabilityError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Integration(Box<IntegrationError>),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("no stable equilibrium at t = 0 to start from; set simulation.initial_g")]
    NoInitialEquilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub network: NetworkSection,
    pub loads: Vec<LoadSection>,
    #[serde(default)]
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(rename = "E")]
    pub source_voltage: f64,
    pub g_l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    Flexible,
    Inflexible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    pub kind: KindName,
    /// Demand breakpoints `[t, watts]`.
    #[serde(rename = "P0")]
    pub demand: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA }
    }
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse_voltage_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_trace_path")]
    pub trace_path: PathBuf,
    #[serde(default = "default_report_path")]
    pub report_path: PathBuf,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trace_path: default_trace_path(),
            report_path: default_report_path(),
            sample_stride: default_stride(),
        }
    }
}

fn default_trace_path() -> PathBuf {
    PathBuf::from("trace.csv")
}

fn default_report_path() -> PathBuf {
    PathBuf::from("report.json")
}

fn default_stride() -> usize {
    1
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Configuration with the demands at `t = 0`.
    pub config: SystemConfig,
    pub schedule: DemandSchedule,
    pub options: SimOptions,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let params = NetworkParams::new(file.network.source_voltage, file.network.g_l)?;
        let schedule = DemandSchedule::new(file.loads.iter().map(|l| l.demand.clone()).collect())?;
        let initial = schedule.eval(0.0);
        let mut loads = Vec::with_capacity(file.loads.len());
        for (k, (section, demand)) in file.loads.iter().zip(initial).enumerate() {
            let spec = match (section.kind, section.theta) {
                (KindName::Flexible, Some(theta)) => LoadSpec::flexible(demand, theta),
                (KindName::Inflexible, None) => LoadSpec::inflexible(demand),
                (KindName::Flexible, None) => {
                    return Err(ScenarioError::Schema(format!("load {}: flexible loads need theta", k + 1)))
                }
                (KindName::Inflexible, Some(_)) => {
                    return Err(ScenarioError::Schema(format!("load {}: theta is only allowed on flexible loads", k + 1)))
                }
            };
            loads.push(spec);
        }
        let config = SystemConfig::new(params, loads, file.controller.kappa)?;

        let sim = &file.simulation;
        let mut options = SimOptions::for_config(&config, sim.t_end);
        if let Some(dt) = sim.dt {
            options.dt = dt;
            options.settle_window = 100.0 * dt;
        }
        if let Some(f) = sim.collapse_voltage_fraction {
            options.collapse_voltage_fraction = f;
        }
        if let Some(tol) = sim.settle_tol {
            options.settle_tol = tol;
        }
        options.sample_stride = file.outputs.sample_stride;
        options.validate()?;
        if let Some(g) = &sim.initial_g {
            config.state(g.clone())?;
        }
        Ok(Self {
            file,
            config,
            schedule,
            options,
        })
    }

    /// Configuration with demands frozen at time `t`.
    pub fn config_at(&self, t: f64) -> Result<SystemConfig, ScenarioError> {
        Ok(self.config.with_demands(&self.schedule.eval(t))?)
    }

    /// The configured initial state, or else the stable equilibrium at
    /// `t = 0` (the satisfied-demand low root when it exists).
    pub fn initial_state(&self) -> Result<Vec<f64>, ScenarioError> {
        if let Some(g) = &self.file.simulation.initial_g {
            return Ok(g.clone());
        }
        let cfg = &self.config;
        let ctrl = ControllerParams::from_config(cfg);
        let satisfied = equilibrium::solve_subset(cfg, &ctrl, &IndexSet::empty())?;
        if let Some(eq) = satisfied
            .equilibria
            .iter()
            .find(|e| e.branch == Branch::Low && e.region == Region::Interior)
        {
            return Ok(eq.state.to_vec());
        }
        let catalog = equilibrium::enumerate_equilibria(cfg, &ctrl)?;
        let tol = stability::default_tol_hyp(cfg);
        for eq in &catalog.entries {
            if stability::classify(cfg, &ctrl, eq, tol)?.classification == Classification::Stable {
                return Ok(eq.state.to_vec());
            }
        }
        Err(ScenarioError::NoInitialEquilibrium)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "network": {"E": 2.0, "g_l": 1.0},
        "loads": [
            {"kind": "flexible", "theta": 1.0, "P0": [[0, 0.2], [10, 0.4]]},
            {"kind": "inflexible", "P0": [[0, 0.3]]}
        ],
        "simulation": {"t_end": 50}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.config.kappa(), 10.0);
        assert_eq!(s.config.n_flexible(), 1);
        assert_eq!(s.config.demands(), vec![0.2, 0.3]);
        assert_eq!(s.options.collapse_voltage_fraction, 0.02);
        assert_eq!(s.options.settle_tol, 1e-9);
        assert_eq!(s.file.outputs.trace_path, PathBuf::from("trace.csv"));
        let mid = s.config_at(5.0).unwrap().demands();
        assert!((mid[0] - 0.3).abs() < 1e-15 && mid[1] == 0.3);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = MINIMAL.replace("\"t_end\": 50", "\"t_end\": 50, \"tend\": 3");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("\"g_l\": 1.0", "\"g_l\": 1.0, \"R\": 2");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn theta_must_match_kind() {
        let text = MINIMAL.replace("\"kind\": \"flexible\", \"theta\": 1.0,", "\"kind\": \"flexible\",");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Schema(_))));
        let text = MINIMAL.replace("\"kind\": \"inflexible\",", "\"kind\": \"inflexible\", \"theta\": 2.0,");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Schema(_))));
    }

    #[test]
    fn rejects_bad_values() {
        let text = MINIMAL.replace("\"E\": 2.0", "\"E\": -2.0");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Config(_))));
        let text = MINIMAL.replace("[[0, 0.3]]", "[]");
        assert!(matches!(
            Scenario::from_json(&text),
            Err(ScenarioError::Dynamics(DynamicsError::EmptySchedule { load: 1 }))
        ));
        let text = MINIMAL.replace("\"t_end\": 50", "\"t_end\": 50, \"initial_g\": [0.1]");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Config(_))));
    }

    #[test]
    fn default_initial_state_is_satisfied_low_root() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let g = s.initial_state().unwrap();
        let flow = crate::network::power_flow(&s.config, &g);
        assert!(flow.mismatch.iter().all(|m| m.abs() < 1e-12));
        assert!(flow.g_eq < 1.0);
    }
}
