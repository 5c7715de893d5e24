//! Static power-flow quantities of a star DC network.
//!
//! A single source of voltage `E` feeds `n` loads through one line of
//! conductance `g_l`. Every load is a conductance `g_i` to ground at the
//! common load bus, so the bus voltage, the per-load powers and the network
//! capacity all follow from the sum of the load conductances.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("source voltage must be finite and > 0 (got {0})")]
    SourceVoltage(f64),
    #[error("line conductance must be finite and > 0 (got {0})")]
    LineConductance(f64),
    #[error("load {index}: demand must be finite and >= 0 (got {value})")]
    Demand { index: usize, value: f64 },
    #[error("load {index}: curtailment weight must be finite and > 0 (got {value})")]
    Weight { index: usize, value: f64 },
    #[error("controller gain must be finite and > 0 (got {0})")]
    Gain(f64),
    #[error("flexible load {index} listed after an inflexible load; list flexible loads first")]
    LoadOrder { index: usize },
    #[error("expected {expected} demand values, got {got}")]
    DemandCount { expected: usize, got: usize },
    #[error("at least one load is required")]
    NoLoads,
    #[error("conductance {index} must be finite and >= 0 (got {value})")]
    Conductance { index: usize, value: f64 },
    #[error("state has {got} components but the network has {expected} loads")]
    StateDimension { expected: usize, got: usize },
}

/// Source voltage and line conductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    source_voltage: f64,
    line_conductance: f64,
}

impl NetworkParams {
    pub fn new(source_voltage: f64, line_conductance: f64) -> Result<Self, ConfigError> {
        if !(source_voltage.is_finite() && source_voltage > 0.0) {
            return Err(ConfigError::SourceVoltage(source_voltage));
        }
        if !(line_conductance.is_finite() && line_conductance > 0.0) {
            return Err(ConfigError::LineConductance(line_conductance));
        }
        Ok(Self {
            source_voltage,
            line_conductance,
        })
    }

    #[inline]
    pub fn source_voltage(&self) -> f64 {
        self.source_voltage
    }

    #[inline]
    pub fn line_conductance(&self) -> f64 {
        self.line_conductance
    }

    /// Network capacity `E² g_l / 4`.
    #[inline]
    pub fn max_power(&self) -> f64 {
        self.source_voltage * self.source_voltage * self.line_conductance / 4.0
    }

    /// `(E g_l)²`, the scale factor shared by every power expression.
    #[inline]
    pub fn power_scale(&self) -> f64 {
        let eg = self.source_voltage * self.line_conductance;
        eg * eg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LoadKind {
    /// Accepts curtailment under overload, weighted by `theta`.
    Flexible { theta: f64 },
    /// Always tries to draw its full demand.
    Inflexible,
}

impl LoadKind {
    pub fn is_flexible(&self) -> bool {
        matches!(self, LoadKind::Flexible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Nominal power demand `P0_i` in watts.
    pub demand: f64,
    pub kind: LoadKind,
}

impl LoadSpec {
    pub fn flexible(demand: f64, theta: f64) -> Self {
        Self {
            demand,
            kind: LoadKind::Flexible { theta },
        }
    }

    pub fn inflexible(demand: f64) -> Self {
        Self {
            demand,
            kind: LoadKind::Inflexible,
        }
    }
}

/// Default controller gain.
pub const DEFAULT_KAPPA: f64 = 10.0;

/// Network, loads and controller gain, together with every constant derived
/// from them.
///
/// Loads are indexed from zero and stored flexible-first, so the flexible
/// set is always `0..n_flexible()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    params: NetworkParams,
    loads: Vec<LoadSpec>,
    kappa: f64,
    n_flexible: usize,
    total_demand: f64,
    // indexed over the flexible loads only
    gamma: Vec<f64>,
    target: Vec<f64>,
}

impl SystemConfig {
    pub fn new(params: NetworkParams, loads: Vec<LoadSpec>, kappa: f64) -> Result<Self, ConfigError> {
        if loads.is_empty() {
            return Err(ConfigError::NoLoads);
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(ConfigError::Gain(kappa));
        }
        let mut seen_inflexible = false;
        for (index, load) in loads.iter().enumerate() {
            if !(load.demand.is_finite() && load.demand >= 0.0) {
                return Err(ConfigError::Demand {
                    index,
                    value: load.demand,
                });
            }
            match load.kind {
                LoadKind::Flexible { theta } => {
                    if !(theta.is_finite() && theta > 0.0) {
                        return Err(ConfigError::Weight { index, value: theta });
                    }
                    if seen_inflexible {
                        return Err(ConfigError::LoadOrder { index });
                    }
                }
                LoadKind::Inflexible => seen_inflexible = true,
            }
        }
        let n_flexible = loads.iter().filter(|l| l.kind.is_flexible()).count();
        let mut cfg = Self {
            params,
            loads,
            kappa,
            n_flexible,
            total_demand: 0.0,
            gamma: Vec::new(),
            target: Vec::new(),
        };
        cfg.derive();
        Ok(cfg)
    }

    fn derive(&mut self) {
        self.total_demand = self.loads.iter().map(|l| l.demand).sum();
        let inv_sum: f64 = self.thetas().map(|t| 1.0 / t).sum();
        self.gamma = self.thetas().map(|t| t * inv_sum).collect();
        let half_e_sq = self.half_voltage_sq();
        let margin = self.params.max_power() - self.total_demand;
        self.target = self
            .gamma
            .iter()
            .zip(&self.loads)
            .map(|(gamma, load)| load.demand / half_e_sq + margin / (gamma * half_e_sq))
            .collect();
    }

    fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.loads.iter().filter_map(|l| match l.kind {
            LoadKind::Flexible { theta } => Some(theta),
            LoadKind::Inflexible => None,
        })
    }

    /// Same network and loads with the demands replaced.
    pub fn with_demands(&self, demands: &[f64]) -> Result<Self, ConfigError> {
        if demands.len() != self.loads.len() {
            return Err(ConfigError::DemandCount {
                expected: self.loads.len(),
                got: demands.len(),
            });
        }
        let loads = self
            .loads
            .iter()
            .zip(demands)
            .map(|(l, &demand)| LoadSpec { demand, kind: l.kind })
            .collect();
        Self::new(self.params, loads, self.kappa)
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self, ConfigError> {
        Self::new(self.params, self.loads.clone(), kappa)
    }

    pub fn with_params(&self, params: NetworkParams) -> Result<Self, ConfigError> {
        Self::new(params, self.loads.clone(), self.kappa)
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn loads(&self) -> &[LoadSpec] {
        &self.loads
    }

    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn n_flexible(&self) -> usize {
        self.n_flexible
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_flexible(&self, i: usize) -> bool {
        i < self.n_flexible
    }

    pub fn flexible(&self) -> IndexSet {
        IndexSet((0..self.n_flexible).collect())
    }

    pub fn inflexible(&self) -> IndexSet {
        IndexSet((self.n_flexible..self.n()).collect())
    }

    pub fn demand(&self, i: usize) -> f64 {
        self.loads[i].demand
    }

    pub fn demands(&self) -> Vec<f64> {
        self.loads.iter().map(|l| l.demand).collect()
    }

    pub fn theta(&self, i: usize) -> Option<f64> {
        match self.loads[i].kind {
            LoadKind::Flexible { theta } => Some(theta),
            LoadKind::Inflexible => None,
        }
    }

    /// `P0_tot`.
    pub fn total_demand(&self) -> f64 {
        self.total_demand
    }

    /// `P_max = E² g_l / 4`.
    pub fn max_power(&self) -> f64 {
        self.params.max_power()
    }

    /// Overload margin `P0_tot - P_max`; positive under overload.
    pub fn overload(&self) -> f64 {
        self.total_demand - self.max_power()
    }

    /// `(E/2)²`, the squared bus voltage at maximum transfer.
    pub fn half_voltage_sq(&self) -> f64 {
        let half = self.params.source_voltage / 2.0;
        half * half
    }

    /// Curtailment weights `gamma_i = theta_i * sum_j 1/theta_j`, flexible loads only.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Controller target conductances `g_bar_i`, flexible loads only.
    pub fn target_conductance(&self) -> &[f64] {
        &self.target
    }

    /// Checks a state against this configuration's dimension.
    pub fn state(&self, g: Vec<f64>) -> Result<ConductanceState, ConfigError> {
        if g.len() != self.n() {
            return Err(ConfigError::StateDimension {
                expected: self.n(),
                got: g.len(),
            });
        }
        ConductanceState::new(g)
    }
}

/// Vector of load conductances; every component finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ConductanceState(Vec<f64>);

impl ConductanceState {
    pub fn new(g: Vec<f64>) -> Result<Self, ConfigError> {
        for (index, &value) in g.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::Conductance { index, value });
            }
        }
        Ok(Self(g))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ConductanceState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A set of load indices, kept sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Members of `0..bits` whose bit is set in `mask`.
    pub fn from_mask(mask: u64, bits: usize) -> Self {
        Self((0..bits).filter(|&i| mask >> i & 1 == 1).collect())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn complement(&self, n: usize) -> Self {
        Self((0..n).filter(|&i| !self.contains(i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }
}

impl fmt::Display for IndexSet {
    /// One-based, as in `{1,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Power flow at one conductance state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlow {
    pub voltage: f64,
    pub power: Vec<f64>,
    /// `P_i - P0_i`.
    pub mismatch: Vec<f64>,
    pub total_power: f64,
    pub g_eq: f64,
}

#[inline]
pub fn equivalent_conductance(g: &[f64]) -> f64 {
    g.iter().sum()
}

/// Load-bus voltage `E g_l / (g_eq + g_l)`.
pub fn voltage(cfg: &SystemConfig, g: &[f64]) -> f64 {
    let p = cfg.params();
    p.source_voltage() * p.line_conductance() / (equivalent_conductance(g) + p.line_conductance())
}

pub fn power_flow(cfg: &SystemConfig, g: &[f64]) -> PowerFlow {
    let g_eq = equivalent_conductance(g);
    let p = cfg.params();
    let voltage = p.source_voltage() * p.line_conductance() / (g_eq + p.line_conductance());
    let v_sq = voltage * voltage;
    let power: Vec<f64> = g.iter().map(|gi| v_sq * gi).collect();
    let mismatch = power
        .iter()
        .zip(cfg.loads())
        .map(|(pi, load)| pi - load.demand)
        .collect();
    let total_power = power.iter().sum();
    PowerFlow {
        voltage,
        power,
        mismatch,
        total_power,
        g_eq,
    }
}

/// Power drawn by the loads in `set`.
pub fn aggregate_power(cfg: &SystemConfig, g: &[f64], set: &IndexSet) -> f64 {
    let p = cfg.params();
    let denom = equivalent_conductance(g) + p.line_conductance();
    let g_set: f64 = set.iter().map(|i| g[i]).sum();
    p.power_scale() * g_set / (denom * denom)
}

/// `∂P_i/∂g_i`. Positive iff `2 g_i < g_l + g_eq`.
pub fn power_sensitivity(cfg: &SystemConfig, g: &[f64], i: usize) -> f64 {
    let p = cfg.params();
    let g_eq = equivalent_conductance(g);
    let denom = g_eq + p.line_conductance();
    p.power_scale() * (p.line_conductance() + g_eq - 2.0 * g[i]) / (denom * denom * denom)
}

/// Largest power the loads in `set` can draw with the other loads held at
/// their conductances in `g`, and the aggregate conductance of `set` that
/// achieves it.
pub fn max_transfer(cfg: &SystemConfig, set: &IndexSet, g: &[f64]) -> (f64, f64) {
    let p = cfg.params();
    let g_other: f64 = set.complement(g.len()).iter().map(|i| g[i]).sum();
    let gl = p.line_conductance();
    (p.max_power() * gl / (gl + g_other), gl + g_other)
}
