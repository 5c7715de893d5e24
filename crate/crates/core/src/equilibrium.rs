//! Closed-form enumeration of the equilibria of the controlled load dynamics.
//!
//! An equilibrium has, for every load, either a closed gate (`α_i = 0`,
//! flexible loads only) or a satisfied demand (`ΔP_i = 0`). Fixing the set
//! `G` of gated loads pins `g_i = ḡ_i` on `G`, and the remaining loads share
//! one scalar condition on their aggregate conductance `x`:
//!
//! `(E g_l)² x / (x + ḡ_G + g_l)² = P0_{G^c}`
//!
//! which is a quadratic in `x` with a low root below `ḡ_G + g_l` and a high
//! root above it whenever the demand is under the line capacity for `G^c`.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, ControllerParams, GATE_POLE_EPS};
use crate::network::{self, ConductanceState, IndexSet, PowerFlow, SystemConfig};

/// Largest flexible set accepted by [`enumerate_equilibria`].
pub const MAX_ENUMERATED_FLEXIBLE: usize = 20;
/// Conductance-space distance under which two equilibria are the same point.
pub const DEDUP_TOL: f64 = 1e-9;
/// Gate residual allowed on gated loads.
pub const GATE_RESIDUAL_TOL: f64 = 1e-9;
/// Demand residual allowed on satisfied loads, relative to `P_max`.
pub const MISMATCH_RESIDUAL_TOL: f64 = 1e-9;
/// Distance of `g_eq` from `g_l`, relative to `g_l`, treated as the boundary of M.
pub const REGION_TOL: f64 = 1e-12;
/// Relative discriminant under which the two roots are taken as one.
pub const DOUBLE_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("{count} flexible loads exceed the enumeration limit of {limit}")]
    TooManyFlexibleLoads { count: usize, limit: usize },
    #[error("load {load} is not flexible and cannot be gated")]
    NotFlexible { load: usize },
    #[error("equilibrium does not qualify: {0}")]
    WrongEquilibriumKind(&'static str),
    #[error("state is not an equilibrium: gate residual {gate:e}, demand residual {mismatch:e}")]
    ResidualTooLarge { gate: f64, mismatch: f64 },
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Low,
    High,
}

/// Position relative to `M = {g : Σ g_i < g_l}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Boundary,
    Exterior,
}

impl Region {
    pub fn of(cfg: &SystemConfig, g_eq: f64) -> Self {
        let gl = cfg.params().line_conductance();
        let tol = REGION_TOL * gl;
        if (g_eq - gl).abs() <= tol {
            Region::Boundary
        } else if g_eq < gl {
            Region::Interior
        } else {
            Region::Exterior
        }
    }

    /// In the closure of M.
    pub fn in_closure(&self) -> bool {
        !matches!(self, Region::Exterior)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: ConductanceState,
    /// Gated loads.
    pub subset: IndexSet,
    pub branch: Branch,
    pub region: Region,
    pub flow: PowerFlow,
    /// Low and high roots coincide; the point is not hyperbolic.
    pub double_root: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumResidual {
    /// `max |α_i|` over gated loads.
    pub gate: f64,
    /// `max |ΔP_i|` over the other loads.
    pub mismatch: f64,
}

impl Equilibrium {
    /// Builds an equilibrium from a state, checking the fixed-point residuals.
    pub fn verified(
        cfg: &SystemConfig,
        ctrl: &ControllerParams,
        state: ConductanceState,
        subset: IndexSet,
    ) -> Result<Self, EquilibriumError> {
        if let Some(load) = subset.iter().find(|&i| !cfg.is_flexible(i)) {
            return Err(EquilibriumError::NotFlexible { load });
        }
        let residual = residual(cfg, ctrl, &state, &subset)?;
        if residual.gate > GATE_RESIDUAL_TOL || residual.mismatch > MISMATCH_RESIDUAL_TOL * cfg.max_power() {
            return Err(EquilibriumError::ResidualTooLarge {
                gate: residual.gate,
                mismatch: residual.mismatch,
            });
        }
        let gated: f64 = subset.iter().map(|i| ctrl.target[i]).sum();
        let free: f64 = subset.complement(cfg.n()).iter().map(|i| state[i]).sum();
        let branch = if free <= gated + cfg.params().line_conductance() {
            Branch::Low
        } else {
            Branch::High
        };
        let flow = network::power_flow(cfg, &state);
        Ok(Self {
            region: Region::of(cfg, flow.g_eq),
            state,
            subset,
            branch,
            flow,
            double_root: false,
        })
    }

    pub fn residual(&self, cfg: &SystemConfig, ctrl: &ControllerParams) -> Result<EquilibriumResidual, EquilibriumError> {
        residual(cfg, ctrl, &self.state, &self.subset)
    }
}

fn residual(
    cfg: &SystemConfig,
    ctrl: &ControllerParams,
    g: &[f64],
    subset: &IndexSet,
) -> Result<EquilibriumResidual, EquilibriumError> {
    let flow = network::power_flow(cfg, g);
    let mut gate = 0.0_f64;
    let mut mismatch = 0.0_f64;
    for i in 0..cfg.n() {
        if subset.contains(i) {
            gate = gate.max(dynamics::alpha(cfg, ctrl, g, i)?.abs());
        } else {
            mismatch = mismatch.max(flow.mismatch[i].abs());
        }
    }
    Ok(EquilibriumResidual { gate, mismatch })
}

/// Why a gated set has no equilibrium in the non-negative orthant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    /// A gated load's target conductance is negative.
    NegativeTarget { load: usize, target: f64 },
    /// The ungated demand exceeds what the line can deliver to those loads.
    CapacityExceeded { demand: f64, capacity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSolution {
    pub subset: IndexSet,
    pub equilibria: Vec<Equilibrium>,
    pub infeasibility: Option<Infeasibility>,
    /// Candidate points dropped because an ungated flexible load sits on
    /// its gate pole.
    pub on_gate_pole: usize,
}

/// All equilibria with gated set `subset` (zero, one or two points).
pub fn solve_subset(
    cfg: &SystemConfig,
    ctrl: &ControllerParams,
    subset: &IndexSet,
) -> Result<SubsetSolution, EquilibriumError> {
    if let Some(load) = subset.iter().find(|&i| !cfg.is_flexible(i)) {
        return Err(EquilibriumError::NotFlexible { load });
    }
    let mut solution = SubsetSolution {
        subset: subset.clone(),
        equilibria: Vec::new(),
        infeasibility: None,
        on_gate_pole: 0,
    };
    if let Some(load) = subset.iter().find(|&i| ctrl.target[i] < 0.0) {
        solution.infeasibility = Some(Infeasibility::NegativeTarget {
            load,
            target: ctrl.target[load],
        });
        return Ok(solution);
    }

    let n = cfg.n();
    let params = cfg.params();
    let gl = params.line_conductance();
    let k = params.power_scale();
    let free = subset.complement(n);
    let gated: f64 = subset.iter().map(|i| ctrl.target[i]).sum();
    let c = gated + gl;
    let demand: f64 = free.iter().map(|i| cfg.demand(i)).sum();

    // (root, branch, double)
    let roots: Vec<(f64, Branch, bool)> = if demand == 0.0 {
        vec![(0.0, Branch::Low, false)]
    } else {
        // P x² + (2Pc - K) x + P c² = 0, discriminant K (K - 4Pc)
        let disc = 1.0 - 4.0 * demand * c / k;
        if disc < -DOUBLE_ROOT_TOL {
            solution.infeasibility = Some(Infeasibility::CapacityExceeded {
                demand,
                capacity: k / (4.0 * c),
            });
            return Ok(solution);
        } else if disc <= DOUBLE_ROOT_TOL {
            vec![(c, Branch::Low, true)]
        } else {
            let high = (k - 2.0 * demand * c + k * disc.sqrt()) / (2.0 * demand);
            // product of the roots is c²
            let low = c * c / high;
            vec![(low, Branch::Low, false), (high, Branch::High, false)]
        }
    };

    for (x, branch, double_root) in roots {
        let v = params.source_voltage() * gl / (x + c);
        let v_sq = v * v;
        let g: Vec<f64> = (0..n)
            .map(|i| if subset.contains(i) { ctrl.target[i] } else { cfg.demand(i) / v_sq })
            .collect();
        let on_pole = free
            .iter()
            .filter(|&i| cfg.is_flexible(i))
            .any(|i| (1.0 + ctrl.kappa * (ctrl.target[i] - g[i])).abs() < GATE_POLE_EPS);
        if on_pole {
            solution.on_gate_pole += 1;
            continue;
        }
        let flow = network::power_flow(cfg, &g);
        solution.equilibria.push(Equilibrium {
            state: ConductanceState::new(g).expect("targets and demands are non-negative"),
            subset: subset.clone(),
            branch,
            region: Region::of(cfg, flow.g_eq),
            flow,
            double_root,
        });
    }
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCatalog {
    pub entries: Vec<Equilibrium>,
    /// Gated sets with no equilibrium, and why.
    pub infeasible: Vec<(IndexSet, Infeasibility)>,
}

/// Every equilibrium over all gated sets `G ⊆ F`, deduplicated.
pub fn enumerate_equilibria(cfg: &SystemConfig, ctrl: &ControllerParams) -> Result<EquilibriumCatalog, EquilibriumError> {
    let nf = cfg.n_flexible();
    if nf > MAX_ENUMERATED_FLEXIBLE {
        return Err(EquilibriumError::TooManyFlexibleLoads {
            count: nf,
            limit: MAX_ENUMERATED_FLEXIBLE,
        });
    }
    let mut catalog = EquilibriumCatalog {
        entries: Vec::new(),
        infeasible: Vec::new(),
    };
    for mask in 0..(1u64 << nf) {
        let subset = IndexSet::from_mask(mask, nf);
        let solution = solve_subset(cfg, ctrl, &subset)?;
        if let Some(reason) = solution.infeasibility {
            catalog.infeasible.push((subset, reason));
        }
        for eq in solution.equilibria {
            let duplicate = catalog.entries.iter().any(|e| distance(&e.state, &eq.state) < DEDUP_TOL);
            if !duplicate {
                catalog.entries.push(eq);
            }
        }
    }
    Ok(catalog)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurtailmentShare {
    pub load: usize,
    pub theta: f64,
    pub gamma: f64,
    /// Realized `ΔP_i`.
    pub mismatch: f64,
    /// Weighted share of the deficit, `(P_max - P0_tot) / γ_i`.
    pub expected: f64,
}

/// Curtailment allocation over the flexible loads and its optimality residuals
/// for `min Σ θ_i ΔP_i² / 2` subject to `Σ ΔP_i = P_max - P0_tot`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurtailmentReport {
    pub shares: Vec<CurtailmentShare>,
    /// `P_max - P0_tot`.
    pub deficit: f64,
    /// Spread of `θ_i ΔP_i` across flexible loads.
    pub stationarity: f64,
    /// `|Σ ΔP_i - (P_max - P0_tot)|`.
    pub feasibility: f64,
    pub max_violation: f64,
}

/// Curtailment at the capacity-limited equilibrium with every flexible load gated.
pub fn curtailment_report(cfg: &SystemConfig, eq: &Equilibrium) -> Result<CurtailmentReport, EquilibriumError> {
    if cfg.n_flexible() == 0 {
        return Err(EquilibriumError::WrongEquilibriumKind("no flexible loads"));
    }
    if eq.subset != cfg.flexible() {
        return Err(EquilibriumError::WrongEquilibriumKind("not every flexible load is gated"));
    }
    if eq.region != Region::Boundary {
        return Err(EquilibriumError::WrongEquilibriumKind("equilibrium is not on the capacity boundary"));
    }
    Ok(curtailment_at(cfg, &eq.flow))
}

/// Curtailment figures for any power flow, without checking that it is
/// the efficient equilibrium.
pub fn curtailment_at(cfg: &SystemConfig, flow: &PowerFlow) -> CurtailmentReport {
    let deficit = cfg.max_power() - cfg.total_demand();
    let shares: Vec<CurtailmentShare> = cfg
        .flexible()
        .iter()
        .map(|i| CurtailmentShare {
            load: i,
            theta: cfg.theta(i).expect("flexible"),
            gamma: cfg.gamma()[i],
            mismatch: flow.mismatch[i],
            expected: deficit / cfg.gamma()[i],
        })
        .collect();
    let weighted = shares.iter().map(|s| s.theta * s.mismatch);
    let (lo, hi) = weighted.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
    let stationarity = if shares.is_empty() { 0.0 } else { hi - lo };
    let feasibility = (shares.iter().map(|s| s.mismatch).sum::<f64>() - deficit).abs();
    CurtailmentReport {
        shares,
        deficit,
        stationarity,
        feasibility,
        max_violation: stationarity.max(feasibility),
    }
}
