//! Frozen-demand analyses of a scenario: equilibrium catalogs, local
//! stability at a state, the game test, and parameter sweeps.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::{Scenario, ScenarioError};
use crate::dynamics::{self, ControllerParams, Termination};
use crate::equilibrium::{self, Branch, Infeasibility, Region};
use crate::game::{self, DominanceScan, DominanceVerdict, GameCheckReport, LneTolerance};
use crate::network::{IndexSet, SystemConfig};
use crate::stability::{self, Classification, EigenMethod, JacobianKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogRow {
    /// Gated set, one-based.
    pub gated: String,
    pub branch: Branch,
    pub region: Region,
    pub double_root: bool,
    pub state: Vec<f64>,
    pub voltage: f64,
    pub g_eq: f64,
    pub eigenvalues: Vec<f64>,
    pub imaginary: Vec<f64>,
    pub method: EigenMethod,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibleRow {
    pub gated: String,
    pub reason: Infeasibility,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogReport {
    pub time: f64,
    pub demands: Vec<f64>,
    pub total_demand: f64,
    pub max_power: f64,
    pub rows: Vec<CatalogRow>,
    pub infeasible: Vec<InfeasibleRow>,
    pub notes: Vec<String>,
}

/// Every equilibrium of `cfg` with its stability verdict.
pub fn catalog(cfg: &SystemConfig, time: f64) -> Result<CatalogReport, ScenarioError> {
    let ctrl = ControllerParams::from_config(cfg);
    let found = equilibrium::enumerate_equilibria(cfg, &ctrl)?;
    let tol = stability::default_tol_hyp(cfg);
    let mut rows = Vec::with_capacity(found.entries.len());
    for eq in &found.entries {
        let verdict = stability::classify(cfg, &ctrl, eq, tol)?;
        rows.push(CatalogRow {
            gated: eq.subset.to_string(),
            branch: eq.branch,
            region: eq.region,
            double_root: eq.double_root,
            state: eq.state.to_vec(),
            voltage: eq.flow.voltage,
            g_eq: eq.flow.g_eq,
            eigenvalues: verdict.spectrum.eigenvalues,
            imaginary: verdict.spectrum.imaginary,
            method: verdict.spectrum.method,
            classification: verdict.classification,
        });
    }
    let infeasible: Vec<InfeasibleRow> = found
        .infeasible
        .iter()
        .map(|(set, reason)| InfeasibleRow {
            gated: set.to_string(),
            reason: *reason,
        })
        .collect();

    let mut notes = Vec::new();
    let overload = cfg.overload();
    let flexible = cfg.flexible();
    if overload > 0.0 && !flexible.is_empty() {
        let proper = infeasible.iter().filter(|r| r.gated != flexible.to_string()).count();
        let total = (1usize << flexible.len()) - 1;
        notes.push(format!(
            "demand exceeds capacity by {overload:.6e}: {proper} of {total} gated sets other than F={flexible} admit no equilibrium"
        ));
    }
    if overload > 0.0 && flexible.is_empty() {
        notes.push("demand exceeds capacity with no flexible loads: no equilibrium exists".into());
    }
    if overload.abs() <= 1e-12 * cfg.max_power() {
        notes.push("demand equals capacity: the two ungated roots merge at g_eq = g_l".into());
    }
    Ok(CatalogReport {
        time,
        demands: cfg.demands(),
        total_demand: cfg.total_demand(),
        max_power: cfg.max_power(),
        rows,
        infeasible,
        notes,
    })
}

fn infeasibility_text(reason: &Infeasibility) -> String {
    match reason {
        Infeasibility::NegativeTarget { load, target } => {
            format!("target conductance of load {} is negative ({target:.6e})", load + 1)
        }
        Infeasibility::CapacityExceeded { demand, capacity } => {
            format!("ungated demand {demand:.6e} exceeds deliverable {capacity:.6e}")
        }
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_spectrum(re: &[f64], im: &[f64]) -> String {
    let parts: Vec<String> = re
        .iter()
        .zip(im)
        .map(|(r, i)| if *i == 0.0 { format!("{r:.6e}") } else { format!("{r:.6e}{i:+.6e}i") })
        .collect();
    format!("[{}]", parts.join(", "))
}

impl CatalogReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "equilibria at t = {}  (P0_tot = {:.6e}, P_max = {:.6e})",
            self.time, self.total_demand, self.max_power
        );
        let _ = writeln!(out, "{:<10} {:<6} {:<9} {:<14} {:<14} {:<14} eigenvalues", "G", "branch", "region", "verdict", "v", "g_eq");
        for r in &self.rows {
            let branch = match r.branch {
                Branch::Low => "low",
                Branch::High => "high",
            };
            let region = match r.region {
                Region::Interior => "interior",
                Region::Boundary => "boundary",
                Region::Exterior => "exterior",
            };
            let _ = writeln!(
                out,
                "{:<10} {:<6} {:<9} {:<14} {:<14.6e} {:<14.6e} {}",
                r.gated,
                branch,
                region,
                verdict_text(r.classification),
                r.voltage,
                r.g_eq,
                fmt_spectrum(&r.eigenvalues, &r.imaginary)
            );
        }
        if self.rows.is_empty() {
            let _ = writeln!(out, "(none)");
        }
        for r in &self.infeasible {
            let _ = writeln!(out, "G = {}: no equilibrium, {}", r.gated, infeasibility_text(&r.reason));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

fn verdict_text(c: Classification) -> &'static str {
    match c {
        Classification::Stable => "stable",
        Classification::Unstable => "unstable",
        Classification::Nonhyperbolic => "nonhyperbolic",
    }
}

/// Linearization of the scenario's dynamics at an arbitrary state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateStability {
    pub state: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Every `|ġ_i|` below `1e-8 (E g_l)²`.
    pub is_equilibrium: bool,
    pub jacobian: JacobianKind,
    pub eigenvalues: Vec<f64>,
    pub imaginary: Vec<f64>,
    pub method: EigenMethod,
    pub classification: Classification,
}

pub fn stability_at(cfg: &SystemConfig, state: &[f64]) -> Result<StateStability, ScenarioError> {
    let g = cfg.state(state.to_vec())?;
    let ctrl = ControllerParams::from_config(cfg);
    let rhs = dynamics::rhs(cfg, &ctrl, &g)?;
    let tol = 1e-8 * cfg.params().power_scale();
    let jd = stability::jacobian(cfg, &ctrl, &g)?;
    let spectrum = stability::spectrum(&jd)?;
    let classification = stability::classify_spectrum(&spectrum, stability::default_tol_hyp(cfg));
    Ok(StateStability {
        state: g.to_vec(),
        is_equilibrium: rhs.iter().all(|x| x.abs() < tol),
        rhs,
        jacobian: jd.kind,
        eigenvalues: spectrum.eigenvalues,
        imaginary: spectrum.imaginary,
        method: spectrum.method,
        classification,
    })
}

impl StateStability {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "state       {}", fmt_list(&self.state));
        let _ = writeln!(out, "g dot       {}", fmt_list(&self.rhs));
        let _ = writeln!(out, "equilibrium {}", if self.is_equilibrium { "yes" } else { "no" });
        let _ = writeln!(out, "eigenvalues {}", fmt_spectrum(&self.eigenvalues, &self.imaginary));
        let _ = writeln!(out, "verdict     {}", verdict_text(self.classification));
        if !self.is_equilibrium {
            let _ = writeln!(out, "note: not a rest point; the verdict describes the linearization only");
        }
        out
    }
}

/// The local Nash test at a state, with the stability of the same state
/// under the inflexible dynamics for comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameReport {
    pub check: GameCheckReport,
    pub utility: Vec<f64>,
    /// Only when the state is a rest point of the gradient play.
    pub stability: Option<Classification>,
    pub dominance: Option<DominanceScan>,
}

/// Dominance scan request: the load, the opponents' total conductance,
/// and the grid `0, g_max/points, ..., g_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRequest {
    pub load: usize,
    pub others: f64,
    pub g_max: f64,
    pub points: usize,
}

pub fn game_report(cfg: &SystemConfig, state: &[f64], scan: Option<ScanRequest>) -> Result<GameReport, ScenarioError> {
    let g = cfg.state(state.to_vec())?;
    let check = game::check_lne(cfg, &g, LneTolerance::for_config(cfg));
    let utility = (0..cfg.n()).map(|i| game::utility(cfg, &g, i)).collect();
    let stability = if check.is_equilibrium {
        let jd = stability::jacobian_inflexible(cfg, &g);
        let spectrum = stability::spectrum(&jd)?;
        Some(stability::classify_spectrum(&spectrum, stability::default_tol_hyp(cfg)))
    } else {
        None
    };
    let dominance = match scan {
        None => None,
        Some(req) => {
            if req.load >= cfg.n() {
                return Err(ScenarioError::Schema(format!("scan load {} out of range", req.load + 1)));
            }
            if !(req.g_max > 0.0 && req.g_max.is_finite()) || req.points < 2 || !(req.others >= 0.0) {
                return Err(ScenarioError::Schema("scan needs g_max > 0, others >= 0 and at least 2 points".into()));
            }
            let grid: Vec<f64> = (0..=req.points).map(|k| req.g_max * k as f64 / req.points as f64).collect();
            Some(game::dominance_scan(cfg, req.load, req.others, &grid))
        }
    };
    Ok(GameReport {
        check,
        utility,
        stability,
        dominance,
    })
}

impl GameReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<14} {:<14} {:<14} {:<14}", "load", "g", "utility", "du/dg", "d2u/dg2");
        for i in 0..self.check.point.len() {
            let _ = writeln!(
                out,
                "{:<6} {:<14.6e} {:<14.6e} {:<14.6e} {:<14.6e}",
                i + 1,
                self.check.point[i],
                self.utility[i],
                self.check.gradient[i],
                self.check.curvature[i]
            );
        }
        let _ = writeln!(out, "local Nash equilibrium: {}", if self.check.is_lne { "yes" } else { "no" });
        match self.stability {
            Some(c) => {
                let _ = writeln!(out, "inflexible dynamics at this point: {}", verdict_text(c));
            }
            None => {
                let _ = writeln!(out, "inflexible dynamics at this point: not a rest point");
            }
        }
        if let Some(scan) = &self.dominance {
            let _ = match scan.verdict {
                DominanceVerdict::IncreasingToInfinity {
                    from_conductance,
                    final_slope,
                    ..
                } => writeln!(
                    out,
                    "dominance scan, load {}: increasing from g = {from_conductance:.6e}, final slope {final_slope:.6e}",
                    scan.load + 1
                ),
                DominanceVerdict::NotIncreasing { final_slope } => writeln!(
                    out,
                    "dominance scan, load {}: not increasing at the end of the grid, final slope {final_slope:.6e}",
                    scan.load + 1
                ),
            };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Multiplies every demand breakpoint.
    P0Scale,
    LineConductance,
    Kappa,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::P0Scale => "p0-scale",
            Self::LineConductance => "g_l",
            Self::Kappa => "kappa",
        }
    }
}

impl FromStr for SweepParameter {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p0-scale" | "p0_scale" => Ok(Self::P0Scale),
            "g-line" | "g_l" | "gl" => Ok(Self::LineConductance),
            "kappa" => Ok(Self::Kappa),
            other => Err(ScenarioError::Schema(format!(
                "unknown sweep parameter '{other}' (expected p0-scale, g_l or kappa)"
            ))),
        }
    }
}

impl Scenario {
    /// The same scenario with one parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Scenario, ScenarioError> {
        let mut file = self.file.clone();
        match parameter {
            SweepParameter::P0Scale => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(ScenarioError::Schema(format!("p0 scale must be finite and >= 0, got {value}")));
                }
                for load in &mut file.loads {
                    for point in &mut load.demand {
                        point.1 *= value;
                    }
                }
            }
            SweepParameter::LineConductance => file.network.g_l = value,
            SweepParameter::Kappa => file.controller.kappa = value,
        }
        Scenario::from_file(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Catalog only.
    Static,
    /// Catalog plus a full simulation per point.
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub max_power: f64,
    pub total_demand: f64,
    /// `1 - P0_tot / P_max`, the relative discriminant of the ungated roots.
    pub margin: f64,
    pub low: Option<(f64, f64)>,
    pub high: Option<(f64, f64)>,
    pub n_equilibria: usize,
    pub n_stable: usize,
    /// `(v, g_eq, ΔP)` of the stable equilibrium in cl(M), if there is one.
    pub operating: Option<(f64, f64, Vec<f64>)>,
    pub simulated: Option<SimulatedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPoint {
    pub termination: Termination,
    pub voltage: f64,
    pub g_eq: f64,
    pub mismatch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPoint {
    pub value: f64,
    pub g_eq: f64,
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub time: f64,
    pub rows: Vec<SweepRow>,
    pub folds: Vec<FoldPoint>,
    pub skipped: Vec<(f64, String)>,
}

/// Evaluates `steps + 1` evenly spaced parameter values in parallel; rows
/// come back in parameter order. Points where the configuration is invalid
/// are listed in `skipped`.
pub fn sweep(
    scenario: &Scenario,
    parameter: SweepParameter,
    from: f64,
    to: f64,
    steps: usize,
    time: f64,
    mode: SweepMode,
) -> Result<SweepReport, ScenarioError> {
    if !(from.is_finite() && to.is_finite()) || steps == 0 {
        return Err(ScenarioError::Schema("sweep range must be finite with at least one step".into()));
    }
    let values: Vec<f64> = (0..=steps).map(|k| from + (to - from) * k as f64 / steps as f64).collect();
    let results: Vec<Result<SweepRow, ScenarioError>> =
        values.par_iter().map(|&value| sweep_point(scenario, parameter, value, time, mode)).collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (value, result) in values.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e @ (ScenarioError::Config(_) | ScenarioError::Dynamics(_) | ScenarioError::Schema(_))) => {
                skipped.push((*value, e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }

    let mut folds = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.margin == 0.0 && folds.last().map(|f: &FoldPoint| f.value) != Some(a.value) {
            folds.push(fold_at(scenario, parameter, a.value, time)?);
        }
        if a.margin * b.margin < 0.0 {
            let value = bisect_fold(scenario, parameter, a.value, b.value, a.margin, time)?;
            folds.push(fold_at(scenario, parameter, value, time)?);
        }
    }
    if let Some(last) = rows.last() {
        if last.margin == 0.0 && folds.last().map(|f| f.value) != Some(last.value) {
            folds.push(fold_at(scenario, parameter, last.value, time)?);
        }
    }
    Ok(SweepReport {
        parameter,
        time,
        rows,
        folds,
        skipped,
    })
}

fn margin(cfg: &SystemConfig) -> f64 {
    1.0 - cfg.total_demand() / cfg.max_power()
}

fn bisect_fold(
    scenario: &Scenario,
    parameter: SweepParameter,
    mut lo: f64,
    mut hi: f64,
    margin_lo: f64,
    time: f64,
) -> Result<f64, ScenarioError> {
    let lo_positive = margin_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let m = margin(&scenario.with_parameter(parameter, mid)?.config_at(time)?);
        if m == 0.0 {
            return Ok(mid);
        }
        if (m > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The merged ungated root at a fold value.
fn fold_at(scenario: &Scenario, parameter: SweepParameter, value: f64, time: f64) -> Result<FoldPoint, ScenarioError> {
    let cfg = scenario.with_parameter(parameter, value)?.config_at(time)?;
    let params = cfg.params();
    // double root of the ungated quadratic: x = g_l
    let g_eq = params.line_conductance();
    Ok(FoldPoint {
        value,
        g_eq,
        voltage: params.source_voltage() * params.line_conductance() / (g_eq + params.line_conductance()),
    })
}

fn sweep_point(
    scenario: &Scenario,
    parameter: SweepParameter,
    value: f64,
    time: f64,
    mode: SweepMode,
) -> Result<SweepRow, ScenarioError> {
    let point = scenario.with_parameter(parameter, value)?;
    let cfg = point.config_at(time)?;
    let report = catalog(&cfg, time)?;
    let ungated = |branch: Branch| {
        report
            .rows
            .iter()
            .find(|r| r.gated == IndexSet::empty().to_string() && r.branch == branch)
            .map(|r| (r.g_eq, r.voltage))
    };
    let stable: Vec<&CatalogRow> = report.rows.iter().filter(|r| r.classification == Classification::Stable).collect();
    let operating = stable.iter().find(|r| r.region != Region::Exterior).map(|r| {
        let flow = crate::network::power_flow(&cfg, &r.state);
        (flow.voltage, flow.g_eq, flow.mismatch)
    });
    let simulated = match mode {
        SweepMode::Static => None,
        SweepMode::Simulate => {
            let run = super::run::simulate(&point)?;
            let last = run.trace.last();
            Some(SimulatedPoint {
                termination: run.trace.termination,
                voltage: last.flow.voltage,
                g_eq: last.flow.g_eq,
                mismatch: last.flow.mismatch.clone(),
            })
        }
    };
    Ok(SweepRow {
        value,
        max_power: cfg.max_power(),
        total_demand: cfg.total_demand(),
        margin: margin(&cfg),
        low: ungated(Branch::Low),
        high: ungated(Branch::High),
        n_equilibria: report.rows.len(),
        n_stable: stable.len(),
        operating,
        simulated,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn termination_name(t: &Termination) -> &'static str {
    match t {
        Termination::Converged { .. } => "converged",
        Termination::Collapsed { .. } => "collapsed",
        Termination::HorizonReached { .. } => "horizon",
    }
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, out: W, n_loads: usize) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "value",
            "P_max",
            "P0_tot",
            "margin",
            "low_g_eq",
            "low_v",
            "high_g_eq",
            "high_v",
            "n_equilibria",
            "n_stable",
            "operating_v",
            "operating_g_eq",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=n_loads).map(|i| format!("operating_dP_{i}")));
        header.extend(["termination", "final_v", "final_g_eq"].iter().map(|s| s.to_string()));
        header.extend((1..=n_loads).map(|i| format!("final_dP_{i}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                format!("{:.16e}", row.value),
                format!("{:.16e}", row.max_power),
                format!("{:.16e}", row.total_demand),
                format!("{:.16e}", row.margin),
                opt(row.low.map(|p| p.0)),
                opt(row.low.map(|p| p.1)),
                opt(row.high.map(|p| p.0)),
                opt(row.high.map(|p| p.1)),
                row.n_equilibria.to_string(),
                row.n_stable.to_string(),
                opt(row.operating.as_ref().map(|s| s.0)),
                opt(row.operating.as_ref().map(|s| s.1)),
            ];
            for i in 0..n_loads {
                rec.push(opt(row.operating.as_ref().map(|s| s.2[i])));
            }
            match &row.simulated {
                Some(sim) => {
                    rec.push(termination_name(&sim.termination).to_string());
                    rec.push(format!("{:.16e}", sim.voltage));
                    rec.push(format!("{:.16e}", sim.g_eq));
                    rec.extend(sim.mismatch.iter().map(|x| format!("{x:.16e}")));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 3 + n_loads)),
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sweep over {}: {} points", self.parameter.name(), self.rows.len());
        for f in &self.folds {
            let _ = writeln!(
                out,
                "fold at {:.12e}: ungated roots merge at g_eq = {:.6e}, v = {:.6e}",
                f.value, f.g_eq, f.voltage
            );
        }
        if self.folds.is_empty() {
            let _ = writeln!(out, "no fold in range");
        }
        for (value, reason) in &self.skipped {
            let _ = writeln!(out, "skipped {value:.6e}: {reason}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_load() -> Scenario {
        Scenario::from_json(
            r#"{"network": {"E": 2.0, "g_l": 1.0},
                "loads": [{"kind": "inflexible", "P0": [[0, 1.0]]}],
                "simulation": {"t_end": 10}}"#,
        )
        .unwrap()
    }

    #[test]
    fn single_load_fold_at_capacity() {
        let s = single_load();
        let report = sweep(&s, SweepParameter::P0Scale, 0.0, 1.2, 12, 0.0, SweepMode::Static).unwrap();
        assert_eq!(report.rows.len(), 13);
        assert_eq!(report.folds.len(), 1);
        let fold = &report.folds[0];
        assert!((fold.value - 1.0).abs() < 1e-12);
        assert_eq!(fold.g_eq, 1.0);
        assert_eq!(fold.voltage, 1.0);
        // branches approach each other from both sides of g_l
        let near = &report.rows[9];
        let (low, high) = (near.low.unwrap().0, near.high.unwrap().0);
        assert!(low < 1.0 && high > 1.0 && low * high > 0.999_999);
        assert!(report.rows[12].low.is_none());
    }

    #[test]
    fn line_sweep_scales_capacity() {
        let s = single_load();
        let report = sweep(&s, SweepParameter::LineConductance, 0.5, 2.0, 3, 0.0, SweepMode::Static).unwrap();
        for row in &report.rows {
            assert!((row.max_power - row.value).abs() < 1e-15);
        }
        // P_max = g_l crosses P0 = 1 at g_l = 1
        assert_eq!(report.folds.len(), 1);
        assert!((report.folds[0].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_points_are_skipped() {
        let s = single_load();
        let report = sweep(&s, SweepParameter::LineConductance, -1.0, 1.0, 2, 0.0, SweepMode::Static).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.skipped.len(), 2);
        assert!("voltage".parse::<SweepParameter>().is_err());
    }

    #[test]
    fn catalog_notes_infeasible_subsets() {
        let s = Scenario::from_json(
            r#"{"network": {"E": 2.0, "g_l": 1.0},
                "loads": [{"kind": "flexible", "theta": 1, "P0": [[0, 0.4]]},
                          {"kind": "flexible", "theta": 2, "P0": [[0, 0.3]]},
                          {"kind": "inflexible", "P0": [[0, 0.5]]}],
                "simulation": {"t_end": 10}}"#,
        )
        .unwrap();
        let report = catalog(&s.config, 0.0).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.gated == "{1,2}"));
        assert_eq!(report.rows[0].classification, Classification::Stable);
        assert_eq!(report.rows[1].classification, Classification::Unstable);
        for gated in ["{}", "{1}", "{2}"] {
            assert!(report.infeasible.iter().any(|r| r.gated == gated));
        }
        assert!(report.notes[0].contains("3 of 3"));
        assert!(report.render_text().contains("unstable"));
    }

    #[test]
    fn game_report_at_zero_state() {
        let s = single_load();
        let report = game_report(&s.config, &[0.0], None).unwrap();
        assert_eq!(report.check.gradient, vec![1.0]);
        assert!(!report.check.is_lne);
        assert_eq!(report.stability, None);
        assert!(game_report(&s.config, &[0.0, 1.0], None).is_err());
    }
}
