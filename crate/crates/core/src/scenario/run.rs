//! Running a scenario: integration, the run report and the CSV trace.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::analysis::{self, CatalogReport};
use super::{Scenario, ScenarioError};
use crate::dynamics::{self, SimEvent, SimTrace, Termination};
use crate::equilibrium::{self, CurtailmentReport};
use crate::network::PowerFlow;

/// Exit status for a finished run: collapse is a finding, not an error.
pub fn exit_code(termination: &Termination) -> i32 {
    match termination {
        Termination::Converged { .. } | Termination::HorizonReached { .. } => 0,
        Termination::Collapsed { .. } => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    #[serde(rename = "E")]
    pub source_voltage: f64,
    pub g_l: f64,
    pub max_power: f64,
    pub kappa: f64,
    pub loads: usize,
    pub flexible: usize,
    pub dt: f64,
    pub t_end: f64,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub time: f64,
    pub state: Vec<f64>,
    pub demand: Vec<f64>,
    pub flow: PowerFlow,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: RunSummary,
    pub termination: Termination,
    pub steps: usize,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    /// Equilibria of the final demand.
    pub catalog: Option<CatalogReport>,
    /// Curtailment and optimality residual when the run converged under overload.
    pub curtailment: Option<CurtailmentReport>,
    pub events: Vec<SimEvent>,
    /// Steps during which each load sat clamped at zero.
    pub projection_steps: Vec<usize>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: SimTrace,
    pub report: RunReport,
}

/// Integrates the scenario from its initial state and assembles the report.
pub fn simulate(scenario: &Scenario) -> Result<RunOutcome, ScenarioError> {
    let s0 = scenario.initial_state()?;
    let trace = dynamics::integrate(&scenario.config, &s0, &scenario.schedule, &scenario.options)
        .map_err(|e| ScenarioError::Integration(Box::new(e)))?;
    let report = build_report(scenario, &s0, &trace);
    Ok(RunOutcome { trace, report })
}

fn build_report(scenario: &Scenario, s0: &[f64], trace: &SimTrace) -> RunReport {
    let cfg = &scenario.config;
    let params = cfg.params();
    let last = trace.last();
    let mut notes = Vec::new();

    let final_cfg = cfg.with_demands(&last.demand).expect("demands from a validated schedule");
    let catalog = match analysis::catalog(&final_cfg, last.time) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("equilibrium catalog unavailable: {e}"));
            None
        }
    };

    let overload = final_cfg.overload();
    let converged = matches!(trace.termination, Termination::Converged { .. });
    let curtailment = if converged && overload > 0.0 && final_cfg.n_flexible() > 0 {
        Some(equilibrium::curtailment_at(&final_cfg, &last.flow))
    } else {
        None
    };
    if overload.abs() <= 1e-12 * final_cfg.max_power() {
        notes.push("final demand equals capacity: the operating point is a fold, convergence is algebraic rather than exponential".into());
    }
    for (i, steps) in trace.projection_steps.iter().enumerate() {
        if *steps > 0 {
            notes.push(format!("load {} held at g = 0 for {steps} steps", i + 1));
        }
    }
    if let Termination::Collapsed { time } = trace.termination {
        if final_cfg.n_flexible() > 0 {
            let inflexible: f64 = final_cfg.inflexible().iter().map(|i| final_cfg.demand(i)).sum();
            if inflexible > final_cfg.max_power() {
                notes.push(format!(
                    "collapse at t = {time}: inflexible demand {inflexible:.6e} alone exceeds capacity {:.6e}",
                    final_cfg.max_power()
                ));
            }
        }
    }

    RunReport {
        scenario: RunSummary {
            source_voltage: params.source_voltage(),
            g_l: params.line_conductance(),
            max_power: params.max_power(),
            kappa: cfg.kappa(),
            loads: cfg.n(),
            flexible: cfg.n_flexible(),
            dt: scenario.options.dt,
            t_end: scenario.options.t_end,
            initial_state: s0.to_vec(),
        },
        termination: trace.termination,
        steps: trace.steps,
        final_state: FinalState {
            time: last.time,
            state: last.state.clone(),
            demand: last.demand.clone(),
            flow: last.flow.clone(),
            rate: last.rate,
        },
        catalog,
        curtailment,
        events: trace.events.clone(),
        projection_steps: trace.projection_steps.clone(),
        notes,
    }
}

/// Writes `t, v, P_tot` then `g_i, P_i, dP_i` per load, one row per sample.
pub fn write_trace<W: Write>(out: W, trace: &SimTrace) -> Result<(), ScenarioError> {
    let n = trace.projection_steps.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "v".to_string(), "P_tot".to_string()];
    for i in 1..=n {
        header.push(format!("g_{i}"));
        header.push(format!("P_{i}"));
        header.push(format!("dP_{i}"));
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(3 + 3 * n);
    for s in &trace.samples {
        record.clear();
        record.push(format!("{:.16e}", s.time));
        record.push(format!("{:.16e}", s.flow.voltage));
        record.push(format!("{:.16e}", s.flow.total_power));
        for i in 0..n {
            record.push(format!("{:.16e}", s.state[i]));
            record.push(format!("{:.16e}", s.flow.power[i]));
            record.push(format!("{:.16e}", s.flow.mismatch[i]));
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn termination_text(t: &Termination) -> String {
    match t {
        Termination::Converged { time } => format!("converged at t = {time}"),
        Termination::Collapsed { time } => format!("voltage collapse at t = {time}"),
        Termination::HorizonReached { time } => format!("horizon reached at t = {time}"),
    }
}

impl RunReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let s = &self.scenario;
        let _ = writeln!(
            out,
            "E = {}, g_l = {}, P_max = {:.6e}, kappa = {}, {} loads ({} flexible), dt = {:e}",
            s.source_voltage, s.g_l, s.max_power, s.kappa, s.loads, s.flexible, s.dt
        );
        let _ = writeln!(out, "termination: {} after {} steps", termination_text(&self.termination), self.steps);
        let f = &self.final_state;
        let _ = writeln!(
            out,
            "final: v = {:.9e}, g_eq = {:.9e}, P_tot = {:.9e}, max|g dot| = {:.3e}",
            f.flow.voltage, f.flow.g_eq, f.flow.total_power, f.rate
        );
        let _ = writeln!(out, "{:<6} {:<16} {:<16} {:<16} {:<16}", "load", "g", "P", "P0", "dP");
        for i in 0..f.state.len() {
            let _ = writeln!(
                out,
                "{:<6} {:<16.9e} {:<16.9e} {:<16.9e} {:<16.9e}",
                i + 1,
                f.state[i],
                f.flow.power[i],
                f.demand[i],
                f.flow.mismatch[i]
            );
        }
        if let Some(c) = &self.curtailment {
            let _ = writeln!(out, "curtailment: deficit {:.9e}", c.deficit);
            for share in &c.shares {
                let _ = writeln!(
                    out,
                    "  load {}: theta = {}, dP = {:.9e}, weighted share = {:.9e}",
                    share.load + 1,
                    share.theta,
                    share.mismatch,
                    share.expected
                );
            }
            let _ = writeln!(
                out,
                "  optimality residual: stationarity {:.3e}, feasibility {:.3e}",
                c.stationarity, c.feasibility
            );
        }
        for e in &self.events {
            let _ = match e {
                SimEvent::ProjectionActivated { time, load } => {
                    writeln!(out, "event t = {time}: load {} clamped at g = 0", load + 1)
                }
                SimEvent::CapacityCrossed { time, overloaded } => writeln!(
                    out,
                    "event t = {time}: demand {} capacity",
                    if *overloaded { "rose above" } else { "fell below" }
                ),
            };
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        if let Some(c) = &self.catalog {
            out.push_str(&c.render_text());
        }
        out
    }
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFiles {
    pub trace: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    let err = |source| ScenarioError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, bytes).map_err(err)
}

/// Writes the trace CSV, the JSON report, and its text rendering next to
/// it (same name, `.txt`). Relative output paths resolve against `out_dir`.
pub fn write_outputs(scenario: &Scenario, outcome: &RunOutcome, out_dir: &Path) -> Result<WrittenFiles, ScenarioError> {
    let outputs = &scenario.file.outputs;
    let trace = resolve(out_dir, &outputs.trace_path);
    let report_json = resolve(out_dir, &outputs.report_path);
    let report_text = report_json.with_extension("txt");

    let mut csv_bytes = Vec::new();
    write_trace(&mut csv_bytes, &outcome.trace)?;
    write_file(&trace, &csv_bytes)?;
    let mut json = serde_json::to_vec_pretty(&outcome.report)?;
    json.push(b'\n');
    write_file(&report_json, &json)?;
    write_file(&report_text, outcome.report.render_text().as_bytes())?;
    Ok(WrittenFiles {
        trace,
        report_json,
        report_text,
    })
}
