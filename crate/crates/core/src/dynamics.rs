//! Load dynamics: inflexible constant-power loads and the gated stabilizer
//! controller on flexible loads, plus fixed-step trajectory integration.
//!
//! Every load follows `ġ_i = -α_i(g_i) ΔP_i(g)`. Inflexible loads have
//! `α_i = 1`; flexible loads use the gate
//! `α_i = κ(ḡ_i - g_i) / (1 + κ(ḡ_i - g_i))`, which freezes the load at its
//! target conductance `ḡ_i`.

use serde::Serialize;
use thiserror::Error;

use crate::network::{self, ConfigError, PowerFlow, SystemConfig};

/// Gate denominators smaller than this are treated as the pole.
pub const GATE_POLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("load {load}: state reached the controller gate pole (1 + κ(ḡ - g) = {denominator:e})")]
    SingularGate { load: usize, denominator: f64 },
    #[error("load {load}: integration step produced a non-finite conductance")]
    StepRejected { load: usize },
    #[error("load {load}: demand schedule has no breakpoints")]
    EmptySchedule { load: usize },
    #[error("load {load}: demand schedule breakpoints must have finite, strictly increasing times and finite, non-negative powers")]
    InvalidSchedule { load: usize },
    #[error("demand schedule covers {got} loads, network has {expected}")]
    ScheduleDimension { expected: usize, got: usize },
    #[error("invalid simulation options: {0}")]
    InvalidOptions(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Controller gain and the per-flexible-load targets and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerParams {
    pub kappa: f64,
    pub target: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ControllerParams {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            kappa: cfg.kappa(),
            target: cfg.target_conductance().to_vec(),
            gamma: cfg.gamma().to_vec(),
        }
    }

    /// Largest deviation of the stored targets from the ones `cfg` implies.
    pub fn target_drift(&self, cfg: &SystemConfig) -> f64 {
        self.target
            .iter()
            .zip(cfg.target_conductance())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `(ḡ_i - g_i)` scaled by κ, for a flexible load.
#[inline]
fn gate_argument(ctrl: &ControllerParams, g: &[f64], i: usize) -> f64 {
    ctrl.kappa * (ctrl.target[i] - g[i])
}

/// Gate value `α_i`; always 1 for inflexible loads.
pub fn alpha(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64], i: usize) -> Result<f64, DynamicsError> {
    if !cfg.is_flexible(i) {
        return Ok(1.0);
    }
    let y = gate_argument(ctrl, g, i);
    let denominator = 1.0 + y;
    if denominator.abs() < GATE_POLE_EPS {
        return Err(DynamicsError::SingularGate { load: i, denominator });
    }
    Ok(y / denominator)
}

/// `∂α_i/∂g_i`; zero for inflexible loads.
pub fn alpha_slope(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64], i: usize) -> Result<f64, DynamicsError> {
    if !cfg.is_flexible(i) {
        return Ok(0.0);
    }
    let denominator = 1.0 + gate_argument(ctrl, g, i);
    if denominator.abs() < GATE_POLE_EPS {
        return Err(DynamicsError::SingularGate { load: i, denominator });
    }
    Ok(-ctrl.kappa / (denominator * denominator))
}

/// Vector field `ġ = -A(g) (P(g) - P0)`.
pub fn rhs(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let mut out = vec![0.0; g.len()];
    rhs_into(cfg, ctrl, g, &mut out)?;
    Ok(out)
}

fn rhs_into(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
    let v = network::voltage(cfg, g);
    let v_sq = v * v;
    for (i, slot) in out.iter_mut().enumerate() {
        let mismatch = v_sq * g[i] - cfg.demand(i);
        *slot = -alpha(cfg, ctrl, g, i)? * mismatch;
    }
    Ok(())
}

/// Per-load piecewise-linear demand profiles, held constant outside the
/// breakpoint range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandSchedule {
    breakpoints: Vec<Vec<(f64, f64)>>,
}

impl DemandSchedule {
    pub fn new(breakpoints: Vec<Vec<(f64, f64)>>) -> Result<Self, DynamicsError> {
        for (load, points) in breakpoints.iter().enumerate() {
            if points.is_empty() {
                return Err(DynamicsError::EmptySchedule { load });
            }
            let finite = points.iter().all(|(t, p)| t.is_finite() && p.is_finite() && *p >= 0.0);
            let increasing = points.windows(2).all(|w| w[0].0 < w[1].0);
            if !(finite && increasing) {
                return Err(DynamicsError::InvalidSchedule { load });
            }
        }
        Ok(Self { breakpoints })
    }

    /// Constant demands.
    pub fn constant(demands: &[f64]) -> Result<Self, DynamicsError> {
        Self::new(demands.iter().map(|&p| vec![(0.0, p)]).collect())
    }

    pub fn n_loads(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn breakpoints(&self) -> &[Vec<(f64, f64)>] {
        &self.breakpoints
    }

    /// Time after which every profile is constant.
    pub fn last_change(&self) -> f64 {
        self.breakpoints
            .iter()
            .filter_map(|p| p.last().map(|(t, _)| *t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.breakpoints.iter().map(|points| interpolate(points, t)).collect()
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let (t0, p0) = points[0];
    if t <= t0 {
        return p0;
    }
    let (tn, pn) = points[points.len() - 1];
    if t >= tn {
        return pn;
    }
    // first breakpoint strictly after t; exists since t < tn
    let k = points.partition_point(|(tk, _)| *tk <= t);
    let (ta, pa) = points[k - 1];
    let (tb, pb) = points[k];
    pa + (pb - pa) * (t - ta) / (tb - ta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Collapse is declared once `v < collapse_voltage_fraction * E`.
    pub collapse_voltage_fraction: f64,
    /// Settlement tolerance on `max_i |ġ_i|`.
    pub settle_tol: f64,
    /// How long the tolerance must hold before declaring convergence.
    pub settle_window: f64,
    /// Clamp negative conductances to zero after every step.
    pub project_nonnegative: bool,
    /// Record every `sample_stride`-th step (the first and last state are
    /// always recorded).
    pub sample_stride: usize,
}

impl SimOptions {
    /// Defaults scaled to the network: `dt = 1e-3 g_l / P_max`.
    pub fn for_config(cfg: &SystemConfig, t_end: f64) -> Self {
        let dt = 1e-3 * cfg.params().line_conductance() / cfg.max_power();
        Self {
            dt,
            t_end,
            collapse_voltage_fraction: 0.02,
            settle_tol: 1e-9,
            settle_window: 100.0 * dt,
            project_nonnegative: true,
            sample_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::InvalidOptions("dt must be finite and > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(DynamicsError::InvalidOptions("t_end must be finite and > 0"));
        }
        if !(self.collapse_voltage_fraction > 0.0 && self.collapse_voltage_fraction < 1.0) {
            return Err(DynamicsError::InvalidOptions("collapse_voltage_fraction must lie in (0, 1)"));
        }
        if !(self.settle_tol.is_finite() && self.settle_tol > 0.0) {
            return Err(DynamicsError::InvalidOptions("settle_tol must be finite and > 0"));
        }
        if !(self.settle_window.is_finite() && self.settle_window >= 0.0) {
            return Err(DynamicsError::InvalidOptions("settle_window must be finite and >= 0"));
        }
        if self.sample_stride == 0 {
            return Err(DynamicsError::InvalidOptions("sample_stride must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    /// `max|ġ|` stayed below the settlement tolerance for the settle window
    /// after the demand stopped changing.
    Converged { time: f64 },
    /// Bus voltage fell below the collapse threshold.
    Collapsed { time: f64 },
    HorizonReached { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// A load's conductance was clamped at zero (first step of each episode).
    ProjectionActivated { time: f64, load: usize },
    /// Total demand crossed the network capacity.
    CapacityCrossed { time: f64, overloaded: bool },
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub time: f64,
    pub state: Vec<f64>,
    pub demand: Vec<f64>,
    pub flow: PowerFlow,
    /// `max_i |ġ_i|` at this state.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub events: Vec<SimEvent>,
    pub steps: usize,
    /// Number of steps in which each load was clamped at zero.
    pub projection_steps: Vec<usize>,
}

impl SimTrace {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trace always holds the initial sample")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("integration aborted at t = {time}: {error}")]
pub struct IntegrationError {
    pub error: DynamicsError,
    pub time: f64,
    /// Trajectory up to the last accepted step.
    pub partial: Box<SimTrace>,
}

/// System whose demands follow a schedule; the controller targets are
/// re-derived from the demands at every evaluation time.
struct ScheduledSystem<'a> {
    base: &'a SystemConfig,
    schedule: &'a DemandSchedule,
}

impl ScheduledSystem<'_> {
    fn at(&self, t: f64) -> Result<(SystemConfig, ControllerParams), DynamicsError> {
        let cfg = self.base.with_demands(&self.schedule.eval(t))?;
        let ctrl = ControllerParams::from_config(&cfg);
        Ok((cfg, ctrl))
    }

    fn field(&self, t: f64, g: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        let (cfg, ctrl) = self.at(t)?;
        rhs_into(&cfg, &ctrl, g, out)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Classical fixed-step RK4 integration of the load dynamics from `s0`
/// under the demand `schedule`.
///
/// The run stops early on voltage collapse or once the state settles after
/// the last demand breakpoint.
pub fn integrate(
    cfg: &SystemConfig,
    s0: &[f64],
    schedule: &DemandSchedule,
    opts: &SimOptions,
) -> Result<SimTrace, IntegrationError> {
    let n = cfg.n();
    let fail = |error: DynamicsError| IntegrationError {
        error,
        time: 0.0,
        partial: Box::new(SimTrace {
            samples: Vec::new(),
            termination: Termination::HorizonReached { time: 0.0 },
            events: Vec::new(),
            steps: 0,
            projection_steps: vec![0; n],
        }),
    };
    opts.validate().map_err(fail)?;
    if schedule.n_loads() != n {
        return Err(fail(DynamicsError::ScheduleDimension {
            expected: n,
            got: schedule.n_loads(),
        }));
    }
    if s0.len() != n {
        return Err(fail(ConfigError::StateDimension { expected: n, got: s0.len() }.into()));
    }
    if let Some((index, &value)) = s0.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(fail(ConfigError::Conductance { index, value }.into()));
    }

    let system = ScheduledSystem { base: cfg, schedule };
    let collapse_voltage = opts.collapse_voltage_fraction * cfg.params().source_voltage();
    let settle_after = schedule.last_change();
    let total_steps = (opts.t_end / opts.dt).ceil() as usize;

    let mut trace = SimTrace {
        samples: Vec::new(),
        termination: Termination::HorizonReached { time: opts.t_end },
        events: Vec::new(),
        steps: 0,
        projection_steps: vec![0; n],
    };
    let mut g = s0.to_vec();
    let mut t = 0.0;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut clamped = vec![false; n];
    let mut settled_since: Option<f64> = None;
    let mut overloaded = cfg.with_demands(&schedule.eval(0.0)).map(|c| c.overload() > 0.0).unwrap_or(false);

    macro_rules! abort {
        ($err:expr) => {{
            let error = $err;
            trace.termination = Termination::HorizonReached { time: t };
            return Err(IntegrationError {
                error,
                time: t,
                partial: Box::new(trace),
            });
        }};
    }

    for step in 0..=total_steps {
        // k1 doubles as the settlement measurement at the current state
        if let Err(e) = system.field(t, &g, &mut k1) {
            abort!(e);
        }
        let rate = max_abs(&k1);
        let last = step == total_steps;
        let demand = schedule.eval(t);
        let cfg_t = match cfg.with_demands(&demand) {
            Ok(c) => c,
            Err(e) => abort!(e.into()),
        };
        let flow = network::power_flow(&cfg_t, &g);
        let collapsed = flow.voltage < collapse_voltage;

        if t >= settle_after && rate <= opts.settle_tol {
            let since = *settled_since.get_or_insert(t);
            if t - since >= opts.settle_window {
                trace.termination = Termination::Converged { time: t };
            }
        } else {
            settled_since = None;
        }
        if collapsed {
            trace.termination = Termination::Collapsed { time: t };
        }
        let stop = collapsed || matches!(trace.termination, Termination::Converged { .. }) || last;
        if step % opts.sample_stride == 0 || stop {
            trace.samples.push(Sample {
                time: t,
                state: g.clone(),
                demand,
                flow,
                rate,
            });
        }
        if stop {
            break;
        }

        let t_next = ((step + 1) as f64 * opts.dt).min(opts.t_end);
        let h = t_next - t;
        let half = t + 0.5 * h;
        for i in 0..n {
            stage[i] = g[i] + 0.5 * h * k1[i];
        }
        if let Err(e) = system.field(half, &stage, &mut k2) {
            abort!(e);
        }
        for i in 0..n {
            stage[i] = g[i] + 0.5 * h * k2[i];
        }
        if let Err(e) = system.field(half, &stage, &mut k3) {
            abort!(e);
        }
        for i in 0..n {
            stage[i] = g[i] + h * k3[i];
        }
        if let Err(e) = system.field(t_next, &stage, &mut k4) {
            abort!(e);
        }
        for i in 0..n {
            let next = g[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !next.is_finite() {
                abort!(DynamicsError::StepRejected { load: i });
            }
            g[i] = next;
        }
        t = t_next;
        trace.steps += 1;

        if opts.project_nonnegative {
            for i in 0..n {
                if g[i] < 0.0 {
                    g[i] = 0.0;
                    trace.projection_steps[i] += 1;
                    if !clamped[i] {
                        trace.events.push(SimEvent::ProjectionActivated { time: t, load: i });
                    }
                    clamped[i] = true;
                } else {
                    clamped[i] = false;
                }
            }
        }
        match cfg.with_demands(&schedule.eval(t)) {
            Ok(c) => {
                let now = c.overload() > 0.0;
                if now != overloaded {
                    trace.events.push(SimEvent::CapacityCrossed { time: t, overloaded: now });
                    overloaded = now;
                }
            }
            Err(e) => abort!(e.into()),
        }
    }
    Ok(trace)
}
