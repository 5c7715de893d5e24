//! The load-satisfiability game induced by inflexible constant-power loads.
//!
//! Each load is a player whose strategy is its conductance. The payoff is
//! chosen so that the inflexible load dynamics are exactly the players'
//! myopic gradient ascent: `∂u_i/∂g_i = -ΔP_i`.

use serde::Serialize;

use crate::network::{self, ConfigError, LoadSpec, NetworkParams, SystemConfig};

/// Payoff of load `i` at state `g`.
///
/// `u_i = P0_i g_i + (E g_l)² ln(a/b) - (E g_l)² (a/b - 1)` with
/// `a = g_{-i} + g_l` and `b = g_i + a`.
pub fn utility(cfg: &SystemConfig, g: &[f64], i: usize) -> f64 {
    let others = network::equivalent_conductance(g) - g[i];
    payoff_with_others(cfg, i, g[i], others)
}

/// `∂u_i/∂g_i`, which equals `-ΔP_i(g)`.
pub fn utility_gradient(cfg: &SystemConfig, g: &[f64], i: usize) -> f64 {
    let v = network::voltage(cfg, g);
    -(v * v * g[i] - cfg.demand(i))
}

/// `∂²u_i/∂g_i²`, which equals `-∂P_i/∂g_i`.
pub fn utility_curvature(cfg: &SystemConfig, g: &[f64], i: usize) -> f64 {
    -network::power_sensitivity(cfg, g, i)
}

/// Thresholds for the first- and second-order local Nash test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LneTolerance {
    pub gradient: f64,
    pub curvature: f64,
}

impl LneTolerance {
    /// `1e-8 (E g_l)²` on gradients, `1e-10 (E g_l)²` on curvatures.
    pub fn for_config(cfg: &SystemConfig) -> Self {
        let k = cfg.params().power_scale();
        Self {
            gradient: 1e-8 * k,
            curvature: 1e-10 * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameCheckReport {
    pub point: Vec<f64>,
    pub gradient: Vec<f64>,
    pub curvature: Vec<f64>,
    /// Strict local Nash equilibrium by the derivative test.
    pub is_lne: bool,
    /// Every gradient within tolerance, i.e. a rest point of the gradient play.
    pub is_equilibrium: bool,
}

/// Strict local Nash test: every own-gradient vanishes and every
/// own-curvature is strictly negative. Values exactly at a tolerance fail.
pub fn check_lne(cfg: &SystemConfig, g: &[f64], tol: LneTolerance) -> GameCheckReport {
    let n = g.len();
    let gradient: Vec<f64> = (0..n).map(|i| utility_gradient(cfg, g, i)).collect();
    let curvature: Vec<f64> = (0..n).map(|i| utility_curvature(cfg, g, i)).collect();
    let is_equilibrium = gradient.iter().all(|d| d.abs() < tol.gradient);
    let concave = curvature.iter().all(|c| *c < -tol.curvature);
    GameCheckReport {
        point: g.to_vec(),
        gradient,
        curvature,
        is_lne: is_equilibrium && concave,
        is_equilibrium,
    }
}

/// Outcome of scanning one player's payoff along a grid with opponents fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DominanceVerdict {
    /// Payoff is strictly increasing on the grid from `from_index` onwards,
    /// consistent with an unbounded conductance being the best response.
    IncreasingToInfinity { from_index: usize, from_conductance: f64, final_slope: f64 },
    /// The payoff is not increasing at the end of the grid.
    NotIncreasing { final_slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceScan {
    pub load: usize,
    pub others: f64,
    pub grid: Vec<f64>,
    pub utility: Vec<f64>,
    pub verdict: DominanceVerdict,
}

/// Evaluates load `i`'s payoff over an increasing `grid` of its own
/// conductance, the other loads' total conductance held at `others`.
///
/// This only reports grid monotonicity; it is numerical evidence of
/// dominance, never a certificate.
pub fn dominance_scan(cfg: &SystemConfig, i: usize, others: f64, grid: &[f64]) -> DominanceScan {
    // the payoff only sees the opponents' total conductance
    let utility: Vec<f64> = grid.iter().map(|&gi| payoff_with_others(cfg, i, gi, others)).collect();

    let mut from = utility.len();
    while from >= 2 && utility[from - 1] > utility[from - 2] {
        from -= 1;
    }
    let final_slope = match grid.len() {
        0 | 1 => 0.0,
        m => (utility[m - 1] - utility[m - 2]) / (grid[m - 1] - grid[m - 2]),
    };
    let verdict = if grid.len() >= 2 && from < grid.len() - 1 {
        DominanceVerdict::IncreasingToInfinity {
            from_index: from - 1,
            from_conductance: grid[from - 1],
            final_slope,
        }
    } else {
        DominanceVerdict::NotIncreasing { final_slope }
    };
    DominanceScan {
        load: i,
        others,
        grid: grid.to_vec(),
        utility,
        verdict,
    }
}

/// Two inflexible loads whose demands make `g = (g1, g2)` an equilibrium
/// outside M that still passes the local Nash test.
///
/// Needs `0 < g1 < g_l` and `g_l < g2 < g_l + g1`; the demands are
/// `P0_i = v(g)² g_i`.
pub fn counterexample(params: NetworkParams, g1: f64, g2: f64) -> Result<(SystemConfig, Vec<f64>), ConfigError> {
    let gl = params.line_conductance();
    if !(g1 > 0.0 && g1 < gl) {
        return Err(ConfigError::Conductance { index: 0, value: g1 });
    }
    if !(g2 > gl && g2 < gl + g1) {
        return Err(ConfigError::Conductance { index: 1, value: g2 });
    }
    let v = params.source_voltage() * gl / (g1 + g2 + gl);
    let loads = vec![LoadSpec::inflexible(v * v * g1), LoadSpec::inflexible(v * v * g2)];
    let cfg = SystemConfig::new(params, loads, crate::network::DEFAULT_KAPPA)?;
    Ok((cfg, vec![g1, g2]))
}

fn payoff_with_others(cfg: &SystemConfig, i: usize, gi: f64, others: f64) -> f64 {
    let gl = cfg.params().line_conductance();
    let a = others + gl;
    let k = cfg.params().power_scale();
    // ln(a/b) = -ln(1 + g_i/a) and a/b - 1 = -g_i/b, both exact at g_i = 0
    cfg.demand(i) * gi - k * (gi / a).ln_1p() + k * gi / (gi + a)
}
