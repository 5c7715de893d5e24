//! Jacobians of the load dynamics and eigenvalue-based stability verdicts.
//!
//! Both the inflexible and the gated dynamics have Jacobians of the form
//! `diag(d) + u 1ᵀ`, so their spectra come from a scalar secular equation.
//! For small systems the result is cross-checked against the characteristic
//! polynomial of the assembled dense matrix.

pub mod dense;
pub mod secular;

use serde::Serialize;
use thiserror::Error;

pub use self::secular::eigenvalues_secular;
use crate::dynamics::{self, ControllerParams, DynamicsError};
use crate::equilibrium::Equilibrium;
use crate::network::{self, SystemConfig};

/// Systems up to this size are cross-checked against the dense oracle.
pub const DENSE_CHECK_MAX_N: usize = 6;
/// Allowed scaled mismatch between dense and secular characteristic polynomials.
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),
    #[error("rank-one weights have mixed signs")]
    MixedWeights,
    #[error("secular eigenvalues disagree with the dense characteristic polynomial (scaled residual {0:e})")]
    OracleDisagreement(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobianKind {
    Inflexible,
    Vcs,
}

/// `J = diag(diag) + u wᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianDecomposition {
    pub diag: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub kind: JacobianKind,
}

impl JacobianDecomposition {
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.u[i] * self.w[j] + if i == j { self.diag[i] } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

/// Jacobian of `ġ = -ΔP(g)`: `(2v²/(g_eq+g_l)) g 1ᵀ - v² I`.
pub fn jacobian_inflexible(cfg: &SystemConfig, g: &[f64]) -> JacobianDecomposition {
    let v = network::voltage(cfg, g);
    let v_sq = v * v;
    let coupling = 2.0 * v_sq / (network::equivalent_conductance(g) + cfg.params().line_conductance());
    JacobianDecomposition {
        diag: vec![-v_sq; g.len()],
        u: g.iter().map(|x| coupling * x).collect(),
        w: vec![1.0; g.len()],
        kind: JacobianKind::Inflexible,
    }
}

/// Jacobian of `ġ = -A(g)(P(g) - P0)`:
/// `A (2v²/(g_eq+g_l) g 1ᵀ - v² I) - diag(ΔP) diag(∂α/∂g)`.
pub fn jacobian_vcs(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64]) -> Result<JacobianDecomposition, DynamicsError> {
    let flow = network::power_flow(cfg, g);
    let v_sq = flow.voltage * flow.voltage;
    let coupling = 2.0 * v_sq / (flow.g_eq + cfg.params().line_conductance());
    let n = g.len();
    let mut diag = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let a = dynamics::alpha(cfg, ctrl, g, i)?;
        let slope = dynamics::alpha_slope(cfg, ctrl, g, i)?;
        diag.push(-a * v_sq - flow.mismatch[i] * slope);
        u.push(coupling * a * g[i]);
    }
    Ok(JacobianDecomposition {
        diag,
        u,
        w: vec![1.0; n],
        kind: JacobianKind::Vcs,
    })
}

/// The Jacobian matching the configuration: inflexible when there are no
/// flexible loads, gated otherwise.
pub fn jacobian(cfg: &SystemConfig, ctrl: &ControllerParams, g: &[f64]) -> Result<JacobianDecomposition, DynamicsError> {
    if cfg.n_flexible() == 0 {
        Ok(jacobian_inflexible(cfg, g))
    } else {
        jacobian_vcs(cfg, ctrl, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Unstable,
    Nonhyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Secular,
    DenseOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts, aligned with `eigenvalues`.
    pub imaginary: Vec<f64>,
    pub method: EigenMethod,
    /// Scaled dense-vs-secular characteristic polynomial mismatch, when checked.
    pub oracle_residual: Option<f64>,
}

impl Spectrum {
    pub fn complex_pairs(&self) -> usize {
        self.imaginary.iter().filter(|x| **x > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub classification: Classification,
    pub spectrum: Spectrum,
    pub tol_hyp: f64,
}

/// `1e-9 (E/2)²`.
pub fn default_tol_hyp(cfg: &SystemConfig) -> f64 {
    1e-9 * cfg.half_voltage_sq()
}

/// Spectrum of a decomposition: secular when the weights share a sign,
/// dense oracle otherwise.
pub fn spectrum(jd: &JacobianDecomposition) -> Result<Spectrum, StabilityError> {
    let n = jd.diag.len();
    match eigenvalues_secular(jd) {
        Ok(eigenvalues) => {
            let oracle_residual = if n <= DENSE_CHECK_MAX_N {
                let r = charpoly_residual(jd, &eigenvalues);
                if r > ORACLE_TOL {
                    return Err(StabilityError::OracleDisagreement(r));
                }
                Some(r)
            } else {
                None
            };
            Ok(Spectrum {
                imaginary: vec![0.0; n],
                eigenvalues,
                method: EigenMethod::Secular,
                oracle_residual,
            })
        }
        Err(StabilityError::MixedWeights) => {
            let oracle = dense::dense_eigenvalues(&jd.dense());
            let mut pairs: Vec<(f64, f64)> = oracle.real.iter().map(|&r| (r, 0.0)).collect();
            for z in &oracle.complex_pairs {
                pairs.push((z.re, z.im));
                pairs.push((z.re, -z.im));
            }
            if pairs.len() != n {
                return Err(StabilityError::NumericalBreakdown("dense oracle root count mismatch"));
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
            Ok(Spectrum {
                eigenvalues: pairs.iter().map(|p| p.0).collect(),
                imaginary: pairs.iter().map(|p| p.1).collect(),
                method: EigenMethod::DenseOracle,
                oracle_residual: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Compares the Leverrier–Faddeev characteristic polynomial of the dense
/// matrix with the one rebuilt from `eigenvalues`; each coefficient is
/// scaled by its largest possible magnitude `C(n,k) s^(n-k)`.
fn charpoly_residual(jd: &JacobianDecomposition, eigenvalues: &[f64]) -> f64 {
    let n = eigenvalues.len();
    let dense_poly = dense::characteristic_polynomial(&jd.dense());
    let rebuilt = dense::poly_from_roots(eigenvalues);
    let s = eigenvalues
        .iter()
        .chain(jd.diag.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    let mut binom = 1.0;
    for k in (0..=n).rev() {
        // coefficient of λ^k; its scale is C(n, n-k) s^(n-k)
        let m = n - k;
        if m > 0 {
            binom = binom * (n - m + 1) as f64 / m as f64;
        }
        let scale = binom * s.powi(m as i32);
        worst = worst.max((dense_poly[k] - rebuilt[k]).abs() / scale);
    }
    worst
}

pub fn classify_spectrum(spectrum: &Spectrum, tol_hyp: f64) -> Classification {
    if spectrum.eigenvalues.iter().any(|x| x.abs() <= tol_hyp) {
        Classification::Nonhyperbolic
    } else if spectrum.eigenvalues.iter().all(|x| *x < -tol_hyp) {
        Classification::Stable
    } else {
        Classification::Unstable
    }
}

/// Linear stability of an equilibrium.
pub fn classify(
    cfg: &SystemConfig,
    ctrl: &ControllerParams,
    eq: &Equilibrium,
    tol_hyp: f64,
) -> Result<StabilityVerdict, StabilityError> {
    let jd = jacobian(cfg, ctrl, &eq.state)?;
    let spectrum = spectrum(&jd)?;
    let classification = if eq.double_root {
        Classification::Nonhyperbolic
    } else {
        classify_spectrum(&spectrum, tol_hyp)
    };
    Ok(StabilityVerdict {
        classification,
        spectrum,
        tol_hyp,
    })
}
