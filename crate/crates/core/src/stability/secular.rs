//! Eigenvalues of `diag(d) + u wᵀ` from the secular equation
//! `c(λ) = 1 + Σ u_i w_i / (d_i - λ) = 0`.
//!
//! Zero weights deflate their pole into an exact eigenvalue, and a pole of
//! multiplicity `m` yields `m - 1` exact eigenvalues plus one merged pole.
//! With weights of one sign, `c` is monotone between consecutive poles, so
//! each remaining eigenvalue is isolated in its own bracket and found by
//! bisection.

use super::{JacobianDecomposition, StabilityError};

/// Relative step below which bisection stops.
pub const BISECTION_REL_TOL: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;

struct Pole {
    at: f64,
    weight: f64,
}

fn secular(poles: &[Pole], lambda: f64) -> f64 {
    1.0 + poles.iter().map(|p| p.weight / (p.at - lambda)).sum::<f64>()
}

/// Sorted eigenvalues of a diagonal-plus-rank-one matrix whose weights
/// `u_i w_i` share one sign.
///
/// Returns [`StabilityError::MixedWeights`] otherwise; the interlacing
/// argument does not apply there.
pub fn eigenvalues_secular(jd: &JacobianDecomposition) -> Result<Vec<f64>, StabilityError> {
    let n = jd.diag.len();
    let scale = jd
        .diag
        .iter()
        .chain(jd.u.iter())
        .chain(jd.w.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let zero_weight = 4.0 * f64::EPSILON * scale * scale;
    let same_pole = 8.0 * f64::EPSILON * scale;

    let mut eigenvalues = Vec::with_capacity(n);
    let mut active: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let z = jd.u[i] * jd.w[i];
        if z.abs() <= zero_weight {
            eigenvalues.push(jd.diag[i]);
        } else {
            active.push((jd.diag[i], z));
        }
    }
    active.sort_by(|a, b| a.0.total_cmp(&b.0));

    // merge repeated poles: each extra copy is an exact eigenvalue
    let mut poles: Vec<Pole> = Vec::with_capacity(active.len());
    for (d, z) in active {
        match poles.last_mut() {
            Some(last) if (d - last.at).abs() <= same_pole => {
                eigenvalues.push(last.at);
                last.weight += z;
            }
            _ => poles.push(Pole { at: d, weight: z }),
        }
    }
    // a merged pole whose weights cancel is no longer a pole
    poles.retain(|p| {
        if p.weight.abs() <= zero_weight {
            eigenvalues.push(p.at);
            false
        } else {
            true
        }
    });

    if let Some(first) = poles.first() {
        let positive = first.weight > 0.0;
        if poles.iter().any(|p| (p.weight > 0.0) != positive) {
            return Err(StabilityError::MixedWeights);
        }
        let total: f64 = poles.iter().map(|p| p.weight.abs()).sum();
        let k = poles.len();
        // open brackets (lo, hi) each holding exactly one root; at twice the
        // total weight past the outer pole |Σ z/(d - λ)| <= 1/2, so c has the
        // sign of 1 there even after rounding
        let mut brackets: Vec<(f64, f64)> = poles.windows(2).map(|w| (w[0].at, w[1].at)).collect();
        if positive {
            brackets.push((poles[k - 1].at, poles[k - 1].at + 2.0 * total));
        } else {
            brackets.insert(0, (poles[0].at - 2.0 * total, poles[0].at));
        }
        for (lo, hi) in brackets {
            eigenvalues.push(bisect(&poles, lo, hi, positive, scale)?);
        }
    }

    if eigenvalues.len() != n {
        return Err(StabilityError::NumericalBreakdown("eigenvalue count mismatch"));
    }
    eigenvalues.sort_by(f64::total_cmp);
    Ok(eigenvalues)
}

/// Root of the monotone secular function on `(lo, hi)`. Either end may be a
/// pole; an end that is not a pole must carry the sign opposite to the
/// other end's limit.
fn bisect(poles: &[Pole], mut lo: f64, mut hi: f64, increasing: bool, scale: f64) -> Result<f64, StabilityError> {
    // with an increasing c the root separates c < 0 (left) from c > 0 (right)
    let left_side = |c: f64| if increasing { c < 0.0 } else { c > 0.0 };
    let is_pole = |x: f64| poles.iter().any(|p| p.at == x);
    for end in [lo, hi] {
        if !is_pole(end) {
            let c = secular(poles, end);
            let expect_left = end == lo;
            if c != 0.0 && left_side(c) != expect_left {
                return Err(StabilityError::NumericalBreakdown("secular root not bracketed"));
            }
            if c == 0.0 {
                return Ok(end);
            }
        }
    }
    let floor = 1e-3 * f64::EPSILON * scale;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let c = secular(poles, mid);
        debug_assert!(
            poles.iter().map(|p| p.weight / ((p.at - mid) * (p.at - mid))).sum::<f64>() * if increasing { 1.0 } else { -1.0 }
                > 0.0
        );
        if c == 0.0 {
            return Ok(mid);
        }
        if left_side(c) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_REL_TOL * lo.abs().max(hi.abs()) || hi - lo <= floor {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(StabilityError::NumericalBreakdown("bisection did not converge"))
}

#[cfg(test)]
mod tests {
    use super::super::JacobianKind;
    use super::*;

    fn jd(diag: Vec<f64>, u: Vec<f64>) -> JacobianDecomposition {
        let w = vec![1.0; diag.len()];
        JacobianDecomposition {
            diag,
            u,
            w,
            kind: JacobianKind::Inflexible,
        }
    }

    #[test]
    fn scalar_case() {
        let ev = eigenvalues_secular(&jd(vec![-2.25], vec![1.125])).unwrap();
        assert!((ev[0] + 1.125).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_pass_through() {
        let ev = eigenvalues_secular(&jd(vec![3.0, -1.0, 2.0], vec![0.0; 3])).unwrap();
        assert_eq!(ev, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn repeated_pole_keeps_multiplicity() {
        // -v² I + (2v²/(g_eq+g_l)) g 1ᵀ: n-1 eigenvalues at -v² and one at v²(2g_eq/(g_eq+g_l) - 1)
        let (v_sq, g, gl) = (1.7_f64, [0.1, 0.2, 0.3, 0.15], 1.0);
        let g_eq: f64 = g.iter().sum();
        let u: Vec<f64> = g.iter().map(|x| 2.0 * v_sq / (g_eq + gl) * x).collect();
        let ev = eigenvalues_secular(&jd(vec![-v_sq; 4], u)).unwrap();
        for e in &ev[..3] {
            assert_eq!(*e, -v_sq);
        }
        let last = v_sq * (2.0 * g_eq / (g_eq + gl) - 1.0);
        assert!((ev[3] - last).abs() < 1e-12);
    }

    #[test]
    fn negative_weights() {
        // 2x2 [[1 - 1, -1], [-0.5, 3 - 0.5]] = diag(1,3) + (-1,-0.5) 1ᵀ
        let ev = eigenvalues_secular(&jd(vec![1.0, 3.0], vec![-1.0, -0.5])).unwrap();
        // trace 2.5, det 0*2.5 - 0.5 = -0.5
        let (tr, det) = (2.5_f64, -0.5_f64);
        let disc = (tr * tr - 4.0 * det).sqrt();
        assert!((ev[0] - (tr - disc) / 2.0).abs() < 1e-12);
        assert!((ev[1] - (tr + disc) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_weights_rejected() {
        assert_eq!(
            eigenvalues_secular(&jd(vec![1.0, 2.0], vec![1.0, -1.0])),
            Err(StabilityError::MixedWeights)
        );
    }
}
