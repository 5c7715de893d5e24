//! Dense eigenvalue oracle for small matrices: characteristic polynomial by
//! Leverrier–Faddeev, real roots by derivative-interval isolation and
//! bisection, and any remaining (complex or clustered) roots of the deflated
//! polynomial by Durand–Kerner iteration.

use num_complex::Complex64;

/// Roots whose imaginary part is below this, relative to `1 + |re|`, count as real.
pub const REAL_ROOT_IMAG_TOL: f64 = 1e-6;

/// Coefficients of `det(λI - A)`, lowest degree first, leading coefficient 1.
pub fn characteristic_polynomial(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    // M_k = A M_{k-1} + c_{n-k+1} I,  c_{n-k} = -tr(A M_k) / k
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += coeffs[n - k + 1];
        }
        m = next;
        let am = matmul(a, &m);
        let trace: f64 = (0..n).map(|i| am[i][i]).sum();
        coeffs[n - k] = -trace / k as f64;
    }
    coeffs
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn eval(poly: &[f64], x: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(poly: &[f64]) -> Vec<f64> {
    poly.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

fn cauchy_bound(poly: &[f64]) -> f64 {
    let lead = poly[poly.len() - 1];
    1.0 + poly[..poly.len() - 1].iter().fold(0.0_f64, |m, c| m.max((c / lead).abs()))
}

/// Simple real roots, ascending. Each root of `p` lies between consecutive
/// real critical points, where `p` is monotone.
pub fn real_roots(poly: &[f64]) -> Vec<f64> {
    let poly = trim(poly);
    let degree = poly.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        return vec![-poly[0] / poly[1]];
    }
    let bound = cauchy_bound(poly);
    let mut knots = vec![-bound];
    knots.extend(real_roots(&derivative(poly)).into_iter().filter(|x| x.abs() < bound));
    knots.push(bound);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (eval(poly, a), eval(poly, b));
        if fa == 0.0 {
            if roots.last() != Some(&a) {
                roots.push(a);
            }
            continue;
        }
        if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(bisect_poly(poly, a, b, fa));
        }
    }
    if eval(poly, bound) == 0.0 {
        roots.push(bound);
    }
    roots
}

fn trim(poly: &[f64]) -> &[f64] {
    let mut end = poly.len();
    while end > 1 && poly[end - 1] == 0.0 {
        end -= 1;
    }
    &poly[..end]
}

fn bisect_poly(poly: &[f64], mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let neg_left = f_lo < 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f = eval(poly, mid);
        if f == 0.0 {
            return mid;
        }
        if (f < 0.0) == neg_left {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Divides out `(x - r)`.
fn deflate(poly: &[f64], r: f64) -> Vec<f64> {
    let n = poly.len() - 1;
    let mut q = vec![0.0; n];
    let mut carry = 0.0;
    for k in (0..n).rev() {
        carry = poly[k + 1] + carry * r;
        q[k] = carry;
    }
    q
}

/// All complex roots by simultaneous Weierstrass iteration.
pub fn durand_kerner(poly: &[f64]) -> Vec<Complex64> {
    let poly = trim(poly);
    let degree = poly.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = poly[degree];
    let monic: Vec<f64> = poly.iter().map(|c| c / lead).collect();
    let radius = cauchy_bound(&monic);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32) * radius.min(10.0)).collect();
    let p = |x: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c);
    for _ in 0..5000 {
        let mut moved = 0.0_f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(f64::EPSILON, 0.0);
            }
            let step = p(z[i]) / denom;
            z[i] -= step;
            moved = moved.max(step.norm() / (1.0 + z[i].norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// Eigenvalues from the dense oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpectrum {
    /// Real eigenvalues with multiplicity, ascending.
    pub real: Vec<f64>,
    /// One representative (positive imaginary part) per complex-conjugate pair.
    pub complex_pairs: Vec<Complex64>,
}

pub fn dense_eigenvalues(a: &[Vec<f64>]) -> OracleSpectrum {
    let poly = characteristic_polynomial(a);
    let mut real = real_roots(&poly);
    let mut rest = poly;
    for &r in &real {
        rest = deflate(&rest, r);
    }
    let mut complex_pairs = Vec::new();
    for z in durand_kerner(&rest) {
        if z.im.abs() <= REAL_ROOT_IMAG_TOL * (1.0 + z.re.abs()) {
            real.push(z.re);
        } else if z.im > 0.0 {
            complex_pairs.push(z);
        }
    }
    real.sort_by(f64::total_cmp);
    complex_pairs.sort_by(|a, b| a.re.total_cmp(&b.re));
    OracleSpectrum { real, complex_pairs }
}

/// Monic polynomial with the given real roots, lowest degree first.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (k, c) in p.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= r * c;
        }
        p = next;
    }
    p
}
