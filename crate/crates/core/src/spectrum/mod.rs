//! Characteristic function `h(λ) = λ − θ∫e^{λu}a(du)`, its roots and the
//! residue data attached to each root.

mod regime;
mod search;

pub use regime::{classify, classify_with_hint, real_gcd, Regime, RegimeReport, Scaling};
pub use search::{count_zeros, roots_in_band, roots_in_strip, Rect, RootLocation};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{SignedMeasure, MAX_MOMENT_ORDER};

/// Threshold on `|h^{(m)}(λ)/m!|` below which a claimed multiplicity is rejected.
const MULTIPLICITY_FLOOR: f64 = 1e-10;

/// Relative cutoff below which a coefficient of `P` counts as zero.
const P_ZERO_RELATIVE: f64 = 1e-10;

/// `h(λ)`.
pub fn char_value(theta: f64, a: &SignedMeasure, lambda: Complex64) -> Complex64 {
    lambda - a.exp_moment(lambda, 0) * theta
}

/// `h^{(k)}(λ)` for `k ≥ 1`.
pub fn char_derivative(theta: f64, a: &SignedMeasure, lambda: Complex64, k: usize) -> Result<Complex64> {
    if k == 0 || k > MAX_MOMENT_ORDER {
        return Err(Error::Domain(format!("derivative order must be in 1..={MAX_MOMENT_ORDER}, got {k}")));
    }
    Ok(derivatives(theta, a, lambda, k)[k])
}

/// `[h(λ), h'(λ), …, h^{(n)}(λ)]`.
pub(crate) fn derivatives(theta: f64, a: &SignedMeasure, lambda: Complex64, n: usize) -> Vec<Complex64> {
    let moments = a.exp_moments(lambda, n);
    let mut out: Vec<Complex64> = moments.iter().map(|m| -m * theta).collect();
    out[0] += lambda;
    if n >= 1 {
        out[1] += 1.0;
    }
    out
}

/// Laurent coefficients `A_{−m}, …, A_K` of `1/h` at a root of multiplicity `m`.
///
/// The power series `h(z)/(z−λ)^m = Σ g_i (z−λ)^i` is inverted term by term.
pub fn laurent_coeffs(
    theta: f64,
    a: &SignedMeasure,
    lambda: Complex64,
    m: usize,
    k_max: i64,
) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::Domain("multiplicity must be positive".into()));
    }
    let terms = k_max + m as i64 + 1;
    if terms <= 0 {
        return Err(Error::Domain(format!("K = {k_max} is below -m = -{m}")));
    }
    let terms = terms as usize;
    let order = m + terms - 1;
    if order > MAX_MOMENT_ORDER {
        return Err(Error::Domain(format!(
            "Laurent expansion needs derivatives up to order {order}, the cap is {MAX_MOMENT_ORDER}"
        )));
    }
    let d = derivatives(theta, a, lambda, order);
    let mut factorial = 1.0;
    let taylor: Vec<Complex64> = d
        .iter()
        .enumerate()
        .map(|(j, v)| {
            if j > 0 {
                factorial *= j as f64;
            }
            v / factorial
        })
        .collect();
    // lower Taylor coefficients must vanish for the claimed multiplicity
    if let Some(bad) = taylor[..m].iter().find(|t| t.norm() > 1e-6 * (1.0 + lambda.norm())) {
        return Err(Error::MultiplicityInconsistent(bad.norm()));
    }
    let g = &taylor[m..];
    if g[0].norm() < MULTIPLICITY_FLOOR {
        return Err(Error::MultiplicityInconsistent(g[0].norm()));
    }
    let mut b = Vec::with_capacity(terms);
    b.push(g[0].inv());
    for n in 1..terms {
        let s: Complex64 = (1..=n).map(|i| g[i] * b[n - i]).sum();
        b.push(-s / g[0]);
    }
    Ok(b)
}

/// A characteristic root with the polynomial data of its residue term.
#[derive(Debug, Clone, Serialize)]
pub struct CharRoot {
    pub lambda: Complex64,
    pub multiplicity: usize,
    /// `A_{−m}, …, A_{−1}`.
    pub laurent: Vec<Complex64>,
    /// Coefficients of `p(t) = Σ A_{−1−ℓ} t^ℓ/ℓ!`, lowest degree first.
    pub p_poly: Vec<Complex64>,
    /// Coefficients `c_ℓ` of `P(t) = Σ c_ℓ t^ℓ`.
    pub p_cap_poly: Vec<Complex64>,
    /// Degree of `P`, `None` when `P` vanishes.
    pub m_tilde: Option<usize>,
}

impl CharRoot {
    /// `A_k` for `−m ≤ k ≤ −1`.
    pub fn laurent_at(&self, k: i64) -> Complex64 {
        self.laurent[(k + self.multiplicity as i64) as usize]
    }

    /// `c_{λ,ℓ}`, zero beyond the stored degree.
    pub fn c(&self, l: usize) -> Complex64 {
        self.p_cap_poly.get(l).copied().unwrap_or_default()
    }

    /// `p(t)·e^{λt}`.
    pub fn residue_term(&self, t: f64) -> Complex64 {
        let poly = self.p_poly.iter().rev().fold(Complex64::default(), |acc, c| acc * t + c);
        poly * (self.lambda * t).exp()
    }
}

/// Attach Laurent coefficients, `p`, `P` and `m̃` to a located root.
pub fn build_root_data(theta: f64, a: &SignedMeasure, root: &RootLocation) -> Result<CharRoot> {
    let m = root.multiplicity;
    let lambda = root.lambda;
    let laurent = laurent_coeffs(theta, a, lambda, m, -1)?;
    let at = |k: i64| laurent[(k + m as i64) as usize];
    let mut factorials = vec![1.0; m + 1];
    for i in 1..=m {
        factorials[i] = factorials[i - 1] * i as f64;
    }
    let p_poly: Vec<Complex64> = (0..m).map(|l| at(-1 - l as i64) / factorials[l]).collect();
    let mut moments = a.exp_moments(lambda, m - 1);
    if lambda == Complex64::new(0.0, 0.0) {
        // a([-r,0]) = 0 must be recognised exactly, not as a rounding residue
        let mass = a.mass();
        if mass.abs() <= 1e-12 * a.total_variation() {
            moments[0] = Complex64::new(0.0, 0.0);
        }
    }
    let p_cap_poly: Vec<Complex64> = (0..m)
        .map(|l| {
            let s: Complex64 = (0..m - l)
                .map(|j| at(-(j as i64) - 1 - l as i64) / factorials[j] * moments[j])
                .sum();
            s / factorials[l]
        })
        .collect();
    let scale = laurent.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let cutoff = P_ZERO_RELATIVE * (1.0 + scale) * a.total_variation();
    let m_tilde = p_cap_poly.iter().rposition(|c| c.norm() >= cutoff);
    Ok(CharRoot {
        lambda,
        multiplicity: m,
        laurent,
        p_poly,
        p_cap_poly,
        m_tilde,
    })
}

/// Sum of the residue terms `p_λ(t)e^{λt}` over `roots`, as a real number.
///
/// `roots` must be closed under conjugation, as returned by the root search.
pub fn residue_expansion_eval(roots: &[CharRoot], t: f64) -> f64 {
    roots.iter().map(|root| root.residue_term(t).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn char_value_examples() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        assert_eq!(char_value(0.0, &a, c(2.0, 3.0)), c(2.0, 3.0));
        // λ e^{λ} = 1 at the omega constant
        let omega = 0.567_143_290_409_783_9;
        assert!(char_value(1.0, &a, c(omega, 0.0)).norm() < 1e-9);
        assert!(char_value(-PI / 2.0, &a, c(0.0, PI / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn char_derivative_examples() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        assert_eq!(char_derivative(0.0, &a, c(0.3, 0.2), 1).unwrap(), c(1.0, 0.0));
        let d = char_derivative(-PI / 2.0, &a, c(0.0, PI / 2.0), 1).unwrap();
        assert!((d - c(1.0, PI / 2.0)).norm() < 1e-15);
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        assert_eq!(char_derivative(1.0, &d0, c(0.4, -2.0), 2).unwrap(), c(0.0, 0.0));
        assert!(char_derivative(1.0, &d0, c(0.0, 0.0), 0).is_err());
        assert!(char_derivative(1.0, &d0, c(0.0, 0.0), 17).is_err());
    }

    #[test]
    fn laurent_examples() {
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        let a = laurent_coeffs(0.0, &d0, c(0.0, 0.0), 1, 3).unwrap();
        assert_eq!(a[0], c(1.0, 0.0));
        assert!(a[1..].iter().all(|z| z.norm() == 0.0));
        let a = laurent_coeffs(1.0, &d0, c(1.0, 0.0), 1, 0).unwrap();
        assert_eq!(a, vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let d1 = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let lambda = c(0.0, PI / 2.0);
        let a = laurent_coeffs(-PI / 2.0, &d1, lambda, 1, -1).unwrap();
        let want = c(1.0, PI / 2.0).inv();
        assert!((a[0] - want).norm() < 1e-14);
        // simple root is not a double root
        assert!(matches!(
            laurent_coeffs(-PI / 2.0, &d1, lambda, 2, -1),
            Err(Error::MultiplicityInconsistent(_))
        ));
    }

    #[test]
    fn laurent_series_inverts_double_root() {
        // θ = −1/e, a = δ_{−1}: h(z) = z + e^{−1−z} has a double root at −1
        let d1 = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let theta = -(-1.0f64).exp();
        let lambda = c(-1.0, 0.0);
        let coeffs = laurent_coeffs(theta, &d1, lambda, 2, 2).unwrap();
        // h(−1+w) = e^{−w} − 1 + w = w²/2 − w³/6 + …; check (1/h)·h = 1 on a small circle
        let rho = 0.05;
        for k in 0..8 {
            let w = c(0.0, 2.0 * PI * k as f64 / 8.0).exp() * rho;
            let series: Complex64 =
                coeffs.iter().enumerate().map(|(i, a)| a * w.powi(i as i32 - 2)).sum();
            let h = char_value(theta, &d1, lambda + w);
            assert!((series * h - 1.0).norm() < 1e-4, "k={k}");
        }
        assert!((coeffs[0] - c(2.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn root_data_examples() {
        let balanced = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        let zero = RootLocation { lambda: c(0.0, 0.0), multiplicity: 1 };
        let root = build_root_data(0.0, &balanced, &zero).unwrap();
        assert_eq!(root.p_cap_poly, vec![c(0.0, 0.0)]);
        assert_eq!(root.m_tilde, None);
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        let root = build_root_data(0.0, &d0, &zero).unwrap();
        assert_eq!(root.p_cap_poly, vec![c(1.0, 0.0)]);
        assert_eq!(root.m_tilde, Some(0));
        let sin = SignedMeasure::sampled_from_fn(2.0 * PI, 4097, f64::sin).unwrap();
        let root = build_root_data(0.15, &sin, &zero).unwrap();
        assert_eq!(root.m_tilde, None);
    }

    #[test]
    fn hayes_root_coefficient() {
        let d1 = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let loc = RootLocation { lambda: c(0.0, PI / 2.0), multiplicity: 1 };
        let root = build_root_data(-PI / 2.0, &d1, &loc).unwrap();
        let want = c(0.0, -1.0) / c(1.0, PI / 2.0);
        assert!((root.c(0) - want).norm() < 1e-14);
        assert_eq!(root.m_tilde, Some(0));
    }
}
