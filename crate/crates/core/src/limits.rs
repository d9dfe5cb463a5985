//! Direct samplers for the limiting `(Δ, J)` pairs of each regime.
//!
//! All samplers draw from a [`NormalStream`], so a draw is a pure function of
//! its seed.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::SignedMeasure;
use crate::noise::NormalStream;
use crate::quad;
use crate::sim::InitialPath;
use crate::spectrum::{CharRoot, Regime, RegimeReport};

/// Smallest number of Euler steps on `[0, 1]` for the Wiener functionals.
pub const MIN_LAQ_STEPS: usize = 10_000;
/// Largest imaginary part tolerated in the assembled `Δ`.
const IMAGINARY_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSample {
    pub delta: f64,
    pub info: f64,
    pub regime: Regime,
    /// Phase `d` of the periodic limit, zero elsewhere.
    pub d_offset: f64,
}

/// `(√J z, J)` with `z ~ N(0, 1)`.
pub fn sample_lan(j: f64, rng: &mut NormalStream) -> Result<LimitSample> {
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::Domain(format!("limiting information must be positive, got {j}")));
    }
    Ok(LimitSample { delta: j.sqrt() * rng.next_normal(), info: j, regime: Regime::Lan, d_offset: 0.0 })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn contributing(report: &RegimeReport) -> Result<(&[CharRoot], usize)> {
    let m = report
        .m_star
        .ok_or_else(|| Error::Precondition("the report has no contributing roots (m* = -inf)".into()))?;
    if report.contributing_roots.is_empty() {
        return Err(Error::Precondition("the report lists no contributing roots".into()));
    }
    Ok((&report.contributing_roots, m))
}

/// Wiener functionals of the boundary case on an Euler grid of `[0, 1]`.
///
/// Each frequency `φ ≥ 0` gets its own driving process `Z_{φ,0}` (real for
/// `φ = 0`, normalised complex otherwise); negative frequencies reuse the
/// conjugate. `Z_{φ,m}(s) = ∫_0^s (s-u)^m dZ_{φ,0}(u)` is accumulated from
/// the running moments `Σ u_i^j ΔZ_i` by the binomial theorem.
pub fn sample_laq(report: &RegimeReport, n_steps: usize, rng: &mut NormalStream) -> Result<LimitSample> {
    if n_steps < MIN_LAQ_STEPS {
        return Err(Error::Domain(format!("need at least {MIN_LAQ_STEPS} steps, got {n_steps}")));
    }
    let (roots, m) = contributing(report)?;
    let mut freqs: Vec<f64> = Vec::new();
    for root in roots {
        let phi = root.lambda.im.abs();
        if !freqs.iter().any(|f| (f - phi).abs() <= 1e-9 * (1.0 + phi)) {
            freqs.push(phi);
        }
    }
    freqs.sort_by(f64::total_cmp);
    let ds = 1.0 / n_steps as f64;
    let sd = ds.sqrt();
    let coeffs: Vec<f64> = (0..=m).map(|j| binomial(m, j) * if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    // per frequency: Σ Z_m conj(dZ) and ∫|Z_m|²
    let mut cross = vec![Complex64::default(); freqs.len()];
    let mut energy = vec![0.0; freqs.len()];
    for (slot, &phi) in freqs.iter().enumerate() {
        let mut moments = vec![Complex64::default(); m + 1];
        for k in 0..n_steps {
            let s = k as f64 * ds;
            // Z_m(s_k) from increments strictly before s_k
            let mut z_m = Complex64::default();
            let mut s_pow = 1.0;
            for j in (0..=m).rev() {
                z_m += moments[j] * (coeffs[j] * s_pow);
                s_pow *= s;
            }
            let dz = if phi == 0.0 {
                Complex64::new(sd * rng.next_normal(), 0.0)
            } else {
                let re = rng.next_normal();
                let im = rng.next_normal();
                Complex64::new(re, im) * (sd * FRAC_1_SQRT_2)
            };
            cross[slot] += z_m * dz.conj();
            energy[slot] += z_m.norm_sqr() * ds;
            let mut u_pow = 1.0;
            for moment in moments.iter_mut() {
                *moment += dz * u_pow;
                u_pow *= s;
            }
        }
    }
    let mut delta = Complex64::default();
    let mut info = 0.0;
    for root in roots {
        let phi = root.lambda.im;
        let slot = freqs
            .iter()
            .position(|f| (f - phi.abs()).abs() <= 1e-9 * (1.0 + phi.abs()))
            .expect("frequency registered above");
        let c = root.c(m);
        // for φ < 0 the driving process is the conjugate one
        let term = if phi < 0.0 { cross[slot].conj() } else { cross[slot] };
        delta += c * term;
        info += c.norm_sqr() * energy[slot];
    }
    if delta.im.abs() > IMAGINARY_RESIDUAL * delta.re.abs().max(1.0) {
        return Err(Error::Consistency(format!("limiting score has imaginary part {}", delta.im)));
    }
    Ok(LimitSample { delta: delta.re, info, regime: Regime::Laq, d_offset: 0.0 })
}

/// `∫_{[-r,0]} ∫_u^0 e^{-λ(s-u)} X₀(s) ds a(du)`.
pub fn initial_path_integral(a: &SignedMeasure, x0: &InitialPath, lambda: Complex64) -> Complex64 {
    if matches!(x0, InitialPath::Zero) {
        return Complex64::default();
    }
    let r = a.r();
    let gl = quad::rule(16);
    // the inner integrand is smooth except at the nodes of a sampled X₀
    let breaks: Vec<f64> = match x0 {
        InitialPath::Sampled { values } if values.len() > 1 => {
            let n = values.len();
            (0..n).map(|i| -r + i as f64 * r / (n - 1) as f64).collect()
        }
        _ => (0..=8).map(|i| -r + i as f64 * r / 8.0).collect(),
    };
    a.integrate(|u: f64| {
        let mut acc = Complex64::default();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0].max(u), w[1]);
            if hi > lo {
                acc += gl.integrate(lo, hi, |s| (-lambda * (s - u)).exp() * x0.value_at(s, r));
            }
        }
        acc
    })
}

/// Horizon `S` with `e^{-2v S} < 10⁻⁸`.
pub fn default_horizon(v_star: f64) -> f64 {
    10.0 / v_star
}

/// Draw the Gaussians `G_λ = ∫_0^S e^{-λs} dW(s)` jointly for roots with `Im λ ≥ 0`.
fn joint_gaussians(lambdas: &[Complex64], horizon: f64, rng: &mut NormalStream) -> Result<Vec<Complex64>> {
    // real coordinates: Re G_k always, Im G_k only for non-real roots
    let mut coords: Vec<(usize, bool)> = Vec::new();
    for (k, l) in lambdas.iter().enumerate() {
        coords.push((k, false));
        if l.im != 0.0 {
            coords.push((k, true));
        }
    }
    let integral = |mu: Complex64| -> Complex64 {
        if mu.norm() == 0.0 {
            Complex64::new(horizon, 0.0)
        } else {
            (1.0 - (-mu * horizon).exp()) / mu
        }
    };
    let n = coords.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let (a, a_im) = coords[i];
        let (b, b_im) = coords[j];
        let p = integral(lambdas[a] + lambdas[b]);
        let q = integral(lambdas[a] + lambdas[b].conj());
        match (a_im, b_im) {
            (false, false) => 0.5 * (p + q).re,
            (true, true) => 0.5 * (q - p).re,
            (false, true) => 0.5 * (p - q).im,
            (true, false) => 0.5 * (p + q).im,
        }
    });
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Consistency("covariance of the stochastic integrals is not positive definite".into()))?;
    let z = DVector::from_fn(n, |_, _| rng.next_normal());
    let x = chol.l() * z;
    let mut out = vec![Complex64::default(); lambdas.len()];
    for (i, (k, is_im)) in coords.iter().enumerate() {
        if *is_im {
            out[*k].im = x[i];
        } else {
            out[*k].re = x[i];
        }
    }
    Ok(out)
}

/// `U_λ` for every contributing root, conjugate roots getting conjugate values.
///
/// The initial-path term carries the factor `θ` of the path representation.
fn u_values(
    theta: f64,
    a: &SignedMeasure,
    roots: &[CharRoot],
    x0: &InitialPath,
    horizon: f64,
    noise: bool,
    rng: &mut NormalStream,
) -> Result<Vec<Complex64>> {
    let upper: Vec<Complex64> = roots.iter().map(|r| r.lambda).filter(|l| l.im >= 0.0).collect();
    let gaussians = if noise {
        joint_gaussians(&upper, horizon, rng)?
    } else {
        vec![Complex64::default(); upper.len()]
    };
    let x0_at_zero = x0.value_at(0.0, a.r());
    let base: Vec<Complex64> = upper
        .iter()
        .zip(&gaussians)
        .map(|(&l, g)| x0_at_zero + initial_path_integral(a, x0, l) * theta + g)
        .collect();
    Ok(roots
        .iter()
        .map(|root| {
            let l = root.lambda;
            let idx = upper
                .iter()
                .position(|u| (u - Complex64::new(l.re, l.im.abs())).norm() <= 1e-12 * (1.0 + l.norm()))
                .expect("every root has an upper-half representative");
            if l.im < 0.0 {
                base[idx].conj()
            } else {
                base[idx]
            }
        })
        .collect())
}

/// Mixed-normal limit for a real dominant root: `J = c²U²/(2v*)`, `Δ = z√J`.
pub fn sample_lamn(
    theta: f64,
    a: &SignedMeasure,
    report: &RegimeReport,
    x0: &InitialPath,
    horizon: f64,
    noise: bool,
    rng: &mut NormalStream,
) -> Result<LimitSample> {
    let (roots, m) = contributing(report)?;
    let v = report.v_star.filter(|v| *v > 0.0).ok_or_else(|| {
        Error::Precondition("the mixed-normal limit needs v* > 0".into())
    })?;
    let root = roots
        .iter()
        .find(|r| r.lambda.im == 0.0)
        .ok_or_else(|| Error::Precondition("no real contributing root".into()))?;
    let u = u_values(theta, a, std::slice::from_ref(root), x0, horizon, noise, rng)?[0].re;
    let c = root.c(m).re;
    let info = c * c * u * u / (2.0 * v);
    let z = rng.next_normal();
    Ok(LimitSample { delta: z * info.sqrt(), info, regime: Regime::Lamn, d_offset: 0.0 })
}

/// `J(d) = ∫_0^∞ e^{-2v*t} (Re Σ c_λ U_λ e^{i(d-t)Im λ})² dt` in closed form.
pub fn periodic_information(v_star: f64, roots: &[CharRoot], m: usize, u: &[Complex64], d: f64) -> f64 {
    let alpha: Vec<(Complex64, f64)> =
        roots.iter().zip(u).map(|(root, &u)| (root.c(m) * u, root.lambda.im)).collect();
    let mut total = Complex64::default();
    for &(ak, pk) in &alpha {
        for &(al, pl) in &alpha {
            let phase = Complex64::new(0.0, (pk + pl) * d).exp();
            total += ak * al * phase / Complex64::new(2.0 * v_star, pk + pl);
        }
    }
    total.re
}

/// Periodic mixed-normal limit at phase `d ∈ [0, 2π/D)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_plamn(
    theta: f64,
    a: &SignedMeasure,
    report: &RegimeReport,
    x0: &InitialPath,
    d: f64,
    horizon: f64,
    noise: bool,
    rng: &mut NormalStream,
) -> Result<LimitSample> {
    let (roots, m) = contributing(report)?;
    let v = report.v_star.filter(|v| *v > 0.0).ok_or_else(|| {
        Error::Precondition("the periodic mixed-normal limit needs v* > 0".into())
    })?;
    let u = u_values(theta, a, roots, x0, horizon, noise, rng)?;
    let info = periodic_information(v, roots, m, &u, d);
    let z = rng.next_normal();
    Ok(LimitSample { delta: z * info.max(0.0).sqrt(), info, regime: Regime::Plamn, d_offset: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::classify;

    #[test]
    fn lan_moments() {
        let mut rng = NormalStream::new(1, 77);
        let draws: Vec<LimitSample> = (0..10_000).map(|_| sample_lan(1.0, &mut rng).unwrap()).collect();
        let var = draws.iter().map(|s| s.delta * s.delta).sum::<f64>() / draws.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
        let half = sample_lan(0.5, &mut rng).unwrap();
        assert_eq!(half.info, 0.5);
        assert!(sample_lan(0.0, &mut rng).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
    }

    #[test]
    fn initial_path_integral_constant() {
        // ∫_{-1}^0 e^{-λ(s+1)} ds = (1 - e^{-λ})/λ for a = δ_{-1}, X₀ ≡ 1
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let lambda = Complex64::new(0.47, 1.82);
        let got = initial_path_integral(&a, &InitialPath::constant(1.0), lambda);
        let want = (1.0 - (-lambda).exp()) / lambda;
        assert!((got - want).norm() < 1e-13);
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        assert_eq!(initial_path_integral(&d0, &InitialPath::constant(1.0), lambda).norm(), 0.0);
    }

    #[test]
    fn noiseless_lamn_is_deterministic() {
        let a = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        let report = classify(0.5, &a).unwrap();
        let mut rng = NormalStream::new(3, 5);
        let s = sample_lamn(0.5, &a, &report, &InitialPath::constant(1.0), 40.0, false, &mut rng).unwrap();
        assert!((s.info - 1.0 / (2.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn periodic_information_is_periodic_and_positive() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let report = classify(-3.0, &a).unwrap();
        let period = report.period().unwrap();
        let m = report.m_star.unwrap();
        let mut rng = NormalStream::new(11, 5);
        for _ in 0..50 {
            let u = u_values(-3.0, &a, &report.contributing_roots, &InitialPath::Zero, 30.0, true, &mut rng).unwrap();
            for d in [0.0, 0.3 * period, 0.9 * period] {
                let j = periodic_information(report.v_star.unwrap(), &report.contributing_roots, m, &u, d);
                let k = periodic_information(report.v_star.unwrap(), &report.contributing_roots, m, &u, d + period);
                assert!(j > 0.0);
                assert!((j - k).abs() <= 1e-10 * j.abs().max(1.0));
            }
        }
    }
}
