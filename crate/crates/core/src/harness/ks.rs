//! Kolmogorov–Smirnov statistics with asymptotic p-values.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`, the Kolmogorov survival function.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed form, fast for small λ
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * (y + y.powi(9) + y.powi(25) + y.powi(49));
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let x = (-2.0 * lambda * lambda).exp();
    (2.0 * (x - x.powi(4) + x.powi(9) - x.powi(16))).clamp(0.0, 1.0)
}

/// Stephens' small-sample correction applied to the effective size `n_e`.
fn p_value(d: f64, n_e: f64) -> f64 {
    let en = n_e.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Domain("KS test needs nonempty samples".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("KS test sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample statistic `sup |F_x − F_y|` and its asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let x = sorted(x)?;
    let y = sorted(y)?;
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        // step past ties in both samples before comparing
        while i < x.len() && x[i] == v {
            i += 1;
        }
        while j < y.len() && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok((d, p_value(d, n * m / (n + m))))
}

/// One-sample statistic against the standard normal law.
pub fn ks_normal(x: &[f64]) -> Result<(f64, f64)> {
    let x = sorted(x)?;
    let normal = Normal::standard();
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &v) in x.iter().enumerate() {
        let f = normal.cdf(v);
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    Ok((d, p_value(d, n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_function_values() {
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        // tabulated: Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 2e-4);
        // both branches agree at the switch
        let lo = kolmogorov_survival(1.18 - 1e-12);
        let hi = kolmogorov_survival(1.18);
        assert!((lo - hi).abs() < 1e-9);
    }

    #[test]
    fn identical_samples() {
        let x = [0.3, -1.0, 2.0, 0.5];
        let (d, p) = ks_two_sample(&x, &x).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn disjoint_samples() {
        let (d, _) = ks_two_sample(&[0.0, 1.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_normal(&[]).is_err());
    }

    #[test]
    fn normal_quantiles_fit() {
        let normal = Normal::standard();
        let x: Vec<f64> = (0..999).map(|k| normal.inverse_cdf((k as f64 + 0.5) / 999.0)).collect();
        let (d, p) = ks_normal(&x).unwrap();
        assert!(d <= 0.5 / 999.0 + 1e-8, "{d}");
        assert!(p > 0.999);
    }
}
