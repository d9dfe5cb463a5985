//! Regime classification from the rightmost roots with a non-vanishing `P`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::search::{imaginary_bound, real_part_bound, roots_in_band};
use super::{build_root_data, CharRoot};
use crate::error::{Error, Result};
use crate::measure::SignedMeasure;

/// `|v*| ≤ ZERO_ABSCISSA` counts as `v* = 0`.
pub const ZERO_ABSCISSA: f64 = 1e-8;
/// Roots within this distance of the line `Re λ = v*` belong to it.
const LINE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Lan,
    Laq,
    Lamn,
    Plamn,
    Unclassified,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Lan => "LAN",
            Regime::Laq => "LAQ",
            Regime::Lamn => "LAMN",
            Regime::Plamn => "PLAMN",
            Regime::Unclassified => "UNCLASSIFIED",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LAN" => Ok(Regime::Lan),
            "LAQ" => Ok(Regime::Laq),
            "LAMN" => Ok(Regime::Lamn),
            "PLAMN" => Ok(Regime::Plamn),
            "UNCLASSIFIED" => Ok(Regime::Unclassified),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normalising rate `r_T` of the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    /// `T^{-1/2}`.
    InvSqrt,
    /// `T^{-(m*+1)}`.
    Power { exponent: u32 },
    /// `T^{-m*} e^{-v*T}`.
    PowerExp { m_star: u32, v_star: f64 },
}

impl Scaling {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Scaling::InvSqrt => t.powf(-0.5),
            Scaling::Power { exponent } => t.powi(-(exponent as i32)),
            Scaling::PowerExp { m_star, v_star } => t.powi(-(m_star as i32)) * (-v_star * t).exp(),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Scaling::InvSqrt => "T^(-1/2)".to_string(),
            Scaling::Power { exponent } => format!("T^(-{exponent})"),
            Scaling::PowerExp { m_star, v_star } => format!("T^(-{m_star}) exp(-{v_star} T)"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub theta: f64,
    /// Rightmost real part over all roots; `None` if no root lies right of the floor.
    pub v0: Option<f64>,
    /// `None` encodes `−∞`.
    pub v_star: Option<f64>,
    pub m_star: Option<usize>,
    /// Positive imaginary parts of the contributing roots.
    pub h: Vec<f64>,
    pub d: Option<f64>,
    pub regime: Regime,
    pub scaling: Option<Scaling>,
    /// Roots on `Re λ = v*` with `m̃ = m*`, conjugates included.
    pub contributing_roots: Vec<CharRoot>,
    /// Every root located during the sweep.
    pub roots: Vec<CharRoot>,
    /// Set when the regime was forced by the caller.
    pub hint_applied: bool,
}

impl RegimeReport {
    /// Period `2π/D` of the periodic limit, when there is one.
    pub fn period(&self) -> Option<f64> {
        self.d.map(|d| 2.0 * PI / d)
    }

    pub fn is_lan(&self) -> bool {
        self.regime == Regime::Lan
    }
}

/// Largest `d` such that every element of `h` is within `tol·max(h)` of a
/// multiple of `d`, found by the Euclidean algorithm on reals.
pub fn real_gcd(h: &[f64], tol: f64) -> Option<f64> {
    if h.is_empty() || h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return None;
    }
    let top = h.iter().copied().fold(0.0, f64::max);
    let eps = tol * top;
    let floor = top / 1e6;
    let pair = |x: f64, y: f64| -> Option<f64> {
        let (mut big, mut small) = if x >= y { (x, y) } else { (y, x) };
        loop {
            if small < floor {
                return None;
            }
            let rem = big % small;
            if rem < eps || small - rem < eps {
                return Some(small);
            }
            big = small;
            small = rem;
        }
    };
    let mut d = h[0];
    for &x in &h[1..] {
        d = pair(d, x)?;
    }
    // the tolerant Euclid can drift; accept d only if it really divides every element
    h.iter()
        .all(|&x| {
            let q = (x / d).round();
            q >= 1.0 && q <= 1e6 && (x - q * d).abs() <= eps.max(1e-12 * top)
        })
        .then_some(d)
}

fn scaling_for(regime: Regime, v_star: Option<f64>, m_star: Option<usize>) -> Option<Scaling> {
    let m = m_star.unwrap_or(0) as u32;
    match regime {
        Regime::Lan => Some(Scaling::InvSqrt),
        Regime::Laq => Some(Scaling::Power { exponent: m + 1 }),
        Regime::Lamn | Regime::Plamn => Some(Scaling::PowerExp { m_star: m, v_star: v_star.unwrap_or(0.0) }),
        Regime::Unclassified => None,
    }
}

/// Locate the rightmost roots, build their residue data and classify.
pub fn classify(theta: f64, a: &SignedMeasure) -> Result<RegimeReport> {
    classify_with_hint(theta, a, None)
}

/// As [`classify`], but a `hint` overrides the regime tag; this is meant for
/// experiments designed on a boundary the tolerance cannot resolve.
pub fn classify_with_hint(theta: f64, a: &SignedMeasure, hint: Option<Regime>) -> Result<RegimeReport> {
    let top = real_part_bound(theta, a);
    let floor = -10.0 / a.r();
    let mut roots: Vec<CharRoot> = Vec::new();
    // find a rough rightmost abscissa from unit bands below the bound
    let mut hi = top;
    let mut v_hat = None;
    while hi > floor {
        let lo = (hi - 1.0).max(floor);
        let band = roots_in_band(theta, a, lo, hi)?;
        if let Some(first) = band.first() {
            v_hat = Some(first.lambda.re);
            for loc in &band {
                roots.push(build_root_data(theta, a, loc)?);
            }
            hi = lo;
            break;
        }
        hi = lo;
    }
    let v0 = v_hat;
    // keep descending until a root with non-vanishing P shows up
    let mut searched_to = hi;
    if let Some(v_hat) = v_hat {
        let mut cut = v_hat - 1.0;
        loop {
            if roots.iter().any(|r| r.m_tilde.is_some()) {
                break;
            }
            let lo = cut.max(floor);
            if lo < searched_to {
                log::debug!("root sweep band [{lo}, {searched_to}), imaginary bound {}", imaginary_bound(theta, a, lo));
                for loc in roots_in_band(theta, a, lo, searched_to)? {
                    roots.push(build_root_data(theta, a, &loc)?);
                }
                searched_to = lo;
            }
            if lo <= floor {
                break;
            }
            cut -= 1.0;
        }
    }
    let v_star = roots
        .iter()
        .filter(|r| r.m_tilde.is_some())
        .map(|r| r.lambda.re)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    if v_star.is_none() {
        log::warn!("no root with non-vanishing P right of {floor}; taking v* = -inf");
    }
    let on_line: Vec<&CharRoot> = match v_star {
        Some(v) => roots
            .iter()
            .filter(|r| r.m_tilde.is_some() && (r.lambda.re - v).abs() <= LINE_TOL * (1.0 + v.abs()))
            .collect(),
        None => Vec::new(),
    };
    let m_star = on_line.iter().filter_map(|r| r.m_tilde).max();
    let contributing_roots: Vec<CharRoot> =
        on_line.into_iter().filter(|r| r.m_tilde == m_star).cloned().collect();
    let mut h: Vec<f64> = contributing_roots
        .iter()
        .map(|r| r.lambda.im)
        .filter(|&im| im > 0.0)
        .collect();
    h.sort_by(f64::total_cmp);
    let mut d = None;
    let mut regime = match v_star {
        None => Regime::Lan,
        Some(v) if v < -ZERO_ABSCISSA => Regime::Lan,
        Some(v) if v <= ZERO_ABSCISSA => Regime::Laq,
        Some(_) if h.is_empty() => Regime::Lamn,
        Some(_) => {
            let top_h = h.iter().copied().fold(0.0, f64::max);
            d = real_gcd(&h, (1e-8 / top_h).min(1e-4));
            if d.is_some() {
                Regime::Plamn
            } else {
                Regime::Unclassified
            }
        }
    };
    let mut hint_applied = false;
    if let Some(forced) = hint {
        if forced != regime {
            log::warn!("regime {regime} overridden by hint {forced}");
            hint_applied = true;
        }
        regime = forced;
        if regime == Regime::Plamn && d.is_none() && !h.is_empty() {
            d = h.first().copied();
        }
    }
    roots.sort_by(|x, y| y.lambda.re.total_cmp(&x.lambda.re).then(y.lambda.im.total_cmp(&x.lambda.im)));
    Ok(RegimeReport {
        theta,
        v0,
        v_star,
        m_star,
        h,
        d,
        regime,
        scaling: scaling_for(regime, v_star, m_star),
        contributing_roots,
        roots,
        hint_applied,
    })
}
