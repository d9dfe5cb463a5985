//! Finite signed measures on `[-r, 0]`.
//!
//! A measure is a sum of point masses, a piecewise-polynomial density and an
//! optional density sampled on a uniform grid. Everything downstream (the
//! characteristic function, the delay functional, the information integrals)
//! only ever touches a measure through the functionals defined here.
//!
//! Sampled densities are treated as their local cubic interpolant: each cell
//! `[u_i, u_{i+1}]` uses the Lagrange cubic through the four nearest samples.
//! The global integration rule is the exact integral of that interpolant, so
//! tail masses, moments and delay weights all see the same function.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Highest moment order `j` supported by [`SignedMeasure::exp_moments`].
pub const MAX_MOMENT_ORDER: usize = 16;

/// Atom locations within this distance of a bound are clamped onto it.
const LOCATION_SLACK: f64 = 1e-12;

/// Below `|λ|·max|u| < SERIES_RADIUS` polynomial pieces use the Taylor branch.
pub(crate) const SERIES_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub u: f64,
    pub w: f64,
}

/// Density `Σ coeffs[k] u^k` on `[lo, hi]` (powers of `u` itself, not of `u - lo`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl DensityPiece {
    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn antiderivative(&self, u: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * u + c / (k as f64 + 1.0))
            * u
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

/// Density sampled at `u_k = -r + k·r/(n-1)`, `k = 0..n`.
#[derive(Debug, Clone)]
pub struct SampledDensity {
    r: f64,
    h: f64,
    values: Vec<f64>,
    /// Global rule: `∫ f g ≈ Σ weights[k] f_k g(u_k)`.
    weights: Vec<f64>,
    /// `suffix[i] = ∫_{u_i}^0 f`.
    suffix: Vec<f64>,
}

impl SampledDensity {
    pub fn new(r: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(Error::InvalidMeasure(format!(
                "sampled density needs at least 4 samples, got {n}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("sampled density has non-finite values".into()));
        }
        let h = r / (n - 1) as f64;
        let mut density = Self {
            r,
            h,
            values,
            weights: vec![0.0; n],
            suffix: vec![0.0; n],
        };
        let gl = quad::rule(3);
        let mut weights = vec![0.0; n];
        let mut cell_integrals = vec![0.0; n - 1];
        for cell in 0..n - 1 {
            let start = density.stencil_start(cell);
            let (a, b) = (density.node(cell), density.node(cell + 1));
            for m in 0..4 {
                let wm: f64 = gl.integrate(a, b, |u| density.basis(start, m, u));
                weights[start + m] += wm;
                cell_integrals[cell] += wm * density.values[start + m];
            }
        }
        let mut suffix = vec![0.0; n];
        for cell in (0..n - 1).rev() {
            suffix[cell] = suffix[cell + 1] + cell_integrals[cell];
        }
        density.weights = weights;
        density.suffix = suffix;
        Ok(density)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn node(&self, k: usize) -> f64 {
        if k + 1 == self.values.len() {
            0.0
        } else {
            -self.r + k as f64 * self.h
        }
    }

    fn stencil_start(&self, cell: usize) -> usize {
        cell.saturating_sub(1).min(self.values.len() - 4)
    }

    fn cell_of(&self, u: f64) -> usize {
        let pos = ((u + self.r) / self.h).floor();
        (pos.max(0.0) as usize).min(self.values.len() - 2)
    }

    fn basis(&self, start: usize, m: usize, u: f64) -> f64 {
        let um = self.node(start + m);
        (0..4)
            .filter(|&q| q != m)
            .map(|q| {
                let uq = self.node(start + q);
                (u - uq) / (um - uq)
            })
            .product()
    }

    /// Value of the cubic interpolant at `u`.
    pub fn eval(&self, u: f64) -> f64 {
        let cell = self.cell_of(u);
        let start = self.stencil_start(cell);
        (0..4)
            .map(|m| self.values[start + m] * self.basis(start, m, u))
            .sum()
    }

    fn tail(&self, t: f64) -> f64 {
        let u = -t;
        if u <= -self.r {
            return self.suffix[0];
        }
        let cell = self.cell_of(u);
        let upper = self.node(cell + 1);
        let partial: f64 = quad::rule(3).integrate(u, upper, |s| self.eval(s));
        partial + self.suffix[cell + 1]
    }

    fn abs_integral(&self) -> f64 {
        let gl = quad::rule(3);
        let mut total = 0.0;
        for cell in 0..self.values.len() - 1 {
            let (a, b) = (self.node(cell), self.node(cell + 1));
            total += abs_integral_on(a, b, 8, gl, |u| self.eval(u));
        }
        total
    }
}

/// `∫_a^b |f|` for a smooth `f`, splitting at sign changes found on `probes` subintervals.
fn abs_integral_on<F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    probes: usize,
    gl: &quad::GaussLegendre,
    f: F,
) -> f64 {
    let mut breaks = vec![a];
    let step = (b - a) / probes as f64;
    let mut left = a;
    let mut f_left = f(a);
    for i in 1..=probes {
        let right = if i == probes { b } else { a + i as f64 * step };
        let f_right = f(right);
        if f_left * f_right < 0.0 {
            let (mut lo, mut hi, mut f_lo) = (left, right, f_left);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * f_lo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    f_lo = fm;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        left = right;
        f_left = f_right;
    }
    breaks.push(b);
    breaks
        .windows(2)
        .map(|w| gl.integrate(w[0], w[1], |u| f(u)).abs())
        .sum()
}

/// Which evaluation route a polynomial piece's exponential moment takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MomentBranch {
    Auto,
    // forced routes are only taken by the cross-check tests
    #[cfg_attr(not(test), allow(dead_code))]
    Series,
    #[cfg_attr(not(test), allow(dead_code))]
    Recursion,
}

/// `I_k = ∫_lo^hi u^k e^{λu} du` for `k = 0..=kmax`.
pub(crate) fn piece_exp_integrals(
    lo: f64,
    hi: f64,
    lambda: Complex64,
    kmax: usize,
    branch: MomentBranch,
) -> Vec<Complex64> {
    let rho = lo.abs().max(hi.abs());
    let use_series = match branch {
        MomentBranch::Series => true,
        MomentBranch::Recursion => lambda == Complex64::new(0.0, 0.0),
        MomentBranch::Auto => lambda.norm() * rho < SERIES_RADIUS,
    };
    if use_series {
        series_integrals(lo, hi, lambda, kmax)
    } else {
        recursive_integrals(lo, hi, lambda, kmax)
    }
}

fn series_integrals(lo: f64, hi: f64, lambda: Complex64, kmax: usize) -> Vec<Complex64> {
    let rho = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let x = lambda.norm() * rho;
    (0..=kmax)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            // coef = λ^n / n!
            let mut coef = Complex64::new(1.0, 0.0);
            let mut bound = 1.0;
            for n in 0..400 {
                let p = (k + n + 1) as i32;
                let span = (hi.powi(p) - lo.powi(p)) / p as f64;
                acc += coef * span;
                coef *= lambda / (n as f64 + 1.0);
                bound *= x / (n as f64 + 1.0);
                // remaining terms are bounded by a geometric tail of `bound·ρ^{k+1}`
                if n > 2 && bound < 1e-17 * (1.0 - x / (n as f64 + 2.0)).max(1e-3) {
                    break;
                }
            }
            acc
        })
        .collect()
}

fn recursive_integrals(lo: f64, hi: f64, lambda: Complex64, kmax: usize) -> Vec<Complex64> {
    let e_lo = (lambda * lo).exp();
    let e_hi = (lambda * hi).exp();
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(e_lo * expm1(lambda * (hi - lo)) / lambda);
    for k in 1..=kmax {
        let kf = k as f64;
        let boundary = e_hi * hi.powi(k as i32) - e_lo * lo.powi(k as i32);
        let prev = out[k - 1];
        out.push((boundary - prev * kf) / lambda);
    }
    out
}

fn expm1(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = z;
        let mut acc = z;
        for n in 2..40 {
            term *= z / n as f64;
            acc += term;
            if term.norm() < 1e-18 * acc.norm() {
                break;
            }
        }
        acc
    } else {
        z.exp() - 1.0
    }
}

/// Finite signed measure `a` on `[-r, 0]`.
#[derive(Debug, Clone)]
pub struct SignedMeasure {
    r: f64,
    atoms: Vec<Atom>,
    pieces: Vec<DensityPiece>,
    sampled: Option<SampledDensity>,
}

impl SignedMeasure {
    pub fn new(
        r: f64,
        atoms: Vec<Atom>,
        mut pieces: Vec<DensityPiece>,
        sampled: Option<Vec<f64>>,
    ) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidMeasure(format!("delay horizon r = {r} must be positive")));
        }
        let mut clean_atoms = Vec::with_capacity(atoms.len());
        for atom in atoms {
            if !atom.w.is_finite() || atom.w == 0.0 {
                return Err(Error::InvalidMeasure(format!("atom weight {} must be finite and non-zero", atom.w)));
            }
            let u = clamp_location(atom.u, r)
                .ok_or_else(|| Error::InvalidMeasure(format!("atom location {} outside [-{r}, 0]", atom.u)))?;
            clean_atoms.push(Atom { u, w: atom.w });
        }
        for piece in &mut pieces {
            let lo = clamp_location(piece.lo, r);
            let hi = clamp_location(piece.hi, r);
            match (lo, hi) {
                (Some(lo), Some(hi)) if lo < hi => {
                    piece.lo = lo;
                    piece.hi = hi;
                }
                _ => {
                    return Err(Error::InvalidMeasure(format!(
                        "density piece [{}, {}] is not a proper subinterval of [-{r}, 0]",
                        piece.lo, piece.hi
                    )))
                }
            }
            if piece.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMeasure("density coefficients must be finite".into()));
            }
            if piece.degree() + MAX_MOMENT_ORDER > 64 {
                return Err(Error::InvalidMeasure("density polynomial degree too high".into()));
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if pieces.windows(2).any(|w| w[1].lo < w[0].hi) {
            return Err(Error::InvalidMeasure("density pieces overlap".into()));
        }
        let sampled = match sampled {
            Some(values) => {
                if !pieces.is_empty() {
                    return Err(Error::InvalidMeasure(
                        "a measure can carry density pieces or a sampled density, not both".into(),
                    ));
                }
                Some(SampledDensity::new(r, values)?)
            }
            None => None,
        };
        let nonzero = !clean_atoms.is_empty()
            || pieces.iter().any(|p| p.coeffs.iter().any(|&c| c != 0.0))
            || sampled.as_ref().is_some_and(|s| s.values.iter().any(|&v| v != 0.0));
        if !nonzero {
            return Err(Error::InvalidMeasure("the measure must not be identically zero".into()));
        }
        Ok(Self {
            r,
            atoms: clean_atoms,
            pieces,
            sampled,
        })
    }

    /// Point mass `w·δ_u` on `[-r, 0]`.
    pub fn dirac(r: f64, u: f64, w: f64) -> Result<Self> {
        Self::new(r, vec![Atom { u, w }], vec![], None)
    }

    pub fn from_atoms(r: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(r, atoms.iter().map(|&(u, w)| Atom { u, w }).collect(), vec![], None)
    }

    /// Density `f` sampled at `n` equispaced points of `[-r, 0]`.
    pub fn sampled_from_fn<F: Fn(f64) -> f64>(r: f64, n: usize, f: F) -> Result<Self> {
        let values = (0..n)
            .map(|k| {
                let u = if k + 1 == n { 0.0 } else { -r + k as f64 * r / (n - 1) as f64 };
                f(u)
            })
            .collect();
        Self::new(r, vec![], vec![], Some(values))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn sampled(&self) -> Option<&SampledDensity> {
        self.sampled.as_ref()
    }

    /// Density of the absolutely continuous part at `u` (zero when absent).
    pub fn density_at(&self, u: f64) -> f64 {
        let from_pieces: f64 = self
            .pieces
            .iter()
            .filter(|p| p.lo <= u && u <= p.hi)
            .map(|p| p.eval(u))
            .sum();
        from_pieces + self.sampled.as_ref().map_or(0.0, |s| s.eval(u))
    }

    /// `‖a‖ = |a|([-r, 0])`.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.w.abs()).sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .map(|p| {
                let gl = quad::rule(p.degree() / 2 + 2);
                abs_integral_on(p.lo, p.hi, 64, gl, |u| p.eval(u))
            })
            .sum();
        let sampled = self.sampled.as_ref().map_or(0.0, SampledDensity::abs_integral);
        atoms + pieces + sampled
    }

    /// `a([-r, 0])`.
    pub fn mass(&self) -> f64 {
        self.tail_mass_unchecked(self.r)
    }

    /// `a([-t, 0])`, closed at both ends.
    pub fn tail_mass(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.r).contains(&t) {
            return Err(Error::Domain(format!("tail_mass needs t in [0, {}], got {t}", self.r)));
        }
        Ok(self.tail_mass_unchecked(t))
    }

    fn tail_mass_unchecked(&self, t: f64) -> f64 {
        let lower = -t;
        let atoms: f64 = self.atoms.iter().filter(|a| a.u >= lower).map(|a| a.w).sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .filter(|p| p.hi > lower)
            .map(|p| p.integral(p.lo.max(lower), p.hi))
            .sum();
        let sampled = self.sampled.as_ref().map_or(0.0, |s| s.tail(t));
        atoms + pieces + sampled
    }

    /// `M_j(λ) = ∫ u^j e^{λu} a(du)`.
    pub fn exp_moment(&self, lambda: Complex64, j: usize) -> Complex64 {
        self.exp_moments(lambda, j)[j]
    }

    /// `[M_0(λ), …, M_jmax(λ)]`, sharing the exponentials across orders.
    pub fn exp_moments(&self, lambda: Complex64, jmax: usize) -> Vec<Complex64> {
        self.exp_moments_with(lambda, jmax, MomentBranch::Auto)
    }

    pub(crate) fn exp_moments_with(
        &self,
        lambda: Complex64,
        jmax: usize,
        branch: MomentBranch,
    ) -> Vec<Complex64> {
        assert!(jmax <= MAX_MOMENT_ORDER, "moment order {jmax} exceeds {MAX_MOMENT_ORDER}");
        let mut out = vec![Complex64::new(0.0, 0.0); jmax + 1];
        for atom in &self.atoms {
            let mut term = (lambda * atom.u).exp() * atom.w;
            for slot in out.iter_mut() {
                *slot += term;
                term *= atom.u;
            }
        }
        for piece in &self.pieces {
            let integrals =
                piece_exp_integrals(piece.lo, piece.hi, lambda, piece.degree() + jmax, branch);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += piece
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| integrals[k + j] * c)
                    .sum::<Complex64>();
            }
        }
        if let Some(s) = &self.sampled {
            let n = s.values.len();
            let step = (lambda * s.h).exp();
            let mut expo = Complex64::new(0.0, 0.0);
            for k in 0..n {
                // restart the geometric recurrence regularly to bound drift
                expo = if k % 64 == 0 { (lambda * s.node(k)).exp() } else { expo * step };
                let u = s.node(k);
                let mut term = expo * (s.weights[k] * s.values[k]);
                for slot in out.iter_mut() {
                    *slot += term;
                    term *= u;
                }
            }
        }
        out
    }

    /// `∫ g(u) a(du)` for a smooth integrand `g`.
    pub fn integrate<T, F>(&self, g: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default + Copy,
        F: Fn(f64) -> T,
    {
        let mut acc = T::default();
        for atom in &self.atoms {
            acc = acc + g(atom.u) * atom.w;
        }
        for piece in &self.pieces {
            let gl = quad::rule(piece.degree() / 2 + 12);
            let parts = ((piece.hi - piece.lo) / self.r * 64.0).ceil().max(1.0) as usize;
            let width = (piece.hi - piece.lo) / parts as f64;
            for i in 0..parts {
                let a = piece.lo + i as f64 * width;
                let b = if i + 1 == parts { piece.hi } else { a + width };
                acc = acc + gl.integrate(a, b, |u| g(u) * piece.eval(u));
            }
        }
        if let Some(s) = &self.sampled {
            for k in 0..s.values.len() {
                acc = acc + g(s.node(k)) * (s.weights[k] * s.values[k]);
            }
        }
        acc
    }

    /// Hat-function weights of the continuous part on the grid `u = -j·dt`.
    ///
    /// Cell `j` is `[-(j+1)·dt, -j·dt]`. `right[j]` is the weight of the node
    /// `-j·dt` from that cell, `left[j]` the weight of the node `-(j+1)·dt`.
    /// Exact for the continuous part times a piecewise-linear function.
    pub(crate) fn density_cell_weights(&self, dt: f64, n_delay: usize) -> (Vec<f64>, Vec<f64>) {
        let mut right = vec![0.0; n_delay];
        let mut left = vec![0.0; n_delay];
        let cell_bounds = |j: usize| {
            let hi = -(j as f64) * dt;
            let lo = if j + 1 == n_delay { -self.r } else { -((j + 1) as f64) * dt };
            (lo, hi)
        };
        let mut accumulate = |j: usize, a: f64, b: f64, gl: &quad::GaussLegendre, f: &dyn Fn(f64) -> f64| {
            if b <= a {
                return;
            }
            let (lo, _) = cell_bounds(j);
            let (rw, lw): (f64, f64) = gl.integrate(a, b, |u| {
                let v = f(u);
                let frac = (u - lo) / dt;
                Pair(v * frac, v * (1.0 - frac))
            })
            .into();
            right[j] += rw;
            left[j] += lw;
        };
        let cell_index = |u: f64| -> usize { ((-u / dt).floor().max(0.0) as usize).min(n_delay - 1) };
        for piece in &self.pieces {
            let gl = quad::rule(piece.degree() / 2 + 2);
            let first = cell_index(piece.hi - 1e-15 * self.r);
            let last = cell_index(piece.lo);
            for j in first..=last {
                let (lo, hi) = cell_bounds(j);
                accumulate(j, lo.max(piece.lo), hi.min(piece.hi), gl, &|u| piece.eval(u));
            }
        }
        if let Some(s) = &self.sampled {
            let gl = quad::rule(3);
            for j in 0..n_delay {
                let (lo, hi) = cell_bounds(j);
                let mut a = lo;
                while a < hi {
                    let cell = s.cell_of(a + 1e-13 * s.h);
                    let b = s.node(cell + 1).min(hi);
                    let b = if b <= a { hi } else { b };
                    accumulate(j, a, b, gl, &|u| s.eval(u));
                    a = b;
                }
            }
        }
        (right, left)
    }
}

#[derive(Default, Clone, Copy)]
struct Pair(f64, f64);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

impl std::ops::Mul<f64> for Pair {
    type Output = Pair;
    fn mul(self, s: f64) -> Pair {
        Pair(self.0 * s, self.1 * s)
    }
}

impl From<Pair> for (f64, f64) {
    fn from(p: Pair) -> Self {
        (p.0, p.1)
    }
}

fn clamp_location(u: f64, r: f64) -> Option<f64> {
    if !u.is_finite() {
        return None;
    }
    if u > 0.0 {
        (u <= LOCATION_SLACK).then_some(0.0)
    } else if u < -r {
        (u >= -r - LOCATION_SLACK * r.max(1.0)).then_some(-r)
    } else {
        Some(u)
    }
}

/// JSON form of a measure.
///
/// `theta` is optional metadata used by the shipped analysis configs; the
/// measure itself ignores it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDescriptor {
    pub r: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub density: Vec<DensityPiece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<SampledSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledSpec {
    pub n: usize,
    pub expr_values: Vec<f64>,
}

impl MeasureDescriptor {
    pub fn build(&self) -> Result<SignedMeasure> {
        let sampled = match &self.sampled {
            Some(spec) => {
                if spec.n != spec.expr_values.len() {
                    return Err(Error::InvalidMeasure(format!(
                        "sampled.n = {} but {} values were given",
                        spec.n,
                        spec.expr_values.len()
                    )));
                }
                Some(spec.expr_values.clone())
            }
            None => None,
        };
        SignedMeasure::new(self.r, self.atoms.clone(), self.density.clone(), sampled)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_measure(measure: &SignedMeasure) -> Self {
        Self {
            r: measure.r,
            atoms: measure.atoms.clone(),
            density: measure.pieces.clone(),
            sampled: measure.sampled.as_ref().map(|s| SampledSpec {
                n: s.values.len(),
                expr_values: s.values.clone(),
            }),
            theta: None,
            label: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sin_measure() -> SignedMeasure {
        SignedMeasure::sampled_from_fn(2.0 * PI, 4097, f64::sin).unwrap()
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap().total_variation(), 1.0);
        let balanced = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        assert_eq!(balanced.total_variation(), 2.0);
        // ∫_{-2π}^0 |sin u| du = 4 from the antiderivative -cos on each half period
        let oracle = (-(-PI).cos() + (-2.0 * PI).cos()) + (-(0.0f64).cos() + (-PI).cos()).abs();
        assert!((oracle - 4.0).abs() < 1e-15);
        assert!((sin_measure().total_variation() - oracle).abs() < 1e-10);
    }

    #[test]
    fn tail_mass_examples() {
        let balanced = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        assert_eq!(balanced.tail_mass(0.5).unwrap(), 1.0);
        assert_eq!(balanced.tail_mass(1.0).unwrap(), 0.0);
        assert_eq!(SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap().tail_mass(0.0).unwrap(), 1.0);
        assert!(matches!(balanced.tail_mass(1.5), Err(Error::Domain(_))));
        assert!(matches!(balanced.tail_mass(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn sampled_tail_matches_cosine() {
        let a = sin_measure();
        for t in [0.0, 0.3, 1.0, PI, 4.4, 2.0 * PI] {
            let want = t.cos() - 1.0;
            assert!((a.tail_mass(t).unwrap() - want).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn exp_moment_examples() {
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        assert_eq!(d0.exp_moment(c(0.7, -3.0), 0), c(1.0, 0.0));
        let d1 = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let m = d1.exp_moment(c(0.0, PI / 2.0), 0);
        assert!((m - c(0.0, -1.0)).norm() < 1e-15);
        // ∫ u sin u du = sin u - u cos u, evaluated on [-2π, 0] gives -2π
        let oracle = (0.0f64.sin() - 0.0) - ((-2.0 * PI).sin() - (-2.0 * PI) * (-2.0 * PI).cos());
        assert!((oracle + 2.0 * PI).abs() < 1e-14);
        let got = sin_measure().exp_moment(c(0.0, 0.0), 1);
        assert!((got - c(oracle, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn polynomial_moments_match_quadrature() {
        let a = SignedMeasure::new(
            2.0,
            vec![],
            vec![
                DensityPiece { lo: -2.0, hi: -0.5, coeffs: vec![0.3, -1.0, 0.25, 0.1] },
                DensityPiece { lo: -0.5, hi: 0.0, coeffs: vec![1.0] },
            ],
            None,
        )
        .unwrap();
        let gl = quad::GaussLegendre::new(40);
        for lambda in [c(0.0, 0.0), c(1e-3, 0.0), c(-0.4, 2.0), c(3.0, -7.0), c(-6.0, 25.0)] {
            for j in [0, 1, 3, 7] {
                let want: Complex64 = a
                    .pieces()
                    .iter()
                    .map(|p| {
                        gl.integrate(p.lo, p.hi, |u| (lambda * u).exp() * (u.powi(j as i32) * p.eval(u)))
                    })
                    .sum();
                let got = a.exp_moment(lambda, j);
                assert!((got - want).norm() < 1e-12 * want.norm().max(1.0), "λ={lambda} j={j}");
            }
        }
    }

    #[test]
    fn branch_boundary_consistency() {
        for (lo, hi) in [(-1.0, 0.0), (-1.0, -0.25), (-0.7, -0.2)] {
            for lambda in [c(2e-4, 0.0), c(0.0, 2e-4), c(-1.4e-4, 1.4e-4)] {
                let s = piece_exp_integrals(lo, hi, lambda, 0, MomentBranch::Series);
                let r = piece_exp_integrals(lo, hi, lambda, 0, MomentBranch::Recursion);
                assert!((s[0] - r[0]).norm() < 1e-10 * s[0].norm());
            }
            // at the actual switch radius the two routes agree for all orders
            for lambda in [c(SERIES_RADIUS, 0.0), c(0.0, -SERIES_RADIUS), c(-1.2, 1.6)] {
                let s = piece_exp_integrals(lo, hi, lambda, 8, MomentBranch::Series);
                let r = piece_exp_integrals(lo, hi, lambda, 8, MomentBranch::Recursion);
                for k in 0..=8 {
                    assert!((s[k] - r[k]).norm() < 1e-10 * s[k].norm().max(1e-3), "k={k}");
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_measures() {
        assert!(SignedMeasure::dirac(1.0, 0.5, 1.0).is_err());
        assert!(SignedMeasure::dirac(1.0, -1.5, 1.0).is_err());
        assert!(SignedMeasure::dirac(0.0, 0.0, 1.0).is_err());
        assert!(SignedMeasure::dirac(1.0, 0.0, 0.0).is_err());
        assert!(SignedMeasure::new(1.0, vec![], vec![], None).is_err());
        let overlapping = vec![
            DensityPiece { lo: -1.0, hi: -0.2, coeffs: vec![1.0] },
            DensityPiece { lo: -0.5, hi: 0.0, coeffs: vec![1.0] },
        ];
        assert!(SignedMeasure::new(1.0, vec![], overlapping, None).is_err());
        let piece = vec![DensityPiece { lo: -1.0, hi: 0.0, coeffs: vec![1.0] }];
        assert!(SignedMeasure::new(1.0, vec![], piece, Some(vec![1.0; 8])).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"r": 1.0, "atoms": [{"u": 0.0, "w": 1.0}],
                       "density": [{"lo": -1.0, "hi": 0.0, "coeffs": [0.5, 1.0]}]}"#;
        let a = MeasureDescriptor::from_json(json).unwrap().build().unwrap();
        assert!((a.mass() - (1.0 + 0.5 - 0.5)).abs() < 1e-15);
        let back = MeasureDescriptor::from_measure(&a);
        let again = back.build().unwrap();
        assert_eq!(again.atoms(), a.atoms());
        let bad = r#"{"r": 1.0, "atoms": [{"u": 0.5, "w": 1.0}]}"#;
        assert!(MeasureDescriptor::from_json(bad).unwrap().build().is_err());
        let mismatched = r#"{"r": 1.0, "sampled": {"n": 5, "expr_values": [1, 2, 3, 4]}}"#;
        assert!(MeasureDescriptor::from_json(mismatched).unwrap().build().is_err());
    }

    #[test]
    fn cell_weights_integrate_linear_functions() {
        let a = SignedMeasure::new(
            1.0,
            vec![],
            vec![DensityPiece { lo: -0.83, hi: -0.11, coeffs: vec![0.2, 1.5, -0.7] }],
            None,
        )
        .unwrap();
        let n = 40;
        let dt = 1.0 / n as f64;
        let (right, left) = a.density_cell_weights(dt, n);
        // Σ weights · g(node) must equal ∫ density · g for g linear.
        let g = |u: f64| 2.0 - 3.0 * u;
        let mut approx = 0.0;
        for j in 0..n {
            approx += right[j] * g(-(j as f64) * dt) + left[j] * g(-((j + 1) as f64) * dt);
        }
        let exact: f64 = quad::GaussLegendre::new(10).integrate(-0.83, -0.11, |u| g(u) * a.density_at(u));
        assert!((approx - exact).abs() < 1e-13);
    }
}
