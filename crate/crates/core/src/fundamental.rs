//! Fundamental solution `x₀` of the deterministic delay equation, the kernel
//! `y(t) = ∫x₀(t+u)a(du)` and the information integrals built from them.

use crate::error::{Error, Result};
use crate::measure::SignedMeasure;
use crate::quad;
use crate::spectrum::{classify, RegimeReport};

pub use crate::spectrum::residue_expansion_eval;

/// Atoms closer than this to a grid node are evaluated at the node.
const SNAP_TOL: f64 = 1e-12;
/// Target step used when the caller does not choose one.
pub const DEFAULT_STEP: f64 = 2e-3;
/// Bound on the discarded tail `∫_{T_cut}^∞ y²`.
const TAIL_TOL: f64 = 1e-10;

/// Uniform time grid with `n_delay` steps per delay interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dt: f64,
    pub n_delay: usize,
    pub n_steps: usize,
}

impl Grid {
    /// Grid on `[-r, T]` with `dt = r/n_delay`; `T` must be a multiple of `dt`.
    pub fn new(r: f64, n_delay: usize, horizon: f64) -> Result<Self> {
        if n_delay == 0 || !(r > 0.0) {
            return Err(Error::GridMismatch(format!("invalid delay resolution n_delay = {n_delay}, r = {r}")));
        }
        let dt = r / n_delay as f64;
        let steps = horizon / dt;
        let n_steps = steps.round();
        if !(horizon >= 0.0) || (steps - n_steps).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::GridMismatch(format!("horizon {horizon} is not a multiple of dt = {dt}")));
        }
        Ok(Self { dt, n_delay, n_steps: n_steps as usize })
    }

    /// Grid whose step is `r/round(r/dt)` and whose horizon is the nearest multiple of it.
    pub fn nearest(r: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon >= 0.0) {
            return Err(Error::GridMismatch(format!("invalid step {dt} or horizon {horizon}")));
        }
        let n_delay = ((r / dt).round() as usize).max(1);
        let step = r / n_delay as f64;
        Ok(Self { dt: step, n_delay, n_steps: (horizon / step).round() as usize })
    }

    pub fn r(&self) -> f64 {
        self.dt * self.n_delay as f64
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Number of samples on `[-r, T]`.
    pub fn len(&self) -> usize {
        self.n_delay + self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of step `k ≥ 0`.
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy)]
struct AtomTap {
    lag: usize,
    /// Position between lag nodes `lag` and `lag+1`; zero for snapped atoms.
    frac: f64,
    w: f64,
}

/// The delay functional `∫x(t+u)a(du)` discretised on a grid.
///
/// Atoms read the two neighbouring nodes with linear interpolation; the
/// continuous part integrates exactly against the piecewise-linear
/// interpolant of `x`.
#[derive(Debug, Clone)]
pub struct DelayStencil {
    n_delay: usize,
    atoms: Vec<AtomTap>,
    right: Vec<f64>,
    left: Vec<f64>,
    /// Merged `(lag, weight)` pairs for continuous paths.
    taps: Vec<(usize, f64)>,
}

impl DelayStencil {
    pub fn new(a: &SignedMeasure, grid: &Grid) -> Result<Self> {
        if (grid.r() - a.r()).abs() > 1e-12 * a.r() {
            return Err(Error::GridMismatch(format!(
                "grid delay {} does not match measure delay {}",
                grid.r(),
                a.r()
            )));
        }
        let dt = grid.dt;
        let n = grid.n_delay;
        let atoms: Vec<AtomTap> = a
            .atoms()
            .iter()
            .map(|atom| {
                let s = -atom.u / dt;
                let nearest = s.round();
                if (atom.u + nearest * dt).abs() <= SNAP_TOL {
                    AtomTap { lag: (nearest as usize).min(n), frac: 0.0, w: atom.w }
                } else {
                    let lag = (s.floor() as usize).min(n - 1);
                    AtomTap { lag, frac: s - lag as f64, w: atom.w }
                }
            })
            .collect();
        let (right, left) = if a.pieces().is_empty() && a.sampled().is_none() {
            (Vec::new(), Vec::new())
        } else {
            a.density_cell_weights(dt, n)
        };
        let mut dense = vec![0.0; n + 1];
        for tap in &atoms {
            dense[tap.lag] += (1.0 - tap.frac) * tap.w;
            if tap.frac > 0.0 {
                dense[tap.lag + 1] += tap.frac * tap.w;
            }
        }
        for (j, (rw, lw)) in right.iter().zip(&left).enumerate() {
            dense[j] += rw;
            dense[j + 1] += lw;
        }
        let taps = dense.into_iter().enumerate().filter(|(_, w)| *w != 0.0).collect();
        Ok(Self { n_delay: n, atoms, right, left, taps })
    }

    pub fn n_delay(&self) -> usize {
        self.n_delay
    }

    /// Delay functional of a continuous path at the node `i` of `path`
    /// (so `path[i - n_delay..=i]` covers the delay window).
    #[inline]
    pub fn apply(&self, path: &[f64], i: usize) -> f64 {
        self.taps.iter().map(|&(lag, w)| w * path[i - lag]).sum()
    }

    /// Delay functional of a function that vanishes on `[-r, 0)` and jumps at
    /// zero; `x[k]` is its value at step `k ≥ 0`.
    ///
    /// With `left_limit` the value just before `t_k` is returned, i.e. atoms
    /// landing exactly on time zero do not see the jump yet.
    pub fn apply_causal(&self, x: &[f64], k: usize, left_limit: bool) -> f64 {
        let mut acc = 0.0;
        for tap in &self.atoms {
            if tap.lag > k {
                continue;
            }
            let hi = k - tap.lag;
            if tap.frac == 0.0 {
                if !(hi == 0 && left_limit) {
                    acc += tap.w * x[hi];
                }
            } else if hi >= 1 {
                acc += tap.w * ((1.0 - tap.frac) * x[hi] + tap.frac * x[hi - 1]);
            }
        }
        let cells = k.min(self.right.len());
        for j in 0..cells {
            acc += self.right[j] * x[k - j] + self.left[j] * x[k - j - 1];
        }
        acc
    }
}

/// Fundamental solution and kernel sampled on a grid.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub grid: Grid,
    /// `x₀(t_k)`, `k = 0..=n_steps`.
    x: Vec<f64>,
    /// `y(t_k)`, right-continuous.
    y: Vec<f64>,
    /// `y(t_k−)`; differs from `y` only where an atom meets the jump of `x₀`.
    y_left: Vec<f64>,
}

impl Kernel {
    /// `x₀` on the whole grid `[-r, T]`, zero before time 0.
    pub fn x0_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_delay];
        out.extend_from_slice(&self.x);
        out
    }

    /// `x₀(t_k)` for `k ≥ 0`.
    pub fn x_forward(&self) -> &[f64] {
        &self.x
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn y_left_values(&self) -> &[f64] {
        &self.y_left
    }

    /// `∫_0^T y² dt`, trapezoid between one-sided limits.
    pub fn y_energy(&self) -> f64 {
        let dt = self.grid.dt;
        (0..self.grid.n_steps)
            .map(|k| 0.5 * dt * (self.y[k] * self.y[k] + self.y_left[k + 1] * self.y_left[k + 1]))
            .sum()
    }
}

/// Method of steps with a Heun predictor–corrector for `ẋ = θ∫x(t+u)a(du)`,
/// `x = 0` on `[-r, 0)`, `x(0) = 1`.
pub fn solve_fundamental(theta: f64, a: &SignedMeasure, grid: &Grid) -> Result<Kernel> {
    let stencil = DelayStencil::new(a, grid)?;
    let n = grid.n_steps;
    let dt = grid.dt;
    let mut x = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    let mut y_left = Vec::with_capacity(n + 1);
    x.push(1.0);
    y_left.push(0.0);
    y.push(stencil.apply_causal(&x, 0, false));
    for k in 0..n {
        let slope = theta * y[k];
        x.push(x[k] + dt * slope);
        let predicted_left = stencil.apply_causal(&x, k + 1, true);
        x[k + 1] = x[k] + 0.5 * dt * (slope + theta * predicted_left);
        y_left.push(stencil.apply_causal(&x, k + 1, true));
        y.push(stencil.apply_causal(&x, k + 1, false));
    }
    // the first left limit is the value just before time 0, where x₀ vanishes
    y_left[0] = 0.0;
    Ok(Kernel { grid: *grid, x, y, y_left })
}

/// Recompute `y` from the stored `x₀` with the solver's quadrature.
pub fn y_kernel(a: &SignedMeasure, kernel: &Kernel) -> Result<Vec<f64>> {
    let stencil = DelayStencil::new(a, &kernel.grid)?;
    Ok((0..=kernel.grid.n_steps)
        .map(|k| stencil.apply_causal(&kernel.x, k, false))
        .collect())
}

fn default_delay_steps(r: f64) -> usize {
    ((r / DEFAULT_STEP).ceil() as usize).max(8)
}

/// `J = ∫_0^∞ y(t)² dt` for a parameter with `v* < 0`.
pub fn fisher_limit(theta: f64, a: &SignedMeasure) -> Result<f64> {
    let report = classify(theta, a)?;
    fisher_limit_with(theta, a, &report, default_delay_steps(a.r()))
}

/// As [`fisher_limit`] with a precomputed report and a chosen delay resolution.
///
/// The horizon `T_cut` is grown until `C²e^{2cT}/(2|c|) < 10⁻¹⁰` with
/// `c = v*/2` and `C = max |y(t)|e^{-ct}` over the computed samples.
pub fn fisher_limit_with(theta: f64, a: &SignedMeasure, report: &RegimeReport, n_delay: usize) -> Result<f64> {
    let c = match report.v_star {
        Some(v) if v >= 0.0 => return Err(Error::InformationDiverges(v)),
        Some(v) => 0.5 * v,
        // every retained root lies left of -10/r
        None => -5.0 / a.r(),
    };
    let r = a.r();
    let dt = r / n_delay as f64;
    let mut horizon = (10.0 * r).max(4.0 / c.abs());
    for _ in 0..8 {
        let grid = Grid::new(r, n_delay, (horizon / dt).ceil() * dt)?;
        let kernel = solve_fundamental(theta, a, &grid)?;
        let envelope = kernel
            .y
            .iter()
            .enumerate()
            .map(|(k, y)| y.abs() * (-c * grid.t(k)).exp())
            .fold(0.0, f64::max);
        if envelope == 0.0 {
            return Ok(kernel.y_energy());
        }
        let needed = (TAIL_TOL * 2.0 * c.abs() / (envelope * envelope)).ln() / (2.0 * c);
        if needed <= grid.horizon() {
            log::debug!("fisher_limit: T_cut = {}, envelope {envelope}", grid.horizon());
            return Ok(kernel.y_energy());
        }
        horizon = needed * 1.1;
    }
    Err(Error::Consistency("tail cut for the information integral did not settle".into()))
}

/// `J₀ = ∫_0^r a([-t, 0])² dt`, valid when `a([-r, 0]) = 0`.
pub fn fisher_theta0(a: &SignedMeasure) -> Result<f64> {
    let mass = a.mass();
    if mass.abs() > 1e-12 * a.total_variation().max(1.0) {
        return Err(Error::Precondition(format!(
            "a([-r,0]) = {mass} is not zero; the trivial parameter is then not LAN"
        )));
    }
    let r = a.r();
    // the tail mass is smooth between atoms, piece ends and sample nodes
    let mut breaks: Vec<f64> = vec![0.0, r];
    breaks.extend(a.atoms().iter().map(|at| -at.u));
    for piece in a.pieces() {
        breaks.push(-piece.lo);
        breaks.push(-piece.hi);
    }
    let mut nodes = 8;
    if let Some(s) = a.sampled() {
        let n = s.len();
        breaks.extend((0..n).map(|k| r - k as f64 * r / (n - 1) as f64));
        nodes = 5;
    }
    let degree = a.pieces().iter().map(|p| p.degree()).max().unwrap_or(0);
    nodes = nodes.max(degree + 2);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * r);
    let gl = quad::rule(nodes);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0].clamp(0.0, r), w[1].clamp(0.0, r));
        if hi > lo {
            total += gl.integrate(lo, hi, |t| {
                let m = a.tail_mass(t).unwrap_or(0.0);
                m * m
            });
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trivial_parameter_keeps_unit_solution() {
        let a = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-0.3, 2.0)]).unwrap();
        let grid = Grid::new(1.0, 10, 5.0).unwrap();
        let kernel = solve_fundamental(0.0, &a, &grid).unwrap();
        assert!(kernel.x_forward().iter().all(|&x| x == 1.0));
        assert!(kernel.x0_values()[..10].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ou_fundamental_is_exponential() {
        let a = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        let grid = Grid::new(1.0, 1000, 10.0).unwrap();
        let kernel = solve_fundamental(-0.5, &a, &grid).unwrap();
        let err = kernel
            .x_forward()
            .iter()
            .enumerate()
            .map(|(k, x)| (x - (-0.5 * grid.t(k)).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "max error {err}");
        assert_eq!(kernel.y_values(), kernel.x_forward());
    }

    #[test]
    fn hayes_method_of_steps() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let grid = Grid::new(1.0, 64, 2.0).unwrap();
        let kernel = solve_fundamental(-PI / 2.0, &a, &grid).unwrap();
        for (k, x) in kernel.x_forward().iter().enumerate() {
            let t = grid.t(k);
            let want = if t <= 1.0 { 1.0 } else { 1.0 - PI / 2.0 * (t - 1.0) };
            assert!((x - want).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn balanced_kernel_at_trivial_parameter() {
        let a = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        let grid = Grid::new(1.0, 50, 3.0).unwrap();
        let kernel = solve_fundamental(0.0, &a, &grid).unwrap();
        for (k, y) in kernel.y_values().iter().enumerate() {
            let want = if grid.t(k) < 1.0 - 1e-12 { 1.0 } else { 0.0 };
            assert_eq!(*y, want);
        }
        assert_eq!(y_kernel(&a, &kernel).unwrap(), kernel.y_values());
    }

    #[test]
    fn ou_information() {
        let a = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        assert!((fisher_limit(-0.5, &a).unwrap() - 1.0).abs() < 1e-4);
        assert!((fisher_limit(-1.0, &a).unwrap() - 0.5).abs() < 1e-4);
        assert!(matches!(fisher_limit(0.5, &a), Err(Error::InformationDiverges(_))));
    }

    #[test]
    fn trivial_parameter_information() {
        let a = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        assert!((fisher_theta0(&a).unwrap() - 1.0).abs() < 1e-12);
        let b = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-0.5, -2.0), (-1.0, 1.0)]).unwrap();
        assert!((fisher_theta0(&b).unwrap() - 1.0).abs() < 1e-12);
        let sin = SignedMeasure::sampled_from_fn(2.0 * PI, 4097, f64::sin).unwrap();
        assert!((fisher_theta0(&sin).unwrap() - 3.0 * PI).abs() < 1e-6);
        let d0 = SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(fisher_theta0(&d0), Err(Error::Precondition(_))));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 100, 2.005).is_err());
        let g = Grid::new(1.0, 100, 200.0).unwrap();
        assert_eq!(g.n_steps, 20000);
        let g = Grid::nearest(2.0 * PI, 0.01, 10.0).unwrap();
        assert_eq!(g.n_delay, 628);
        assert!((g.r() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn continuous_stencil_on_linear_path() {
        // density 1 on [-1, 0] applied to X(t) = t gives t - 1/2
        let a = SignedMeasure::new(
            1.0,
            vec![],
            vec![crate::measure::DensityPiece { lo: -1.0, hi: 0.0, coeffs: vec![1.0] }],
            None,
        )
        .unwrap();
        let grid = Grid::new(1.0, 20, 2.0).unwrap();
        let stencil = DelayStencil::new(&a, &grid).unwrap();
        let path: Vec<f64> = (0..grid.len()).map(|i| (i as f64 - 20.0) * grid.dt).collect();
        for k in 0..=grid.n_steps {
            let y = stencil.apply(&path, k + grid.n_delay);
            assert!((y - (grid.t(k) - 0.5)).abs() < 1e-13);
        }
    }
}
