//! Euler–Maruyama paths of `dX = θ∫X(t+u)a(du)dt + dW` and the delay functional `Y`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fundamental::{DelayStencil, Grid};
use crate::measure::SignedMeasure;
use crate::noise::{stream, NormalStream};

/// Deterministic initial segment `X₀` on `[-r, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPath {
    Zero,
    Constant { value: f64 },
    /// Values on an equispaced grid of `[-r, 0]` (first at `-r`, last at 0),
    /// interpolated linearly.
    Sampled { values: Vec<f64> },
}

impl InitialPath {
    pub fn constant(value: f64) -> Self {
        InitialPath::Constant { value }
    }

    /// `X₀(u)` for `u ∈ [-r, 0]`.
    pub fn value_at(&self, u: f64, r: f64) -> f64 {
        match self {
            InitialPath::Zero => 0.0,
            InitialPath::Constant { value } => *value,
            InitialPath::Sampled { values } => {
                let n = values.len();
                if n == 1 {
                    return values[0];
                }
                let s = ((u + r) / r * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
                let i = (s.floor() as usize).min(n - 2);
                let f = s - i as f64;
                (1.0 - f) * values[i] + f * values[i + 1]
            }
        }
    }

    /// Samples on the grid nodes of `[-r, 0]`.
    pub fn on_grid(&self, grid: &Grid) -> Vec<f64> {
        let r = grid.r();
        (0..=grid.n_delay)
            .map(|i| {
                let u = if i == grid.n_delay { 0.0 } else { -r + i as f64 * grid.dt };
                self.value_at(u, r)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialPath::Sampled { values } if values.is_empty() || values.iter().any(|v| !v.is_finite()) => {
                Err(Error::Config("sampled initial path needs finite values".into()))
            }
            InitialPath::Constant { value } if !value.is_finite() => {
                Err(Error::Config("initial constant must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Source of the Brownian increments.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// `N(0, dt)` increments from the counter-based stream of this seed.
    Seeded(u64),
    /// Caller-supplied increments, one per step.
    Increments(&'a [f64]),
    /// No noise at all.
    Off,
}

/// A simulated path on `[-r, T]`.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub grid: Grid,
    pub theta: f64,
    pub seed: Option<u64>,
    /// `W(t_k)`, `k = 0..=n_steps`.
    pub w: Vec<f64>,
    /// `X` on the whole grid; index `n_delay` is time 0.
    pub x: Vec<f64>,
    /// `Y(t_k)`, `k = 0..=n_steps`.
    pub y: Vec<f64>,
}

impl SamplePath {
    /// `X(t_k)` for `k ≥ 0`.
    pub fn x_forward(&self) -> &[f64] {
        &self.x[self.grid.n_delay..]
    }

    pub fn check_consistent(&self) -> Result<()> {
        let n = self.grid.n_steps;
        if self.x.len() != self.grid.len() || self.y.len() != n + 1 || self.w.len() != n + 1 {
            return Err(Error::GridMismatch(format!(
                "path arrays (x {}, y {}, w {}) do not fit a grid with {} steps and {} delay steps",
                self.x.len(),
                self.y.len(),
                self.w.len(),
                n,
                self.grid.n_delay
            )));
        }
        Ok(())
    }

    /// CSV with columns `t, W, X, Y`; `W` and `Y` are empty before time 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["t", "W", "X", "Y"])?;
        let nd = self.grid.n_delay;
        for (i, x) in self.x.iter().enumerate() {
            let t = (i as f64 - nd as f64) * self.grid.dt;
            let (w, y) = if i >= nd {
                (fmt_num(self.w[i - nd]), fmt_num(self.y[i - nd]))
            } else {
                (String::new(), String::new())
            };
            writer.write_record([fmt_num(t), w, fmt_num(*x), y])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a path written by [`SamplePath::write_csv`].
    pub fn read_csv<R: Read>(input: R, theta: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut t = Vec::new();
        let mut w = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| -> Result<Option<f64>> {
                let s = record.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Config(format!("bad number '{s}' in path CSV: {e}")))
            };
            let ti = field(0)?.ok_or_else(|| Error::Config("missing time in path CSV".into()))?;
            t.push(ti);
            x.push(field(2)?.ok_or_else(|| Error::Config("missing X in path CSV".into()))?);
            if let (Some(wi), Some(yi)) = (field(1)?, field(3)?) {
                w.push(wi);
                y.push(yi);
            }
        }
        if t.len() < 3 || y.len() < 2 {
            return Err(Error::Config("path CSV is too short".into()));
        }
        let n_delay = t.len() - y.len();
        if n_delay == 0 {
            return Err(Error::Config("path CSV has no initial segment".into()));
        }
        let dt = -t[0] / n_delay as f64;
        let grid = Grid { dt, n_delay, n_steps: y.len() - 1 };
        let path = SamplePath { grid, theta, seed: None, w, x, y };
        path.check_consistent()?;
        Ok(path)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `N(0, dt)` Brownian increments for `seed` on `grid`.
pub fn brownian_increments(seed: u64, grid: &Grid) -> Vec<f64> {
    let mut normals = NormalStream::new(seed, stream::BROWNIAN);
    let sd = grid.dt.sqrt();
    (0..grid.n_steps).map(|_| sd * normals.next_normal()).collect()
}

/// Euler–Maruyama path with Brownian increments keyed by `seed`.
pub fn simulate(theta: f64, a: &SignedMeasure, x0: &InitialPath, grid: &Grid, seed: u64) -> Result<SamplePath> {
    simulate_with(theta, a, x0, grid, Noise::Seeded(seed))
}

/// Euler–Maruyama path with an explicit noise source.
pub fn simulate_with(
    theta: f64,
    a: &SignedMeasure,
    x0: &InitialPath,
    grid: &Grid,
    noise: Noise<'_>,
) -> Result<SamplePath> {
    x0.validate()?;
    let stencil = DelayStencil::new(a, grid)?;
    let n = grid.n_steps;
    let nd = grid.n_delay;
    let (seed, increments) = match noise {
        Noise::Seeded(seed) => (Some(seed), brownian_increments(seed, grid)),
        Noise::Increments(dw) => {
            if dw.len() != n {
                return Err(Error::GridMismatch(format!("{} increments for {n} steps", dw.len())));
            }
            (None, dw.to_vec())
        }
        Noise::Off => (None, vec![0.0; n]),
    };
    let mut x = x0.on_grid(grid);
    x.reserve(n);
    let mut y = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    for k in 0..n {
        let yk = stencil.apply(&x, nd + k);
        y.push(yk);
        x.push(x[nd + k] + theta * yk * grid.dt + increments[k]);
        w.push(w[k] + increments[k]);
    }
    y.push(stencil.apply(&x, nd + n));
    Ok(SamplePath { grid: *grid, theta, seed, w, x, y })
}

/// `Y(t_k) = ∫X(t_k+u)a(du)` for a path on the whole grid `[-r, T]`.
pub fn y_process(x: &[f64], a: &SignedMeasure, grid: &Grid) -> Result<Vec<f64>> {
    if x.len() != grid.len() {
        return Err(Error::GridMismatch(format!("path has {} samples, grid has {}", x.len(), grid.len())));
    }
    let stencil = DelayStencil::new(a, grid)?;
    Ok((0..=grid.n_steps).map(|k| stencil.apply(x, grid.n_delay + k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DensityPiece;

    fn dirac0() -> SignedMeasure {
        SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn trivial_parameter_is_shifted_brownian_motion() {
        let grid = Grid::new(1.0, 10, 5.0).unwrap();
        let path = simulate(0.0, &dirac0(), &InitialPath::constant(2.5), &grid, 3).unwrap();
        for (x, w) in path.x_forward().iter().zip(&path.w) {
            assert!((x - (2.5 + w)).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_ou_is_euler_recursion() {
        let grid = Grid::new(1.0, 100, 10.0).unwrap();
        let path = simulate_with(-0.5, &dirac0(), &InitialPath::constant(1.0), &grid, Noise::Off).unwrap();
        for (k, x) in path.x_forward().iter().enumerate() {
            let want = (1.0 - 0.5 * grid.dt).powi(k as i32);
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn y_process_examples() {
        let grid = Grid::new(1.0, 20, 3.0).unwrap();
        let x: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = y_process(&x, &dirac0(), &grid).unwrap();
        assert_eq!(&y[..], &x[grid.n_delay..]);
        let balanced = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
        let ones = vec![1.0; grid.len()];
        assert!(y_process(&ones, &balanced, &grid).unwrap().iter().all(|&v| v == 0.0));
        let uniform = SignedMeasure::new(
            1.0,
            vec![],
            vec![DensityPiece { lo: -1.0, hi: 0.0, coeffs: vec![1.0] }],
            None,
        )
        .unwrap();
        let linear: Vec<f64> = (0..grid.len()).map(|i| (i as f64 - 20.0) * grid.dt).collect();
        for (k, y) in y_process(&linear, &uniform, &grid).unwrap().iter().enumerate() {
            assert!((y - (grid.t(k) - 0.5)).abs() < 1e-13);
        }
        assert!(y_process(&ones[1..], &balanced, &grid).is_err());
    }

    #[test]
    fn stored_y_is_recomputable() {
        let a = SignedMeasure::from_atoms(1.0, &[(0.0, -0.3), (-0.55, 0.8), (-1.0, -0.4)]).unwrap();
        let grid = Grid::new(1.0, 40, 6.0).unwrap();
        let x0 = InitialPath::Sampled { values: vec![0.2, -1.0, 0.5] };
        let path = simulate(-0.7, &a, &x0, &grid, 99).unwrap();
        let y = y_process(&path.x, &a, &grid).unwrap();
        for (p, q) in path.y.iter().zip(&y) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
        assert_eq!(path.x[..=grid.n_delay], x0.on_grid(&grid)[..]);
        assert_eq!(path.w[0], 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let grid = Grid::new(1.0, 4, 1.0).unwrap();
        let path = simulate(-0.5, &dirac0(), &InitialPath::constant(1.0), &grid, 5).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = SamplePath::read_csv(&buf[..], -0.5).unwrap();
        assert_eq!(back.x, path.x);
        assert_eq!(back.y, path.y);
        assert_eq!(back.w, path.w);
        assert_eq!(back.grid.n_delay, 4);
        assert!((back.grid.dt - 0.25).abs() < 1e-15);
    }
}
