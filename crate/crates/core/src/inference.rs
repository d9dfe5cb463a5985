//! Log-likelihood ratios, the scaled score/information pair and the MLE,
//! all from left-point sums over a sampled path.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::SamplePath;

/// `ΣY²dt` below this makes the MLE undefined.
const DEGENERATE_ENERGY: f64 = 1e-12;

/// The two sums every likelihood quantity is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSums {
    /// `Σ Y(t_k)(X(t_{k+1}) − X(t_k))`.
    pub y_dx: f64,
    /// `Σ Y(t_k)² dt`.
    pub y2_dt: f64,
}

pub fn path_sums(path: &SamplePath) -> Result<PathSums> {
    path.check_consistent()?;
    let x = path.x_forward();
    let dt = path.grid.dt;
    let mut y_dx = 0.0;
    let mut y2 = 0.0;
    for k in 0..path.grid.n_steps {
        let y = path.y[k];
        y_dx += y * (x[k + 1] - x[k]);
        y2 += y * y;
    }
    Ok(PathSums { y_dx, y2_dt: y2 * dt })
}

/// `log dP_{θ_num}/dP_{θ_den}` on the observed path.
pub fn log_likelihood_ratio(path: &SamplePath, theta_num: f64, theta_den: f64) -> Result<f64> {
    let s = path_sums(path)?;
    Ok((theta_num - theta_den) * s.y_dx - 0.5 * (theta_num * theta_num - theta_den * theta_den) * s.y2_dt)
}

/// Scaled score `Δ` and information `J` at a hypothesised parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScorePair {
    pub delta: f64,
    pub info: f64,
    pub scaling: f64,
    pub horizon: f64,
}

/// `Δ = r Σ Y ΔW` and `J = r² Σ Y² dt`, with `ΔW = ΔX − θ Y dt`.
pub fn score_and_info(path: &SamplePath, theta: f64, scaling: f64) -> Result<ScorePair> {
    path.check_consistent()?;
    let x = path.x_forward();
    let dt = path.grid.dt;
    let mut score = 0.0;
    let mut y2 = 0.0;
    for k in 0..path.grid.n_steps {
        let y = path.y[k];
        let dw = x[k + 1] - x[k] - theta * y * dt;
        score += y * dw;
        y2 += y * y;
    }
    Ok(ScorePair {
        delta: scaling * score,
        info: scaling * scaling * y2 * dt,
        scaling,
        horizon: path.grid.horizon(),
    })
}

/// `θ̂ = ΣYΔX / ΣY²dt`.
pub fn mle(path: &SamplePath) -> Result<f64> {
    let s = path_sums(path)?;
    if s.y2_dt <= DEGENERATE_ENERGY {
        return Err(Error::DegeneratePath(s.y2_dt));
    }
    Ok(s.y_dx / s.y2_dt)
}
