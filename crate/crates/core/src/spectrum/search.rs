//! Root location by the argument principle.
//!
//! Zeros inside a rectangle are counted twice over: once by unwrapping the
//! phase of `h` along the boundary and once by trapezoid quadrature of
//! `h'/h`. The two must agree before a count is trusted. Rectangles are
//! bisected until each holds a single zero cluster, which Newton then
//! polishes.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::derivatives;
use crate::error::{Error, Result};
use crate::measure::SignedMeasure;

/// A sample closer than this (in `|h|/|h'|`) to a zero makes a contour degenerate.
const DEGENERATE_RATIO: f64 = 1e-6;
/// Largest phase increment accepted between neighbouring contour samples.
const MAX_PHASE_STEP: f64 = 0.6;
const MAX_RECTANGLES: usize = 1_000_000;
const PERTURB_RETRIES: u64 = 3;
const MAX_PERTURB: f64 = 1e-4;
const MERGE_TOL: f64 = 1e-8;
const CLUSTER_DIAMETER: f64 = 1e-7;
/// Half-height of the strip around the real axis searched without mirroring.
const AXIS_STRIP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.x0 - slack && z.re <= self.x1 + slack && z.im >= self.y0 - slack && z.im <= self.y1 + slack
    }

    fn grown(&self, by: [f64; 4]) -> Self {
        Self::new(self.x0 - by[0], self.x1 + by[1], self.y0 - by[2], self.y1 + by[3])
    }
}

/// A root and its multiplicity, before any residue data is attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootLocation {
    pub lambda: Complex64,
    pub multiplicity: usize,
}

#[derive(Debug)]
enum CountFailure {
    /// The contour passes this close (in `|h|/|h'|`) to a zero.
    NearZero(f64),
    /// Phase unwrapping and the `h'/h` quadrature disagree.
    Mismatch,
}

#[derive(Clone, Copy)]
struct Sample {
    z: Complex64,
    h: Complex64,
    log_derivative: Complex64,
}

/// Deterministic jitter in `(0.25, 1]` for perturbation attempt `k`.
fn jitter(k: u64) -> f64 {
    let mut x = k.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    0.25 + 0.75 * ((x >> 11) as f64 / (1u64 << 53) as f64)
}

fn phase_step(from: Complex64, to: Complex64) -> f64 {
    (to * from.conj()).arg()
}

struct Searcher<'a> {
    theta: f64,
    a: &'a SignedMeasure,
    samples_per_unit: f64,
    rectangles: Cell<usize>,
}

impl<'a> Searcher<'a> {
    fn new(theta: f64, a: &'a SignedMeasure) -> Self {
        Self {
            theta,
            a,
            samples_per_unit: 2.0 * (1.0 + a.r()),
            rectangles: Cell::new(0),
        }
    }

    fn sample(&self, z: Complex64) -> std::result::Result<Sample, CountFailure> {
        let d = derivatives(self.theta, self.a, z, 1);
        let (h, dh) = (d[0], d[1]);
        if h.norm() < DEGENERATE_RATIO * dh.norm() || h.norm() == 0.0 {
            return Err(CountFailure::NearZero(h.norm() / dh.norm()));
        }
        Ok(Sample { z, h, log_derivative: dh / h })
    }

    /// Phase change and `∫h'/h dz` along the straight segment `a → b`.
    fn segment(&self, a: Sample, b: Sample, depth: u32) -> std::result::Result<(f64, Complex64), CountFailure> {
        let m = self.sample(0.5 * (a.z + b.z))?;
        let whole = phase_step(a.h, b.h);
        let left = phase_step(a.h, m.h);
        let right = phase_step(m.h, b.h);
        let coarse = 0.5 * (a.log_derivative + b.log_derivative) * (b.z - a.z);
        let fine = 0.5 * (a.log_derivative + m.log_derivative) * (m.z - a.z)
            + 0.5 * (m.log_derivative + b.log_derivative) * (b.z - m.z);
        let settled = left.abs() <= MAX_PHASE_STEP
            && right.abs() <= MAX_PHASE_STEP
            && (left + right - whole).abs() < 1e-9
            && (fine - coarse).norm() < 0.02;
        if settled {
            return Ok((left + right, fine));
        }
        if depth >= 52 {
            return Err(CountFailure::NearZero((b.z - a.z).norm()));
        }
        let (p1, q1) = self.segment(a, m, depth + 1)?;
        let (p2, q2) = self.segment(m, b, depth + 1)?;
        Ok((p1 + p2, q1 + q2))
    }

    fn edge(&self, from: Complex64, to: Complex64) -> std::result::Result<(f64, Complex64), CountFailure> {
        let len = (to - from).norm();
        let pieces = ((len * self.samples_per_unit).ceil() as usize).clamp(4, 1 << 22);
        let mut prev = self.sample(from)?;
        let mut phase = 0.0;
        let mut quad = Complex64::default();
        for i in 1..=pieces {
            let z = if i == pieces { to } else { from + (to - from) * (i as f64 / pieces as f64) };
            let next = self.sample(z)?;
            let (p, q) = self.segment(prev, next, 0)?;
            phase += p;
            quad += q;
            prev = next;
        }
        Ok((phase, quad))
    }

    fn count(&self, rect: &Rect) -> std::result::Result<usize, CountFailure> {
        let corners = [
            Complex64::new(rect.x0, rect.y0),
            Complex64::new(rect.x1, rect.y0),
            Complex64::new(rect.x1, rect.y1),
            Complex64::new(rect.x0, rect.y1),
        ];
        let mut phase = 0.0;
        let mut quad = Complex64::default();
        for k in 0..4 {
            let (p, q) = self.edge(corners[k], corners[(k + 1) % 4])?;
            phase += p;
            quad += q;
        }
        let by_phase = phase / (2.0 * PI);
        let by_quadrature = quad.im / (2.0 * PI);
        let n = by_phase.round();
        if n < 0.0 || (by_phase - n).abs() > 1e-6 || (by_quadrature - n).abs() >= 0.25 {
            return Err(CountFailure::Mismatch);
        }
        Ok(n as usize)
    }

    /// Count zeros, nudging the movable edges (left, right, bottom, top)
    /// outwards when the contour is degenerate.
    fn count_outer(&self, rect: Rect, salt: u64, movable: [bool; 4]) -> Result<(Rect, usize)> {
        let mut last = f64::NAN;
        for attempt in 0..=PERTURB_RETRIES {
            let candidate = if attempt == 0 {
                rect
            } else {
                let k = salt.wrapping_mul(31).wrapping_add(attempt * 4);
                rect.grown([0, 1, 2, 3].map(|i| {
                    if movable[i as usize] {
                        MAX_PERTURB * jitter(k + i)
                    } else {
                        0.0
                    }
                }))
            };
            match self.count(&candidate) {
                Ok(n) => return Ok((candidate, n)),
                Err(CountFailure::NearZero(d)) => last = d,
                Err(CountFailure::Mismatch) => last = f64::NAN,
            }
        }
        Err(Error::ContourDegenerate { distance: last, retries: PERTURB_RETRIES as usize })
    }

    fn bump(&self) -> Result<()> {
        let n = self.rectangles.get() + 1;
        self.rectangles.set(n);
        if n > MAX_RECTANGLES {
            return Err(Error::SearchDiverged(n));
        }
        Ok(())
    }

    fn newton(&self, start: Complex64, order: usize) -> Option<Complex64> {
        let mut z = start;
        for _ in 0..80 {
            let d = derivatives(self.theta, self.a, z, order + 1);
            if d[order + 1].norm() == 0.0 {
                return None;
            }
            let step = d[order] / d[order + 1];
            z -= step;
            if !z.re.is_finite() || !z.im.is_finite() {
                return None;
            }
            if step.norm() <= 1e-15 * (1.0 + z.norm()) {
                return Some(z);
            }
        }
        None
    }

    fn isolate(&self, rect: Rect, n: usize, out: &mut Vec<RootLocation>) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        self.bump()?;
        let center = rect.center();
        let slack = 1e-12 * (1.0 + center.norm());
        if let Some(z) = self.newton(center, n - 1) {
            let h = derivatives(self.theta, self.a, z, 0)[0];
            if rect.contains(z, slack) && h.norm() <= 1e-10 * (1.0 + z.norm()) {
                out.push(RootLocation { lambda: z, multiplicity: n });
                return Ok(());
            }
        }
        if rect.diameter() < CLUSTER_DIAMETER * (1.0 + center.norm()) {
            log::debug!("accepting zero cluster of size {n} at {center}");
            out.push(RootLocation { lambda: center, multiplicity: n });
            return Ok(());
        }
        let children = self.split(&rect, n)?;
        for (child, count) in children {
            self.isolate(child, count, out)?;
        }
        Ok(())
    }

    fn split(&self, rect: &Rect, n: usize) -> Result<Vec<(Rect, usize)>> {
        let w = rect.x1 - rect.x0;
        let h = rect.y1 - rect.y0;
        let mut last = f64::NAN;
        for attempt in 0..=PERTURB_RETRIES {
            let shift = |k: u64, side: f64| {
                if attempt == 0 {
                    0.0
                } else {
                    (MAX_PERTURB.min(0.05 * side)) * (2.0 * jitter(k) - 1.25)
                }
            };
            let salt = self.rectangles.get() as u64 * 8 + attempt;
            let xm = 0.5 * (rect.x0 + rect.x1) + shift(salt, w);
            let ym = 0.5 * (rect.y0 + rect.y1) + shift(salt + 1, h);
            let children = if w > 2.0 * h {
                vec![Rect::new(rect.x0, xm, rect.y0, rect.y1), Rect::new(xm, rect.x1, rect.y0, rect.y1)]
            } else if h > 2.0 * w {
                vec![Rect::new(rect.x0, rect.x1, rect.y0, ym), Rect::new(rect.x0, rect.x1, ym, rect.y1)]
            } else {
                vec![
                    Rect::new(rect.x0, xm, rect.y0, ym),
                    Rect::new(xm, rect.x1, rect.y0, ym),
                    Rect::new(rect.x0, xm, ym, rect.y1),
                    Rect::new(xm, rect.x1, ym, rect.y1),
                ]
            };
            let mut counted = Vec::with_capacity(children.len());
            let mut failed = false;
            for child in children {
                match self.count(&child) {
                    Ok(c) => counted.push((child, c)),
                    Err(CountFailure::NearZero(d)) => {
                        last = d;
                        failed = true;
                        break;
                    }
                    Err(CountFailure::Mismatch) => {
                        failed = true;
                        break;
                    }
                }
            }
            if !failed && counted.iter().map(|(_, c)| c).sum::<usize>() == n {
                return Ok(counted);
            }
        }
        Err(Error::ContourDegenerate { distance: last, retries: PERTURB_RETRIES as usize })
    }

    /// All zeros in `[x0, x1] × [−B, B]`, using conjugate symmetry above the axis strip.
    ///
    /// The strip around the real axis only has to cover `[0, η]` on the
    /// positive side: roots below the axis are discarded and regenerated by
    /// conjugating those above it.
    fn zeros_in(&self, x0: f64, x1: f64, height: f64) -> Result<Vec<RootLocation>> {
        let mut strip = None;
        for attempt in 0..=PERTURB_RETRIES {
            let eta = AXIS_STRIP * (1.0 + 0.1 * attempt as f64 * jitter(attempt));
            if let Ok(n) = self.count(&Rect::new(x0, x1, -eta, eta)) {
                strip = Some((Rect::new(x0, x1, -eta, eta), n));
                break;
            }
        }
        let (strip, n_axis) = match strip {
            Some(found) => found,
            None => self.count_outer(Rect::new(x0, x1, -AXIS_STRIP, AXIS_STRIP), 1, [true; 4])?,
        };
        let mut raw = Vec::new();
        self.isolate(strip, n_axis, &mut raw)?;
        let mut found = Vec::new();
        for root in raw {
            let z = root.lambda;
            if z.im.abs() <= 1e-12 * (1.0 + z.norm()) {
                found.push(RootLocation { lambda: Complex64::new(z.re, 0.0), multiplicity: root.multiplicity });
            } else if z.im > 0.0 {
                found.push(root);
                found.push(RootLocation { lambda: z.conj(), multiplicity: root.multiplicity });
            }
        }
        if height > strip.y1 {
            let upper = Rect::new(strip.x0, strip.x1, strip.y1, height);
            let (upper, n_upper) = self.count_outer(upper, 2, [true, true, false, true])?;
            let mut raw = Vec::new();
            self.isolate(upper, n_upper, &mut raw)?;
            for root in raw {
                found.push(root);
                found.push(RootLocation { lambda: root.lambda.conj(), multiplicity: root.multiplicity });
            }
        }
        Ok(merge(found))
    }
}

fn merge(mut roots: Vec<RootLocation>) -> Vec<RootLocation> {
    let mut merged: Vec<RootLocation> = Vec::with_capacity(roots.len());
    roots.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re).then(b.lambda.im.total_cmp(&a.lambda.im)));
    for mut root in roots {
        if root.lambda.norm() < 1e-12 {
            root.lambda = Complex64::new(0.0, 0.0);
        }
        match merged.iter_mut().find(|m| (m.lambda - root.lambda).norm() < MERGE_TOL) {
            Some(existing) => existing.multiplicity += root.multiplicity,
            None => merged.push(root),
        }
    }
    merged
}

/// Upper bound on the real part of any characteristic root.
pub(crate) fn real_part_bound(theta: f64, a: &SignedMeasure) -> f64 {
    theta.abs() * a.total_variation() + 1.0
}

/// Bound on `|Im λ|` for roots with `Re λ ≥ c`.
pub(crate) fn imaginary_bound(theta: f64, a: &SignedMeasure, c: f64) -> f64 {
    theta.abs() * a.total_variation() * ((-c).max(0.0) * a.r()).exp() + c.abs() + 1.0
}

/// Number of zeros of `h` inside `rect`, counting multiplicity.
pub fn count_zeros(theta: f64, a: &SignedMeasure, rect: Rect) -> Result<usize> {
    let searcher = Searcher::new(theta, a);
    searcher
        .count(&rect)
        .map_err(|e| match e {
            CountFailure::NearZero(d) => Error::ContourDegenerate { distance: d, retries: 0 },
            CountFailure::Mismatch => Error::ContourDegenerate { distance: f64::NAN, retries: 0 },
        })
}

/// All roots with `Re λ ≥ c`, sorted by decreasing real part.
pub fn roots_in_strip(theta: f64, a: &SignedMeasure, c: f64) -> Result<Vec<RootLocation>> {
    let top = real_part_bound(theta, a);
    if c >= top {
        return Ok(Vec::new());
    }
    let searcher = Searcher::new(theta, a);
    let roots = searcher.zeros_in(c, top, imaginary_bound(theta, a, c))?;
    Ok(roots.into_iter().filter(|r| r.lambda.re >= c).collect())
}

/// All roots with `lo ≤ Re λ < hi`.
pub fn roots_in_band(theta: f64, a: &SignedMeasure, lo: f64, hi: f64) -> Result<Vec<RootLocation>> {
    if hi <= lo {
        return Err(Error::Domain(format!("empty band [{lo}, {hi})")));
    }
    let searcher = Searcher::new(theta, a);
    let roots = searcher.zeros_in(lo, hi, imaginary_bound(theta, a, lo))?;
    Ok(roots.into_iter().filter(|r| r.lambda.re >= lo && r.lambda.re < hi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA: f64 = 0.567_143_290_409_783_9;

    #[test]
    fn trivial_parameter_has_single_root() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let roots = roots_in_strip(0.0, &a, -1.0).unwrap();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].lambda, Complex64::new(0.0, 0.0));
        assert_eq!(roots[0].multiplicity, 1);
    }

    #[test]
    fn omega_constant_is_the_only_right_root() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let roots = roots_in_strip(1.0, &a, 0.0).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].lambda.re - OMEGA).abs() < 1e-12);
        assert_eq!(roots[0].lambda.im, 0.0);
    }

    #[test]
    fn hayes_boundary_pair() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let roots = roots_in_strip(-PI / 2.0, &a, -0.1).unwrap();
        assert_eq!(roots.len(), 2);
        for (root, sign) in roots.iter().zip([1.0, -1.0]) {
            assert_eq!(root.multiplicity, 1);
            assert!((root.lambda - Complex64::new(0.0, sign * PI / 2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn double_root_is_merged() {
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let roots = roots_in_strip(-(-1.0f64).exp(), &a, -1.5).unwrap();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].multiplicity, 2);
        assert!((roots[0].lambda.re + 1.0).abs() < 1e-7);
    }

    #[test]
    fn count_matches_known_omega_branches() {
        // branches W_0..W_3 of λe^λ = 1 and conjugates lie in this box, W_4 does not
        let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
        let n = count_zeros(1.0, &a, Rect::new(-3.0, 1.0, -20.0, 20.0)).unwrap();
        assert_eq!(n, 7);
    }

    #[test]
    fn merge_sums_multiplicities() {
        let z = Complex64::new(0.3, 0.0);
        let merged = merge(vec![
            RootLocation { lambda: z, multiplicity: 1 },
            RootLocation { lambda: z + 1e-10, multiplicity: 1 },
        ]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].multiplicity, 2);
    }
}
