//! Seeded Monte Carlo experiments comparing finite-horizon statistics with
//! draws from the limit laws.

pub mod ks;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fundamental::{fisher_limit_with, fisher_theta0, Grid, DEFAULT_STEP};
use crate::inference::{mle, score_and_info};
use crate::limits::{self, default_horizon, LimitSample};
use crate::measure::{MeasureDescriptor, SignedMeasure};
use crate::noise::{derive_seed, stream, NormalStream};
use crate::sim::{fmt_num, simulate, InitialPath};
use crate::spectrum::{classify_with_hint, Regime, RegimeReport, Scaling};

pub use ks::{kolmogorov_survival, ks_normal, ks_two_sample};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SDDE_LAN_THREADS";
/// Distributional tests need at least this many replicates.
pub const MIN_REPLICATES: usize = 100;

/// A measure given inline or as a path to a measure file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    Path(PathBuf),
    Inline(MeasureDescriptor),
}

/// Which finite-horizon quantity a two-sample test compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Delta,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    /// One-sample KS of `Δ/√J` against `N(0, 1)`.
    KsNormal,
    /// Two-sample KS of `Δ` or `J` against limit-law draws.
    KsLimit { quantity: Quantity },
    /// Mean information inside `[lo, hi]`; defaults to ±5% of the LAN limit.
    MeanInfo {
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
    /// Medians of `(1/T)∫Y dt` and `(1/T)∫Y² dt` against the LAN limit.
    Ergodic,
    /// Median of `|θ̂ − θ|` at most `tolerance`.
    Mle { tolerance: f64 },
}

impl TestSpec {
    fn name(&self) -> String {
        match self {
            TestSpec::KsNormal => "ks_normal".into(),
            TestSpec::KsLimit { quantity: Quantity::Delta } => "ks_limit_delta".into(),
            TestSpec::KsLimit { quantity: Quantity::Info } => "ks_limit_info".into(),
            TestSpec::MeanInfo { .. } => "mean_info".into(),
            TestSpec::Ergodic => "ergodic".into(),
            TestSpec::Mle { .. } => "mle".into(),
        }
    }

    fn distributional(&self) -> bool {
        matches!(self, TestSpec::KsNormal | TestSpec::KsLimit { .. })
    }
}

fn default_n_limit() -> usize {
    2000
}

fn default_laq_steps() -> usize {
    limits::MIN_LAQ_STEPS
}

fn default_p_threshold() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub measure: MeasureSource,
    pub theta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "zero_path")]
    pub x0: InitialPath,
    pub n_replicates: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_override: Option<Regime>,
    #[serde(default)]
    pub tests: Vec<TestSpec>,
    /// Phases `d` of the periodic case; each runs at `T = k·2π/D + d`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<f64>,
    /// Number of limit-law draws (per phase).
    #[serde(default = "default_n_limit")]
    pub n_limit: usize,
    #[serde(default = "default_laq_steps")]
    pub laq_steps: usize,
    /// Horizon `S` of the stochastic integral in `U`; defaults to `10/v*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_horizon: Option<f64>,
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn zero_path() -> InitialPath {
    InitialPath::Zero
}

impl ExperimentConfig {
    /// Parse a config file; a measure path is resolved against its directory
    /// and inlined.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_measure(base)?;
        Ok(config)
    }

    pub fn resolve_measure(&mut self, base: &Path) -> Result<()> {
        if let MeasureSource::Path(p) = &self.measure {
            let full = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = fs::read_to_string(&full)
                .map_err(|e| Error::Config(format!("cannot read measure {}: {e}", full.display())))?;
            self.measure = MeasureSource::Inline(MeasureDescriptor::from_json(&text)?);
        }
        Ok(())
    }

    pub fn build_measure(&self) -> Result<SignedMeasure> {
        match &self.measure {
            MeasureSource::Inline(d) => d.build(),
            MeasureSource::Path(p) => Err(Error::Config(format!("measure path {} was not resolved", p.display()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite()) {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config("T and dt must be positive".into()));
        }
        let steps = self.horizon / self.dt;
        if self.phases.is_empty() && (steps - steps.round()).abs() > 1e-6 * steps {
            return Err(Error::Config(format!("T = {} is not a multiple of dt = {}", self.horizon, self.dt)));
        }
        if self.n_replicates == 0 {
            return Err(Error::Config("n_replicates must be positive".into()));
        }
        if self.tests.iter().any(TestSpec::distributional) && self.n_replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "distributional tests need at least {MIN_REPLICATES} replicates, got {}",
                self.n_replicates
            )));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::Config("p_threshold must lie in (0, 1)".into()));
        }
        self.x0.validate()
    }
}

/// Finite-horizon statistics of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    /// Phase `d` of the periodic case.
    pub phase: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    pub info: f64,
    /// `None` when `∫Y²dt` vanishes.
    pub theta_hat: Option<f64>,
    /// `(1/T)∫Y dt`.
    pub mean_y: f64,
    /// `(1/T)∫Y² dt`.
    pub mean_y2: f64,
    /// `r_T · Y(T)`.
    pub scaled_y_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub name: String,
    pub phase: Option<f64>,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicDiagnostics {
    pub median_mean_y: f64,
    pub median_mean_y2: f64,
    pub info_limit: f64,
    pub passed: bool,
}

impl ErgodicDiagnostics {
    /// `|median₁| ≤ 0.05√J` and `|median₂ − J| ≤ 0.05J`.
    pub fn from_replicates(replicates: &[Replicate], info_limit: f64) -> Self {
        let m1 = median(replicates.iter().map(|r| r.mean_y).collect());
        let m2 = median(replicates.iter().map(|r| r.mean_y2).collect());
        let passed = m1.abs() <= 0.05 * info_limit.sqrt() && (m2 - info_limit).abs() <= 0.05 * info_limit;
        Self { median_mean_y: m1, median_mean_y2: m2, info_limit, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub median_mean_y: f64,
    pub median_mean_y2: f64,
    pub median_scaled_y_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub v_star: Option<f64>,
    pub m_star: Option<usize>,
    pub scaling: Option<Scaling>,
    /// Deterministic limit `J` in the LAN case.
    pub info_limit: Option<f64>,
    pub replicates: Vec<Replicate>,
    pub limit_samples: Vec<LimitSample>,
    pub tests: Vec<TestOutcome>,
    pub diagnostics: Diagnostics,
    pub passed: bool,
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn worker_count(requested: Option<usize>) -> usize {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    match (requested, cap) {
        (Some(n), Some(c)) => n.min(c),
        (Some(n), None) => n,
        (None, Some(c)) => c,
        (None, None) => 0,
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(threads))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Everything the replicates share.
struct Setup {
    measure: SignedMeasure,
    report: RegimeReport,
    scaling: Scaling,
    /// `(phase, grid)` pairs; a single `None` phase outside the periodic case.
    runs: Vec<(Option<f64>, Grid)>,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let measure = config.build_measure()?;
    let report = classify_with_hint(config.theta, &measure, config.regime_override)?;
    if report.regime == Regime::Unclassified {
        return Err(Error::Unclassified(report.h.clone()));
    }
    let scaling = report
        .scaling
        .ok_or_else(|| Error::Consistency(format!("no scaling for regime {}", report.regime)))?;
    let r = measure.r();
    let check = |grid: Grid| -> Result<Grid> {
        if (grid.dt - config.dt).abs() > 1e-9 * config.dt {
            return Err(Error::GridMismatch(format!(
                "dt = {} does not divide the delay length {r}",
                config.dt
            )));
        }
        Ok(grid)
    };
    let runs = if report.regime == Regime::Plamn {
        let period = report.period().expect("periodic regime has a period");
        let phases = if config.phases.is_empty() { vec![0.0] } else { config.phases.clone() };
        let mut runs = Vec::with_capacity(phases.len());
        for d in phases {
            if !(0.0..period).contains(&d) {
                return Err(Error::Config(format!("phase {d} outside [0, {period})")));
            }
            let k = ((config.horizon - d) / period).floor().max(1.0);
            runs.push((Some(d), check(Grid::nearest(r, config.dt, k * period + d)?)?));
        }
        runs
    } else {
        vec![(None, check(Grid::nearest(r, config.dt, config.horizon)?)?)]
    };
    Ok(Setup { measure, report, scaling, runs })
}

fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64, stream::BROWNIAN)
}

fn run_replicate(
    config: &ExperimentConfig,
    setup: &Setup,
    index: usize,
    phase: Option<f64>,
    grid: &Grid,
) -> Result<Replicate> {
    let seed = replicate_seed(config.seed, index);
    let path = simulate(config.theta, &setup.measure, &config.x0, grid, seed)?;
    let horizon = grid.horizon();
    let rate = setup.scaling.at(horizon);
    let pair = score_and_info(&path, config.theta, rate)?;
    let theta_hat = match mle(&path) {
        Ok(t) => Some(t),
        Err(Error::DegeneratePath(_)) => None,
        Err(e) => return Err(e),
    };
    let n = grid.n_steps;
    let (sum_y, sum_y2) = path.y[..n].iter().fold((0.0, 0.0), |(s, s2), y| (s + y, s2 + y * y));
    Ok(Replicate {
        index,
        seed,
        phase,
        horizon,
        delta: pair.delta,
        info: pair.info,
        theta_hat,
        mean_y: sum_y * grid.dt / horizon,
        mean_y2: sum_y2 * grid.dt / horizon,
        scaled_y_end: rate * path.y[n],
    })
}

fn simulate_replicates(config: &ExperimentConfig, setup: &Setup) -> Result<Vec<Replicate>> {
    let n = config.n_replicates;
    let jobs: Vec<(usize, Option<f64>, Grid)> = setup
        .runs
        .iter()
        .enumerate()
        .flat_map(|(p, &(phase, grid))| (0..n).map(move |i| (p * n + i, phase, grid)))
        .collect();
    jobs.par_iter()
        .map(|(index, phase, grid)| run_replicate(config, setup, *index, *phase, grid))
        .collect()
}

fn info_limit(config: &ExperimentConfig, setup: &Setup) -> Result<Option<f64>> {
    if setup.report.regime != Regime::Lan {
        return Ok(None);
    }
    let a = &setup.measure;
    let j = if config.theta == 0.0 && a.mass().abs() <= 1e-12 * a.total_variation().max(1.0) {
        fisher_theta0(a)?
    } else {
        let n_delay = ((a.r() / DEFAULT_STEP).ceil() as usize).max(8);
        fisher_limit_with(config.theta, a, &setup.report, n_delay)?
    };
    Ok(Some(j))
}

fn draw_limits(config: &ExperimentConfig, setup: &Setup, info_limit: Option<f64>) -> Result<Vec<LimitSample>> {
    let report = &setup.report;
    let a = &setup.measure;
    let s = match (config.limit_horizon, report.v_star) {
        (Some(s), _) => s,
        (None, Some(v)) if v > 0.0 => default_horizon(v),
        _ => 0.0,
    };
    let phases: Vec<f64> = setup.runs.iter().map(|(p, _)| p.unwrap_or(0.0)).collect();
    let jobs: Vec<(usize, f64)> = phases
        .iter()
        .enumerate()
        .flat_map(|(p, &d)| (0..config.n_limit).map(move |j| (p * config.n_limit + j, d)))
        .collect();
    jobs.par_iter()
        .map(|&(j, d)| {
            let tag = if report.regime == Regime::Laq { stream::LIMIT_WIENER } else { stream::LIMIT_GAUSS };
            let mut rng = NormalStream::new(derive_seed(config.seed, j as u64, tag), tag);
            match report.regime {
                Regime::Lan => limits::sample_lan(info_limit.expect("LAN limit computed"), &mut rng),
                Regime::Laq => limits::sample_laq(report, config.laq_steps, &mut rng),
                Regime::Lamn => limits::sample_lamn(config.theta, a, report, &config.x0, s, true, &mut rng),
                Regime::Plamn => limits::sample_plamn(config.theta, a, report, &config.x0, d, s, true, &mut rng),
                Regime::Unclassified => Err(Error::Unclassified(report.h.clone())),
            }
        })
        .collect()
}

fn ks_outcome(name: String, phase: Option<f64>, (d, p): (f64, f64), threshold: f64, n: usize) -> TestOutcome {
    TestOutcome {
        name,
        phase,
        statistic: d,
        p_value: Some(p),
        threshold,
        passed: p > threshold,
        detail: format!("n = {n}, D = {d:.4}, p = {p:.4}"),
    }
}

fn run_tests(
    config: &ExperimentConfig,
    setup: &Setup,
    replicates: &[Replicate],
    limit_samples: &[LimitSample],
    info_limit: Option<f64>,
) -> Result<Vec<TestOutcome>> {
    let mut out = Vec::new();
    let thr = config.p_threshold;
    for (p, (phase, _)) in setup.runs.iter().enumerate() {
        let reps = &replicates[p * config.n_replicates..(p + 1) * config.n_replicates];
        for test in &config.tests {
            let outcome = match test {
                TestSpec::KsNormal => {
                    let ratios: Vec<f64> =
                        reps.iter().filter(|r| r.info > 0.0).map(|r| r.delta / r.info.sqrt()).collect();
                    ks_outcome(test.name(), *phase, ks_normal(&ratios)?, thr, ratios.len())
                }
                TestSpec::KsLimit { quantity } => {
                    let pick = |delta: f64, info: f64| if *quantity == Quantity::Delta { delta } else { info };
                    let x: Vec<f64> = reps.iter().map(|r| pick(r.delta, r.info)).collect();
                    let lims = limit_samples.get(p * config.n_limit..(p + 1) * config.n_limit).unwrap_or(&[]);
                    let y: Vec<f64> = lims.iter().map(|s| pick(s.delta, s.info)).collect();
                    ks_outcome(test.name(), *phase, ks_two_sample(&x, &y)?, thr, x.len())
                }
                TestSpec::MeanInfo { lo, hi } => {
                    let (lo, hi) = match (lo, hi, info_limit) {
                        (Some(lo), Some(hi), _) => (*lo, *hi),
                        (None, None, Some(j)) => (0.95 * j, 1.05 * j),
                        _ => {
                            return Err(Error::Config(
                                "mean_info needs explicit lo and hi outside the LAN regime".into(),
                            ))
                        }
                    };
                    let mean = reps.iter().map(|r| r.info).sum::<f64>() / reps.len() as f64;
                    TestOutcome {
                        name: test.name(),
                        phase: *phase,
                        statistic: mean,
                        p_value: None,
                        threshold: 0.0,
                        passed: (lo..=hi).contains(&mean),
                        detail: format!("mean J = {mean:.5} in [{lo:.5}, {hi:.5}]"),
                    }
                }
                TestSpec::Ergodic => {
                    let j = info_limit.ok_or_else(|| Error::Config("the ergodic check needs the LAN regime".into()))?;
                    let e = ErgodicDiagnostics::from_replicates(reps, j);
                    TestOutcome {
                        name: test.name(),
                        phase: *phase,
                        statistic: e.median_mean_y2,
                        p_value: None,
                        threshold: 0.05,
                        passed: e.passed,
                        detail: format!(
                            "median (1/T)∫Y = {:.5}, median (1/T)∫Y² = {:.5}, J = {:.5}",
                            e.median_mean_y, e.median_mean_y2, j
                        ),
                    }
                }
                TestSpec::Mle { tolerance } => {
                    let errors: Vec<f64> =
                        reps.iter().filter_map(|r| r.theta_hat).map(|t| (t - config.theta).abs()).collect();
                    let med = median(errors);
                    TestOutcome {
                        name: test.name(),
                        phase: *phase,
                        statistic: med,
                        p_value: None,
                        threshold: *tolerance,
                        passed: med <= *tolerance,
                        detail: format!("median |θ̂ − θ| = {med:.5}"),
                    }
                }
            };
            log::info!("{}: {} ({})", outcome.name, if outcome.passed { "pass" } else { "FAIL" }, outcome.detail);
            out.push(outcome);
        }
    }
    Ok(out)
}

/// Simulate every replicate, draw matching limit samples and run the
/// configured tests.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let setup = setup(config)?;
    log::info!(
        "experiment: regime {}, scaling {}, {} replicate(s) x {} run(s)",
        setup.report.regime,
        setup.scaling.describe(),
        config.n_replicates,
        setup.runs.len()
    );
    let (replicates, limit_samples, j) = with_pool(config.threads, || -> Result<_> {
        let j = info_limit(config, &setup)?;
        let replicates = simulate_replicates(config, &setup)?;
        let needs_limits = config.tests.iter().any(|t| matches!(t, TestSpec::KsLimit { .. }));
        let limit_samples = if needs_limits { draw_limits(config, &setup, j)? } else { Vec::new() };
        Ok((replicates, limit_samples, j))
    })??;
    let tests = run_tests(config, &setup, &replicates, &limit_samples, j)?;
    let diagnostics = Diagnostics {
        median_mean_y: median(replicates.iter().map(|r| r.mean_y).collect()),
        median_mean_y2: median(replicates.iter().map(|r| r.mean_y2).collect()),
        median_scaled_y_end: median(replicates.iter().map(|r| r.scaled_y_end).collect()),
    };
    let passed = tests.iter().all(|t| t.passed);
    Ok(ExperimentResult {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        regime: setup.report.regime,
        v_star: setup.report.v_star,
        m_star: setup.report.m_star,
        scaling: Some(setup.scaling),
        info_limit: j,
        replicates,
        limit_samples,
        tests,
        diagnostics,
        passed,
    })
}

/// Ergodic averages of the LAN regime over the configured replicates.
pub fn ergodic_check(config: &ExperimentConfig) -> Result<ErgodicDiagnostics> {
    let setup = setup(config)?;
    if setup.report.regime != Regime::Lan {
        return Err(Error::Precondition(format!("ergodic check needs LAN, regime is {}", setup.report.regime)));
    }
    with_pool(config.threads, || -> Result<_> {
        let j = info_limit(config, &setup)?.expect("LAN limit computed");
        let replicates = simulate_replicates(config, &setup)?;
        Ok(ErgodicDiagnostics::from_replicates(&replicates, j))
    })?
}

/// Per-replicate CSV: `index,seed,phase,T,delta,info,theta_hat`.
pub fn write_samples_csv<W: std::io::Write>(replicates: &[Replicate], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["index", "seed", "phase", "T", "delta", "info", "theta_hat"])?;
    for r in replicates {
        writer.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.phase.map(fmt_num).unwrap_or_default(),
            fmt_num(r.horizon),
            fmt_num(r.delta),
            fmt_num(r.info),
            r.theta_hat.map(fmt_num).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Write `result.json` and `samples.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(result)?;
    fs::write(dir.join("result.json"), json + "\n")?;
    write_samples_csv(&result.replicates, fs::File::create(dir.join("samples.csv"))?)
}
