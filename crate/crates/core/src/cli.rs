//! Command-line front end: `analyze`, `kernel`, `simulate`, `estimate`,
//! `limits` and `experiment`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fundamental::{fisher_limit_with, solve_fundamental, Grid};
use crate::harness::{self, ExperimentConfig};
use crate::inference::{mle, score_and_info};
use crate::limits;
use crate::measure::{MeasureDescriptor, SignedMeasure};
use crate::noise::{derive_seed, stream, NormalStream};
use crate::sim::{fmt_num, simulate, InitialPath, SamplePath};
use crate::spectrum::{classify_with_hint, Regime, RegimeReport, Scaling};

/// Exit code for a run whose statistical tests failed.
pub const EXIT_TEST_FAILURE: i32 = 1;
/// Exit code for usage, configuration and numerical errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sdde-lan", version, about = "Likelihood asymptotics for affine stochastic delay equations")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate characteristic roots and classify the regime.
    Analyze(AnalyzeArgs),
    /// Fundamental solution x₀ and kernel y on a grid (CSV t,x0,y).
    Kernel(KernelArgs),
    /// Simulate one path (CSV t,W,X,Y).
    Simulate(SimulateArgs),
    /// Score, information and MLE from a path CSV.
    Estimate(EstimateArgs),
    /// Draw samples of the limiting (Δ, J) (CSV delta,info).
    Limits(LimitsArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Measure file (JSON).
    #[arg(long)]
    pub measure: PathBuf,
    /// Parameter; overrides a `theta` stored in the measure file.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Force the regime tag (LAN, LAQ, LAMN, PLAMN).
    #[arg(long)]
    pub regime_hint: Option<Regime>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "T", default_value_t = 20.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Also print the limiting information `∫y²` (LAN only) to stderr.
    #[arg(long)]
    pub info: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Initial segment: a constant, or a JSON file holding an initial path.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Path CSV written by `simulate`.
    #[arg(long)]
    pub path: PathBuf,
    /// Hypothesised parameter for the score; defaults to the measure file's.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Measure used to pick the scaling rate.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    /// Scaling rate: `sqrt`, `power:K` or `exp:M:V`.
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Phase of the periodic limit.
    #[arg(long, default_value_t = 0.0)]
    pub d: f64,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub x0: String,
    /// Euler steps for the boundary-case Wiener functionals.
    #[arg(long, default_value_t = limits::MIN_LAQ_STEPS)]
    pub laq_steps: usize,
    /// Horizon of the stochastic integral in the mixed-normal limits.
    #[arg(long)]
    pub limit_horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_replicates: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub regime_hint: Option<Regime>,
}

struct Model {
    theta: f64,
    measure: SignedMeasure,
    hint: Option<Regime>,
}

fn read_descriptor(path: &Path) -> Result<MeasureDescriptor> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read measure {}: {e}", path.display())))?;
    MeasureDescriptor::from_json(&text)
}

impl ModelArgs {
    fn load(&self) -> Result<Model> {
        let desc = read_descriptor(&self.measure)?;
        let theta = self
            .theta
            .or(desc.theta)
            .ok_or_else(|| Error::Config("no --theta given and the measure file has no theta".into()))?;
        Ok(Model { theta, measure: desc.build()?, hint: self.regime_hint })
    }
}

fn parse_x0(spec: &str) -> Result<InitialPath> {
    if let Ok(v) = spec.trim().parse::<f64>() {
        return Ok(if v == 0.0 { InitialPath::Zero } else { InitialPath::constant(v) });
    }
    let text = fs::read_to_string(spec).map_err(|e| Error::Config(format!("cannot read x0 file {spec}: {e}")))?;
    let path: InitialPath = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
    path.validate()?;
    Ok(path)
}

fn parse_scaling(spec: &str) -> Result<Scaling> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("cannot parse scaling '{spec}' (use sqrt, power:K or exp:M:V)"));
    match parts.as_slice() {
        ["sqrt"] => Ok(Scaling::InvSqrt),
        ["power", k] => Ok(Scaling::Power { exponent: k.parse().map_err(|_| bad())? }),
        ["exp", m, v] => Ok(Scaling::PowerExp {
            m_star: m.parse().map_err(|_| bad())?,
            v_star: v.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn emit(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

/// JSON summary of a classification.
pub fn report_json(report: &RegimeReport) -> serde_json::Value {
    let roots: Vec<_> = report
        .roots
        .iter()
        .map(|r| json!({"re": r.lambda.re, "im": r.lambda.im, "m": r.multiplicity, "m_tilde": r.m_tilde}))
        .collect();
    json!({
        "theta": report.theta,
        "regime": report.regime,
        "v0": report.v0,
        "v_star": report.v_star,
        "m_star": report.m_star,
        "H": report.h,
        "D": report.d,
        "scaling": report.scaling,
        "scaling_text": report.scaling.map(|s| s.describe()),
        "hint_applied": report.hint_applied,
        "roots": roots,
    })
}

fn analyze(args: &AnalyzeArgs) -> Result<i32> {
    let model = args.model.load()?;
    let report = classify_with_hint(model.theta, &model.measure, model.hint)?;
    emit_json(args.out.as_deref(), &report_json(&report))?;
    Ok(0)
}

fn kernel(args: &KernelArgs) -> Result<i32> {
    let model = args.model.load()?;
    let grid = Grid::nearest(model.measure.r(), args.dt, args.horizon)?;
    let k = solve_fundamental(model.theta, &model.measure, &grid)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["t", "x0", "y"])?;
    for (i, (x, y)) in k.x_forward().iter().zip(k.y_values()).enumerate() {
        writer.write_record([fmt_num(grid.t(i)), fmt_num(*x), fmt_num(*y)])?;
    }
    let body = writer.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    emit(args.out.as_deref(), &body)?;
    if args.info {
        let report = classify_with_hint(model.theta, &model.measure, model.hint)?;
        let j = fisher_limit_with(model.theta, &model.measure, &report, grid.n_delay)?;
        eprintln!("{}", json!({ "info_limit": j }));
    }
    Ok(0)
}

fn simulate_cmd(args: &SimulateArgs) -> Result<i32> {
    let model = args.model.load()?;
    let x0 = parse_x0(&args.x0)?;
    let r = model.measure.r();
    let grid = Grid::nearest(r, args.dt, args.horizon)?;
    if (grid.dt - args.dt).abs() > 1e-9 * args.dt {
        return Err(Error::GridMismatch(format!("dt = {} does not divide the delay length {r}", args.dt)));
    }
    let path = simulate(model.theta, &model.measure, &x0, &grid, args.seed)?;
    let mut body = Vec::new();
    path.write_csv(&mut body)?;
    emit(args.out.as_deref(), &body)?;
    Ok(0)
}

#[derive(Serialize)]
struct EstimateOutput {
    theta_hat: Option<f64>,
    delta: f64,
    info: f64,
    #[serde(rename = "T")]
    horizon: f64,
    scaling: Scaling,
    scaling_text: String,
}

fn estimate(args: &EstimateArgs) -> Result<i32> {
    let desc = args.measure.as_deref().map(read_descriptor).transpose()?;
    let theta = args
        .theta
        .or(desc.as_ref().and_then(|d| d.theta))
        .ok_or_else(|| Error::Config("no --theta given and no measure file with a theta".into()))?;
    let scaling = match (&args.scaling, &desc) {
        (Some(s), _) => parse_scaling(s)?,
        (None, Some(d)) => classify_with_hint(theta, &d.build()?, None)?.scaling.unwrap_or(Scaling::InvSqrt),
        (None, None) => Scaling::InvSqrt,
    };
    let file = fs::File::open(&args.path).map_err(|e| Error::Config(format!("{}: {e}", args.path.display())))?;
    let path = SamplePath::read_csv(file, theta)?;
    let horizon = path.grid.horizon();
    let pair = score_and_info(&path, theta, scaling.at(horizon))?;
    let theta_hat = match mle(&path) {
        Ok(t) => Some(t),
        Err(Error::DegeneratePath(e)) => {
            log::warn!("∫Y²dt = {e}; the MLE is undefined");
            None
        }
        Err(e) => return Err(e),
    };
    emit_json(
        args.out.as_deref(),
        &EstimateOutput { theta_hat, delta: pair.delta, info: pair.info, horizon, scaling, scaling_text: scaling.describe() },
    )?;
    Ok(0)
}

fn limits_cmd(args: &LimitsArgs) -> Result<i32> {
    let model = args.model.load()?;
    let x0 = parse_x0(&args.x0)?;
    let report = classify_with_hint(model.theta, &model.measure, model.hint)?;
    let info_limit = if report.regime == Regime::Lan {
        let n_delay = ((model.measure.r() / crate::fundamental::DEFAULT_STEP).ceil() as usize).max(8);
        Some(fisher_limit_with(model.theta, &model.measure, &report, n_delay)?)
    } else {
        None
    };
    let s = args.limit_horizon.or(report.v_star.filter(|v| *v > 0.0).map(limits::default_horizon)).unwrap_or(0.0);
    let tag = if report.regime == Regime::Laq { stream::LIMIT_WIENER } else { stream::LIMIT_GAUSS };
    let draws: Vec<limits::LimitSample> = (0..args.n)
        .into_par_iter()
        .map(|j| {
            let mut rng = NormalStream::new(derive_seed(args.seed, j as u64, tag), tag);
            match report.regime {
                Regime::Lan => limits::sample_lan(info_limit.expect("computed above"), &mut rng),
                Regime::Laq => limits::sample_laq(&report, args.laq_steps, &mut rng),
                Regime::Lamn => limits::sample_lamn(model.theta, &model.measure, &report, &x0, s, true, &mut rng),
                Regime::Plamn => {
                    limits::sample_plamn(model.theta, &model.measure, &report, &x0, args.d, s, true, &mut rng)
                }
                Regime::Unclassified => Err(Error::Unclassified(report.h.clone())),
            }
        })
        .collect::<Result<_>>()?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["delta", "info"])?;
    for s in &draws {
        writer.write_record([fmt_num(s.delta), fmt_num(s.info)])?;
    }
    let body = writer.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    emit(args.out.as_deref(), &body)?;
    Ok(0)
}

fn experiment(args: &ExperimentArgs) -> Result<i32> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n_replicates {
        config.n_replicates = n;
    }
    if let Some(t) = args.threads {
        config.threads = Some(t);
    }
    if args.regime_hint.is_some() {
        config.regime_override = args.regime_hint;
    }
    if let Some(dir) = &args.out_dir {
        config.out_dir = Some(dir.clone());
    }
    let result = harness::run_experiment(&config)?;
    let dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    harness::write_outputs(&result, &dir)?;
    for t in &result.tests {
        let phase = t.phase.map(|d| format!(" [d = {d}]")).unwrap_or_default();
        eprintln!("{}{}: {} ({})", t.name, phase, if t.passed { "pass" } else { "FAIL" }, t.detail);
    }
    Ok(if result.passed { 0 } else { EXIT_TEST_FAILURE })
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Kernel(a) => kernel(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Limits(a) => limits_cmd(a),
        Command::Experiment(a) => experiment(a),
    }
}

/// Parse `args`, run the subcommand and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_specs() {
        assert_eq!(parse_scaling("sqrt").unwrap(), Scaling::InvSqrt);
        assert_eq!(parse_scaling("power:2").unwrap(), Scaling::Power { exponent: 2 });
        assert_eq!(parse_scaling("exp:0:0.5").unwrap(), Scaling::PowerExp { m_star: 0, v_star: 0.5 });
        assert!(parse_scaling("cubic").is_err());
    }

    #[test]
    fn x0_specs() {
        assert_eq!(parse_x0("0").unwrap(), InitialPath::Zero);
        assert_eq!(parse_x0("-1.5").unwrap(), InitialPath::constant(-1.5));
        assert!(parse_x0("/nonexistent/x0.json").is_err());
    }

    #[test]
    fn missing_measure_is_usage_error() {
        assert_eq!(run(["sdde-lan", "analyze", "--theta", "-0.5"]), EXIT_USAGE);
        assert_eq!(run(["sdde-lan", "frobnicate"]), EXIT_USAGE);
    }
}
