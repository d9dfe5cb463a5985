use sdde_lan::harness::{
    ergodic_check, ks_two_sample, run_experiment, write_samples_csv, ExperimentConfig, MeasureSource, TestSpec,
};
use sdde_lan::noise::NormalStream;
use sdde_lan::spectrum::Regime;
use sdde_lan::{Error, MeasureDescriptor, SignedMeasure};

fn config(measure: &SignedMeasure, theta: f64, horizon: f64, dt: f64, n: usize, seed: u64) -> ExperimentConfig {
    let json = serde_json::json!({
        "measure": MeasureDescriptor::from_measure(measure),
        "theta": theta,
        "T": horizon,
        "dt": dt,
        "n_replicates": n,
        "seed": seed,
    });
    serde_json::from_value(json).unwrap()
}

fn dirac0() -> SignedMeasure {
    SignedMeasure::dirac(1.0, 0.0, 1.0).unwrap()
}

fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
    let mut rng = NormalStream::new(seed, 0);
    (0..n).map(|_| rng.next_normal() + shift).collect()
}

#[test]
fn ks_same_law_is_accepted() {
    let (_, p) = ks_two_sample(&normals(1, 1000, 0.0), &normals(2, 1000, 0.0)).unwrap();
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn ks_shifted_law_is_rejected() {
    let (_, p) = ks_two_sample(&normals(1, 1000, 0.0), &normals(2, 1000, 1.0)).unwrap();
    assert!(p < 1e-6, "p = {p}");
}

#[test]
fn balanced_atoms_have_positive_information() {
    let a = SignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-1.0, -1.0)]).unwrap();
    let result = run_experiment(&config(&a, 0.0, 20.0, 0.01, 50, 9)).unwrap();
    assert_eq!(result.regime, Regime::Lan);
    assert!(result.replicates.iter().all(|r| r.info > 0.0));
}

#[test]
fn ergodic_averages_for_strong_damping() {
    let diag = ergodic_check(&config(&dirac0(), -1.0, 200.0, 0.01, 200, 4)).unwrap();
    assert!((0.475..=0.525).contains(&diag.median_mean_y2), "{}", diag.median_mean_y2);
    assert!(diag.passed);
}

#[test]
fn ergodic_check_needs_lan() {
    let err = ergodic_check(&config(&dirac0(), 0.5, 10.0, 0.01, 10, 4)).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

fn delta_variance(horizon: f64, wrong_rate: bool) -> f64 {
    let mut c = config(&dirac0(), -0.5, horizon, 0.01, 400, 21);
    if wrong_rate {
        c.regime_override = Some(Regime::Laq);
    }
    let result = run_experiment(&c).unwrap();
    let d: Vec<f64> = result.replicates.iter().map(|r| r.delta).collect();
    d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64
}

#[test]
fn score_variance_is_stable_only_under_the_right_rate() {
    let (v100, v400) = (delta_variance(100.0, false), delta_variance(400.0, false));
    assert!((v400 / v100 - 1.0).abs() < 0.1, "{v100} vs {v400}");
    // T^{-1} instead of T^{-1/2} shrinks the variance by the horizon ratio
    let (w100, w400) = (delta_variance(100.0, true), delta_variance(400.0, true));
    let shrink = w100 / w400;
    assert!((3.2..4.8).contains(&shrink), "shrink {shrink}");
}

#[test]
fn periodic_lattice_statistics_agree() {
    let a = SignedMeasure::dirac(1.0, -1.0, 1.0).unwrap();
    let base = config(&a, -3.0, 1.0, 0.002, 300, 13);
    let period = 2.0 * std::f64::consts::PI / 1.821_739_823_008_424_5;
    let batch = |k: f64, seed: u64| {
        let mut c = base.clone();
        c.horizon = k * period + 0.7 + 1e-9;
        c.phases = vec![0.7];
        c.seed = seed;
        run_experiment(&c).unwrap()
    };
    let (r6, r10) = (batch(6.0, 13), batch(10.0, 14));
    assert_eq!(r6.regime, Regime::Plamn);
    let info = |r: &sdde_lan::harness::ExperimentResult| r.replicates.iter().map(|x| x.info).collect::<Vec<_>>();
    let (_, p) = ks_two_sample(&info(&r6), &info(&r10)).unwrap();
    assert!(p > 1e-3, "p = {p}");
    assert!((r6.replicates[0].horizon - (6.0 * period + 0.7)).abs() < 0.002);
}

#[test]
fn unclassified_override_is_refused() {
    let mut c = config(&dirac0(), 0.5, 10.0, 0.01, 10, 4);
    c.regime_override = Some(Regime::Unclassified);
    assert!(matches!(run_experiment(&c), Err(Error::Unclassified(_))));
}

#[test]
fn samples_are_identical_across_thread_counts() {
    let mut c = config(&dirac0(), -0.5, 20.0, 0.01, 64, 42);
    c.tests = vec![TestSpec::KsNormal];
    c.n_replicates = 100;
    let csv = |threads: usize| {
        let mut c = c.clone();
        c.threads = Some(threads);
        let result = run_experiment(&c).unwrap();
        let mut out = Vec::new();
        write_samples_csv(&result.replicates, &mut out).unwrap();
        (out, serde_json::to_string(&result.replicates).unwrap(), serde_json::to_string(&result.tests).unwrap())
    };
    assert_eq!(csv(1), csv(3));
}

#[test]
fn seeds_are_recorded_and_reproducible() {
    let result = run_experiment(&config(&dirac0(), -0.5, 5.0, 0.01, 8, 77)).unwrap();
    assert_eq!(result.replicates.len(), 8);
    let first = &result.replicates[3];
    let path = sdde_lan::sim::simulate(
        -0.5,
        &dirac0(),
        &sdde_lan::sim::InitialPath::Zero,
        &sdde_lan::fundamental::Grid::new(1.0, 100, 5.0).unwrap(),
        first.seed,
    )
    .unwrap();
    let pair = sdde_lan::inference::score_and_info(&path, -0.5, 5.0f64.powf(-0.5)).unwrap();
    assert_eq!(pair.delta, first.delta);
    assert_eq!(pair.info, first.info);
}

#[test]
fn measure_paths_resolve_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), r#"{"r": 1.0, "atoms": [{"u": 0.0, "w": 1.0}]}"#).unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"measure": "m.json", "theta": -0.5, "T": 2.0, "dt": 0.01, "n_replicates": 2, "seed": 1}"#,
    )
    .unwrap();
    let c = ExperimentConfig::load(&dir.path().join("c.json")).unwrap();
    assert!(matches!(c.measure, MeasureSource::Inline(_)));
    assert_eq!(c.build_measure().unwrap().atoms().len(), 1);
}
