use modulon::bloch::{
    default_window, fit_band, max_real_part, scan_bloch, BlochOperator, BlochSlice, BlochSpectrum, ScanOptions,
};
use modulon::evolution::{lift_wave, Integrator};
use modulon::experiments::{
    default_dt, edge_distance, linear_regression, packet_eta, run_multiperiodic, threshold_sweep, ExperimentOptions,
    Monitor, PerturbedRun, Stability, SweepFamily, SweepOptions,
};
use modulon::wave::{solve_wave, SeedParams};
use modulon::{Error, ModelSpec, PeriodicField, TravelingWave};
use num_complex::Complex64;
use proptest::prelude::*;

fn bbm(n: usize) -> (ModelSpec, TravelingWave) {
    let model = ModelSpec::bbm(2.0).unwrap();
    let wave = solve_wave(&model, SeedParams { a: 0.05, b: 0.0 }, n).unwrap();
    (model, wave)
}

fn synthetic_spectrum(ks: &[f64], k0: f64, bands: Vec<(f64, f64)>) -> BlochSpectrum {
    let slices = ks
        .iter()
        .map(|&k| BlochSlice {
            k,
            eigenvalues: vec![],
            max_re: 0.0,
            hamiltonian_defect: 0.0,
            unstable_dim: 0,
            stable_dim: 0,
            negative_index: 0,
        })
        .collect();
    BlochSpectrum {
        model: "test".into(),
        speed: 0.0,
        slices,
        lambda0: 1.0,
        k0,
        lambda_k0: (1.0, 0.0),
        bands,
        threshold: 1e-8,
    }
}

#[test]
fn regression_on_an_exact_line() {
    let x = [0.0, 1.0, 2.0, 3.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let r = linear_regression(&x, &y).unwrap();
    assert!((r.slope - 2.0).abs() < 1e-15 && (r.intercept - 1.0).abs() < 1e-15);
    assert_eq!(r.r2, 1.0);
}

#[test]
fn regression_with_noise() {
    // Hand-computed: slope 0.6, intercept 2.2, r^2 = 0.36 / 0.6 = 0.6.
    let r = linear_regression(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
    assert!((r.slope - 0.6).abs() < 1e-14);
    assert!((r.intercept - 2.2).abs() < 1e-14);
    assert!((r.r2 - 0.6).abs() < 1e-14);
    assert!(matches!(linear_regression(&[1.0], &[1.0]), Err(Error::InsufficientData(_))));
    assert!(matches!(linear_regression(&[1.0, 1.0], &[0.0, 2.0]), Err(Error::Degenerate(_))));
    assert!(linear_regression(&[1.0, 2.0], &[0.0]).is_err());
}

#[test]
fn edge_distance_uses_the_enclosing_band() {
    let ks: Vec<f64> = (0..=10).map(|j| 0.05 * j as f64).collect();
    let spec = synthetic_spectrum(&ks, 0.2, vec![(0.1, 0.4)]);
    // Band edges widen by one grid step: [0.05, 0.45].
    assert!((edge_distance(&spec) - 0.15).abs() < 1e-12);
    let lone = synthetic_spectrum(&ks, 0.2, vec![]);
    assert!((edge_distance(&lone) - 0.05).abs() < 1e-12);
}

#[test]
fn closed_form_thresholds() {
    assert_eq!(SweepFamily::Bbm.predicted_threshold(), Some(3f64.sqrt()));
    let frac = SweepFamily::FractionalPower { m: 2.0, b: 0.1 };
    assert!((frac.predicted_threshold().unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(frac.parameter_name(), "p");
    assert_eq!(frac.background(), 0.1);
    assert_eq!(SweepFamily::Bbm.parameter_name(), "m");
    assert!(frac.model(0.5).is_err());
}

#[test]
fn bbm_sweep_brackets_the_threshold() {
    let opts = SweepOptions {
        n: 32,
        scan: ScanOptions { k_max: 0.25, count: 32, ..ScanOptions::default() },
        bisection_steps: 4,
        ..SweepOptions::default()
    };
    let curve = threshold_sweep(SweepFamily::Bbm, &[1.5, 1.95], &opts).unwrap();
    let (stable, unstable) = curve.bracket.unwrap();
    assert!(stable < 3f64.sqrt() + 0.03 && unstable > 3f64.sqrt() - 0.03, "{stable} {unstable}");
    assert!((stable - unstable).abs() <= 0.45 / 16.0 + 1e-12);
    assert_eq!(curve.points.len(), 2 + 4);
    assert_eq!(curve.points[0].status, Stability::Stable);
    assert_eq!(curve.points[1].status, Stability::Unstable);

    let mut csv = Vec::new();
    curve.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let rows: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(text.starts_with("m,status,lambda0,k0\n"));
    assert!(rows.windows(2).all(|w| w[0] < w[1]));

    assert!(threshold_sweep(SweepFamily::Bbm, &[1.5], &opts).is_err());
    assert!(threshold_sweep(SweepFamily::Bbm, &[1.9, 1.5], &opts).is_err());
}

#[test]
fn failed_points_are_indeterminate() {
    let opts = SweepOptions { n: 32, bisection_steps: 0, ..SweepOptions::default() };
    let curve = threshold_sweep(SweepFamily::FractionalPower { m: 2.0, b: 0.1 }, &[0.5, 0.9], &opts).unwrap();
    assert!(curve.points.iter().all(|p| p.status == Stability::Indeterminate && p.note.is_some()));
    assert!(curve.bracket.is_none() && curve.boundary.is_none());
}

#[test]
fn multiperiodic_run_grows_at_the_bloch_rate() {
    let (model, wave) = bbm(16);
    let spec = scan_bloch(&model, &wave, &ScanOptions { count: 32, ..ScanOptions::default() }).unwrap();
    let report = run_multiperiodic(&model, &wave, &spec, &[1e-3, 1e-4], &ExperimentOptions::default()).unwrap();
    assert_eq!((report.p, report.q), (1, 8));
    assert!(report.runs.iter().all(|r| r.escaped));
    assert!(report.pass.growth && report.pass.monotone);
    let (t1, t2) = (report.runs[0].escape_time.unwrap(), report.runs[1].escape_time.unwrap());
    // One decade of delta costs ln(10) / Re lambda.
    let predicted = 10f64.ln() / report.lambda;
    assert!(((t2 - t1) / predicted - 1.0).abs() < 0.1, "{} vs {predicted}", t2 - t1);
    assert!(report.max_drift().mass < 1e-12);

    let mut csv = Vec::new();
    report.write_series_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let total: usize = report.runs.iter().map(|r| r.series.len()).sum();
    assert_eq!(text.lines().count(), 1 + total);

    let opts = ExperimentOptions::default();
    assert!(run_multiperiodic(&model, &wave, &spec, &[1e-4, 1e-3], &opts).is_err());
    assert!(run_multiperiodic(&model, &wave, &spec, &[0.0], &opts).is_err());
    let flat = TravelingWave::constant_state(&model, 0.0, 0.2, 16).unwrap();
    let stable = scan_bloch(&model, &flat, &ScanOptions { count: 8, ..ScanOptions::default() }).unwrap();
    assert!(matches!(run_multiperiodic(&model, &flat, &stable, &[1e-3], &opts), Err(Error::Stable { .. })));
}

#[test]
fn unperturbed_run_never_escapes() {
    let (model, wave) = bbm(16);
    let base = lift_wave(&wave, 1, 16).unwrap();
    let direction =
        PeriodicField::from_modes(1, 16, true, |m| Complex64::new(if m.abs() == 2 { 0.5 } else { 0.0 }, 0.0)).unwrap();
    let direction = direction.scale(1.0 / direction.l2_norm());
    let dt = default_dt(Integrator::Etdrk4, &model, &wave, 1, 16).unwrap();
    assert!(dt > 0.0 && dt <= 1.0);
    let run = PerturbedRun {
        model: &model,
        wave: &wave,
        base,
        direction,
        theta0: 0.5,
        dt,
        snap_every: 10,
        t_max: 50.0,
        scheme: Integrator::Etdrk4,
        monitor: Monitor::Plain,
        stop_on_escape: false,
    };
    let (rec, _) = run.run(0.0).unwrap();
    assert!(!rec.escaped && rec.escape_time.is_none());
    assert!(rec.series.iter().all(|s| s.l2_perturbation < 1e-9));
    let last = rec.series.last().unwrap();
    assert!(last.t >= 50.0 - 1e-9);
}

#[test]
fn packet_band_keeps_the_rate_high() {
    let (model, wave) = bbm(16);
    let spec = scan_bloch(&model, &wave, &ScanOptions::default()).unwrap();
    let op = BlochOperator::new(&model, &wave, None).unwrap();
    let band = fit_band(&op, spec.k0, default_window(&spec), 17).unwrap();
    let eta = packet_eta(&op, &band, 0.1).unwrap();
    assert!(eta > 0.0 && eta <= band.k0);
    assert!(max_real_part(&op, band.k0 - eta).unwrap() >= 0.9 * band.lambda0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regression_recovers_random_lines(
        slope in -5.0f64..5.0,
        intercept in -5.0f64..5.0,
        xs in prop::collection::vec(-10.0f64..10.0, 3..20),
    ) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
        let r = linear_regression(&xs, &ys).unwrap();
        prop_assert!((r.slope - slope).abs() < 1e-9);
        prop_assert!((r.intercept - intercept).abs() < 1e-8);
        prop_assert!(r.r2 <= 1.0 && (r.r2 > 0.999_999 || slope.abs() < 1e-6));
    }
}
