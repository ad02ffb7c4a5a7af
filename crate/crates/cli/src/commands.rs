//! The subcommands. Each one builds the files it produces in memory and
//! hands them back; nothing touches the disk until the command succeeded.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Outputs, Provenance};
use modulon::bloch::{
    bloch_eigenpairs, default_window, energy_quotient, fit_band, rational_k0, scan_bloch, BlochOperator, BlochSpectrum,
    SpectrumSummary,
};
use modulon::evolution::lift_wave;
use modulon::experiments::{
    default_dt, edge_distance, multiperiodic_setup, run_localized, run_multiperiodic, threshold_sweep, Monitor,
    PerturbedRun,
};
use modulon::semigroup::{dual_propagator_norm, growth_verdict, PropagatorProbe};
use modulon::symbols::Classification;
use modulon::wave::{solve_wave, wave_residual, SeedParams, WaveSidecar};
use modulon::{Level, ModelSpec, PeriodicField, TravelingWave};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Everything a command needs besides its configuration.
pub struct Inputs<'a> {
    pub wave_file: Option<&'a Path>,
}

fn csv_with_header(
    prov: &Provenance,
    body: impl FnOnce(&mut Vec<u8>) -> modulon::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for line in prov.header_lines() {
        writeln!(buf, "# {line}")?;
    }
    body(&mut buf)?;
    Ok(buf)
}

/// Reads `wave.bin` and its sidecar `wave.json` next to it.
pub fn load_wave(path: &Path, model: &ModelSpec, prov: &mut Provenance) -> Result<TravelingWave, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let (profile, _) = PeriodicField::read_snapshot(&mut bytes.as_slice())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    prov.add_input(&path.display().to_string(), &bytes);
    let side_path = path.with_extension("json");
    let side_bytes = std::fs::read(&side_path)
        .map_err(|e| CliError::Data(format!("cannot read sidecar {}: {e}", side_path.display())))?;
    prov.add_input(&side_path.display().to_string(), &side_bytes);
    let side: serde_json::Value =
        serde_json::from_slice(&side_bytes).map_err(|e| CliError::Data(format!("{}: {e}", side_path.display())))?;
    let field = |k: &str| -> Result<f64, CliError> {
        side.get(k)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| CliError::Data(format!("{}: missing number `{k}`", side_path.display())))
    };
    let stored_model = side
        .get("model")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| CliError::Data(format!("{}: missing `model`", side_path.display())))?;
    if stored_model != model.id() {
        return Err(CliError::Data(format!(
            "wave file is for model {stored_model}, the configuration selects {}",
            model.id()
        )));
    }
    if profile.q() != 1 || !profile.is_real() {
        return Err(CliError::Data("a wave must be a real field on T_{2pi}".into()));
    }
    let constant = field("a")?;
    let mut wave = TravelingWave {
        profile,
        speed: field("c")?,
        constant,
        amplitude: field("amplitude")?,
        residual: 0.0,
        level: Level::Constant(constant),
        converged: true,
        history: Vec::new(),
    };
    wave.residual = wave_residual(model, &wave)?;
    if wave.residual.is_nan() || wave.residual > 1e-6 {
        return Err(CliError::Data(format!(
            "stored wave has residual {:e} in the selected model; wrong file?",
            wave.residual
        )));
    }
    Ok(wave)
}

fn obtain_wave(cfg: &RunConfig, inputs: &Inputs, prov: &mut Provenance) -> Result<TravelingWave, CliError> {
    match inputs.wave_file {
        Some(p) => load_wave(p, &cfg.model, prov),
        None => Ok(solve_wave(&cfg.model, SeedParams { a: cfg.a, b: cfg.b }, cfg.n)?),
    }
}

pub fn cmd_wave(cfg: &RunConfig, prov: &Provenance) -> Result<Outputs, CliError> {
    let wave = solve_wave(&cfg.model, SeedParams { a: cfg.a, b: cfg.b }, cfg.n)?;
    let mut out = Outputs::default();
    let mut bin = Vec::new();
    wave.profile.write_snapshot(&mut bin, &prov.compact())?;
    out.add("wave.bin", bin);
    out.add_json("wave.json", &WaveSidecar::new(&cfg.model, &wave)?, prov)?;
    let lines = prov.header_lines();
    let mut csv = Vec::new();
    wave.profile.write_spectrum_csv(&mut csv, &lines)?;
    out.add("wave_modes.csv", csv);
    Ok(out)
}

fn summarize(cfg: &RunConfig, wave: &TravelingWave, spec: &BlochSpectrum) -> Result<SpectrumSummary, CliError> {
    let mut summary = SpectrumSummary {
        lambda0: spec.lambda0,
        k0: spec.k0,
        p: None,
        q: None,
        bands: spec.bands.clone(),
        l: None,
        a_fit: None,
    };
    if spec.is_unstable() {
        if let Ok((p, q)) = rational_k0(spec.k0, 0.5 * edge_distance(spec), cfg.experiment.q_max) {
            summary.p = Some(p);
            summary.q = Some(q);
        }
        let op = BlochOperator::new(&cfg.model, wave, cfg.scan.n_bloch)?;
        if let Ok(fit) = fit_band(&op, spec.k0, default_window(spec), cfg.fit_samples) {
            summary.l = Some(fit.l as f64);
            summary.a_fit = Some(fit.a_fit);
        }
    }
    Ok(summary)
}

pub fn cmd_spectrum(cfg: &RunConfig, inputs: &Inputs, prov: &mut Provenance) -> Result<Outputs, CliError> {
    let wave = obtain_wave(cfg, inputs, prov)?;
    let spec = scan_bloch(&cfg.model, &wave, &cfg.scan)?;
    let summary = summarize(cfg, &wave, &spec)?;
    let mut out = Outputs::default();
    let lines = prov.header_lines();
    let mut csv = Vec::new();
    spec.write_csv(&mut csv, &lines)?;
    out.add("spectrum.csv", csv);
    out.add_json("spectrum.json", &summary, prov)?;
    Ok(out)
}

#[derive(Serialize)]
struct Verdict {
    s: f64,
    slope: f64,
    lambda0: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerdictBundle {
    k: f64,
    lambda0: f64,
    verdicts: Vec<Verdict>,
    /// Norm of the propagator at t = 0 (must be 1).
    initial_norm: f64,
    duality_mismatch: f64,
    hamiltonian_defect: f64,
    counts_consistent: bool,
    energy_quotient: Option<f64>,
    pass: bool,
}

fn signed_order(model: &ModelSpec) -> f64 {
    match model.symbol.classify() {
        Classification::Differential(m) => m,
        Classification::Smoothing(m) => -m,
    }
}

pub fn cmd_verify(cfg: &RunConfig, inputs: &Inputs, prov: &mut Provenance) -> Result<Outputs, CliError> {
    let wave = obtain_wave(cfg, inputs, prov)?;
    let spec = scan_bloch(&cfg.model, &wave, &cfg.scan)?;
    let op = BlochOperator::new(&cfg.model, &wave, cfg.scan.n_bloch)?;
    let k = spec.k0;
    let steps = (cfg.verify_t_end / cfg.verify_dt).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.verify_dt).collect();
    let svals = [-1.0, 0.0, 0.5 * signed_order(&cfg.model)];
    let probes = modulon::parallel::map(&svals, |&s| PropagatorProbe::measure(&op, k, s, &grid))
        .into_iter()
        .collect::<modulon::Result<Vec<_>>>()?;
    let mut verdicts = Vec::new();
    for p in &probes {
        let v = growth_verdict(p, spec.lambda0, 0.05)?;
        verdicts.push(Verdict { s: p.s, slope: v.slope, lambda0: v.lambda0, pass: v.pass });
    }
    let (_, mismatch) = dual_propagator_norm(&op, k, 10.0)?;
    let quotient = if spec.is_unstable() {
        let pairs = bloch_eigenpairs(&op, k)?;
        Some(energy_quotient(&op, k, &pairs[0].1)?)
    } else {
        None
    };
    let initial_norm = probes[0].norms[0];
    let pass = verdicts.iter().all(|v| v.pass)
        && mismatch <= 1e-8
        && spec.max_hamiltonian_defect() <= 1e-8
        && spec.counts_consistent()
        && quotient.is_none_or(|q| q < 1e-6)
        && (initial_norm - 1.0).abs() <= 1e-12;
    let bundle = VerdictBundle {
        k,
        lambda0: spec.lambda0,
        verdicts,
        initial_norm,
        duality_mismatch: mismatch,
        hamiltonian_defect: spec.max_hamiltonian_defect(),
        counts_consistent: spec.counts_consistent(),
        energy_quotient: quotient,
        pass,
    };
    let mut out = Outputs::default();
    let csv = csv_with_header(prov, |buf| {
        writeln!(buf, "k,s,t,norm")?;
        for p in &probes {
            p.write_csv(buf)?;
        }
        Ok(())
    })?;
    out.add("probe.csv", csv);
    out.add_json("verdicts.json", &bundle, prov)?;
    Ok(out)
}

#[derive(Serialize)]
struct EvolveSummary {
    delta: f64,
    dt: f64,
    t_end: f64,
    p: Option<u64>,
    q: u64,
    growth_rate: Option<f64>,
    predicted_rate: Option<f64>,
    theta0: f64,
    escape_time: Option<f64>,
    max_mass_drift: f64,
    max_momentum_drift: f64,
    max_energy_drift: f64,
}

pub fn cmd_evolve(cfg: &RunConfig, inputs: &Inputs, prov: &mut Provenance) -> Result<Outputs, CliError> {
    let wave = obtain_wave(cfg, inputs, prov)?;
    let spec = scan_bloch(&cfg.model, &wave, &cfg.scan)?;
    let mut opts = cfg.experiment;
    opts.t_max = cfg.evolve_t_end;
    opts.dt = cfg.evolve_dt;
    let (mut run, p, q, rate) = if spec.is_unstable() {
        let (run, p, q, rate) = multiperiodic_setup(&cfg.model, &wave, &spec, &opts)?;
        (run, Some(p), q, Some(rate))
    } else {
        // A stable wave: perturb along the first Fourier mode.
        let base = lift_wave(&wave, 1, wave.n())?;
        let n = wave.n();
        let samples: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let mut direction = PeriodicField::from_real_samples(1, n, &samples)?;
        direction = direction.scale(1.0 / direction.l2_norm());
        let dt = match opts.dt {
            Some(dt) => dt,
            None => default_dt(opts.scheme, &cfg.model, &wave, 1, wave.n())?,
        };
        let theta0 = opts.theta0.unwrap_or(0.05 * base.l2_norm());
        let run = PerturbedRun {
            model: &cfg.model,
            wave: &wave,
            base,
            direction,
            theta0,
            dt,
            snap_every: 1,
            t_max: opts.t_max,
            scheme: opts.scheme,
            monitor: Monitor::Orbital,
            stop_on_escape: false,
        };
        (run, None, 1, None)
    };
    run.stop_on_escape = false;
    run.snap_every = cfg.snap_every.unwrap_or_else(|| ((cfg.evolve_t_end / run.dt / 200.0).round() as usize).max(1));
    let (record, final_field) = run.run(cfg.delta)?;
    let summary = EvolveSummary {
        delta: cfg.delta,
        dt: run.dt,
        t_end: record.series.last().map_or(0.0, |s| s.t),
        p,
        q,
        growth_rate: record.growth_rate,
        predicted_rate: rate,
        theta0: run.theta0,
        escape_time: record.escape_time,
        max_mass_drift: record.max_drift.mass,
        max_momentum_drift: record.max_drift.momentum,
        max_energy_drift: record.max_drift.energy,
    };
    let mut out = Outputs::default();
    let csv = csv_with_header(prov, |buf| {
        writeln!(buf, "t,l2_perturbation,orbital_distance,mass_drift,momentum_drift,energy_drift")?;
        for s in &record.series {
            writeln!(
                buf,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.t, s.l2_perturbation, s.orbital_distance, s.mass_drift, s.momentum_drift, s.energy_drift
            )?;
        }
        Ok(())
    })?;
    out.add("evolve.csv", csv);
    let mut bin = Vec::new();
    final_field.write_snapshot(&mut bin, &prov.compact())?;
    out.add("evolve_final.bin", bin);
    out.add_json("evolve.json", &summary, prov)?;
    Ok(out)
}

pub fn cmd_experiment(cfg: &RunConfig, inputs: &Inputs, prov: &mut Provenance) -> Result<Outputs, CliError> {
    let wave = obtain_wave(cfg, inputs, prov)?;
    let spec = scan_bloch(&cfg.model, &wave, &cfg.scan)?;
    let report = match cfg.experiment_kind.as_str() {
        "multiperiodic" => {
            let deltas = cfg.deltas.clone().unwrap_or_else(|| vec![1e-3, 1e-4, 1e-5, 1e-6]);
            run_multiperiodic(&cfg.model, &wave, &spec, &deltas, &cfg.experiment)?
        }
        _ => {
            if !spec.is_unstable() {
                return Err(modulon::Error::Stable { k: spec.k0, max_re: spec.lambda0 }.into());
            }
            let op = BlochOperator::new(&cfg.model, &wave, cfg.scan.n_bloch)?;
            let band = fit_band(&op, spec.k0, default_window(&spec), cfg.fit_samples)?;
            let deltas = cfg.deltas.clone().unwrap_or_default();
            run_localized(&cfg.model, &wave, &band, cfg.big_q, &deltas, &cfg.experiment, &cfg.packet)?
        }
    };
    let name = format!("experiment_{}", report.kind);
    let mut out = Outputs::default();
    let csv = csv_with_header(prov, |buf| report.write_series_csv(buf))?;
    out.add(&format!("{name}.csv"), csv);
    out.add_json(&format!("{name}.json"), &report, prov)?;
    Ok(out)
}

pub fn cmd_sweep(cfg: &RunConfig, prov: &Provenance) -> Result<Outputs, CliError> {
    let curve = threshold_sweep(cfg.sweep_family, &cfg.sweep_grid, &cfg.sweep)?;
    let mut out = Outputs::default();
    let csv = csv_with_header(prov, |buf| curve.write_csv(buf))?;
    out.add("sweep.csv", csv);
    out.add_json("sweep.json", &curve, prov)?;
    Ok(out)
}

/// Files the report looks for, in output order.
const REPORT_INPUTS: &[&str] = &[
    "wave.json",
    "spectrum.json",
    "verdicts.json",
    "evolve.json",
    "experiment_multiperiodic.json",
    "experiment_localized.json",
    "sweep.json",
];

fn fmt_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| format!("{x:.6e}")),
        serde_json::Value::Null => "-".into(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Markdown digest of the JSON outputs found in `dir`.
pub fn cmd_report(dir: &Path, prov: &mut Provenance) -> Result<Outputs, CliError> {
    let mut md = String::from("# modulon report\n\n");
    let mut found = 0;
    for name in REPORT_INPUTS {
        let path = dir.join(name);
        let Ok(bytes) = std::fs::read(&path) else { continue };
        let doc: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let obj = doc.as_object().ok_or_else(|| CliError::Data(format!("{}: not a JSON object", path.display())))?;
        prov.add_input(name, &bytes);
        found += 1;
        md.push_str(&format!("## {name}\n\n| field | value |\n|---|---|\n"));
        for (k, v) in obj {
            if k == "provenance" || v.is_array() && v.as_array().is_some_and(|a| a.len() > 8) {
                continue;
            }
            if let Some(inner) = v.as_object() {
                for (k2, v2) in inner {
                    if !v2.is_array() && !v2.is_object() {
                        md.push_str(&format!("| {k}.{k2} | {} |\n", fmt_value(v2)));
                    }
                }
            } else {
                md.push_str(&format!("| {k} | {} |\n", fmt_value(v)));
            }
        }
        md.push('\n');
    }
    if found == 0 {
        return Err(CliError::Data(format!("no modulon outputs found in {}", dir.display())));
    }
    md.push_str("## provenance\n\n");
    for line in prov.header_lines() {
        md.push_str(&format!("- {line}\n"));
    }
    let mut out = Outputs::default();
    out.add("report.md", md.into_bytes());
    Ok(out)
}
