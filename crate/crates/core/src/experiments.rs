//! Nonlinear instability experiments: growth and escape of multi-periodic
//! perturbations, Bloch wave packets, and stability-threshold sweeps.

use crate::bloch::{
    bloch_eigenpairs, max_real_part, normalize_phase, rational_k0, scan_bloch, unstable_eigenfunction, BlochOperator,
    BlochSpectrum, GrowthCurve, ScanOptions,
};
use crate::error::{Error, Result};
use crate::evolution::{
    bloch_mode_on_torus, conserved_quantities, lift_wave, orbital_distance, real_part_field, ConservedLedger, Drifts,
    EvolutionState, Evolver, Integrator,
};
use crate::fourier::PeriodicField;
use crate::packet::{bloch_recompose, WavePacket};
use crate::parallel;
use crate::symbols::{ModelSpec, Nonlinearity, SymbolSpec};
use crate::wave::{solve_wave, SeedParams, TravelingWave};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Numerical controls shared by the experiments.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentOptions {
    /// Time step; `None` applies the step rule of the integrator.
    pub dt: Option<f64>,
    /// Runs that have not escaped by this time are reported as incomplete.
    pub t_max: f64,
    /// Steps between snapshots; `None` picks about fifty snapshots per
    /// e-folding time.
    pub snap_every: Option<usize>,
    /// Escape threshold; `None` uses `0.05 ||u_c||_{L^2}` on the run torus
    /// (on `T_{2 pi}` for packets).
    pub theta0: Option<f64>,
    pub scheme: Integrator,
    /// Largest denominator of the rational Bloch parameter.
    pub q_max: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions { dt: None, t_max: 2e5, snap_every: None, theta0: None, scheme: Integrator::Etdrk4, q_max: 8 }
    }
}

/// One row of the time series of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub t: f64,
    pub l2_perturbation: f64,
    pub orbital_distance: f64,
    pub mass_drift: f64,
    pub momentum_drift: f64,
    pub energy_drift: f64,
}

/// Outcome of the evolution from `u_c + delta U_1(0)` for one `delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeRecord {
    pub delta: f64,
    /// Least-squares rate of `log ||U - u_c||` over the growth window.
    pub growth_rate: Option<f64>,
    /// First time the monitored distance reaches `theta0`, interpolated
    /// linearly between snapshots.
    pub escape_time: Option<f64>,
    /// False when the run reached `t_max` without escaping.
    pub escaped: bool,
    pub max_drift: Drifts,
    #[serde(skip)]
    pub series: Vec<TimeSample>,
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits of the linearized packet norm `C e^{lambda0 t} (1 + t)^{-beta}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PacketFit {
    pub band: (f64, f64),
    pub nodes: usize,
    pub eta: f64,
    /// Band order `l` and the exponent `1/l` it predicts.
    pub l: u32,
    pub band_exponent: f64,
    /// `beta` from the `L^2` norm with `lambda0` fixed to the band fit.
    pub l2_exponent: f64,
    /// `beta` from the sup norm with `lambda0` fixed.
    pub sup_exponent: f64,
    /// Rate and exponent fitted jointly from the `L^2` norm.
    pub lambda0_fit: f64,
    pub l2_exponent_joint: f64,
    /// `(t, ||U_1||_{L^2}, ||U_1||_sup)`.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Pass flags against the tolerances of the experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PassFlags {
    /// Every fitted growth rate within 5% of the predicted rate.
    pub growth: bool,
    /// Escape times strictly increase as `delta` decreases.
    pub monotone: bool,
    /// `R^2 >= 0.99` and slope within 10% of `1 / Re lambda`.
    pub scaling: bool,
    /// Packet `L^2` exponent within 20% of `1/l`.
    pub packet: bool,
}

/// Report of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub model: String,
    pub wave: String,
    /// Bloch parameter used, `p / q` for multi-periodic runs.
    pub k0: f64,
    pub p: u64,
    pub q: u64,
    /// Predicted growth rate (`Re lambda(k0)` or the band maximum).
    pub lambda: f64,
    pub theta0: f64,
    pub dt: f64,
    pub deltas: Vec<f64>,
    pub runs: Vec<EscapeRecord>,
    pub regression: Option<Regression>,
    pub packet: Option<PacketFit>,
    pub pass: PassFlags,
}

impl ExperimentReport {
    /// Companion CSV with the time series of every run.
    pub fn write_series_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "delta,t,l2_perturbation,orbital_distance,mass_drift,momentum_drift,energy_drift")?;
        for r in &self.runs {
            for s in &r.series {
                writeln!(
                    w,
                    "{:e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    r.delta, s.t, s.l2_perturbation, s.orbital_distance, s.mass_drift, s.momentum_drift, s.energy_drift
                )?;
            }
        }
        Ok(())
    }

    /// Largest drift of each invariant over all runs.
    pub fn max_drift(&self) -> Drifts {
        self.runs.iter().fold(Drifts { mass: 0.0, momentum: 0.0, energy: 0.0 }, |a, r| Drifts {
            mass: a.mass.max(r.max_drift.mass),
            momentum: a.momentum.max(r.max_drift.momentum),
            energy: a.energy.max(r.max_drift.energy),
        })
    }
}

/// Ordinary least squares with the coefficient of determination.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for a regression")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(Regression { slope, intercept: my - slope * mx, r2 })
}

/// Least squares for `y ~ sum_j c_j basis_j` via the normal equations.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, |r| r.len());
    if rows.len() < p || p == 0 {
        return Err(Error::InsufficientData(format!("{} rows for {p} unknowns", rows.len())));
    }
    let a = faer::Mat::<f64>::from_fn(p, p, |i, j| rows.iter().map(|r| r[i] * r[j]).sum());
    let b = faer::Mat::<f64>::from_fn(p, 1, |i, _| rows.iter().zip(y).map(|(r, v)| r[i] * v).sum());
    use faer::linalg::solvers::Solve;
    let x = a.partial_piv_lu().solve(&b);
    let out: Vec<f64> = (0..p).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("singular least-squares system".into()));
    }
    Ok(out)
}

/// Step rule of the integrator for the wave on `T_{2 pi q}`, capped at 1.
pub fn default_dt(ev_scheme: Integrator, model: &ModelSpec, wave: &TravelingWave, q: usize, n: usize) -> Result<f64> {
    let probe = crate::evolution::Stepper::new(model, wave.speed, q, n, 1.0, ev_scheme)?;
    let sup =
        wave.profile.real_samples(4 * wave.n()).iter().map(|&u| model.nonlinearity.df(u).abs()).fold(0.0, f64::max);
    Ok(probe.recommended_dt(sup).min(1.0))
}

fn growth_fit(series: &[TimeSample], lo: f64, hi: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|s| s.l2_perturbation >= lo && s.l2_perturbation <= hi)
        .map(|s| (s.t, s.l2_perturbation.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    linear_regression(&x, &y).ok().map(|r| r.slope)
}

/// Which distance decides the escape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monitor {
    /// Distance to the closest translate of the wave.
    Orbital,
    /// Plain `L^2` distance to the wave.
    Plain,
}

/// Evolution of `base + delta direction` with snapshots and an escape test.
#[derive(Clone, Debug)]
pub struct PerturbedRun<'a> {
    pub model: &'a ModelSpec,
    pub wave: &'a TravelingWave,
    pub base: PeriodicField,
    /// Unit-norm perturbation direction on the run torus.
    pub direction: PeriodicField,
    pub theta0: f64,
    pub dt: f64,
    pub snap_every: usize,
    pub t_max: f64,
    pub scheme: Integrator,
    pub monitor: Monitor,
    /// Stop at the escape time; otherwise run to `t_max`.
    pub stop_on_escape: bool,
}

impl PerturbedRun<'_> {
    /// Runs one member and returns its record and final state.
    pub fn run(&self, delta: f64) -> Result<(EscapeRecord, PeriodicField)> {
        run_one(self, delta)
    }
}

fn run_one(setup: &PerturbedRun, delta: f64) -> Result<(EscapeRecord, PeriodicField)> {
    let st = setup;
    let (q, n) = (st.base.q(), st.base.n());
    let ev = Evolver::nonlinear(st.model, st.wave, q, n, st.dt, st.scheme)?;
    let mut state = EvolutionState { field: st.base.axpy(delta, &st.direction)?, t: 0.0 };
    let mut ledger = ConservedLedger::default();
    let mut series = Vec::new();
    let mut escape = None;
    let mut prev: Option<(f64, f64)> = None;
    let steps_max = (st.t_max / st.dt).ceil() as usize;
    let mut step = 0usize;
    loop {
        let inv = conserved_quantities(st.model, &state.field)?;
        ledger.push(state.t, inv);
        let d = ledger.drift(&inv);
        let pert = state.field.sub(&st.base)?.l2_norm();
        let orb = orbital_distance(&state.field, &st.wave.profile)?.0;
        series.push(TimeSample {
            t: state.t,
            l2_perturbation: pert,
            orbital_distance: orb,
            mass_drift: d.mass,
            momentum_drift: d.momentum,
            energy_drift: d.energy,
        });
        let dist = if st.monitor == Monitor::Orbital { orb } else { pert };
        if escape.is_none() && dist >= st.theta0 {
            escape = Some(match prev {
                Some((t0, d0)) if dist > d0 => t0 + (st.theta0 - d0) / (dist - d0) * (state.t - t0),
                _ => state.t,
            });
            if st.stop_on_escape {
                break;
            }
        }
        prev = Some((state.t, dist));
        if step >= steps_max {
            break;
        }
        for _ in 0..st.snap_every.min(steps_max - step) {
            ev.step(&mut state)?;
            step += 1;
        }
    }
    let growth_rate = growth_fit(&series, 3.0 * delta, st.theta0 / 3.0);
    let record = EscapeRecord {
        delta,
        growth_rate,
        escape_time: escape,
        escaped: escape.is_some(),
        max_drift: ledger.max_drift(),
        series,
    };
    Ok((record, state.field))
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::Domain("perturbation sizes must be positive".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("the delta list must be strictly decreasing".into()));
    }
    Ok(())
}

fn snap_cadence(opts: &ExperimentOptions, rate: f64, dt: f64) -> usize {
    opts.snap_every.unwrap_or_else(|| ((0.02 / (rate.max(1e-12) * dt)).round() as usize).max(1))
}

fn finish_flags(runs: &[EscapeRecord], rate: f64, regression: Option<Regression>) -> PassFlags {
    let growth =
        !runs.is_empty() && runs.iter().all(|r| r.growth_rate.is_some_and(|g| ((g - rate) / rate).abs() <= 0.05));
    let monotone = runs.iter().all(|r| r.escaped)
        && runs.windows(2).all(|w| w[1].escape_time.unwrap_or(0.0) > w[0].escape_time.unwrap_or(0.0));
    let scaling = regression.is_some_and(|r| r.r2 >= 0.99 && ((r.slope * rate) - 1.0).abs() <= 0.10);
    PassFlags { growth, monotone, scaling, packet: false }
}

fn escape_regression(runs: &[EscapeRecord]) -> Option<Regression> {
    let (x, y): (Vec<f64>, Vec<f64>) = runs.iter().filter_map(|r| r.escape_time.map(|t| (-r.delta.ln(), t))).unzip();
    if x.len() < 2 {
        return None;
    }
    linear_regression(&x, &y).ok()
}

/// Distance from the spectral maximum to the nearer edge of its band.
pub fn edge_distance(spec: &BlochSpectrum) -> f64 {
    let h = spec.slices.get(1).map_or(0.01, |s| (s.k - spec.slices[0].k).abs());
    spec.bands
        .iter()
        .find(|b| b.0 - h <= spec.k0 && spec.k0 <= b.1 + h)
        .map(|b| (spec.k0 - (b.0 - h)).max(0.0).min(b.1 + h - spec.k0))
        .unwrap_or(h)
}

/// Multi-periodic nonlinear instability: the perturbation is the most
/// unstable Bloch mode at a rational `k = p / q` near `k0`, lifted to
/// `T_{2 pi q}` and made real. For each `delta`, the flow starts from
/// `u_c + delta U_1(0)` with `||U_1(0)|| = 1` and runs until the orbital
/// distance to the translates of `u_c` reaches `theta0`.
pub fn run_multiperiodic(
    model: &ModelSpec,
    wave: &TravelingWave,
    spectrum: &BlochSpectrum,
    deltas: &[f64],
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    check_deltas(deltas)?;
    let (setup, p, q, lam) = multiperiodic_setup(model, wave, spectrum, opts)?;
    let runs = parallel::map(deltas, |&d| setup.run(d).map(|r| r.0)).into_iter().collect::<Result<Vec<_>>>()?;
    let regression = escape_regression(&runs);
    let pass = finish_flags(&runs, lam, regression);
    Ok(ExperimentReport {
        kind: "multiperiodic".into(),
        model: model.id(),
        wave: format!("c={:.17e},a={:.17e}", wave.speed, wave.amplitude),
        k0: p as f64 / q as f64,
        p,
        q,
        lambda: lam,
        theta0: setup.theta0,
        dt: setup.dt,
        deltas: deltas.to_vec(),
        runs,
        regression,
        packet: None,
        pass,
    })
}

/// The run used by [`run_multiperiodic`]: rational `k = p / q` with
/// tolerance half the distance from `k0` to the band edge, the unit-norm
/// real Bloch mode on `T_{2 pi q}` and the default threshold and step.
/// Also returns `p`, `q` and `Re lambda(p / q)`.
pub fn multiperiodic_setup<'a>(
    model: &'a ModelSpec,
    wave: &'a TravelingWave,
    spectrum: &BlochSpectrum,
    opts: &ExperimentOptions,
) -> Result<(PerturbedRun<'a>, u64, u64, f64)> {
    if !spectrum.is_unstable() {
        return Err(Error::Stable { k: spectrum.k0, max_re: spectrum.lambda0 });
    }
    let (p, q) = rational_k0(spectrum.k0, 0.5 * edge_distance(spectrum), opts.q_max)?;
    let k = p as f64 / q as f64;
    let (lam, profile) = unstable_eigenfunction(model, wave, k, None, spectrum.threshold)?;
    let qs = q as usize;
    let n = qs * wave.n();
    let v = bloch_mode_on_torus(&profile, p as i64, qs, n)?;
    let mut direction = real_part_field(&v)?;
    direction = direction.scale(1.0 / direction.l2_norm());
    let base = lift_wave(wave, qs, n)?;
    let theta0 = opts.theta0.unwrap_or(0.05 * base.l2_norm());
    let dt = match opts.dt {
        Some(dt) => dt,
        None => default_dt(opts.scheme, model, wave, qs, n)?,
    };
    let setup = PerturbedRun {
        model,
        wave,
        base,
        direction,
        theta0,
        dt,
        snap_every: snap_cadence(opts, lam.re, dt),
        t_max: opts.t_max,
        scheme: opts.scheme,
        monitor: Monitor::Orbital,
        stop_on_escape: true,
    };
    Ok((setup, p, q, lam.re))
}

/// Controls of the packet experiment.
#[derive(Clone, Copy, Debug)]
pub struct PacketOptions {
    /// Length of the linear phase; `None` uses `40 / lambda0`.
    pub t_linear: Option<f64>,
    /// Fit window `[fraction t_linear, t_linear]`.
    pub fit_fraction: f64,
    /// Number of sampled times in the linear phase.
    pub samples: usize,
    /// Relative drop of `Re lambda` across the band `[k0 - eta, k0]`.
    pub drop: f64,
}

impl Default for PacketOptions {
    fn default() -> Self {
        PacketOptions { t_linear: None, fit_fraction: 0.25, samples: 64, drop: 0.1 }
    }
}

/// Half-width `eta` of the packet band, shrunk until
/// `Re lambda(k0 - eta) >= (1 - drop) lambda0`.
pub fn packet_eta(op: &BlochOperator, band: &GrowthCurve, drop: f64) -> Result<f64> {
    let mut eta = (drop * band.lambda0 / band.a_fit).powf(1.0 / band.l as f64).min(band.k0);
    for _ in 0..40 {
        if max_real_part(op, band.k0 - eta)? >= (1.0 - drop) * band.lambda0 {
            return Ok(eta);
        }
        eta *= 0.9;
    }
    Err(Error::Window("no packet band keeps Re lambda above the requested level".into()))
}

/// Rough envelope width of the packet at time `t`: the initial width
/// `2 pi / eta` plus dispersive spreading with the group-velocity
/// dispersion at `k0`, applied to the band narrowed by the growth filter.
fn envelope_width(eta: f64, a_fit: f64, l: u32, omega2: f64, t: f64) -> f64 {
    let eff = if t > 0.0 { eta.min((1.0 / (a_fit * t)).powf(1.0 / l as f64)) } else { eta };
    2.0 * PI / eta + omega2.abs() * eff * t
}

/// Localized instability on `T_{2 pi Q}`: a Bloch wave packet over
/// `[k0 - eta, k0]`, evolved first under the linearized flow (one Bloch
/// component at a time, which is exact for a linear flow with periodic
/// coefficients) and then, for each `delta`, under the nonlinear flow with
/// the plain distance `||U - u_c||` deciding the escape.
pub fn run_localized(
    model: &ModelSpec,
    wave: &TravelingWave,
    band: &GrowthCurve,
    big_q: usize,
    deltas: &[f64],
    opts: &ExperimentOptions,
    popts: &PacketOptions,
) -> Result<ExperimentReport> {
    if !deltas.is_empty() {
        check_deltas(deltas)?;
    }
    let op = BlochOperator::new(model, wave, None)?;
    let eta = packet_eta(&op, band, popts.drop)?;
    let n_cell = wave.n();
    let packet = WavePacket::midpoint(band.k0 - eta, band.k0, big_q, |k| {
        let pairs = bloch_eigenpairs(&op, k)?;
        let (_, v) = pairs.into_iter().next().ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
        Ok(normalize_phase(&op.to_field(&v, n_cell)?))
    })?;
    let t_lin = popts.t_linear.unwrap_or(40.0 / band.lambda0);
    if packet.nodes.len() > 1 {
        let h = 1e-3 * eta;
        let im = |k: f64| -> Result<f64> { Ok(crate::bloch::bloch_eigenvalues(&op, k)?[0].im) };
        let omega2 = (im(band.k0 + h)? - 2.0 * im(band.k0)? + im(band.k0 - h)?) / (h * h);
        let t_end = if deltas.is_empty() { t_lin } else { t_lin.max(opts.t_max) };
        let width = envelope_width(eta, band.a_fit, band.l, omega2, t_end);
        let period = 2.0 * PI * big_q as f64;
        if period < 6.0 * width {
            return Err(Error::DomainTooSmall {
                message: format!(
                    "packet envelope width {width:.1} reaches its periodic image on a torus of length {period:.1}"
                ),
                suggested_q: (6.0 * width / (2.0 * PI)).ceil() as usize,
            });
        }
    }
    let dt = match opts.dt {
        Some(dt) => dt,
        None => default_dt(opts.scheme, model, wave, 1, n_cell)?,
    };
    // Linear phase, node by node.
    let sample_steps: Vec<usize> = {
        let total = (t_lin / dt).round() as usize;
        let m = popts.samples.max(2);
        let mut v: Vec<usize> = (0..=m).map(|i| i * total / m).collect();
        v.dedup();
        v
    };
    let node_runs = parallel::map(&(0..packet.nodes.len()).collect::<Vec<_>>(), |&j| -> Result<Vec<PeriodicField>> {
        let k = packet.nodes[j];
        let ev = Evolver::linearized_bloch(model, wave, 1, n_cell, dt, opts.scheme, k)?;
        let mut state = EvolutionState { field: packet.profiles[j].scale(packet.weights[j]), t: 0.0 };
        let mut out = Vec::with_capacity(sample_steps.len());
        let mut done = 0usize;
        for &s in &sample_steps {
            for _ in done..s {
                ev.step(&mut state)?;
            }
            done = s;
            out.push(state.field.clone());
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n_big = big_q * n_cell;
    let mut samples = Vec::with_capacity(sample_steps.len());
    for (i, &s) in sample_steps.iter().enumerate() {
        let t = s as f64 * dt;
        // Distinct Bloch components are orthogonal on T_{2 pi Q} and the
        // real packet is the component sum plus its conjugate.
        let l2 = (2.0 * big_q as f64 * node_runs.iter().map(|r| r[i].l2_norm().powi(2)).sum::<f64>()).sqrt();
        let parts: Vec<(f64, PeriodicField)> =
            packet.nodes.iter().zip(&node_runs).map(|(&k, r)| (k, r[i].clone())).collect();
        let field = bloch_recompose(&parts, big_q, n_big, false)?;
        let real = real_part_field(&field)?;
        samples.push((t, l2, real.sup_norm(2 * n_big)));
    }
    let fit_from = popts.fit_fraction * t_lin;
    let window: Vec<&(f64, f64, f64)> = samples.iter().filter(|s| s.0 >= fit_from && s.0 > 0.0).collect();
    let exponent = |pick: fn(&(f64, f64, f64)) -> f64| -> Result<f64> {
        let x: Vec<f64> = window.iter().map(|s| -(1.0 + s.0).ln()).collect();
        let y: Vec<f64> = window.iter().map(|s| pick(s).ln() - band.lambda0 * s.0).collect();
        Ok(linear_regression(&x, &y)?.slope)
    };
    let l2_exponent = exponent(|s| s.1)?;
    let sup_exponent = exponent(|s| s.2)?;
    let rows: Vec<Vec<f64>> = window.iter().map(|s| vec![1.0, s.0 / t_lin, -(1.0 + s.0).ln()]).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.1.ln()).collect();
    let joint = least_squares(&rows, &ys)?;
    let band_exponent = 1.0 / band.l as f64;
    let fit = PacketFit {
        band: packet.band,
        nodes: packet.nodes.len(),
        eta,
        l: band.l,
        band_exponent,
        l2_exponent,
        sup_exponent,
        lambda0_fit: joint[1] / t_lin,
        l2_exponent_joint: joint[2],
        samples,
    };
    // Nonlinear phase.
    let base = lift_wave(wave, big_q, n_big)?;
    let theta0 = opts.theta0.unwrap_or(0.05 * wave.profile.l2_norm());
    let mut runs = Vec::new();
    if !deltas.is_empty() {
        let parts: Vec<(f64, PeriodicField)> = packet
            .nodes
            .iter()
            .zip(packet.profiles.iter().zip(&packet.weights))
            .map(|(&k, (v, &w))| (k, v.scale(w)))
            .collect();
        let mut direction = real_part_field(&bloch_recompose(&parts, big_q, n_big, false)?)?;
        direction = direction.scale(1.0 / direction.l2_norm());
        let dt_nl = match opts.dt {
            Some(dt) => dt,
            None => default_dt(opts.scheme, model, wave, big_q, n_big)?,
        };
        let setup = PerturbedRun {
            model,
            wave,
            base,
            direction,
            theta0,
            dt: dt_nl,
            snap_every: snap_cadence(opts, band.lambda0, dt_nl),
            t_max: opts.t_max,
            scheme: opts.scheme,
            monitor: Monitor::Plain,
            stop_on_escape: true,
        };
        runs = parallel::map(deltas, |&d| setup.run(d).map(|r| r.0)).into_iter().collect::<Result<Vec<_>>>()?;
    }
    let regression = escape_regression(&runs);
    let mut pass = finish_flags(&runs, band.lambda0, regression);
    pass.packet = ((fit.l2_exponent - band_exponent) / band_exponent).abs() <= 0.2;
    Ok(ExperimentReport {
        kind: "localized".into(),
        model: model.id(),
        wave: format!("c={:.17e},a={:.17e}", wave.speed, wave.amplitude),
        k0: band.k0,
        p: 0,
        q: big_q as u64,
        lambda: band.lambda0,
        theta0,
        dt,
        deltas: deltas.to_vec(),
        runs,
        regression,
        packet: Some(fit),
        pass,
    })
}

/// One-parameter families for the threshold sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SweepFamily {
    /// Fractional KdV `alpha = |xi|^m`, `f = -u^p`, about the mean `b`;
    /// the swept parameter is `p`.
    FractionalPower { m: f64, b: f64 },
    /// BBM with `alpha = 1 + m^2 xi^2`; the swept parameter is `m`.
    Bbm,
}

impl SweepFamily {
    pub fn model(&self, param: f64) -> Result<ModelSpec> {
        match *self {
            SweepFamily::FractionalPower { m, .. } => {
                ModelSpec::kdv_type(SymbolSpec::fractional(m)?, Nonlinearity::minus_power(param)?)
            }
            SweepFamily::Bbm => ModelSpec::bbm(param),
        }
    }

    pub fn background(&self) -> f64 {
        match *self {
            SweepFamily::FractionalPower { b, .. } => b,
            SweepFamily::Bbm => 0.0,
        }
    }

    pub fn parameter_name(&self) -> &'static str {
        match self {
            SweepFamily::FractionalPower { .. } => "p",
            SweepFamily::Bbm => "m",
        }
    }

    /// Closed-form threshold of the family for small amplitude.
    pub fn predicted_threshold(&self) -> Option<f64> {
        match *self {
            SweepFamily::FractionalPower { m, .. } => {
                let t = 2f64.powf(m);
                let den = 2.0 + t * (m - 1.0);
                (den != 0.0).then(|| (t * (3.0 + m) - 4.0 - 2.0 * m) / den)
            }
            SweepFamily::Bbm => Some(3f64.sqrt()),
        }
    }
}

/// Sweep controls.
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub amplitude: f64,
    pub n: usize,
    pub scan: ScanOptions,
    pub bisection_steps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { amplitude: 0.02, n: 64, scan: ScanOptions::default(), bisection_steps: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    /// The wave or the scan failed at this point.
    Indeterminate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub status: Stability,
    pub lambda0: f64,
    pub k0: f64,
    pub note: Option<String>,
}

/// Sampled stability along the family and the bracketed boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub family: SweepFamily,
    pub parameter: String,
    pub amplitude: f64,
    pub points: Vec<SweepPoint>,
    /// Final bracket `(stable side, unstable side)` of the first change of
    /// stability along the grid.
    pub bracket: Option<(f64, f64)>,
    pub boundary: Option<f64>,
    pub predicted: Option<f64>,
}

impl BoundaryCurve {
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},status,lambda0,k0", self.parameter)?;
        let mut pts: Vec<&SweepPoint> = self.points.iter().collect();
        pts.sort_by(|a, b| a.param.total_cmp(&b.param));
        for p in pts {
            let s = match p.status {
                Stability::Stable => "stable",
                Stability::Unstable => "unstable",
                Stability::Indeterminate => "indeterminate",
            };
            writeln!(w, "{:.17e},{s},{:.17e},{:.17e}", p.param, p.lambda0, p.k0)?;
        }
        Ok(())
    }
}

fn classify_point(family: &SweepFamily, param: f64, opts: &SweepOptions) -> SweepPoint {
    let attempt = || -> Result<BlochSpectrum> {
        let model = family.model(param)?;
        let wave = solve_wave(&model, SeedParams { a: opts.amplitude, b: family.background() }, opts.n)?;
        scan_bloch(&model, &wave, &opts.scan)
    };
    match attempt() {
        Ok(s) => SweepPoint {
            param,
            status: if s.lambda0 > opts.scan.threshold { Stability::Unstable } else { Stability::Stable },
            lambda0: s.lambda0,
            k0: s.k0,
            note: None,
        },
        Err(e) => SweepPoint {
            param,
            status: Stability::Indeterminate,
            lambda0: f64::NAN,
            k0: f64::NAN,
            note: Some(e.to_string()),
        },
    }
}

/// Classifies every grid point (in parallel), then bisects the first
/// adjacent pair of determinate points with different stability.
/// Indeterminate points are recorded and skipped.
pub fn threshold_sweep(family: SweepFamily, grid: &[f64], opts: &SweepOptions) -> Result<BoundaryCurve> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("the sweep grid needs at least two increasing values".into()));
    }
    let mut points = parallel::map(grid, |&p| classify_point(&family, p, opts));
    let det: Vec<&SweepPoint> = points.iter().filter(|p| p.status != Stability::Indeterminate).collect();
    let pair = det.windows(2).find(|w| w[0].status != w[1].status).map(|w| (w[0].clone(), w[1].clone()));
    let mut bracket = None;
    if let Some((a, b)) = pair {
        let (mut stable, mut unstable) =
            if a.status == Stability::Stable { (a.param, b.param) } else { (b.param, a.param) };
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (stable + unstable);
            let pt = classify_point(&family, mid, opts);
            let status = pt.status;
            points.push(pt);
            match status {
                Stability::Stable => stable = mid,
                Stability::Unstable => unstable = mid,
                Stability::Indeterminate => break,
            }
        }
        bracket = Some((stable, unstable));
    }
    Ok(BoundaryCurve {
        family,
        parameter: family.parameter_name().into(),
        amplitude: opts.amplitude,
        points,
        bracket,
        boundary: bracket.map(|(s, u)| 0.5 * (s + u)),
        predicted: family.predicted_threshold(),
    })
}
