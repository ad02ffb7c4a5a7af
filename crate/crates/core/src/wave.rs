//! Periodic traveling waves: small-amplitude seeds, Newton refinement in
//! cosine space, amplitude continuation and a few diagnostics.
//!
//! The profile solves `G(u) = a` with
//! `G(u) = M u - c u + f(u)` (KdV type) or `G(u) = c M u - u - f(u)` (BBM),
//! on `T_{2 pi}` in the scaled variable. Unknowns are the cosine coefficients
//! `A_0 .. A_{N/2-1}` of `u = sum A_n cos(n z)` together with `c` and `a`;
//! two scalar constraints close the system.

use crate::error::{Error, Result};
use crate::fourier::{fft_plan, padded_len, PeriodicField};
use crate::symbols::{ModelFamily, ModelSpec, SymbolKind};
use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which quantity selects the member of the branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gauge {
    /// Fix the first cosine coefficient.
    Amplitude(f64),
    /// Fix the speed.
    Speed(f64),
}

/// Second scalar condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Level {
    /// Fix the integration constant `a`.
    Constant(f64),
    /// Fix the mean `A_0`.
    Mean(f64),
    /// `a = b (alpha(0) - c)^2`, the parametrization of the small-amplitude
    /// Whitham family by `b`.
    Family(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub gauge: Gauge,
    pub level: Level,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub update_tol: f64,
    pub residual_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iterations: 50, update_tol: 1e-12, residual_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct TravelingWave {
    /// Real, even profile on `T_{2 pi}`.
    pub profile: PeriodicField,
    pub speed: f64,
    /// Integration constant `a`.
    pub constant: f64,
    /// First cosine coefficient.
    pub amplitude: f64,
    /// Sup norm of `G(u) - a` over the grid.
    pub residual: f64,
    /// Level condition used to compute the wave (reused by continuation).
    pub level: Level,
    pub converged: bool,
    /// Residual after each Newton iteration, starting with the guess.
    pub history: Vec<f64>,
}

impl TravelingWave {
    /// The constant state `u = value` traveling at speed `c`.
    pub fn constant_state(model: &ModelSpec, value: f64, c: f64, n: usize) -> Result<Self> {
        let profile = PeriodicField::from_modes(1, n, true, |m| Complex64::new(if m == 0 { value } else { 0.0 }, 0.0))?;
        let constant = match model.family {
            ModelFamily::KdvType => (model.symbol.eval(0.0) - c) * value + model.nonlinearity.f(value),
            ModelFamily::Bbm => (c * model.symbol.eval(0.0) - 1.0) * value - model.nonlinearity.f(value),
        };
        Ok(TravelingWave {
            profile,
            speed: c,
            constant,
            amplitude: 0.0,
            residual: 0.0,
            level: Level::Constant(constant),
            converged: true,
            history: vec![0.0],
        })
    }

    /// Cosine coefficients `A_n`, `n < N/2`.
    pub fn cosine_coeffs(&self) -> Vec<f64> {
        field_to_cos(&self.profile)
    }

    /// Largest `r_{k+1} / r_k^2` over the tail of the Newton history whose
    /// residuals are above round-off.
    pub fn quadratic_constant(&self) -> Option<f64> {
        let h: Vec<f64> = self.history.iter().copied().filter(|&r| r > 1e-13).collect();
        if h.len() < 3 {
            return None;
        }
        let k = h.len() - 2;
        Some(h[k + 1] / (h[k] * h[k]))
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }
}

/// Parameters of the small-amplitude expansions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedParams {
    /// Amplitude `a` of the leading `cos z` term.
    pub a: f64,
    /// Background parameter `b`.
    pub b: f64,
}

fn cos_to_field(a: &[f64], n: usize) -> Result<PeriodicField> {
    PeriodicField::from_modes(1, n, true, |m| {
        let m = m as usize;
        let v = if m == 0 { a[0] } else { 0.5 * a[m] };
        Complex64::new(v, 0.0)
    })
}

fn field_to_cos(field: &PeriodicField) -> Vec<f64> {
    let h = (field.n() / 2) as i64;
    (0..h).map(|m| if m == 0 { field.mode(0).re } else { (field.mode(m) + field.mode(-m)).re }).collect()
}

/// Residual and Jacobian machinery on one truncation.
struct Collocation<'a> {
    model: &'a ModelSpec,
    n: usize,
    m: usize,
    g: usize,
    diag: Vec<f64>,
}

struct Evaluation {
    /// Cosine residuals `R_n`.
    r: Vec<f64>,
    /// Fourier coefficients of `f'(u)` for `d = 0 .. N-1`.
    gh: Vec<f64>,
}

impl<'a> Collocation<'a> {
    fn new(model: &'a ModelSpec, n: usize) -> Self {
        let factor = model.nonlinearity.pad_factor().max(2.0);
        let m = n / 2;
        let diag = (0..m).map(|j| model.symbol.eval(j as f64)).collect();
        Collocation { model, n, m, g: padded_len(n, factor), diag }
    }

    fn evaluate(&self, a: &[f64], c: f64, konst: f64) -> Evaluation {
        let g = self.g;
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        buf[0] = Complex64::new(a[0], 0.0);
        for j in 1..self.m {
            buf[j] = Complex64::new(0.5 * a[j], 0.0);
            buf[g - j] = buf[j];
        }
        fft_plan(g, false).process(&mut buf);
        let nl = &self.model.nonlinearity;
        let mut fu: Vec<Complex64> = buf.iter().map(|u| Complex64::new(nl.f(u.re), 0.0)).collect();
        let mut du: Vec<Complex64> = buf.iter().map(|u| Complex64::new(nl.df(u.re), 0.0)).collect();
        let fwd = fft_plan(g, true);
        fwd.process(&mut fu);
        fwd.process(&mut du);
        let s = 1.0 / g as f64;
        let sigma = self.model.sigma();
        let mut r = vec![0.0; self.m];
        for j in 0..self.m {
            let fj = if j == 0 { fu[0].re * s } else { 2.0 * fu[j].re * s };
            let lin = match self.model.family {
                ModelFamily::KdvType => self.diag[j] - c,
                ModelFamily::Bbm => c * self.diag[j] - 1.0,
            };
            r[j] = lin * a[j] + sigma * fj - if j == 0 { konst } else { 0.0 };
        }
        let gh = (0..self.n).map(|d| du[d].re * s).collect();
        Evaluation { r, gh }
    }

    /// Sup norm of the residual field `sum R_n cos(n z)`.
    fn residual_sup(&self, r: &[f64]) -> f64 {
        match cos_to_field(r, self.n) {
            Ok(f) => f.real_samples(self.n).iter().fold(0.0, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    fn jacobian(&self, a: &[f64], c: f64, ev: &Evaluation, cons: &Constraints) -> Mat<f64> {
        let m = self.m;
        let sigma = self.model.sigma();
        let gh = &ev.gh;
        let mut jac = Mat::<f64>::zeros(m + 2, m + 2);
        for i in 0..m {
            for j in 0..m {
                let t = if i == 0 {
                    gh[j]
                } else if j == 0 {
                    2.0 * gh[i]
                } else {
                    gh[i.abs_diff(j)] + gh[i + j]
                };
                jac[(i, j)] = sigma * t;
            }
            let (lin, dc) = match self.model.family {
                ModelFamily::KdvType => (self.diag[i] - c, -a[i]),
                ModelFamily::Bbm => (c * self.diag[i] - 1.0, self.diag[i] * a[i]),
            };
            jac[(i, i)] += lin;
            jac[(i, m)] = dc;
        }
        jac[(0, m + 1)] = -1.0;
        match cons.gauge {
            Gauge::Amplitude(_) => jac[(m, 1)] = 1.0,
            Gauge::Speed(_) => jac[(m, m)] = 1.0,
        }
        match cons.level {
            Level::Constant(_) => jac[(m + 1, m + 1)] = 1.0,
            Level::Mean(_) => jac[(m + 1, 0)] = 1.0,
            Level::Family(b) => {
                jac[(m + 1, m + 1)] = 1.0;
                jac[(m + 1, m)] = 2.0 * b * (self.model.symbol.eval(0.0) - c);
            }
        }
        jac
    }

    fn constraint_residuals(&self, a: &[f64], c: f64, konst: f64, cons: &Constraints) -> (f64, f64) {
        let g = match cons.gauge {
            Gauge::Amplitude(v) => a[1] - v,
            Gauge::Speed(v) => c - v,
        };
        let l = match cons.level {
            Level::Constant(v) => konst - v,
            Level::Mean(v) => a[0] - v,
            Level::Family(b) => {
                let d = self.model.symbol.eval(0.0) - c;
                konst - b * d * d
            }
        };
        (g, l)
    }
}

/// Refines `guess` by Newton's method under `constraints`.
pub fn refine_newton(model: &ModelSpec, guess: &TravelingWave, constraints: Constraints) -> Result<TravelingWave> {
    refine_newton_with(model, guess, constraints, NewtonOptions::default())
}

pub fn refine_newton_with(
    model: &ModelSpec,
    guess: &TravelingWave,
    constraints: Constraints,
    opts: NewtonOptions,
) -> Result<TravelingWave> {
    let n = guess.profile.n();
    if guess.profile.q() != 1 {
        return Err(Error::Domain("traveling waves live on T_{2pi} (q = 1)".into()));
    }
    if n < 6 {
        return Err(Error::Domain("truncation too small for a traveling wave".into()));
    }
    let col = Collocation::new(model, n);
    let m = col.m;
    // Even part of the guess: the translation gauge.
    let mut a = field_to_cos(&guess.profile);
    let mut c = guess.speed;
    let mut konst = guess.constant;
    let merit = |a: &[f64], c: f64, konst: f64| -> (f64, f64, Evaluation) {
        let ev = col.evaluate(a, c, konst);
        let sup = col.residual_sup(&ev.r);
        let (g, l) = col.constraint_residuals(a, c, konst, &constraints);
        (sup, sup.max(g.abs()).max(l.abs()), ev)
    };
    let (mut sup, mut total, mut ev) = merit(&a, c, konst);
    let mut history = vec![sup];
    let mut converged = total == 0.0;
    let mut iterations = 0;
    while !converged {
        if iterations == opts.max_iterations {
            return Err(Error::Divergence { iterations, residual: total });
        }
        iterations += 1;
        let jac = col.jacobian(&a, c, &ev, &constraints);
        let (g, l) = col.constraint_residuals(&a, c, konst, &constraints);
        let mut rhs = Col::<f64>::zeros(m + 2);
        for i in 0..m {
            rhs[i] = -ev.r[i];
        }
        rhs[m] = -g;
        rhs[m + 1] = -l;
        let dx = jac.partial_piv_lu().solve(&rhs);
        let check = &jac * &dx - &rhs;
        let rhs_norm = (0..m + 2).map(|i| rhs[i].abs()).fold(0.0, f64::max);
        let bad = (0..m + 2).any(|i| !dx[i].is_finite())
            || (0..m + 2).map(|i| check[i].abs()).fold(0.0, f64::max) > 1e-6 * rhs_norm.max(1e-300);
        if bad {
            return Err(Error::Degenerate(format!(
                "singular bordered Jacobian at iteration {iterations} (residual {total:e})"
            )));
        }
        let mut step = 1.0;
        let (mut na, mut nc, mut nk);
        loop {
            na = (0..m).map(|i| a[i] + step * dx[i]).collect::<Vec<_>>();
            nc = c + step * dx[m];
            nk = konst + step * dx[m + 1];
            let (s2, t2, e2) = merit(&na, nc, nk);
            if t2 <= total || step < 1e-3 || !t2.is_finite() {
                sup = s2;
                total = t2;
                ev = e2;
                break;
            }
            step *= 0.5;
        }
        let upd = (0..m + 2).map(|i| (step * dx[i]).abs()).fold(0.0, f64::max);
        let scale = na.iter().fold(nc.abs().max(nk.abs()), |s, v| s.max(v.abs())).max(1.0);
        a = na;
        c = nc;
        konst = nk;
        history.push(sup);
        if !total.is_finite() {
            return Err(Error::Divergence { iterations, residual: total });
        }
        if total < opts.residual_tol && (upd <= opts.update_tol * scale || total < 1e-15 * scale) {
            converged = true;
        }
    }
    let profile = cos_to_field(&a, n)?;
    Ok(TravelingWave {
        amplitude: a[1],
        profile,
        speed: c,
        constant: konst,
        residual: sup,
        level: constraints.level,
        converged: true,
        history,
    })
}

fn check_seed(p: &SeedParams) -> Result<()> {
    if !(p.a.abs() <= 0.1 && p.b.abs() <= 0.1) {
        return Err(Error::Domain(format!("seed parameters must satisfy |a|, |b| <= 0.1, got {p:?}")));
    }
    Ok(())
}

/// Truncated small-amplitude expansion (seed quality).
///
/// Whitham with `f = u^2` uses the expansion about `w_0(kappa, b)` with the
/// level `a = b (1 - c)^2`; BBM uses the expansion with zero integration
/// constant; other KdV-type models use a Stokes expansion about the mean `b`.
pub fn small_amplitude_wave(model: &ModelSpec, params: SeedParams, n: usize) -> Result<TravelingWave> {
    check_seed(&params)?;
    if n < 8 || !n.is_multiple_of(2) {
        return Err(Error::Domain(format!("truncation N must be even and >= 8, got {n}")));
    }
    let alpha = |x: f64| model.symbol.eval(x);
    let nl = &model.nonlinearity;
    let SeedParams { a, b } = params;
    let (mean, a2, c, konst, level) = match model.family {
        ModelFamily::KdvType
            if model.symbol.kind == SymbolKind::Whitham && nl.integer_power() == Some(2) && nl.f(1.0) > 0.0 =>
        {
            let (m0, m1, m2) = (alpha(0.0), alpha(1.0), alpha(2.0));
            let d = m0 - m1;
            let w0 = b * d - b * b * d;
            let c = m1 + 2.0 * b * d - 6.0 * b * b * d + a * a * (1.0 / (m1 - m0) + 0.5 / (m1 - m2));
            let mean = w0 + 0.5 * a * a / (m1 - m0);
            let a2 = 0.5 * a * a / (m1 - m2);
            let e = m0 - c;
            (mean, a2, c, b * e * e, Level::Family(b))
        }
        ModelFamily::KdvType => {
            let f1 = nl.derivative(1, b);
            let f2 = nl.derivative(2, b) / 2.0;
            let f3 = nl.derivative(3, b) / 6.0;
            let (m0, m1, m2) = (alpha(0.0), alpha(1.0), alpha(2.0));
            let h2 = f2 / (2.0 * (m1 - m2));
            let c = m1 + f1 + a * a * (f2 * h2 + 0.75 * f3);
            let konst = (m0 - c) * b + nl.f(b) + f2 * a * a / 2.0;
            (b, a * a * h2, c, konst, Level::Mean(b))
        }
        ModelFamily::Bbm => {
            if b != 0.0 {
                return Err(Error::Unsupported("the BBM expansion has no background parameter".into()));
            }
            let f2 = nl.derivative(2, 0.0) / 2.0;
            let f3 = nl.derivative(3, 0.0) / 6.0;
            let (m0, m1, m2) = (alpha(0.0), alpha(1.0), alpha(2.0));
            let c0 = 1.0 / m1;
            let h0 = f2 / (2.0 * (c0 * m0 - 1.0));
            let h2 = f2 / (2.0 * (c0 * m2 - 1.0));
            let c = c0 + a * a * (2.0 * f2 * h0 + f2 * h2 + 0.75 * f3) / m1;
            (a * a * h0, a * a * h2, c, 0.0, Level::Constant(0.0))
        }
    };
    let profile = PeriodicField::from_modes(1, n, true, |m| {
        Complex64::new(
            match m {
                0 => mean,
                1 => 0.5 * a,
                2 => 0.5 * a2,
                _ => 0.0,
            },
            0.0,
        )
    })?;
    let mut wave = TravelingWave {
        profile,
        speed: c,
        constant: konst,
        amplitude: a,
        residual: 0.0,
        level,
        converged: false,
        history: Vec::new(),
    };
    wave.residual = wave_residual(model, &wave)?;
    Ok(wave)
}

/// Seed plus Newton refinement at fixed amplitude and the seed's level.
pub fn solve_wave(model: &ModelSpec, params: SeedParams, n: usize) -> Result<TravelingWave> {
    let seed = small_amplitude_wave(model, params, n)?;
    refine_newton(model, &seed, Constraints { gauge: Gauge::Amplitude(params.a), level: seed.level })
}

/// Sup norm of `G(u) - a` on the collocation grid.
pub fn wave_residual(model: &ModelSpec, wave: &TravelingWave) -> Result<f64> {
    let col = Collocation::new(model, wave.n());
    let ev = col.evaluate(&field_to_cos(&wave.profile), wave.speed, wave.constant);
    Ok(col.residual_sup(&ev.r))
}

/// Natural-parameter continuation in the amplitude with secant prediction and
/// step halving. Returns every converged wave, ending at `target`.
pub fn continue_in_amplitude(
    model: &ModelSpec,
    wave: &TravelingWave,
    target: f64,
    steps: usize,
) -> Result<Vec<TravelingWave>> {
    let mut out = vec![wave.clone()];
    if steps == 0 || target == wave.amplitude {
        return Ok(out);
    }
    let base = (target - wave.amplitude) / steps as f64;
    let mut frac = 1.0f64;
    let mut prev: Option<TravelingWave> = None;
    let mut cur = wave.clone();
    while cur.amplitude != target {
        let mut next_a = cur.amplitude + frac * base;
        if (target - next_a) * base.signum() < 0.0 || (target - next_a).abs() < 1e-14 * base.abs() {
            next_a = target;
        }
        let guess = predict(&cur, prev.as_ref(), next_a)?;
        let cons = Constraints { gauge: Gauge::Amplitude(next_a), level: cur.level };
        match refine_newton(model, &guess, cons) {
            Ok(w) if w.residual < 1e-10 => {
                prev = Some(std::mem::replace(&mut cur, w));
                out.push(cur.clone());
                frac = (frac * 2.0).min(1.0);
            }
            _ => {
                frac *= 0.5;
                if frac < 1e-6 {
                    return Err(Error::Stall { amplitude: cur.amplitude, step: frac });
                }
            }
        }
    }
    Ok(out)
}

fn predict(cur: &TravelingWave, prev: Option<&TravelingWave>, next_a: f64) -> Result<TravelingWave> {
    let mut guess = cur.clone();
    match prev {
        Some(p) if p.amplitude != cur.amplitude => {
            let s = (next_a - cur.amplitude) / (cur.amplitude - p.amplitude);
            guess.profile = cur.profile.axpy(s, &cur.profile.sub(&p.profile)?)?;
            guess.speed = cur.speed + s * (cur.speed - p.speed);
            guess.constant = cur.constant + s * (cur.constant - p.constant);
        }
        _ => {
            let h = 0.5 * (next_a - cur.amplitude);
            if let (Some(s1), Some(sm1)) = (guess.profile.slot(1), guess.profile.slot(-1)) {
                let c = guess.profile.coeffs_mut();
                c[s1] += h;
                c[sm1] += h;
            }
        }
    }
    guess.amplitude = next_a;
    Ok(guess)
}

/// `c - max |f'(u_c(x))|` over the collocation grid.
pub fn whitham_condition_margin(model: &ModelSpec, wave: &TravelingWave) -> f64 {
    let g = 2 * wave.n();
    let max = wave.profile.real_samples(g).iter().fold(0.0f64, |m, &u| m.max(model.nonlinearity.df(u).abs()));
    wave.speed - max
}

/// Result of [`spectral_decay_diagnostic`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `ln |c_n|` against `n`.
    pub slope: f64,
    pub modes_used: usize,
    /// Whether the coefficients decay (slope below -0.05).
    pub smooth: bool,
}

/// Fits the decay of `|c_n|` over the upper half of the resolved modes.
pub fn spectral_decay_diagnostic(field: &PeriodicField) -> Result<DecayFit> {
    let h = (field.n() / 2) as i64;
    let mags: Vec<f64> = (0..h).map(|m| field.mode(m).norm().max(field.mode(-m).norm())).collect();
    let nonzero = mags.iter().filter(|&&v| v > 0.0).count();
    if nonzero < 8 {
        return Err(Error::InsufficientData(format!("{nonzero} nonzero modes, need at least 8")));
    }
    let peak = mags.iter().fold(0.0f64, |a, &b| a.max(b));
    let floor = 1e-15 * peak;
    let resolved: Vec<usize> = (0..mags.len()).filter(|&i| mags[i] > floor).collect();
    let top = *resolved.last().unwrap();
    let mut pts: Vec<(f64, f64)> =
        resolved.iter().filter(|&&i| 2 * i >= top).map(|&i| (i as f64, mags[i].ln())).collect();
    if pts.len() < 4 {
        pts = resolved.iter().map(|&i| (i as f64, mags[i].ln())).collect();
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientData("fewer than two resolved modes".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(DecayFit { slope, modes_used: pts.len(), smooth: slope < -0.05 })
}

/// `L v` for a field `v` on `T_{2 pi q}`, with the wave lifted to the same
/// torus (`v` may carry a Bloch shift `k`).
pub fn apply_energy_operator(
    model: &ModelSpec,
    wave: &TravelingWave,
    v: &PeriodicField,
    k: f64,
) -> Result<PeriodicField> {
    let q = v.q();
    let mut lifted = wave.profile.lifted(q)?;
    if lifted.n() < v.n() {
        lifted = lifted.resized(v.n())?;
    }
    let factor = model.nonlinearity.pad_factor();
    let g = padded_len(v.n().max(lifted.n()), factor);
    let us = lifted.real_samples(g);
    let vs = v.samples(g);
    let prod: Vec<Complex64> = us.iter().zip(&vs).map(|(&u, &z)| z * model.nonlinearity.df(u)).collect();
    let pv = PeriodicField::from_samples(q, v.n(), &prod, v.is_real() && k == 0.0)?;
    let diag = v.map_modes(k == 0.0, |xi| Complex64::new(model.energy_diag(xi + k, wave.speed), 0.0));
    diag.axpy(model.sigma(), &pv)
}

/// `||L d_z u_c|| / ||d_z u_c||`, zero for the constant state.
pub fn kernel_defect(model: &ModelSpec, wave: &TravelingWave) -> Result<f64> {
    let du = wave.profile.derivative();
    let norm = du.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(apply_energy_operator(model, wave, &du, 0.0)?.l2_norm() / norm)
}

/// JSON sidecar written next to a persisted wave.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveSidecar {
    pub model: String,
    pub c: f64,
    pub a: f64,
    pub amplitude: f64,
    pub residual: f64,
    pub margins: WaveMargins,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveMargins {
    pub whitham: f64,
    pub kernel_defect: f64,
    pub decay_slope: Option<f64>,
}

impl WaveSidecar {
    pub fn new(model: &ModelSpec, wave: &TravelingWave) -> Result<Self> {
        Ok(WaveSidecar {
            model: model.id(),
            c: wave.speed,
            a: wave.constant,
            amplitude: wave.amplitude,
            residual: wave.residual,
            margins: WaveMargins {
                whitham: whitham_condition_margin(model, wave),
                kernel_defect: kernel_defect(model, wave)?,
                decay_slope: spectral_decay_diagnostic(&wave.profile).ok().map(|d| d.slope),
            },
        })
    }
}
