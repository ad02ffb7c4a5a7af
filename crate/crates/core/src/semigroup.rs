//! Growth bounds for the truncated semigroups `e^{t A_k}`: weighted
//! propagator norms, the dual estimate, Riesz projections and the
//! trichotomy counts.

use crate::bloch::{bloch_eigenvalues, BlochOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Diagonal Sobolev weights `(1 + |n + k|^2)^{s/2}`.
pub fn sobolev_weights(op: &BlochOperator, k: f64, s: f64) -> Vec<f64> {
    (0..op.dim())
        .map(|i| {
            let xi = op.mode(i) as f64 + k;
            (1.0 + xi * xi).powf(0.5 * s)
        })
        .collect()
}

fn conjugate_by_weights(m: &CMat, w: &[f64]) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (w[i] / w[j]))
}

fn exp_checked(a: &CMat, t: f64, growth: f64) -> Result<CMat> {
    let cap = if growth > 0.0 { 700.0 / growth } else { f64::INFINITY };
    if t * growth > 700.0 {
        return Err(Error::Range { message: format!("e^(t lambda) overflows at t = {t}"), t_cap: cap });
    }
    let ta = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * t);
    let e = linalg::expm(&ta)?;
    if (0..e.ncols()).any(|j| (0..e.nrows()).any(|i| !e[(i, j)].re.is_finite() || !e[(i, j)].im.is_finite())) {
        return Err(Error::Range { message: format!("matrix exponential overflowed at t = {t}"), t_cap: cap });
    }
    Ok(e)
}

fn growth_bound(op: &BlochOperator, k: f64) -> Result<f64> {
    Ok(bloch_eigenvalues(op, k)?.first().map_or(0.0, |l| l.re.max(0.0)))
}

/// `||W_s e^{t A_k} W_s^{-1}||_2`.
pub fn propagator_norm(op: &BlochOperator, k: f64, t: f64, s: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let e = exp_checked(&op.matrix(k), t, growth_bound(op, k)?)?;
    linalg::norm2(&conjugate_by_weights(&e, &sobolev_weights(op, k, s)))
}

/// `||e^{t L_k J_k}||` in the `H^1`-weighted norm, the dual of the `H^{-1}`
/// bound on `e^{t J_k L_k}`. For complex (non-even) waves `e^{t A_k^*}` is
/// used instead, whose `H^1` norm is the `H^{-1}` norm of `e^{t A_k}`
/// whatever the wave. The two agree when `L_k` is real.
///
/// Returns the dual norm together with the relative mismatch against
/// [`propagator_norm`] at `s = -1`; a mismatch above `1e-8` is a
/// [`Error::Structure`] failure.
pub fn dual_propagator_norm(op: &BlochOperator, k: f64, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let a = op.matrix(k);
    let g = growth_bound(op, k)?;
    let m = if op.is_real() {
        let d = op.generator_diag(k);
        let l = op.energy_matrix(k);
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| l[(i, j)] * d[j])
    } else {
        a.adjoint().to_owned()
    };
    let e = exp_checked(&m, t, g)?;
    let dual = linalg::norm2(&conjugate_by_weights(&e, &sobolev_weights(op, k, 1.0)))?;
    let direct = propagator_norm(op, k, t, -1.0)?;
    let mismatch = (dual - direct).abs() / direct.max(1e-300);
    if mismatch > 1e-8 {
        return Err(Error::Structure(format!(
            "duality mismatch {mismatch:e} between H^1 dual norm {dual} and H^-1 norm {direct}"
        )));
    }
    Ok((dual, mismatch))
}

/// Sampled weighted norms of `e^{t A_k}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagatorProbe {
    pub k: f64,
    pub s: f64,
    pub t_grid: Vec<f64>,
    pub norms: Vec<f64>,
}

impl PropagatorProbe {
    /// Samples `t_grid` using `e^{t_{j+1} A} = e^{(t_{j+1} - t_j) A} e^{t_j A}`
    /// after a direct exponential at the first time.
    pub fn measure(op: &BlochOperator, k: f64, s: f64, t_grid: &[f64]) -> Result<Self> {
        if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::Domain("time grid must be increasing and nonnegative".into()));
        }
        let a = op.matrix(k);
        let g = growth_bound(op, k)?;
        let w = sobolev_weights(op, k, s);
        let mut norms = Vec::with_capacity(t_grid.len());
        let mut prev_t = 0.0;
        let mut e: Option<CMat> = None;
        for &t in t_grid {
            if t * g > 700.0 {
                return Err(Error::Range { message: format!("e^(t lambda) overflows at t = {t}"), t_cap: 700.0 / g });
            }
            let step = exp_checked(&a, t - prev_t, g)?;
            let cur = match &e {
                Some(m) => &step * m,
                None => step,
            };
            norms.push(linalg::norm2(&conjugate_by_weights(&cur, &w))?);
            e = Some(cur);
            prev_t = t;
        }
        Ok(PropagatorProbe { k, s, t_grid: t_grid.to_vec(), norms })
    }

    /// Least-squares slope of `ln ||e^{tA}||` over `t in [t0, t1]`.
    pub fn log_slope(&self, t0: f64, t1: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .t_grid
            .iter()
            .zip(&self.norms)
            .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
            .map(|(&t, &n)| (t, n.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::InsufficientData(format!("fewer than two samples in [{t0}, {t1}]")));
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        Ok(sxy / sxx)
    }

    /// No jump by more than a factor 10 between neighbors `dt <= 0.1` apart.
    pub fn is_continuous(&self) -> bool {
        self.t_grid
            .windows(2)
            .zip(self.norms.windows(2))
            .all(|(t, n)| t[1] - t[0] > 0.1 + 1e-12 || (n[1] / n[0] <= 10.0 && n[0] / n[1] <= 10.0))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for (t, n) in self.t_grid.iter().zip(&self.norms) {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", self.k, self.s, t, n)?;
        }
        Ok(())
    }
}

/// Verdict of a growth-bound check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthVerdict {
    pub slope: f64,
    pub lambda0: f64,
    pub pass: bool,
}

/// Checks `slope in [lambda0 - eps, lambda0 + eps]` over `t in [5, 20]`.
pub fn growth_verdict(probe: &PropagatorProbe, lambda0: f64, eps: f64) -> Result<GrowthVerdict> {
    let slope = probe.log_slope(5.0, 20.0)?;
    Ok(GrowthVerdict { slope, lambda0, pass: (slope - lambda0).abs() <= eps && probe.is_continuous() })
}

/// A Riesz projection together with its quality measures.
#[derive(Clone, Debug)]
pub struct RieszProjection {
    pub projector: CMat,
    /// Eigenvalues of `M` inside the contour.
    pub enclosed: usize,
    /// `||P^2 - P||_F`.
    pub idempotence_defect: f64,
    /// Rounded trace of `P`.
    pub rank: usize,
    pub quad_points: usize,
}

/// `(1 / 2 pi i) oint (z - M)^{-1} dz` over the circle `|z - center| = radius`
/// by the trapezoidal rule, doubling the number of nodes from `quad_points`
/// until `||P^2 - P|| < 1e-8`.
pub fn riesz_projection(m: &CMat, center: Complex64, radius: f64, quad_points: usize) -> Result<RieszProjection> {
    if !(radius > 0.0) || quad_points < 4 {
        return Err(Error::Domain("need radius > 0 and at least 4 quadrature points".into()));
    }
    let n = m.nrows();
    let eig = linalg::eigenvalues(m)?;
    let gap = eig.iter().map(|l| ((l - center).norm() - radius).abs()).fold(f64::INFINITY, f64::min);
    if gap <= radius / 100.0 {
        return Err(Error::Contour(format!(
            "an eigenvalue lies within {gap:e} of the contour (radius {radius}); move the circle"
        )));
    }
    let enclosed = eig.iter().filter(|l| (*l - center).norm() < radius).count();
    let id = linalg::identity(n);
    let mut q = quad_points;
    loop {
        let mut p = CMat::zeros(n, n);
        for j in 0..q {
            let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / q as f64);
            let z = center + e * radius;
            let shifted = Mat::from_fn(n, n, |a, b| id[(a, b)] * z - m[(a, b)]);
            let r = linalg::solve(&shifted, &id)?;
            let w = e * radius / q as f64;
            for b in 0..n {
                for a in 0..n {
                    p[(a, b)] += r[(a, b)] * w;
                }
            }
        }
        let p2 = &p * &p;
        let defect = linalg::norm_fro(&(&p2 - &p));
        if defect < 1e-8 {
            let trace: Complex64 = (0..n).map(|i| p[(i, i)]).sum();
            return Ok(RieszProjection {
                projector: p,
                enclosed,
                idempotence_defect: defect,
                rank: trace.re.round().max(0.0) as usize,
                quad_points: q,
            });
        }
        if q >= 1 << 16 {
            return Err(Error::Contour(format!("projector defect {defect:e} after {q} nodes")));
        }
        q *= 2;
    }
}

/// Dimensions of the unstable, stable and center subspaces at one `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trichotomy {
    pub dim_eu: usize,
    pub dim_es: usize,
    pub dim_ec: usize,
    pub n_minus_l: usize,
}

/// Counts `Re lambda > 1e-8`, `< -1e-8` and the rest, and the negative
/// eigenvalues of `L_k`. A violation of `dim Eu = dim Es <= n^-(L)` is
/// reported as [`Error::Structure`].
pub fn trichotomy_split(op: &BlochOperator, k: f64) -> Result<Trichotomy> {
    let vals = bloch_eigenvalues(op, k)?;
    trichotomy_from(&vals, &linalg::hermitian_eigenvalues(&op.energy_matrix(k))?)
}

/// The trichotomy counts for a given spectrum and `L` eigenvalues.
pub fn trichotomy_from(spectrum: &[Complex64], l_eigs: &[f64]) -> Result<Trichotomy> {
    let dim_eu = spectrum.iter().filter(|l| l.re > 1e-8).count();
    let dim_es = spectrum.iter().filter(|l| l.re < -1e-8).count();
    let tri = Trichotomy {
        dim_eu,
        dim_es,
        dim_ec: spectrum.len() - dim_eu - dim_es,
        n_minus_l: l_eigs.iter().filter(|&&x| x < 0.0).count(),
    };
    if tri.dim_eu != tri.dim_es || tri.dim_eu > tri.n_minus_l {
        return Err(Error::Structure(format!(
            "dim Eu = {}, dim Es = {}, n^-(L) = {}: truncation too coarse?",
            tri.dim_eu, tri.dim_es, tri.n_minus_l
        )));
    }
    Ok(tri)
}
