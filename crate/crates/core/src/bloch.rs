//! Floquet-Bloch spectra of the linearization about a periodic wave.
//!
//! For a Bloch parameter `k` the operator `A_k = J_k L_k` acts on the modes
//! `e^{i (n + k) z}` with `|n| < N_b / 2`. `L_k` is Hermitian with entries
//! `energy_diag(n + k) delta_{nj} + sigma g_{n - j}`, where `g` holds the
//! Fourier coefficients of `f'(u_c)`, and `J_k` is diagonal.

use crate::error::{Error, Result};
use crate::fourier::{fft_plan, padded_len, PeriodicField};
use crate::linalg::{self, CMat};
use crate::parallel;
use crate::symbols::ModelSpec;
use crate::wave::TravelingWave;
use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The linearization about one wave, with the coefficients of `f'(u_c)`
/// precomputed so that many `k` can be assembled cheaply.
#[derive(Clone, Debug)]
pub struct BlochOperator {
    pub model: ModelSpec,
    pub speed: f64,
    /// Number of retained modes is `2 * half - 1`.
    half: usize,
    /// `g_d` for `d = -(2 half - 2) ..= 2 half - 2`, stored at `d + 2 half - 2`.
    ghat: Vec<Complex64>,
    /// Coefficients of the wave on the retained modes.
    uhat: Vec<Complex64>,
    /// Whether every `g_d` is real (even wave), so that `A_k = -i R_k` with
    /// `R_k` real.
    real: bool,
}

impl BlochOperator {
    /// Uses `N_b = N` Bloch modes for a wave on `N` Fourier modes unless a
    /// smaller even `n_bloch` is given.
    pub fn new(model: &ModelSpec, wave: &TravelingWave, n_bloch: Option<usize>) -> Result<Self> {
        let n = wave.profile.n();
        let nb = n_bloch.unwrap_or(n);
        if nb < 4 || !nb.is_multiple_of(2) || nb > n {
            return Err(Error::Domain(format!("Bloch truncation {nb} must be even, >= 4 and <= N = {n}")));
        }
        if wave.profile.q() != 1 {
            return Err(Error::Domain("the wave must live on T_{2pi}".into()));
        }
        let half = nb / 2;
        let span = 2 * half - 2;
        let g = padded_len(2 * n, model.nonlinearity.pad_factor());
        let us = wave.profile.real_samples(g);
        let mut buf: Vec<Complex64> = us.iter().map(|&u| Complex64::new(model.nonlinearity.df(u), 0.0)).collect();
        fft_plan(g, true).process(&mut buf);
        let s = 1.0 / g as f64;
        let mut ghat: Vec<Complex64> = (0..=2 * span)
            .map(|i| {
                let d = i as i64 - span as i64;
                buf[d.rem_euclid(g as i64) as usize] * s
            })
            .collect();
        let gmax = ghat.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        // An even profile has real coefficients up to the rounding of the FFT.
        let even = wave.profile.odd_content() <= 1e-14 * wave.profile.l2_norm().max(1e-300);
        let real = even && ghat.iter().all(|z| z.im.abs() <= 1e-13 * gmax.max(1e-300));
        if real {
            for z in &mut ghat {
                z.im = 0.0;
            }
        }
        let uhat = (0..nb - 1).map(|i| wave.profile.mode(i as i64 - (half as i64 - 1))).collect();
        Ok(BlochOperator { model: *model, speed: wave.speed, half, ghat, uhat, real })
    }

    pub fn dim(&self) -> usize {
        2 * self.half - 1
    }

    /// Mode number of row `i`.
    pub fn mode(&self, i: usize) -> i64 {
        i as i64 - (self.half as i64 - 1)
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    fn g(&self, d: i64) -> Complex64 {
        self.ghat[(d + 2 * self.half as i64 - 2) as usize]
    }

    /// Diagonal entries of `J_k`.
    pub fn generator_diag(&self, k: f64) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.model.j_symbol(self.mode(i) as f64 + k)).collect()
    }

    /// The Hermitian matrix of `L_k`.
    pub fn energy_matrix(&self, k: f64) -> CMat {
        let sigma = self.model.sigma();
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            let mut v = self.g(self.mode(i) - self.mode(j)) * sigma;
            if i == j {
                v += self.model.energy_diag(self.mode(i) as f64 + k, self.speed);
            }
            v
        })
    }

    /// The matrix of `A_k = J_k L_k`.
    pub fn matrix(&self, k: f64) -> CMat {
        let d = self.generator_diag(k);
        let l = self.energy_matrix(k);
        Mat::from_fn(self.dim(), self.dim(), |i, j| d[i] * l[(i, j)])
    }

    /// `R_k = i A_k`, real when [`BlochOperator::is_real`] holds.
    fn real_matrix(&self, k: f64) -> Mat<f64> {
        let sigma = self.model.sigma();
        let r: Vec<f64> = self.generator_diag(k).iter().map(|d| -d.im).collect();
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            let mut v = self.g(self.mode(i) - self.mode(j)).re * sigma;
            if i == j {
                v += self.model.energy_diag(self.mode(i) as f64 + k, self.speed);
            }
            r[i] * v
        })
    }

    /// Converts a coefficient vector to a Bloch profile on `T_{2pi}` with
    /// `n_out >= N_b` modes.
    pub fn to_field(&self, v: &[Complex64], n_out: usize) -> Result<PeriodicField> {
        PeriodicField::from_modes(1, n_out.max(2 * self.half), false, |m| {
            let i = m + self.half as i64 - 1;
            if i >= 0 && (i as usize) < self.dim() {
                v[i as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Eigenvalues of `A_k` sorted by decreasing real part (ties by imaginary
/// part), so the order is deterministic.
pub fn sort_by_real(vals: &mut [Complex64]) {
    vals.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Eigenvalues of `A_k`, sorted by decreasing real part.
///
/// For an even wave the real matrix `R_k = i A_k` is used, which keeps the
/// spectrum closed under `lambda -> -conj(lambda)` exactly. At `k = 0` the
/// zero row of the mean mode and the invariant subspace spanned by `u_c'`
/// and its Jordan partner are deflated before the eigensolve: both carry the
/// eigenvalue zero, and leaving the defective block in place would turn
/// rounding errors of size `eps` into spurious real parts of size
/// `sqrt(eps)`.
pub fn bloch_eigenvalues(op: &BlochOperator, k: f64) -> Result<Vec<Complex64>> {
    check_k(k)?;
    let mut vals = if op.real {
        let r = op.real_matrix(k);
        let mu = if k == 0.0 { deflated_k0(op, &r)? } else { real_eigenvalues(&r)? };
        mu.into_iter().map(|m| Complex64::new(m.im, -m.re)).collect()
    } else {
        linalg::eigenvalues(&op.matrix(k))?
    };
    sort_by_real(&mut vals);
    Ok(vals)
}

fn real_eigenvalues(r: &Mat<f64>) -> Result<Vec<Complex64>> {
    r.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Spectrum of `R_0` with the known part of its generalized kernel removed.
fn deflated_k0(op: &BlochOperator, r: &Mat<f64>) -> Result<Vec<Complex64>> {
    let n = op.dim();
    let c0 = op.half - 1;
    // Row c0 of R_0 vanishes, so R_0 is block triangular after moving the
    // mean mode first and sigma(R_0) = {0} + sigma(R') with R' the rest.
    let idx: Vec<usize> = (0..n).filter(|&i| i != c0).collect();
    let m = idx.len();
    let rp = Mat::from_fn(m, m, |i, j| r[(idx[i], idx[j])]);
    // Kernel vector: the coefficients n u_n of -i u_c'.
    let w1: Vec<f64> = idx.iter().map(|&i| op.mode(i) as f64 * op.uhat[i].re).collect();
    let w1n = w1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let zero = Complex64::new(0.0, 0.0);
    if w1n == 0.0 {
        let mut out = real_eigenvalues(&rp)?;
        out.push(zero);
        return Ok(out);
    }
    // Jordan partner w2 with R' w2 = w1, solvable because w1 is orthogonal
    // to the left null vector y = w1 / r by parity. The bordered matrix
    // [[R', y], [w1^T, 0]] is nonsingular when the kernel is simple.
    let rdiag: Vec<f64> = idx.iter().map(|&i| -op.model.j_symbol(op.mode(i) as f64).im).collect();
    let y: Vec<f64> = w1.iter().zip(&rdiag).map(|(w, r)| w / r).collect();
    let yn = y.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut bordered = Mat::<f64>::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            bordered[(i, j)] = rp[(i, j)];
        }
        bordered[(i, m)] = y[i] / yn;
        bordered[(m, i)] = w1[i] / w1n;
    }
    let mut rhs = Mat::<f64>::zeros(m + 1, 1);
    for i in 0..m {
        rhs[(i, 0)] = w1[i];
    }
    let sol = bordered.partial_piv_lu().solve(&rhs);
    let w2: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
    let defect = (0..m).map(|i| ((0..m).map(|j| rp[(i, j)] * w2[j]).sum::<f64>() - w1[i]).abs()).fold(0.0, f64::max);
    let scale = w1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if !w2.iter().all(|x| x.is_finite()) || defect > 1e-8 * scale {
        // No Jordan partner: deflate the kernel vector alone.
        return deflate(&rp, &[w1], 2);
    }
    deflate(&rp, &[w1, w2], 3)
}

/// Eigenvalues of `R'` restricted to the orthogonal complement of the
/// invariant subspace spanned by `basis`, plus `zeros` exact zeros.
fn deflate(rp: &Mat<f64>, basis: &[Vec<f64>], zeros: usize) -> Result<Vec<Complex64>> {
    let m = rp.nrows();
    let b = Mat::from_fn(m, basis.len(), |i, j| basis[j][i]);
    let q = b.qr().compute_Q();
    let p = basis.len();
    let qc = q.subcols(p, m - p);
    let y = qc.transpose() * rp * qc;
    let mut out = real_eigenvalues(&y)?;
    out.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), zeros));
    Ok(out)
}

/// Eigenpairs of `A_k` sorted by decreasing real part. The five leading
/// pairs are checked to have residual below `1e-8 ||A_k||`.
pub fn bloch_eigenpairs(op: &BlochOperator, k: f64) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    check_k(k)?;
    let a = op.matrix(k);
    let n = a.nrows();
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = if op.real {
        let evd = op.real_matrix(k).eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let (s, u) = (evd.S(), evd.U());
        (0..n).map(|j| (Complex64::new(s[j].im, -s[j].re), (0..n).map(|i| u[(i, j)]).collect())).collect()
    } else {
        let (vals, vecs) = linalg::eigen(&a)?;
        (0..n).map(|j| (vals[j], (0..n).map(|i| vecs[(i, j)]).collect())).collect()
    };
    pairs.sort_by(|x, y| y.0.re.total_cmp(&x.0.re).then(y.0.im.total_cmp(&x.0.im)));
    let scale = linalg::norm_fro(&a).max(1.0);
    for (lam, v) in pairs.iter().take(5) {
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut res = 0.0;
        for i in 0..n {
            let mut s = -lam * v[i];
            for j in 0..n {
                s += a[(i, j)] * v[j];
            }
            res += s.norm_sqr();
        }
        if res.sqrt() > 1e-8 * scale * vn {
            return Err(Error::Eigen(format!(
                "eigenpair residual {:e} at k = {k} (||A|| = {scale:e})",
                res.sqrt() / vn
            )));
        }
    }
    Ok(pairs)
}

fn check_k(k: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Domain(format!("Bloch parameter {k} outside [0, 1]")));
    }
    Ok(())
}

/// Scan controls.
#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub k_min: f64,
    pub k_max: f64,
    /// Number of grid points.
    pub count: usize,
    /// Use cell midpoints `k_min + (j + 1/2) h` instead of endpoints.
    pub midpoint: bool,
    /// Golden-section rounds of refinement around the grid maximizer.
    pub refine: usize,
    /// Real parts at or below this are treated as zero.
    pub threshold: f64,
    /// Eigenvalues kept per `k` in the output.
    pub keep: usize,
    pub n_bloch: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            k_min: 0.0,
            k_max: 0.5,
            count: 64,
            midpoint: false,
            refine: 3,
            threshold: 1e-8,
            keep: 20,
            n_bloch: None,
        }
    }
}

impl ScanOptions {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.count.max(1);
        if self.midpoint {
            let h = (self.k_max - self.k_min) / n as f64;
            (0..n).map(|j| self.k_min + (j as f64 + 0.5) * h).collect()
        } else if n == 1 {
            vec![self.k_min]
        } else {
            let h = (self.k_max - self.k_min) / (n - 1) as f64;
            (0..n).map(|j| self.k_min + j as f64 * h).collect()
        }
    }
}

/// Leading eigenvalues and structural counts at one `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlochSlice {
    pub k: f64,
    /// Leading eigenvalues by real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub max_re: f64,
    /// Largest distance from `-conj(lambda)` to the spectrum.
    pub hamiltonian_defect: f64,
    pub unstable_dim: usize,
    pub stable_dim: usize,
    /// Number of negative eigenvalues of `L_k`.
    pub negative_index: usize,
}

/// Result of a Bloch scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlochSpectrum {
    pub model: String,
    pub speed: f64,
    pub slices: Vec<BlochSlice>,
    /// `max_k max Re sigma(A_k)`, with real parts below the threshold zeroed.
    pub lambda0: f64,
    pub k0: f64,
    /// Eigenvalue at `k0` with the largest real part.
    pub lambda_k0: (f64, f64),
    /// Maximal grid intervals on which the spectrum is unstable.
    pub bands: Vec<(f64, f64)>,
    pub threshold: f64,
}

impl BlochSpectrum {
    pub fn is_unstable(&self) -> bool {
        self.lambda0 > self.threshold
    }

    pub fn max_hamiltonian_defect(&self) -> f64 {
        self.slices.iter().map(|s| s.hamiltonian_defect).fold(0.0, f64::max)
    }

    /// True when `dim Eu = dim Es <= n^-(L_k)` at every scanned `k`.
    pub fn counts_consistent(&self) -> bool {
        self.slices.iter().all(|s| s.unstable_dim == s.stable_dim && s.unstable_dim <= s.negative_index)
    }

    /// Rows `k, re, im` of the leading eigenvalues at each `k`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W, header: &[String]) -> Result<()> {
        for h in header {
            writeln!(w, "# {h}")?;
        }
        writeln!(w, "k,re_lambda,im_lambda")?;
        for s in &self.slices {
            for &(re, im) in &s.eigenvalues {
                writeln!(w, "{:.17e},{:.17e},{:.17e}", s.k, re, im)?;
            }
        }
        Ok(())
    }
}

/// Largest distance from `-conj(lambda)` to the nearest eigenvalue.
pub fn hamiltonian_defect(vals: &[Complex64]) -> f64 {
    vals.iter()
        .map(|l| {
            let r = -l.conj();
            vals.iter().map(|m| (m - r).norm()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn slice_at(op: &BlochOperator, k: f64, opts: &ScanOptions) -> Result<BlochSlice> {
    let vals = bloch_eigenvalues(op, k)?;
    let neg = linalg::hermitian_eigenvalues(&op.energy_matrix(k))?.iter().filter(|&&x| x < 0.0).count();
    let t = opts.threshold;
    Ok(BlochSlice {
        k,
        max_re: vals.first().map_or(f64::NEG_INFINITY, |l| l.re),
        eigenvalues: vals.iter().take(opts.keep).map(|l| (l.re, l.im)).collect(),
        hamiltonian_defect: hamiltonian_defect(&vals),
        unstable_dim: vals.iter().filter(|l| l.re > t).count(),
        stable_dim: vals.iter().filter(|l| l.re < -t).count(),
        negative_index: neg,
    })
}

/// Leading real part of `sigma(A_k)`.
pub fn max_real_part(op: &BlochOperator, k: f64) -> Result<f64> {
    Ok(bloch_eigenvalues(op, k)?.first().map_or(f64::NEG_INFINITY, |l| l.re))
}

/// Scans `k` over a uniform grid, refines every grid-local maximum above
/// the threshold by trisection and records the unstable bands.
pub fn scan_bloch(model: &ModelSpec, wave: &TravelingWave, opts: &ScanOptions) -> Result<BlochSpectrum> {
    if !(0.0 <= opts.k_min && opts.k_min <= opts.k_max && opts.k_max <= 1.0) {
        return Err(Error::Domain(format!("k window [{}, {}] not inside [0, 1]", opts.k_min, opts.k_max)));
    }
    let op = BlochOperator::new(model, wave, opts.n_bloch)?;
    let ks = opts.grid();
    let slices = parallel::map(&ks, |&k| slice_at(&op, k, opts)).into_iter().collect::<Result<Vec<_>>>()?;
    let vals: Vec<f64> = slices.iter().map(|s| s.max_re).collect();
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut k0 = ks[best_i];
    if opts.refine > 0 && ks.len() > 1 {
        let h = (ks[1] - ks[0]).abs();
        let peaks: Vec<usize> = (0..ks.len())
            .filter(|&i| {
                vals[i] > opts.threshold
                    && (i == 0 || vals[i] >= vals[i - 1])
                    && (i + 1 == ks.len() || vals[i] >= vals[i + 1])
            })
            .collect();
        let refined = parallel::map(&peaks, |&i| {
            let lo = (ks[i] - h).max(opts.k_min);
            let hi = (ks[i] + h).min(opts.k_max);
            trisect_max(lo, hi, opts.refine, |k| max_real_part(&op, k))
        });
        for r in refined {
            let (kr, vr) = r?;
            if vr > best {
                best = vr;
                k0 = kr;
            }
        }
    }
    let lam = bloch_eigenvalues(&op, k0)?[0];
    let lambda0 = if best > opts.threshold { best } else { 0.0 };
    let mut bands = Vec::new();
    let mut open: Option<f64> = None;
    for s in &slices {
        match (s.max_re > opts.threshold, open) {
            (true, None) => open = Some(s.k),
            (false, Some(a)) => {
                bands.push((a, s.k));
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(a), Some(last)) = (open, slices.last()) {
        bands.push((a, last.k));
    }
    Ok(BlochSpectrum {
        model: model.id(),
        speed: wave.speed,
        slices,
        lambda0,
        k0,
        lambda_k0: (lam.re, lam.im),
        bands,
        threshold: opts.threshold,
    })
}

/// Maximizes `f` on `[lo, hi]` by repeatedly keeping the third of the
/// interval whose midpoint has the largest value.
pub fn trisect_max(mut lo: f64, mut hi: f64, rounds: usize, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut mid = 0.5 * (lo + hi);
    let mut fmid = f(mid)?;
    let (mut bk, mut bv) = (mid, fmid);
    for _ in 0..rounds {
        let w = (hi - lo) / 3.0;
        let left = lo + 0.5 * w;
        let right = hi - 0.5 * w;
        let fl = f(left)?;
        let fr = f(right)?;
        if fl > fmid && fl >= fr {
            hi = lo + w;
            mid = left;
            fmid = fl;
        } else if fr > fmid {
            lo = hi - w;
            mid = right;
            fmid = fr;
        } else {
            lo += w;
            hi -= w;
        }
        if fmid > bv {
            bk = mid;
            bv = fmid;
        }
    }
    Ok((bk, bv))
}

fn golden_max(mut a: f64, mut b: f64, rounds: usize, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..rounds {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Local model `Re lambda(k) = lambda0 - a_fit |k - k0|^l` near the top of
/// an unstable band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub k0: f64,
    pub lambda0: f64,
    /// Even order of the fit.
    pub l: u32,
    pub a_fit: f64,
    /// Relative least-squares residual of the chosen fit.
    pub residual: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Fits `lambda0 - Re lambda(k)` against `|k - k0|^l` for `l` in `{2, 4, 6}`
/// on samples from `[k0 - window, k0 + window]`, keeping the order with the
/// smallest relative residual. The maximizer is first relocated inside the
/// window by golden-section search.
pub fn fit_band(op: &BlochOperator, k_guess: f64, window: f64, samples: usize) -> Result<GrowthCurve> {
    if samples < 9 {
        return Err(Error::InsufficientData(format!("{samples} samples, need at least 9")));
    }
    if !(window > 0.0) {
        return Err(Error::Window(format!("window radius {window} must be positive")));
    }
    let lo = (k_guess - window).max(0.0);
    let hi = (k_guess + window).min(1.0);
    let (k0, lambda0) = golden_max(lo, hi, 60, |k| max_real_part(op, k))?;
    let edge_tol = 1e-3 * (hi - lo);
    if lambda0 <= 0.0 || (k0 - lo < edge_tol && lo > 0.0) || hi - k0 < edge_tol {
        return Err(Error::Window(format!("no interior maximum of Re lambda in [{lo}, {hi}]")));
    }
    let lo = (k0 - window).max(0.0);
    let hi = (k0 + window).min(1.0);
    let ks: Vec<f64> = (0..samples).map(|j| lo + (hi - lo) * j as f64 / (samples - 1) as f64).collect();
    let vals = parallel::map(&ks, |&k| max_real_part(op, k)).into_iter().collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = ks.iter().zip(&vals).map(|(&k, &v)| (k, v)).collect();
    if vals.iter().any(|&v| v > lambda0 * (1.0 + 1e-9) + 1e-300) {
        return Err(Error::Window("a sample exceeds the located maximum".into()));
    }
    let d: Vec<f64> = vals.iter().map(|v| lambda0 - v).collect();
    let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dn == 0.0 {
        return Err(Error::Degenerate("flat band: Re lambda constant over the window".into()));
    }
    let mut best: Option<(u32, f64, f64)> = None;
    for l in [2u32, 4, 6] {
        let x: Vec<f64> = ks.iter().map(|k| (k - k0).abs().powi(l as i32)).collect();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxd: f64 = x.iter().zip(&d).map(|(a, b)| a * b).sum();
        let a = sxd / sxx;
        let res = x.iter().zip(&d).map(|(xi, di)| (di - a * xi).powi(2)).sum::<f64>().sqrt() / dn;
        if a > 0.0 && best.is_none_or(|b| res < b.2) {
            best = Some((l, a, res));
        }
    }
    match best {
        Some((l, a_fit, residual)) if residual <= 0.2 => {
            Ok(GrowthCurve { k0, lambda0, l, a_fit, residual, samples: pts })
        }
        _ => Err(Error::Degenerate("no band fit with relative residual below 20%".into())),
    }
}

/// A tenth of the distance from `k0` to the nearest edge of its band. The
/// band top is skewed by a cubic term, so wider windows inflate the residual
/// of the even fit.
pub fn default_window(spec: &BlochSpectrum) -> f64 {
    let h = spec.slices.get(1).map_or(0.01, |s| (s.k - spec.slices[0].k).abs());
    let edge = spec
        .bands
        .iter()
        .find(|b| b.0 - h <= spec.k0 && spec.k0 <= b.1 + h)
        .map(|b| (spec.k0 - (b.0 - h)).min(b.1 + h - spec.k0))
        .unwrap_or(h);
    let mut w = 0.1 * edge;
    if spec.k0 - w < 0.0 {
        w = w.min(spec.k0 * 0.999);
    }
    w.max(1e-6)
}

/// Smallest-denominator `p / q` with `|p/q - k0| <= tol` and `q <= q_max`,
/// found by descending the Stern-Brocot tree.
pub fn rational_k0(k0: f64, tol: f64, q_max: u64) -> Result<(u64, u64)> {
    if !(0.0..=1.0).contains(&k0) || !(tol > 0.0) {
        return Err(Error::Domain(format!("need k0 in [0, 1] and tol > 0, got {k0}, {tol}")));
    }
    let fail = || Error::Approximation { value: k0, q_max, tol };
    if k0 <= tol {
        return Ok((0, 1));
    }
    if 1.0 - k0 <= tol {
        return Ok((1, 1));
    }
    // The search interval [k0 - tol, k0 + tol] lies inside (0, 1).
    let (lo, hi) = (k0 - tol, k0 + tol);
    let (mut a, mut b, mut c, mut d) = (0u64, 1u64, 1u64, 1u64);
    loop {
        let (p, q) = (a + c, b + d);
        if q > q_max {
            return Err(fail());
        }
        let x = p as f64 / q as f64;
        if x < lo {
            // Jump right as far as stays below lo:
            // largest t with (a + t c) / (b + t d) < lo.
            let cap = ((q_max - b) / d).max(1);
            let t = ((lo * b as f64 - a as f64) / (c as f64 - lo * d as f64)).floor().clamp(1.0, cap as f64) as u64;
            let t = jump(t, |t| (a + t * c) as f64 / (b + t * d) as f64 >= lo);
            a += t * c;
            b += t * d;
        } else if x > hi {
            let cap = ((q_max - d) / b).max(1);
            let t = ((c as f64 - hi * d as f64) / (hi * b as f64 - a as f64)).floor().clamp(1.0, cap as f64) as u64;
            let t = jump(t, |t| (c + t * a) as f64 / (d + t * b) as f64 <= hi);
            c += t * a;
            d += t * b;
        } else {
            return Ok((p, q));
        }
    }
}

/// Decreases a floating-point estimate of a jump length until `overshoot`
/// is false, keeping it at least one.
fn jump(mut t: u64, overshoot: impl Fn(u64) -> bool) -> u64 {
    while t > 1 && overshoot(t) {
        t -= 1;
    }
    t.max(1)
}

/// The most unstable eigenpair at `k`, with the eigenvector converted to a
/// Bloch profile on `T_{2pi}`, normalized in `L^2` and phase-fixed so that
/// its largest coefficient is real and positive.
pub fn unstable_eigenfunction(
    model: &ModelSpec,
    wave: &TravelingWave,
    k: f64,
    n_bloch: Option<usize>,
    threshold: f64,
) -> Result<(Complex64, PeriodicField)> {
    let op = BlochOperator::new(model, wave, n_bloch)?;
    let pairs = bloch_eigenpairs(&op, k)?;
    let (lam, v) = pairs.into_iter().next().ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
    if lam.re <= threshold {
        return Err(Error::Stable { k, max_re: lam.re });
    }
    let field = op.to_field(&v, wave.profile.n())?;
    Ok((lam, normalize_phase(&field)))
}

/// Unit `L^2` norm with the largest coefficient real and positive.
pub fn normalize_phase(field: &PeriodicField) -> PeriodicField {
    let mut f = field.clone();
    let norm = f.l2_norm();
    let (mut best, mut best_abs) = (Complex64::new(1.0, 0.0), -1.0);
    for &c in f.coeffs() {
        if c.norm() > best_abs * (1.0 + 1e-12) {
            best_abs = c.norm();
            best = c;
        }
    }
    let phase = if best_abs > 0.0 { best.conj() / best_abs } else { Complex64::new(1.0, 0.0) };
    let s = phase / norm;
    for c in f.coeffs_mut() {
        *c *= s;
    }
    f
}

/// `|<L_k v, v>| / (||L_k|| ||v||^2)` for a coefficient vector.
pub fn energy_quotient(op: &BlochOperator, k: f64, v: &[Complex64]) -> Result<f64> {
    let l = op.energy_matrix(k);
    let n = l.nrows();
    let mut q = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n {
            s += l[(i, j)] * v[j];
        }
        q += s * v[i].conj();
    }
    let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let ln = linalg::norm2(&l)?;
    Ok(q.norm() / (ln * vv))
}

/// JSON summary of a spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub lambda0: f64,
    pub k0: f64,
    pub p: Option<u64>,
    pub q: Option<u64>,
    pub bands: Vec<(f64, f64)>,
    pub l: Option<f64>,
    pub a_fit: Option<f64>,
}
