//! Truncated Fourier series on the torus `T_{2 pi q}`.
//!
//! Coefficients are stored in FFT order: slot `j` holds mode `n = j` for
//! `j < N/2` and `n = j - N` otherwise. Slot `N/2` (the unpaired Nyquist mode)
//! is kept at zero so that differentiation stays skew.

use crate::error::{Error, Result};
use crate::symbols::SymbolSpec;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward (`e^{-i}`) or inverse (`e^{+i}`, unnormalized) FFT of length `len`.
/// Plans are cached per thread.
pub fn fft_plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

/// Smallest even 5-smooth integer that is at least `x`.
pub fn smooth_len(x: f64) -> usize {
    let target = x.ceil().max(2.0) as usize;
    let mut best = usize::MAX;
    let mut p2 = 2usize;
    while p2 < 2 * target {
        let mut p3 = p2;
        while p3 < 2 * target {
            let mut p5 = p3;
            while p5 < 2 * target {
                if p5 >= target && p5 < best {
                    best = p5;
                }
                p5 *= 5;
            }
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}

/// Grid length that makes products of total degree `(2 factor - 1)` exact for
/// fields with `n` retained slots.
pub fn padded_len(n: usize, factor: f64) -> usize {
    smooth_len(n as f64 * factor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    q: usize,
    n: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl PeriodicField {
    fn check_shape(q: usize, n: usize) -> Result<()> {
        if q == 0 {
            return Err(Error::Domain("period multiple q must be positive".into()));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Domain(format!("truncation N must be even and >= 2, got {n}")));
        }
        Ok(())
    }

    pub fn zeros(q: usize, n: usize, real: bool) -> Result<Self> {
        Self::check_shape(q, n)?;
        Ok(PeriodicField { q, n, coeffs: vec![Complex64::new(0.0, 0.0); n], real })
    }

    /// Builds a field from a function of the mode number. For real fields only
    /// `n >= 0` is queried and the negative modes are conjugates.
    pub fn from_modes(q: usize, n: usize, real: bool, mut f: impl FnMut(i64) -> Complex64) -> Result<Self> {
        let mut out = Self::zeros(q, n, real)?;
        let h = (n / 2) as i64;
        if real {
            out.coeffs[0] = Complex64::new(f(0).re, 0.0);
            for m in 1..h {
                let c = f(m);
                out.coeffs[m as usize] = c;
                out.coeffs[n - m as usize] = c.conj();
            }
        } else {
            for m in (1 - h)..h {
                out.coeffs[Self::slot_of(n, m)] = f(m);
            }
        }
        Ok(out)
    }

    /// Wraps coefficients given in FFT order. The Nyquist slot is zeroed and
    /// real fields are symmetrized.
    pub fn from_coeffs(q: usize, coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        let n = coeffs.len();
        Self::check_shape(q, n)?;
        let mut out = PeriodicField { q, n, coeffs, real };
        out.coeffs[n / 2] = Complex64::new(0.0, 0.0);
        if real {
            out.symmetrize();
        }
        Ok(out)
    }

    /// Field from samples `u(2 pi q j / G)`, `j < G`, with `G >= n`.
    pub fn from_samples(q: usize, n: usize, samples: &[Complex64], real: bool) -> Result<Self> {
        Self::check_shape(q, n)?;
        let g = samples.len();
        if g < n {
            return Err(Error::GridMismatch(format!("{g} samples cannot carry {n} modes")));
        }
        let mut buf = samples.to_vec();
        fft_plan(g, true).process(&mut buf);
        let mut out = Self::zeros(q, n, real)?;
        out.gather_from(&buf);
        Ok(out)
    }

    /// Real field from real samples.
    pub fn from_real_samples(q: usize, n: usize, samples: &[f64]) -> Result<Self> {
        let s: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_samples(q, n, &s, true)
    }

    #[inline]
    fn slot_of(n: usize, m: i64) -> usize {
        if m >= 0 {
            m as usize
        } else {
            (n as i64 + m) as usize
        }
    }

    /// Slot of mode `m`, or `None` outside `|m| < N/2`.
    #[inline]
    pub fn slot(&self, m: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        (m.abs() < h).then(|| Self::slot_of(self.n, m))
    }

    /// Mode number held in `slot`.
    #[inline]
    pub fn mode_of_slot(&self, slot: usize) -> i64 {
        if slot < self.n / 2 {
            slot as i64
        } else {
            slot as i64 - self.n as i64
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Mutable coefficients. Callers are responsible for the Nyquist slot and,
    /// for real fields, Hermitian symmetry (see [`PeriodicField::symmetrize`]).
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `m` (zero outside the truncation).
    pub fn mode(&self, m: i64) -> Complex64 {
        self.slot(m).map_or(Complex64::new(0.0, 0.0), |s| self.coeffs[s])
    }

    /// Frequency `xi_m = m / q`.
    #[inline]
    pub fn freq(&self, m: i64) -> f64 {
        m as f64 / self.q as f64
    }

    /// Modes `-N/2 + 1 ..= N/2 - 1` in increasing order.
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let h = (self.n / 2) as i64;
        (1 - h)..h
    }

    /// Marks the field complex-valued (no symmetry assumed from now on).
    pub fn into_complex(mut self) -> Self {
        self.real = false;
        self
    }

    /// Projects onto real-valued fields: `c_{-n} <- conj(c_n)` by averaging.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        self.coeffs[0].im = 0.0;
        self.coeffs[n / 2] = Complex64::new(0.0, 0.0);
        for m in 1..n / 2 {
            let a = self.coeffs[m];
            let b = self.coeffs[n - m].conj();
            let avg = (a + b) * 0.5;
            self.coeffs[m] = avg;
            self.coeffs[n - m] = avg.conj();
        }
        self.real = true;
    }

    /// `max |c_{-n} - conj(c_n)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut d = self.coeffs[0].im.abs();
        for m in 1..n / 2 {
            d = d.max((self.coeffs[n - m] - self.coeffs[m].conj()).norm());
        }
        d
    }

    /// Largest sine coefficient of a real field, `max |c_n - c_{-n}|`.
    pub fn odd_content(&self) -> f64 {
        let n = self.n;
        (1..n / 2).map(|m| (self.coeffs[m] - self.coeffs[n - m]).norm()).fold(0.0, f64::max)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.q != other.q || self.n != other.n {
            return Err(Error::GridMismatch(format!("(q={}, N={}) vs (q={}, N={})", self.q, self.n, other.q, other.n)));
        }
        Ok(())
    }

    /// Places the coefficients into a zero-padded buffer of length `g`.
    pub fn spread_into(&self, buf: &mut [Complex64]) {
        let g = buf.len();
        let h = self.n / 2;
        buf.fill(Complex64::new(0.0, 0.0));
        buf[..h].copy_from_slice(&self.coeffs[..h]);
        for m in 1..h {
            buf[g - m] = self.coeffs[self.n - m];
        }
    }

    /// Reads truncated coefficients from an unnormalized forward transform of
    /// length `g` (divides by `g`).
    fn gather_from(&mut self, buf: &[Complex64]) {
        let g = buf.len();
        let h = self.n / 2;
        let scale = 1.0 / g as f64;
        for (c, b) in self.coeffs[..h].iter_mut().zip(&buf[..h]) {
            *c = b * scale;
        }
        for m in 1..h {
            self.coeffs[self.n - m] = buf[g - m] * scale;
        }
        self.coeffs[h] = Complex64::new(0.0, 0.0);
        if self.real {
            self.symmetrize();
        }
    }

    /// Samples on the uniform grid of `g >= N` points.
    pub fn samples(&self, g: usize) -> Vec<Complex64> {
        assert!(g >= self.n, "grid of {g} points cannot hold {} modes", self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        self.spread_into(&mut buf);
        fft_plan(g, false).process(&mut buf);
        buf
    }

    /// Real parts of [`PeriodicField::samples`].
    pub fn real_samples(&self, g: usize) -> Vec<f64> {
        self.samples(g).into_iter().map(|z| z.re).collect()
    }

    /// Direct evaluation at a point (no FFT).
    pub fn eval_at(&self, x: f64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (slot, c) in self.coeffs.iter().enumerate() {
            let xi = self.freq(self.mode_of_slot(slot));
            s += c * Complex64::from_polar(1.0, xi * x);
        }
        s
    }

    /// Domain length `2 pi q`.
    pub fn period(&self) -> f64 {
        2.0 * PI * self.q as f64
    }

    /// `<f, g> = int f conj(g) dx` over `T_{2 pi q}`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.same_grid(other)?;
        let s: Complex64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.period())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.period()).sqrt()
    }

    /// `(sum (1 + |xi_n + k|^2)^s |c_n|^2 2 pi q)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64, k: f64) -> f64 {
        let mut acc = 0.0;
        for (slot, c) in self.coeffs.iter().enumerate() {
            let xi = self.freq(self.mode_of_slot(slot)) + k;
            acc += (1.0 + xi * xi).powf(s) * c.norm_sqr();
        }
        (acc * self.period()).sqrt()
    }

    /// Maximum modulus over the uniform grid of `g` points.
    pub fn sup_norm(&self, g: usize) -> f64 {
        self.samples(g).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Coefficient-wise multiplication by `m(xi_n)`.
    pub fn map_modes(&self, real: bool, mut m: impl FnMut(f64) -> Complex64) -> Self {
        let mut out = self.clone();
        for slot in 0..self.n {
            let xi = self.freq(self.mode_of_slot(slot));
            out.coeffs[slot] *= m(xi);
        }
        out.coeffs[self.n / 2] = Complex64::new(0.0, 0.0);
        out.real = real && self.real;
        out
    }

    /// `c_n -> alpha(xi_n + k) c_n`.
    pub fn apply_multiplier(&self, spec: &SymbolSpec, k: f64) -> Result<Self> {
        check_bloch(k)?;
        Ok(self.map_modes(k == 0.0, |xi| Complex64::new(spec.eval(xi + k), 0.0)))
    }

    /// Spatial derivative.
    pub fn derivative(&self) -> Self {
        self.map_modes(true, |xi| Complex64::new(0.0, xi))
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let mut out = self.clone();
        for (o, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o += b * a;
        }
        out.real = self.real && other.real;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Truncated product computed on a grid padded by 3/2, which equals the
    /// exact convolution restricted to `|n| < N/2`.
    pub fn dealiased_product(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let g = padded_len(self.n, 1.5);
        let a = self.samples(g);
        let b = other.samples(g);
        let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_samples(self.q, self.n, &prod, self.real && other.real)
    }

    /// Applies `func` pointwise to a real field on a grid padded by `factor`.
    pub fn map_pointwise(&self, factor: f64, func: impl Fn(f64) -> f64) -> Result<Self> {
        let g = padded_len(self.n, factor);
        let vals: Vec<Complex64> = self.samples(g).into_iter().map(|z| Complex64::new(func(z.re), 0.0)).collect();
        Self::from_samples(self.q, self.n, &vals, true)
    }

    /// Copies the field onto another truncation (modes beyond the target are
    /// dropped, new modes are zero).
    pub fn resized(&self, n: usize) -> Result<Self> {
        let mut out = Self::zeros(self.q, n, self.real)?;
        for m in self.modes() {
            if let Some(s) = out.slot(m) {
                out.coeffs[s] = self.coeffs[self.slot(m).unwrap()];
            }
        }
        Ok(out)
    }

    /// The same function viewed on `T_{2 pi q r}`: mode `m` moves to `m r`.
    pub fn lifted(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::Domain("lift factor must be positive".into()));
        }
        let mut out = Self::zeros(self.q * r, self.n * r, self.real)?;
        for m in self.modes() {
            let s = out.slot(m * r as i64).expect("lifted mode inside truncation");
            out.coeffs[s] = self.coeffs[self.slot(m).unwrap()];
        }
        Ok(out)
    }

    /// Writes the binary snapshot: four little-endian `u64` words
    /// `(q, N, realness, count)`, `count` pairs of `f64` `(re, im)` in FFT slot
    /// order, then a `u64` byte length and that many bytes of UTF-8 provenance.
    pub fn write_snapshot<W: Write>(&self, w: &mut W, provenance: &str) -> Result<()> {
        for word in [self.q as u64, self.n as u64, self.real as u64, self.coeffs.len() as u64] {
            w.write_all(&word.to_le_bytes())?;
        }
        for c in &self.coeffs {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        w.write_all(&(provenance.len() as u64).to_le_bytes())?;
        w.write_all(provenance.as_bytes())?;
        Ok(())
    }

    /// Reads a snapshot written by [`PeriodicField::write_snapshot`]; returns
    /// the field and its provenance text.
    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<(Self, String)> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
            Ok(u64::from_le_bytes(word))
        };
        let q = next(r)? as usize;
        let n = next(r)? as usize;
        let realness = next(r)?;
        let count = next(r)? as usize;
        if realness > 1 {
            return Err(Error::Format(format!("realness flag must be 0 or 1, got {realness}")));
        }
        if q == 0 || n < 2 || !n.is_multiple_of(2) || n > (1 << 28) {
            return Err(Error::Format(format!("invalid shape q={q}, N={n}")));
        }
        if count != n {
            return Err(Error::Format(format!("coefficient count {count} does not match N={n}")));
        }
        let mut coeffs = Vec::with_capacity(n);
        let mut b = [0u8; 16];
        for _ in 0..n {
            r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated data: {e}")))?;
            let re = f64::from_le_bytes(b[..8].try_into().unwrap());
            let im = f64::from_le_bytes(b[8..].try_into().unwrap());
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Format("non-finite coefficient".into()));
            }
            coeffs.push(Complex64::new(re, im));
        }
        let mut provenance = String::new();
        if let Ok(len) = next(r) {
            let mut bytes = vec![0u8; len.min(1 << 20) as usize];
            r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated provenance: {e}")))?;
            provenance = String::from_utf8(bytes).map_err(|_| Error::Format("provenance is not UTF-8".into()))?;
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let field = PeriodicField { q, n, coeffs, real: realness == 1 };
        if field.coeffs[n / 2].norm() != 0.0 {
            return Err(Error::Format("Nyquist coefficient must be zero".into()));
        }
        if field.real && field.hermitian_defect() > 1e-12 * scale {
            return Err(Error::Format("real field without Hermitian symmetry".into()));
        }
        Ok((field, provenance))
    }

    /// CSV rows `n, xi, re, im, abs` in increasing mode order, after the given
    /// `#` comment lines.
    pub fn write_spectrum_csv<W: Write>(&self, w: &mut W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "n,xi,re,im,abs")?;
        for m in self.modes() {
            let c = self.mode(m);
            writeln!(w, "{m},{},{},{},{}", self.freq(m), c.re, c.im, c.norm())?;
        }
        Ok(())
    }
}

pub(crate) fn check_bloch(k: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Domain(format!("Bloch parameter {k} outside [0, 1]")));
    }
    Ok(())
}
