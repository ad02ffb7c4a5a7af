//! Bloch wave packets on large tori and the Bloch decomposition of fields.

use crate::error::{Error, Result};
use crate::fourier::PeriodicField;
use num_complex::Complex64;

const COMMENSURATE_TOL: f64 = 1e-12;

/// A midpoint-rule discretization of `2 Re int_I v(k, x) e^{ikx} dk`.
#[derive(Clone, Debug)]
pub struct WavePacket {
    /// Band `I = [lo, hi]`.
    pub band: (f64, f64),
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Profiles on `T_{2 pi}`, one per node, normalized in `L^2`.
    pub profiles: Vec<PeriodicField>,
}

impl WavePacket {
    pub fn new(band: (f64, f64), nodes: Vec<f64>, weights: Vec<f64>, profiles: Vec<PeriodicField>) -> Result<Self> {
        let (lo, hi) = band;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Domain(format!("band [{lo}, {hi}] not inside [0, 1]")));
        }
        if nodes.len() != weights.len() || nodes.len() != profiles.len() {
            return Err(Error::Domain("nodes, weights and profiles differ in length".into()));
        }
        if let Some(k) = nodes.iter().find(|&&k| k < lo - COMMENSURATE_TOL || k > hi + COMMENSURATE_TOL) {
            return Err(Error::Domain(format!("node {k} outside the band")));
        }
        let n0 = profiles.first().map(|p| p.n());
        for p in &profiles {
            if p.q() != 1 || Some(p.n()) != n0 {
                return Err(Error::GridMismatch("profiles must share one grid on T_{2pi}".into()));
            }
            let norm = p.l2_norm();
            if norm != 0.0 && (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!("profile norm {norm} is not 1")));
            }
        }
        Ok(WavePacket { band, nodes, weights, profiles })
    }

    /// Composite midpoint rule on the nodes `j / big_q` inside `[k_lo, k_hi]`.
    /// The band becomes the union of the cells `[k_j - 1/(2Q), k_j + 1/(2Q)]`,
    /// so that the weights sum to its length exactly.
    pub fn midpoint(
        k_lo: f64,
        k_hi: f64,
        big_q: usize,
        mut profile: impl FnMut(f64) -> Result<PeriodicField>,
    ) -> Result<Self> {
        let qf = big_q as f64;
        let j0 = (k_lo * qf - COMMENSURATE_TOL).ceil() as i64;
        let j1 = (k_hi * qf + COMMENSURATE_TOL).floor() as i64;
        if j1 < j0 {
            return Err(Error::DomainTooSmall {
                message: format!("no node j/{big_q} in [{k_lo}, {k_hi}]"),
                suggested_q: (2.0 / (k_hi - k_lo).max(1e-12)).ceil() as usize,
            });
        }
        let h = 0.5 / qf;
        let band = ((j0 as f64 / qf - h).max(0.0), (j1 as f64 / qf + h).min(1.0));
        let nodes: Vec<f64> = (j0..=j1).map(|j| j as f64 / qf).collect();
        let mut weights = vec![1.0 / qf; nodes.len()];
        // Cells clipped at 0 or 1 keep the weight sum equal to the band length.
        if let Some(w) = weights.first_mut() {
            *w = nodes[0] + h - band.0;
        }
        if let Some(w) = weights.last_mut() {
            let last = *nodes.last().unwrap();
            *w = if nodes.len() == 1 { band.1 - band.0 } else { band.1 - (last - h) };
        }
        let profiles = nodes.iter().map(|&k| profile(k)).collect::<Result<Vec<_>>>()?;
        Self::new(band, nodes, weights, profiles)
    }

    pub fn band_length(&self) -> f64 {
        self.band.1 - self.band.0
    }
}

/// Numerator `j` of `k = j / big_q`, if `k` is commensurate.
pub fn commensurate_index(k: f64, big_q: usize) -> Option<i64> {
    let j = (k * big_q as f64).round();
    ((j / big_q as f64 - k).abs() <= COMMENSURATE_TOL).then_some(j as i64)
}

/// `u(x) = 2 Re sum_j w_j v_j(x) e^{i k_j x}` on `T_{2 pi Q}`, optionally with
/// per-node complex amplitudes multiplying the weights.
pub fn synthesize_weighted(packet: &WavePacket, big_q: usize, amps: Option<&[Complex64]>) -> Result<PeriodicField> {
    let Some(first) = packet.profiles.first() else {
        return Err(Error::Domain("packet without nodes".into()));
    };
    let np = first.n();
    let mut out = PeriodicField::zeros(big_q, np * big_q, true)?;
    let qi = big_q as i64;
    for (idx, ((&k, &w), v)) in packet.nodes.iter().zip(&packet.weights).zip(&packet.profiles).enumerate() {
        let j = commensurate_index(k, big_q)
            .ok_or_else(|| Error::Domain(format!("node {k} is not a multiple of 1/{big_q}; increase Q")))?;
        let amp = amps.map_or(Complex64::new(w, 0.0), |a| a[idx] * w);
        for m in v.modes() {
            let c = v.mode(m) * amp;
            let big = m * qi + j;
            let (sp, sn) = match (out.slot(big), out.slot(-big)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Domain(format!("node {k} does not fit the big-torus truncation"))),
            };
            let coeffs = out.coeffs_mut();
            coeffs[sp] += c;
            coeffs[sn] += c.conj();
        }
    }
    Ok(out)
}

/// `u_1(x) = 2 Re sum_j w_j v_1(k_j, x) e^{i k_j x}` on `T_{2 pi Q}`.
pub fn synthesize_packet(packet: &WavePacket, big_q: usize) -> Result<PeriodicField> {
    synthesize_weighted(packet, big_q, None)
}

/// Splits a field on `T_{2 pi Q}` into Bloch components on `T_{2 pi q}`:
/// component `j` collects the big-torus modes `m` with `m = j (mod Q/q)` and
/// has Bloch parameter `k_j = j / Q`.
pub fn bloch_decompose(field: &PeriodicField, q: usize) -> Result<Vec<(f64, PeriodicField)>> {
    let big_q = field.q();
    if q == 0 || !big_q.is_multiple_of(q) {
        return Err(Error::Domain(format!("sub-period {q} does not divide {big_q}")));
    }
    let r = big_q / q;
    let sub_n = 2 * (field.n() / (2 * r)) + 2;
    let mut parts: Vec<PeriodicField> = (0..r).map(|_| PeriodicField::zeros(q, sub_n, false)).collect::<Result<_>>()?;
    let ri = r as i64;
    for m in field.modes() {
        let j = m.rem_euclid(ri);
        let n = (m - j) / ri;
        let part = &mut parts[j as usize];
        let slot = part.slot(n).ok_or_else(|| Error::Domain("sub-grid too small".into()))?;
        part.coeffs_mut()[slot] = field.mode(m);
    }
    Ok(parts.into_iter().enumerate().map(|(j, p)| (j as f64 / big_q as f64, p)).collect())
}

/// Inverse of [`bloch_decompose`].
pub fn bloch_recompose(parts: &[(f64, PeriodicField)], big_q: usize, n: usize, real: bool) -> Result<PeriodicField> {
    let mut out = PeriodicField::zeros(big_q, n, false)?;
    for (k, part) in parts {
        if !big_q.is_multiple_of(part.q()) {
            return Err(Error::Domain("component period does not divide Q".into()));
        }
        let r = (big_q / part.q()) as i64;
        let j = commensurate_index(*k, big_q)
            .ok_or_else(|| Error::Domain(format!("component {k} not commensurate with 1/{big_q}")))?;
        for m in part.modes() {
            let c = part.mode(m);
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let slot = out
                .slot(m * r + j)
                .ok_or_else(|| Error::Domain("component mode outside the target truncation".into()))?;
            out.coeffs_mut()[slot] = c;
        }
    }
    if real {
        out.symmetrize();
    }
    Ok(out)
}
