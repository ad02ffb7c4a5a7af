//! Dense complex linear algebra on top of faer.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64;

pub type CMat = Mat<Complex64>;

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    check_finite(m)?;
    m.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Eigenvalues and right eigenvectors (columns of the returned matrix).
pub fn eigen(m: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    check_finite(m)?;
    let evd = m.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues of a Hermitian matrix in nondecreasing order.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    check_finite(m)?;
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Largest singular value.
pub fn norm2(m: &CMat) -> Result<f64> {
    check_finite(m)?;
    let s = m.singular_values().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn norm_fro(m: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    check_finite(a)?;
    let x = a.partial_piv_lu().solve(b);
    check_finite(&x).map_err(|_| Error::Degenerate("singular linear system".into()))?;
    Ok(x)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    solve(a, &identity(a.nrows()))
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

fn check_finite(m: &CMat) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Eigen("matrix has non-finite entries".into()));
            }
        }
    }
    Ok(())
}

fn combine(terms: &[(f64, &CMat)], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| terms.iter().map(|(c, m)| m[(i, j)] * *c).sum())
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Pade
/// approximant.
pub fn expm(a: &CMat) -> Result<CMat> {
    check_finite(a)?;
    let n = a.nrows();
    let norm = norm1(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = combine(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let u_poly = &a6 * &inner_u + combine(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)], n);
    let u = &a * &u_poly;
    let inner_v = combine(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let v = &a6 * &inner_v + combine(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)], n);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `exp(t D)` through the eigendecomposition of `D`, used to cross-check
/// [`expm`] on diagonalizable matrices.
pub fn expm_eigen(a: &CMat, t: f64) -> Result<CMat> {
    let n = a.nrows();
    let (vals, vecs) = eigen(a)?;
    let inv = inverse(&vecs)?;
    let scaled = Mat::from_fn(n, n, |i, j| vecs[(i, j)] * (vals[j] * t).exp());
    Ok(&scaled * &inv)
}
