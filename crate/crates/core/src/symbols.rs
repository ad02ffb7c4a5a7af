//! Dispersion symbols, nonlinearities and the model families built from them.
//!
//! A symbol is the Fourier multiplier `alpha(xi)` of the dispersive operator
//! `M`. Every symbol carries a frequency scale `kappa` (the wave number of the
//! traveling wave, so that the profile is always `2*pi`-periodic in the scaled
//! variable) and an additive shift `c1`. Evaluation returns
//! `alpha_kind(kappa * |xi|) - c1`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Frequencies below this magnitude use the series branch of symbols with a
/// removable singularity at the origin.
const SERIES_CUTOFF: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymbolKind {
    Kdv,
    BenjaminOno,
    Fractional { m: f64 },
    Whitham,
    Ilw { depth: f64 },
    BbmLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    /// `c1 |xi|^m <= alpha(xi) <= c2 |xi|^m` for large `|xi|`.
    Differential(f64),
    /// `c1 |xi|^-m <= alpha(xi) <= c2 |xi|^-m` for large `|xi|`.
    Smoothing(f64),
}

impl Classification {
    pub fn exponent(self) -> f64 {
        match self {
            Classification::Differential(m) | Classification::Smoothing(m) => m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub kind: SymbolKind,
    /// Additive normalization `c1`; the working symbol is `alpha - c1`.
    pub shift: f64,
    /// Frequency scale `kappa`.
    pub scale: f64,
}

impl SymbolSpec {
    pub fn new(kind: SymbolKind) -> Result<Self> {
        match kind {
            SymbolKind::Fractional { m } if !(m.is_finite() && m > 0.5) => {
                return Err(Error::Domain(format!("fractional exponent must exceed 1/2, got {m}")))
            }
            SymbolKind::Ilw { depth } if !(depth.is_finite() && depth > 0.0) => {
                return Err(Error::Domain(format!("ilw depth must be positive, got {depth}")))
            }
            _ => {}
        }
        Ok(SymbolSpec { kind, shift: 0.0, scale: 1.0 })
    }

    pub fn kdv() -> Self {
        SymbolSpec { kind: SymbolKind::Kdv, shift: 0.0, scale: 1.0 }
    }

    pub fn benjamin_ono() -> Self {
        SymbolSpec { kind: SymbolKind::BenjaminOno, shift: 0.0, scale: 1.0 }
    }

    pub fn whitham() -> Self {
        SymbolSpec { kind: SymbolKind::Whitham, shift: 0.0, scale: 1.0 }
    }

    pub fn bbm_linear() -> Self {
        SymbolSpec { kind: SymbolKind::BbmLinear, shift: 0.0, scale: 1.0 }
    }

    pub fn fractional(m: f64) -> Result<Self> {
        Self::new(SymbolKind::Fractional { m })
    }

    pub fn ilw(depth: f64) -> Result<Self> {
        Self::new(SymbolKind::Ilw { depth })
    }

    /// Rescales frequencies by `kappa > 0`.
    pub fn with_scale(mut self, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Domain(format!("frequency scale must be positive, got {kappa}")));
        }
        self.scale = kappa;
        Ok(self)
    }

    /// Parses the catalog names `kdv`, `bo`, `frac:m=<m>`, `whitham`,
    /// `ilw:H=<depth>` and `bbm`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let param = |key: &str| -> Result<f64> {
            let arg = arg.ok_or_else(|| Error::Domain(format!("symbol `{name}` needs `{key}=`")))?;
            let (k, v) =
                arg.split_once('=').ok_or_else(|| Error::Domain(format!("malformed symbol parameter `{arg}`")))?;
            if k.trim() != key {
                return Err(Error::Domain(format!("symbol `{head}` takes `{key}`, got `{k}`")));
            }
            v.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number `{v}` in symbol `{name}`")))
        };
        let no_arg = |spec: SymbolSpec| match arg {
            None => Ok(spec),
            Some(a) => Err(Error::Domain(format!("symbol `{head}` takes no parameter, got `{a}`"))),
        };
        match head {
            "kdv" => no_arg(Self::kdv()),
            "bo" => no_arg(Self::benjamin_ono()),
            "whitham" => no_arg(Self::whitham()),
            "bbm" => no_arg(Self::bbm_linear()),
            "frac" => Self::fractional(param("m")?),
            "ilw" => Self::ilw(param("H")?),
            _ => Err(Error::Domain(format!("unknown symbol `{name}`"))),
        }
    }

    /// Catalog name; the inverse of [`SymbolSpec::parse`] up to scale and shift.
    pub fn name(&self) -> String {
        match self.kind {
            SymbolKind::Kdv => "kdv".into(),
            SymbolKind::BenjaminOno => "bo".into(),
            SymbolKind::Fractional { m } => format!("frac:m={m}"),
            SymbolKind::Whitham => "whitham".into(),
            SymbolKind::Ilw { depth } => format!("ilw:H={depth}"),
            SymbolKind::BbmLinear => "bbm".into(),
        }
    }

    /// The symbol at frequency `xi`.
    pub fn evaluate(&self, xi: f64) -> Result<f64> {
        if !xi.is_finite() {
            return Err(Error::Domain(format!("non-finite frequency {xi}")));
        }
        Ok(self.eval(xi))
    }

    /// Evaluation without the finiteness check, for inner loops over grids
    /// that are finite by construction.
    #[inline]
    pub fn eval(&self, xi: f64) -> f64 {
        // |xi| first: evenness then holds bit for bit.
        let x = self.scale * xi.abs();
        let raw = match self.kind {
            SymbolKind::Kdv => x * x,
            SymbolKind::BenjaminOno => x,
            SymbolKind::Fractional { m } => x.powf(m),
            SymbolKind::Whitham => {
                if x < SERIES_CUTOFF {
                    let x2 = x * x;
                    1.0 - x2 / 6.0 + 19.0 * x2 * x2 / 360.0
                } else {
                    (x.tanh() / x).sqrt()
                }
            }
            SymbolKind::Ilw { depth } => {
                let y = x * depth;
                if y < SERIES_CUTOFF {
                    // x coth(xH) - 1/H = x^2 H/3 - x^4 H^3/45 + ...
                    let x2 = x * x;
                    x2 * depth / 3.0 - x2 * x2 * depth.powi(3) / 45.0
                } else {
                    x / y.tanh() - 1.0 / depth
                }
            }
            SymbolKind::BbmLinear => 1.0 + x * x,
        };
        raw - self.shift
    }

    /// Tail class and exponent of the unshifted kind.
    pub fn classify(&self) -> Classification {
        match self.kind {
            SymbolKind::Kdv | SymbolKind::BbmLinear => Classification::Differential(2.0),
            SymbolKind::BenjaminOno | SymbolKind::Ilw { .. } => Classification::Differential(1.0),
            SymbolKind::Fractional { m } => Classification::Differential(m),
            SymbolKind::Whitham => Classification::Smoothing(0.5),
        }
    }

    /// Shifts the symbol so that it is at least one on `[0, grid_max_xi]`.
    ///
    /// Returns the shifted spec and `c1 = inf alpha - 1` over the grid. Only
    /// `alpha - c` enters the dynamics, so downstream speeds become `c - c1`.
    pub fn positive_shift(&self, grid_max_xi: f64) -> Result<(SymbolSpec, f64)> {
        if !(grid_max_xi.is_finite() && grid_max_xi > 0.0) {
            return Err(Error::Domain(format!("grid_max_xi must be positive, got {grid_max_xi}")));
        }
        const SAMPLES: usize = 4096;
        let inf =
            (0..=SAMPLES).map(|j| self.eval(grid_max_xi * j as f64 / SAMPLES as f64)).fold(f64::INFINITY, f64::min);
        let c1 = inf - 1.0;
        let mut shifted = *self;
        shifted.shift += c1;
        Ok((shifted, c1))
    }
}

impl fmt::Display for SymbolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        if self.scale != 1.0 {
            write!(f, "@{}", self.scale)?;
        }
        if self.shift != 0.0 {
            write!(f, "-{}", self.shift)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NonlinearityForm {
    /// `f(u) = u^p`; non-integer `p` uses `|u|^p`.
    Power(f64),
    /// `f(u) = -u^p`; non-integer `p` uses `-|u|^p`.
    MinusPower(f64),
    /// `f(u) = u^2`.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub form: NonlinearityForm,
}

impl Nonlinearity {
    pub fn new(form: NonlinearityForm) -> Result<Self> {
        match form {
            NonlinearityForm::Power(p) | NonlinearityForm::MinusPower(p) if !(p.is_finite() && p >= 1.0) => {
                Err(Error::Domain(format!("power must be at least 1, got {p}")))
            }
            _ => Ok(Nonlinearity { form }),
        }
    }

    pub fn quadratic() -> Self {
        Nonlinearity { form: NonlinearityForm::Quadratic }
    }

    pub fn power(p: f64) -> Result<Self> {
        Self::new(NonlinearityForm::Power(p))
    }

    pub fn minus_power(p: f64) -> Result<Self> {
        Self::new(NonlinearityForm::MinusPower(p))
    }

    /// Parses `u^2`, `u^<p>` and `-u^<p>`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let (sign, rest) = match t.strip_prefix('-') {
            Some(r) => (-1.0, r),
            None => (1.0, t),
        };
        let p = rest
            .strip_prefix("u^")
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(|| Error::Domain(format!("unknown nonlinearity `{text}`")))?;
        if sign > 0.0 && p == 2.0 {
            Ok(Self::quadratic())
        } else if sign > 0.0 {
            Self::power(p)
        } else {
            Self::minus_power(p)
        }
    }

    pub fn name(&self) -> String {
        match self.form {
            NonlinearityForm::Quadratic => "u^2".into(),
            NonlinearityForm::Power(p) => format!("u^{p}"),
            NonlinearityForm::MinusPower(p) => format!("-u^{p}"),
        }
    }

    fn sign_and_power(&self) -> (f64, f64) {
        match self.form {
            NonlinearityForm::Quadratic => (1.0, 2.0),
            NonlinearityForm::Power(p) => (1.0, p),
            NonlinearityForm::MinusPower(p) => (-1.0, p),
        }
    }

    /// The exponent `p`.
    pub fn degree(&self) -> f64 {
        self.sign_and_power().1
    }

    /// Integer exponents make `f` a polynomial.
    pub fn integer_power(&self) -> Option<u32> {
        let p = self.degree();
        (p.fract() == 0.0 && p <= 16.0).then_some(p as u32)
    }

    /// Padding factor that makes products of degree `p` alias-free.
    pub fn pad_factor(&self) -> f64 {
        ((self.degree().ceil() + 1.0) / 2.0).max(1.5)
    }

    /// `d^order f / du^order` at `u`; order 0 is `f` itself.
    pub fn derivative(&self, order: u32, u: f64) -> f64 {
        let (sign, p) = self.sign_and_power();
        let mut coeff = sign;
        for j in 0..order {
            coeff *= p - j as f64;
        }
        if coeff == 0.0 {
            return 0.0;
        }
        let e = p - order as f64;
        match self.integer_power() {
            Some(ip) => {
                if order > ip {
                    0.0
                } else {
                    coeff * u.powi((ip - order) as i32)
                }
            }
            None => {
                // |u|^p differentiated `order` times picks up sign(u)^order.
                let mag = coeff * u.abs().powf(e);
                if order % 2 == 1 && u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        self.derivative(0, u)
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        self.derivative(1, u)
    }

    #[inline]
    pub fn d2f(&self, u: f64) -> f64 {
        self.derivative(2, u)
    }

    /// Antiderivative with `F(0) = 0`.
    pub fn antiderivative(&self, u: f64) -> f64 {
        let (sign, p) = self.sign_and_power();
        match self.integer_power() {
            Some(ip) => sign * u.powi(ip as i32 + 1) / (p + 1.0),
            None => sign * u.signum() * u.abs().powf(p + 1.0) / (p + 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    /// `u_t + (M u + f(u))_x = 0`.
    KdvType,
    /// `(1 - d_xx) u_t + (u + f(u))_x = 0`.
    Bbm,
}

/// A model equation in the scaled variable `z = kappa x`, with time measured
/// so that the skew operator is `J = -d_z` (KdV type) or `J = M^{-1} d_z` (BBM).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub symbol: SymbolSpec,
    pub nonlinearity: Nonlinearity,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, symbol: SymbolSpec, nonlinearity: Nonlinearity) -> Result<Self> {
        let bbm_symbol = symbol.kind == SymbolKind::BbmLinear;
        match family {
            ModelFamily::Bbm if !bbm_symbol => Err(Error::Domain("the BBM family requires the bbm symbol".into())),
            ModelFamily::KdvType if bbm_symbol => Err(Error::Domain("the bbm symbol belongs to the BBM family".into())),
            _ => Ok(ModelSpec { family, symbol, nonlinearity }),
        }
    }

    /// KdV-type model with the given symbol and nonlinearity.
    pub fn kdv_type(symbol: SymbolSpec, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::new(ModelFamily::KdvType, symbol, nonlinearity)
    }

    /// BBM model with wave number `m` and `f(u) = u^2`.
    pub fn bbm(m: f64) -> Result<Self> {
        Self::new(ModelFamily::Bbm, SymbolSpec::bbm_linear().with_scale(m)?, Nonlinearity::quadratic())
    }

    /// Whitham model with wave number `kappa` and `f(u) = u^2`.
    pub fn whitham(kappa: f64) -> Result<Self> {
        Self::kdv_type(SymbolSpec::whitham().with_scale(kappa)?, Nonlinearity::quadratic())
    }

    pub fn id(&self) -> String {
        let fam = match self.family {
            ModelFamily::KdvType => "kdv_type",
            ModelFamily::Bbm => "bbm",
        };
        format!("{fam}/{}/{}", self.symbol, self.nonlinearity.name())
    }

    /// `+1` when the nonlinearity enters the energy operator with a plus sign
    /// (`L = M - c + f'(u_c)`), `-1` for BBM (`L = cM - 1 - f'(u_c)`).
    #[inline]
    pub fn sigma(&self) -> f64 {
        match self.family {
            ModelFamily::KdvType => 1.0,
            ModelFamily::Bbm => -1.0,
        }
    }

    /// Diagonal part of the energy operator `L` at frequency `xi`.
    #[inline]
    pub fn energy_diag(&self, xi: f64, c: f64) -> f64 {
        let a = self.symbol.eval(xi);
        match self.family {
            ModelFamily::KdvType => a - c,
            ModelFamily::Bbm => c * a - 1.0,
        }
    }

    /// Symbol of the skew operator `J` at frequency `xi`.
    #[inline]
    pub fn j_symbol(&self, xi: f64) -> num_complex::Complex64 {
        match self.family {
            ModelFamily::KdvType => num_complex::Complex64::new(0.0, -xi),
            ModelFamily::Bbm => num_complex::Complex64::new(0.0, xi / self.symbol.eval(xi)),
        }
    }

    /// Symbol of the linear part `J (L - f'(u_c))` of the traveling-frame flow.
    #[inline]
    pub fn linear_symbol(&self, xi: f64, c: f64) -> num_complex::Complex64 {
        self.j_symbol(xi) * self.energy_diag(xi, c)
    }
}
