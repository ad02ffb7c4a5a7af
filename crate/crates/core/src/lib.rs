//! Periodic traveling waves of nonlocal dispersive equations and their
//! modulational stability.
//!
//! The crate covers Fourier multipliers ([`symbols`]), spectral fields on
//! periodic tori ([`fourier`]), Newton continuation of traveling waves
//! ([`wave`]), Floquet-Bloch spectra ([`bloch`]), linear semigroup bounds
//! ([`semigroup`]), pseudo-spectral time stepping ([`evolution`]) and the
//! nonlinear instability experiments built on top ([`experiments`]).

// Checks such as `!(x > 0.0)` are written negated so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod fourier;
pub mod linalg;
pub mod packet;
pub mod parallel;
pub mod semigroup;
pub mod symbols;
pub mod wave;

pub use error::{Error, Result};
pub use fourier::PeriodicField;
pub use symbols::{ModelFamily, ModelSpec, Nonlinearity, SymbolKind, SymbolSpec};
pub use wave::{Constraints, Gauge, Level, TravelingWave};

/// Version string recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
