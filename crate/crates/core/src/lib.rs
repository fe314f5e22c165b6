//! Reflection positivity, Gaussian moments and Osterwalder-Schrader
//! reconstruction for complex covariances on finite lattices.
//!
//! Everything is generic over the real scalar (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

pub mod charged;
pub mod compactify;
pub mod error;
mod fft;
pub mod gaussian;
pub mod grid;
pub mod linalg;
pub mod measures;
pub mod multiplier;
pub mod quantize;
pub mod rp_check;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::{AxisKind, HalfSpace};
pub use rp_check::{RPCondition, Verdict, DEFAULT_TOL};
pub use charged::{Charge, ChargedCondition};
pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Complex = num_complex::Complex64;
pub type AxisSpec = grid::AxisSpec<f64>;
pub type SpacetimeGrid = grid::SpacetimeGrid<f64>;
pub type LatticeField = grid::LatticeField<f64>;
pub type MultiplierSpec = multiplier::MultiplierSpec<f64>;
pub type Profile = multiplier::Profile<f64>;
pub type FourierMultiplier = multiplier::FourierMultiplier<f64>;
pub type CovarianceOperator = multiplier::CovarianceOperator<f64>;
pub type CMatrix = linalg::CMatrix<f64>;
pub type RPReport = rp_check::RPReport<f64>;
pub type WitnessResult = rp_check::WitnessResult<f64>;
pub type ChargedCovariance = charged::ChargedCovariance<f64>;
pub type ChargedTestFunction = charged::ChargedTestFunction<f64>;
pub type ChargedReport = charged::ChargedReport<f64>;
pub type PeriodizationResult = compactify::PeriodizationResult<f64>;
pub type OSQuantization = quantize::OSQuantization<f64>;
