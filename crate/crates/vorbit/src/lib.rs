//! Verified orbit computation for one-dimensional discrete dynamical systems.
//!
//! The crate computes orbits x_{n+1} = f(x_n) in binary floating-point
//! arithmetic with an adjustable mantissa length, and carries a rigorous
//! per-step error bound alongside every iterate. On top of that sit a
//! minimal-mantissa search (the smallest mantissa for which every orbit point
//! keeps a requested relative accuracy), a naive interval-iteration mode for
//! comparison, and estimators that relate the observed precision-loss rate to
//! the Ljapunov exponent of the map.
//!
//! Module layout:
//!
//! * [`mp`] - arbitrary-mantissa floats with correct rounding,
//! * [`interval`] - directed-rounding interval arithmetic and derivative
//!   range bounds,
//! * [`systems`] - the map descriptions (logistic variants, shifts),
//! * [`ball`] - midpoint/error-bound representations and the verified step,
//! * [`engine`] - orbit runs and the minimal-mantissa search,
//! * [`analysis`] - loss-of-significance rates, Ljapunov estimates, sweeps,
//! * [`oracle`] - exact rational reference orbits for validation.

pub mod analysis;
pub mod ball;
pub mod engine;
pub mod error;
pub mod interval;
pub mod mp;
pub mod oracle;
pub mod systems;

pub use error::Error;
