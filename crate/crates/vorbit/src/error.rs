//! Error type shared across the crate.

use std::fmt;

/// Everything that can go wrong while building maps, rounding values or
/// running orbits. Variants carry enough context to be actionable from the
/// command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A decimal literal could not be parsed.
    ParseDecimal(String),
    /// A mantissa length below the supported minimum of 2 bits.
    InvalidPrecision(u32),
    /// Division by an exact zero.
    DivisionByZero,
    /// A map or run parameter outside its admissible range.
    InvalidParameter(String),
    /// A shifted system whose domain still contains zero.
    InvalidShift(String),
    /// The rounding-operation count does not satisfy K * 2^-m < 1.
    PrecisionTooSmall { k: u32, m: u32 },
    /// An iterate left the map domain by more than its error radius.
    DomainEscape { step: usize, value: String },
    /// A result that requires a converged run was requested from one that
    /// exhausted the mantissa cap.
    NotConverged,
    /// Exact rational iteration would exceed the configured size guard.
    OracleTooLarge { bits: u64, limit: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ParseDecimal(s) => write!(f, "cannot parse decimal literal {s:?}"),
            Error::InvalidPrecision(m) => {
                write!(f, "mantissa length {m} is invalid (need at least 2 bits)")
            }
            Error::DivisionByZero => write!(f, "division by zero"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidShift(msg) => write!(f, "invalid shift: {msg}"),
            Error::PrecisionTooSmall { k, m } => write!(
                f,
                "mantissa length {m} too small for {k} rounding operations (need K*2^-m < 1)"
            ),
            Error::DomainEscape { step, value } => {
                write!(f, "iterate {value} left the map domain at step {step}")
            }
            Error::NotConverged => write!(f, "run did not converge within the mantissa cap"),
            Error::OracleTooLarge { bits, limit } => write!(
                f,
                "exact orbit denominator reached {bits} bits (guard is {limit})"
            ),
        }
    }
}

impl std::error::Error for Error {}
