//! Exact rational reference orbits.
//!
//! Iterating x' = mu * x * (1 - x) over the rationals is exact but the
//! denominator bit length roughly doubles every step, so this is only usable
//! for short prefixes. It is kept deliberately independent of the rounded
//! evaluation path: the engine's error bounds are validated against these
//! orbits, so they must not share arithmetic shortcuts with it.
//!
//! A naive `BigRational` iteration would reduce multi-megabit fractions with
//! a general gcd, which dominates the runtime long before the size guard
//! triggers. The iteration below tracks numerator and denominator explicitly
//! and exploits that, with x = a/b in lowest terms and mu = p/q reduced, the
//! common factor of the raw update `a' = p*a*(b-a)`, `b' = q*b^2` always
//! divides p*q: gcd(a, b) = 1 forces gcd(a*(b-a), b^2) = 1, so only factors
//! of p and q can survive. That keeps each reduction to two small modulo
//! operations and one exact division.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;
use crate::mp::{MpFloat, Precision};
use crate::systems::FeasibleMap;

/// Default cap on the denominator bit length of an exact orbit. At mu = 4
/// scale the denominator doubles per step, so this admits roughly 22-25
/// steps from small starting fractions while keeping memory and multiply
/// cost sane.
pub const DEFAULT_ORACLE_GUARD_BITS: u64 = 1 << 25;

/// Exact logistic orbit x_{n+1} = mu * x_n * (1 - x_n) over the rationals.
///
/// Returns `n + 1` values x_0 .. x_n, each in lowest terms. Fails with
/// [`Error::OracleTooLarge`] as soon as a denominator would exceed
/// `max_bits` bits.
pub fn rational_orbit(
    mu: &BigRational,
    x0: &BigRational,
    n: usize,
    max_bits: u64,
) -> Result<Vec<BigRational>, Error> {
    let p = mu.numer().clone();
    let q = mu.denom().clone();
    let pq = (&p * &q).abs();
    let mut a = x0.numer().clone();
    let mut b = x0.denom().clone();
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(BigRational::new_raw(a.clone(), b.clone()));
    for _ in 0..n {
        let raw_num = &p * &a * (&b - &a);
        if raw_num.is_zero() {
            // The orbit hit a root of the map exactly; it stays at zero.
            a = BigInt::zero();
            b = BigInt::one();
        } else {
            let raw_den = &q * &b * &b;
            // gcd(raw_num, raw_den) divides p*q (see module docs), so it can
            // be recovered from the residues modulo p*q.
            let g = raw_num.mod_floor(&pq).gcd(&pq).gcd(&raw_den.mod_floor(&pq));
            if g.is_one() {
                a = raw_num;
                b = raw_den;
            } else {
                a = raw_num / &g;
                b = raw_den / &g;
            }
        }
        if b.bits() > max_bits {
            return Err(Error::OracleTooLarge {
                bits: b.bits(),
                limit: max_bits,
            });
        }
        orbit.push(BigRational::new_raw(a.clone(), b.clone()));
    }
    Ok(orbit)
}

/// Shadow orbit: plain rounded iteration of a map at mantissa length `m`
/// with no error tracking, starting from x0 rounded to nearest. Used to
/// compare runs of the same map at different mantissa lengths.
pub fn reference_orbit(
    map: &FeasibleMap,
    x0: &BigRational,
    n: usize,
    m: Precision,
) -> Vec<MpFloat> {
    let mut x = MpFloat::from_rational(x0, m, crate::mp::RoundingMode::NearestEven);
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(x.clone());
    for _ in 0..n {
        x = map.eval_rounded(&x, m);
        orbit.push(x.clone());
    }
    orbit
}
