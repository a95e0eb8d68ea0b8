//! Arbitrary-mantissa binary floating point with correct rounding.
//!
//! A value is `sign * mant * 2^exp` where `mant` carries exactly `m`
//! significant bits (top bit set). The exponent is unbounded, there are no
//! subnormals and no infinities: every finite dyadic rational of the right
//! mantissa width is representable, and every operation rounds its exact
//! result in one of three modes (to nearest with ties to even, toward +inf,
//! toward -inf).
//!
//! Decimal input never goes through native doubles: literals are parsed into
//! exact rationals and rounded once, so rounding errors are introduced only
//! where the chosen mantissa length demands them, and the introduced error is
//! reported as an upward-rounded bound alongside the value.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;

/// Mantissa length in bits used for error bounds and other bookkeeping
/// quantities. Error bounds are always rounded upward at this fixed width, so
/// they stay cheap while the orbit mantissa grows.
pub const WORKING_PRECISION: Precision = Precision(64);

/// log10(2), used only to size decimal output buffers (never for rounding).
const LOG10_2: f64 = 0.30102999566398119521;

/// A validated mantissa length. Lengths below 2 bits are rejected up front so
/// the arithmetic kernels never have to re-check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Precision(pub(crate) u32);

impl Precision {
    /// Wraps a mantissa length, rejecting anything below 2 bits.
    pub fn new(bits: u32) -> Result<Self, Error> {
        if bits < 2 {
            Err(Error::InvalidPrecision(bits))
        } else {
            Ok(Precision(bits))
        }
    }

    /// The mantissa length in bits.
    pub fn bits(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rounding mode of a single operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundingMode {
    /// Round to the nearest representable value, ties to the even mantissa.
    NearestEven,
    /// Round toward +inf.
    Up,
    /// Round toward -inf.
    Down,
}

/// Binary arithmetic operations covered by the rounding kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Sign-magnitude float with an exact, unbounded exponent.
///
/// Invariants: for nonzero values `mant` has exactly `prec` bits (so the ulp
/// is `2^exp`); zero is stored as `sign == 0` with an empty mantissa.
/// Comparison operators compare numeric values; two equal values of
/// different mantissa length compare equal (use [`MpFloat::identical`] for
/// representation equality).
#[derive(Clone, Debug)]
pub struct MpFloat {
    sign: i8,
    mant: BigUint,
    exp: i64,
    prec: Precision,
}

/// How the magnitude must move for a given (mode, sign) pair.
enum MagnitudeRounding {
    TowardZero,
    AwayFromZero,
    Nearest,
}

fn magnitude_rounding(mode: RoundingMode, sign: i8) -> MagnitudeRounding {
    match (mode, sign > 0) {
        (RoundingMode::NearestEven, _) => MagnitudeRounding::Nearest,
        (RoundingMode::Up, true) | (RoundingMode::Down, false) => MagnitudeRounding::AwayFromZero,
        (RoundingMode::Up, false) | (RoundingMode::Down, true) => MagnitudeRounding::TowardZero,
    }
}

/// Rounds `sign * mag * 2^exp` (plus an optional sticky tail strictly below
/// one unit of `2^exp`) to `m` bits. Callers either pass an exact magnitude
/// or guarantee at least `m + 1` significant bits when `sticky` is set, so
/// the tail can never straddle a rounding boundary.
fn round_parts(
    sign: i8,
    mag: BigUint,
    exp: i64,
    sticky: bool,
    m: Precision,
    mode: RoundingMode,
) -> MpFloat {
    debug_assert!(sign == 1 || sign == -1);
    if mag.is_zero() {
        debug_assert!(
            !sticky,
            "a sticky tail with zero magnitude carries unknown weight"
        );
        return MpFloat::zero(m);
    }
    let target = u64::from(m.0);
    let bits = mag.bits();
    if bits <= target {
        debug_assert!(!sticky, "inexact magnitudes must carry guard bits");
        let pad = target - bits;
        return MpFloat {
            sign,
            mant: mag << pad,
            exp: exp - pad as i64,
            prec: m,
        };
    }
    let drop = bits - target;
    let head = &mag >> drop;
    let mask = (BigUint::one() << drop) - BigUint::one();
    let tail = mag & mask;
    let increment = match magnitude_rounding(mode, sign) {
        MagnitudeRounding::TowardZero => false,
        MagnitudeRounding::AwayFromZero => sticky || !tail.is_zero(),
        MagnitudeRounding::Nearest => {
            let half = BigUint::one() << (drop - 1);
            match tail.cmp(&half) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => sticky || head.bit(0),
            }
        }
    };
    let mut mant = head;
    let mut exp = exp + drop as i64;
    if increment {
        mant += 1u32;
        if mant.bits() > target {
            // Carry out of the top bit: 2^m collapses back to one leading bit.
            mant >>= 1;
            exp += 1;
        }
    }
    MpFloat {
        sign,
        mant,
        exp,
        prec: m,
    }
}

/// Rounds the positive ratio `(a / b) * 2^scale2` to `m` bits. Shifts the
/// numerator (or denominator) so the integer quotient carries `m + 2` or
/// `m + 3` significant bits, which is enough for the sticky remainder to be
/// decisive.
fn round_ratio(
    sign: i8,
    a: &BigUint,
    b: &BigUint,
    scale2: i64,
    m: Precision,
    mode: RoundingMode,
) -> MpFloat {
    debug_assert!(!a.is_zero() && !b.is_zero());
    let shift = b.bits() as i64 - a.bits() as i64 + i64::from(m.0) + 2;
    let (num, den);
    if shift >= 0 {
        num = a << shift as u64;
        den = b.clone();
    } else {
        num = a.clone();
        den = b << (-shift) as u64;
    }
    let (q, r) = num_integer::Integer::div_rem(&num, &den);
    round_parts(sign, q, scale2 - shift, !r.is_zero(), m, mode)
}

impl MpFloat {
    /// Zero at the given mantissa length.
    pub fn zero(m: Precision) -> Self {
        MpFloat {
            sign: 0,
            mant: BigUint::zero(),
            exp: 0,
            prec: m,
        }
    }

    /// One at the given mantissa length (always exact).
    pub fn one(m: Precision) -> Self {
        Self::power_of_two(0, m)
    }

    /// `2^k` at the given mantissa length (always exact).
    pub fn power_of_two(k: i64, m: Precision) -> Self {
        MpFloat {
            sign: 1,
            mant: BigUint::one() << (m.0 - 1) as u64,
            exp: k - i64::from(m.0 - 1),
            prec: m,
        }
    }

    /// A small unsigned integer, rounded if it does not fit in `m` bits.
    pub fn from_u32(v: u32, m: Precision, mode: RoundingMode) -> Self {
        if v == 0 {
            return Self::zero(m);
        }
        round_parts(1, BigUint::from(v), 0, false, m, mode)
    }

    /// Rounds an exact rational to `m` bits in the requested mode.
    pub fn from_rational(r: &BigRational, m: Precision, mode: RoundingMode) -> Self {
        if r.is_zero() {
            return Self::zero(m);
        }
        let sign = if r.is_negative() { -1 } else { 1 };
        let a = r.numer().magnitude();
        let b = r.denom().magnitude();
        round_ratio(sign, a, b, 0, m, mode)
    }

    /// Rounds an exact rational to nearest at `m` bits and returns the value
    /// together with an upper bound on the rounding error. The bound is the
    /// exact error `|fl - r|` rounded upward at [`WORKING_PRECISION`]; it is
    /// zero exactly when the input is representable.
    pub fn from_rational_with_bound(r: &BigRational, m: Precision) -> (Self, Self) {
        let fl = Self::from_rational(r, m, RoundingMode::NearestEven);
        let diff = (fl.to_rational() - r).abs();
        let err = if diff.is_zero() {
            Self::zero(WORKING_PRECISION)
        } else {
            Self::from_rational(&diff, WORKING_PRECISION, RoundingMode::Up)
        };
        (fl, err)
    }

    /// Parses a decimal literal and rounds it to nearest at `m` bits,
    /// returning the value and an upward-rounded error bound.
    pub fn from_decimal(s: &str, m: Precision) -> Result<(Self, Self), Error> {
        let r = parse_decimal(s)?;
        Ok(Self::from_rational_with_bound(&r, m))
    }

    /// Re-rounds this value to `m` bits in the requested mode.
    pub fn round_to(&self, m: Precision, mode: RoundingMode) -> Self {
        if self.sign == 0 {
            return Self::zero(m);
        }
        round_parts(self.sign, self.mant.clone(), self.exp, false, m, mode)
    }

    /// Re-rounds to nearest at `m` bits with an upward-rounded error bound,
    /// like [`MpFloat::from_rational_with_bound`] but starting from a value
    /// that is already binary.
    pub fn round_to_with_bound(&self, m: Precision) -> (Self, Self) {
        Self::from_rational_with_bound(&self.to_rational(), m)
    }

    /// Half a unit in the last place of this value: `2^(exp - 1)` for
    /// nonzero values, zero for zero. Every nearest rounding at this
    /// mantissa length is off by at most this amount.
    pub fn ulp_half(&self) -> Self {
        if self.sign == 0 {
            return Self::zero(self.prec);
        }
        Self::power_of_two(self.exp - 1, self.prec)
    }

    /// The exact value as a rational in lowest terms.
    pub fn to_rational(&self) -> BigRational {
        if self.sign == 0 {
            return BigRational::zero();
        }
        let sign = if self.sign > 0 {
            Sign::Plus
        } else {
            Sign::Minus
        };
        if self.exp >= 0 {
            let num = BigInt::from_biguint(sign, &self.mant << self.exp as u64);
            BigRational::from_integer(num)
        } else {
            // Strip shared factors of two directly; the denominator is a
            // power of two so no general gcd is needed.
            let k = (-self.exp) as u64;
            let tz = self.mant.trailing_zeros().unwrap_or(0).min(k);
            let num = BigInt::from_biguint(sign, &self.mant >> tz);
            let den = BigInt::from(BigUint::one() << (k - tz));
            BigRational::new_raw(num, den)
        }
    }

    /// Sum rounded at `m` bits. The sum is formed exactly (exponents are
    /// aligned with full shifts) before the single rounding.
    pub fn add_round(&self, rhs: &Self, m: Precision, mode: RoundingMode) -> Self {
        if self.sign == 0 {
            return rhs.round_to(m, mode);
        }
        if rhs.sign == 0 {
            return self.round_to(m, mode);
        }
        let exp = self.exp.min(rhs.exp);
        let a = &self.mant << (self.exp - exp) as u64;
        let b = &rhs.mant << (rhs.exp - exp) as u64;
        if self.sign == rhs.sign {
            round_parts(self.sign, a + b, exp, false, m, mode)
        } else {
            match a.cmp(&b) {
                Ordering::Equal => Self::zero(m),
                Ordering::Greater => round_parts(self.sign, a - b, exp, false, m, mode),
                Ordering::Less => round_parts(rhs.sign, b - a, exp, false, m, mode),
            }
        }
    }

    /// Difference rounded at `m` bits.
    pub fn sub_round(&self, rhs: &Self, m: Precision, mode: RoundingMode) -> Self {
        self.add_round(&rhs.neg(), m, mode)
    }

    /// Product rounded at `m` bits.
    pub fn mul_round(&self, rhs: &Self, m: Precision, mode: RoundingMode) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::zero(m);
        }
        round_parts(
            self.sign * rhs.sign,
            &self.mant * &rhs.mant,
            self.exp + rhs.exp,
            false,
            m,
            mode,
        )
    }

    /// Quotient rounded at `m` bits; exact zero divisors are an error.
    pub fn div_round(&self, rhs: &Self, m: Precision, mode: RoundingMode) -> Result<Self, Error> {
        if rhs.sign == 0 {
            return Err(Error::DivisionByZero);
        }
        if self.sign == 0 {
            return Ok(Self::zero(m));
        }
        Ok(round_ratio(
            self.sign * rhs.sign,
            &self.mant,
            &rhs.mant,
            self.exp - rhs.exp,
            m,
            mode,
        ))
    }

    /// Dispatches one of the four rounded operations.
    pub fn apply(
        op: ArithOp,
        a: &Self,
        b: &Self,
        m: Precision,
        mode: RoundingMode,
    ) -> Result<Self, Error> {
        match op {
            ArithOp::Add => Ok(a.add_round(b, m, mode)),
            ArithOp::Sub => Ok(a.sub_round(b, m, mode)),
            ArithOp::Mul => Ok(a.mul_round(b, m, mode)),
            ArithOp::Div => a.div_round(b, m, mode),
        }
    }

    /// Negation (exact).
    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        out.sign = -out.sign;
        out
    }

    /// Absolute value (exact).
    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        out.sign = out.sign.abs();
        out
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// -1, 0 or +1.
    pub fn signum(&self) -> i8 {
        self.sign
    }

    /// The mantissa length this value is stored at.
    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// Scientific binary exponent `e` with `|x|` in `[2^e, 2^(e+1))`.
    /// Meaningless for zero (returns `i64::MIN`).
    pub fn sci_exponent(&self) -> i64 {
        if self.sign == 0 {
            return i64::MIN;
        }
        self.exp + i64::from(self.prec.0) - 1
    }

    /// Representation equality: same sign, mantissa bits, exponent and
    /// mantissa length. Stricter than `==`, which compares values.
    pub fn identical(&self, other: &Self) -> bool {
        self.sign == other.sign
            && self.exp == other.exp
            && self.prec == other.prec
            && self.mant == other.mant
    }

    fn cmp_value(&self, other: &Self) -> Ordering {
        if self.sign != other.sign {
            return self.sign.cmp(&other.sign);
        }
        if self.sign == 0 {
            return Ordering::Equal;
        }
        let mag = {
            let ea = self.sci_exponent();
            let eb = other.sci_exponent();
            if ea != eb {
                ea.cmp(&eb)
            } else {
                let la = u64::from(self.prec.0);
                let lb = u64::from(other.prec.0);
                if la >= lb {
                    self.mant.cmp(&(&other.mant << (la - lb)))
                } else {
                    (&self.mant << (lb - la)).cmp(&other.mant)
                }
            }
        };
        if self.sign > 0 {
            mag
        } else {
            mag.reverse()
        }
    }

    /// Hexadecimal significand form `[-]0x1.<frac>p<exp>` (or `0x0p+0`),
    /// showing every stored mantissa bit. Bit-exact and cheap to compare,
    /// which is what test fixtures and the step log use it for.
    pub fn to_hex(&self) -> String {
        if self.sign == 0 {
            return "0x0p+0".to_string();
        }
        let frac_bits = u64::from(self.prec.0) - 1;
        let nibbles = frac_bits.div_ceil(4) as usize;
        let pad = (4 - (frac_bits % 4)) % 4;
        let top = BigUint::one() << frac_bits;
        let frac = (&self.mant - top) << pad;
        let digits = format!("{:0>width$}", frac.to_str_radix(16), width = nibbles);
        let sign = if self.sign < 0 { "-" } else { "" };
        format!("{sign}0x1.{digits}p{:+}", self.sci_exponent())
    }

    /// Decimal scientific form with enough digits to round-trip at this
    /// mantissa length (parse + nearest rounding at the same length gives
    /// back the identical value).
    pub fn to_decimal(&self) -> String {
        let digits = (f64::from(self.prec.0) * LOG10_2).ceil() as usize + 1;
        self.to_decimal_digits(digits, false)
    }

    /// Decimal scientific form rounded away from zero at `digits`
    /// significant digits, used for printing error bounds (never shrinks the
    /// bound).
    pub fn to_decimal_up(&self, digits: usize) -> String {
        self.to_decimal_digits(digits.max(1), true)
    }

    fn to_decimal_digits(&self, digits: usize, away_from_zero: bool) -> String {
        if self.sign == 0 {
            return "0".to_string();
        }
        let ten = BigInt::from(10);
        let v = self.to_rational().abs();
        // Decimal exponent k with v * 10^-k in [1, 10): start from a float
        // guess and correct exactly.
        let mut k = (self.sci_exponent() as f64 * LOG10_2).floor() as i64;
        let pow10 = |e: i64| -> BigRational {
            let p = ten.pow(e.unsigned_abs() as u32);
            if e >= 0 {
                BigRational::from_integer(p)
            } else {
                BigRational::new_raw(BigInt::one(), p)
            }
        };
        while v < pow10(k) {
            k -= 1;
        }
        while v >= pow10(k + 1) {
            k += 1;
        }
        // Scale so the integer part has exactly `digits` digits, then round.
        let scaled = &v * pow10(digits as i64 - 1 - k);
        let (mut n, rem) = num_integer::Integer::div_rem(
            &(scaled.numer() * scaled.denom().signum()),
            scaled.denom(),
        );
        debug_assert!(!scaled.denom().is_negative());
        if away_from_zero {
            if !rem.is_zero() {
                n += 1;
            }
        } else {
            let twice = &rem * BigInt::from(2);
            match twice.cmp(scaled.denom()) {
                Ordering::Greater => n += 1,
                Ordering::Equal => {
                    if num_integer::Integer::is_odd(&n) {
                        n += 1;
                    }
                }
                Ordering::Less => {}
            }
        }
        let mut s = n.to_string();
        if s.len() > digits {
            // Rounding carried into a new leading digit (all nines).
            debug_assert_eq!(s.len(), digits + 1);
            s.truncate(digits);
            k += 1;
        }
        let sign = if self.sign < 0 { "-" } else { "" };
        if digits == 1 {
            format!("{sign}{s}e{k}")
        } else {
            format!("{sign}{}.{}e{k}", &s[..1], &s[1..])
        }
    }
}

impl PartialEq for MpFloat {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_value(other) == Ordering::Equal
    }
}

impl Eq for MpFloat {}

impl PartialOrd for MpFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_value(other))
    }
}

impl Ord for MpFloat {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_value(other)
    }
}

impl fmt::Display for MpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

/// Parses a decimal literal (optional sign, digits with an optional
/// fractional part, optional `e`/`E` exponent) into an exact rational.
pub fn parse_decimal(s: &str) -> Result<BigRational, Error> {
    let err = || Error::ParseDecimal(s.to_string());
    let t = s.trim();
    let bytes = t.as_bytes();
    let mut i = 0;
    let mut negative = false;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        negative = bytes[i] == b'-';
        i += 1;
    }
    let mut digits = String::new();
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        digits.push(bytes[i] as char);
        i += 1;
    }
    let mut frac_len = 0i64;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            digits.push(bytes[i] as char);
            frac_len += 1;
            i += 1;
        }
    }
    if digits.is_empty() {
        return Err(err());
    }
    let mut exp10 = 0i64;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        let mut exp_neg = false;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            exp_neg = bytes[i] == b'-';
            i += 1;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(err());
        }
        exp10 = t[start..i].parse::<i64>().map_err(|_| err())?;
        if exp_neg {
            exp10 = -exp10;
        }
    }
    if i != bytes.len() {
        return Err(err());
    }
    let exp10 = exp10 - frac_len;
    // Guard against pathological exponents before materializing 10^|e|.
    if exp10.unsigned_abs() > 1_000_000 {
        return Err(err());
    }
    let mut num: BigInt = digits.parse().map_err(|_| err())?;
    if negative {
        num = -num;
    }
    let p = BigInt::from(10).pow(exp10.unsigned_abs() as u32);
    Ok(if exp10 >= 0 {
        BigRational::from_integer(num * p)
    } else {
        BigRational::new(num, p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn p(bits: u32) -> Precision {
        Precision::new(bits).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Independent nearest rounding of a positive rational to `m` bits, done
    /// entirely with rational comparisons and floor: locate the binary
    /// exponent by doubling/halving, snap to the two neighbouring grid
    /// points, pick the closer one (ties to the even mantissa). Shares no
    /// code with the production rounding path.
    fn oracle_round_nearest(r: &BigRational, m: u32) -> BigRational {
        assert!(r.is_positive());
        let two = BigRational::from_integer(BigInt::from(2));
        let mut pow = BigRational::one();
        while &pow > r {
            pow /= &two;
        }
        while &(&pow * &two) <= r {
            pow *= &two;
        }
        // pow = 2^e with 2^e <= r < 2^(e+1); grid spacing is 2^(e-m+1).
        let mut ulp = pow;
        for _ in 0..(m - 1) {
            ulp /= &two;
        }
        let q = (r / &ulp).floor().to_integer();
        let lo = BigRational::from_integer(q.clone()) * &ulp;
        let hi = &lo + &ulp;
        let d_lo = r - &lo;
        let d_hi = &hi - r;
        match d_lo.cmp(&d_hi) {
            Ordering::Less => lo,
            Ordering::Greater => hi,
            Ordering::Equal => {
                if num_integer::Integer::is_even(&q) {
                    lo
                } else {
                    hi
                }
            }
        }
    }

    #[test]
    fn exact_decimal_has_zero_error() {
        let (fl, err) = MpFloat::from_decimal("0.5", p(24)).unwrap();
        assert_eq!(fl.to_rational(), rat(1, 2), "0.5 is a 1-bit value");
        assert!(err.is_zero(), "representable input must report zero error");
        assert_eq!(fl.to_hex(), "0x1.000000p-1");
    }

    #[test]
    fn decimal_rounding_matches_rational_oracle() {
        for m in [24u32, 53, 100] {
            let (fl, err) = MpFloat::from_decimal("0.22", p(m)).unwrap();
            let expected = oracle_round_nearest(&rat(11, 50), m);
            assert_eq!(fl.to_rational(), expected, "m={m}");
            // The reported bound covers the true error and respects the
            // coarse 2^(1-m)|x| envelope.
            let true_err = (fl.to_rational() - rat(11, 50)).abs();
            assert!(err.to_rational() >= true_err, "m={m}");
            let envelope =
                rat(11, 50) * BigRational::new(BigInt::one(), BigInt::from(2).pow(m - 1));
            assert!(err.to_rational() <= envelope, "m={m}");
            assert!(!err.is_zero(), "0.22 is not a dyadic rational");
        }
    }

    #[test]
    fn frozen_bits_for_point_two_two() {
        // Fixtures computed with the rational oracle above.
        let (fl24, _) = MpFloat::from_decimal("0.22", p(24)).unwrap();
        assert_eq!(fl24.to_rational(), oracle_round_nearest(&rat(11, 50), 24));
        assert_eq!(fl24.to_hex(), "0x1.c28f5cp-3");
        let (fl53, _) = MpFloat::from_decimal("0.22", p(53)).unwrap();
        assert_eq!(fl53.to_hex(), "0x1.c28f5c28f5c29p-3");
    }

    #[test]
    fn division_matches_oracle_and_brackets() {
        let one = MpFloat::one(p(53));
        let three = MpFloat::from_u32(3, p(53), RoundingMode::NearestEven);
        let w = p(53);
        let near = one.div_round(&three, w, RoundingMode::NearestEven).unwrap();
        assert_eq!(near.to_rational(), oracle_round_nearest(&rat(1, 3), 53));
        let down = one.div_round(&three, w, RoundingMode::Down).unwrap();
        let up = one.div_round(&three, w, RoundingMode::Up).unwrap();
        assert!(down.to_rational() < rat(1, 3));
        assert!(up.to_rational() > rat(1, 3));
        let gap = up.to_rational() - down.to_rational();
        assert_eq!(
            gap,
            down.ulp_half().to_rational() * rat(2, 1),
            "adjacent grid points"
        );
        assert!(down <= near && near <= up);
        // For 1/3 at 53 bits the discarded tail starts with 0, so nearest
        // coincides with the downward rounding.
        assert!(near.identical(&down));
    }

    #[test]
    fn multiplication_of_halves_is_exact() {
        let half = MpFloat::from_decimal("0.5", p(24)).unwrap().0;
        for mode in [
            RoundingMode::NearestEven,
            RoundingMode::Up,
            RoundingMode::Down,
        ] {
            let q = half.mul_round(&half, p(24), mode);
            assert_eq!(
                q.to_rational(),
                rat(1, 4),
                "exact product must not move under {mode:?}"
            );
        }
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let one = MpFloat::one(p(24));
        let zero = MpFloat::zero(p(24));
        assert_eq!(
            one.div_round(&zero, p(24), RoundingMode::NearestEven),
            Err(Error::DivisionByZero)
        );
    }

    #[test]
    fn ulp_half_examples() {
        // 0.22 at 24 bits sits in [2^-3, 2^-2), so ulp = 2^-26.
        let (fl, _) = MpFloat::from_decimal("0.22", p(24)).unwrap();
        assert_eq!(
            fl.ulp_half().to_rational(),
            BigRational::new(BigInt::one(), BigInt::from(2).pow(27))
        );
        assert!(MpFloat::zero(p(24)).ulp_half().is_zero());
        // The nearest rounding error of any rational is at most a half ulp.
        let x = rat(11, 50);
        let err = (fl.to_rational() - x).abs();
        assert!(err <= fl.ulp_half().to_rational());
    }

    #[test]
    fn precision_below_two_is_rejected() {
        assert_eq!(Precision::new(1).unwrap_err(), Error::InvalidPrecision(1));
        assert_eq!(Precision::new(0).unwrap_err(), Error::InvalidPrecision(0));
        assert!(Precision::new(2).is_ok());
    }

    #[test]
    fn parse_decimal_forms() {
        assert_eq!(parse_decimal("0.22").unwrap(), rat(11, 50));
        assert_eq!(parse_decimal("22e-2").unwrap(), rat(11, 50));
        assert_eq!(parse_decimal("-3.75").unwrap(), rat(-15, 4));
        assert_eq!(parse_decimal("+4").unwrap(), rat(4, 1));
        assert_eq!(parse_decimal("1.5E2").unwrap(), rat(150, 1));
        assert!(parse_decimal("").is_err());
        assert!(parse_decimal("four").is_err());
        assert!(parse_decimal("1.2.3").is_err());
        assert!(parse_decimal("1e").is_err());
    }

    #[test]
    fn hex_output_shows_all_bits() {
        let x = MpFloat::from_u32(3, p(2), RoundingMode::NearestEven);
        assert_eq!(x.to_hex(), "0x1.8p+1");
        let y = MpFloat::power_of_two(-1, p(5));
        assert_eq!(y.to_hex(), "0x1.0p-1");
        assert_eq!(MpFloat::zero(p(24)).to_hex(), "0x0p+0");
        let neg = MpFloat::from_decimal("-0.5", p(24)).unwrap().0;
        assert_eq!(neg.to_hex(), "-0x1.000000p-1");
    }

    #[test]
    fn decimal_output_round_trips() {
        let cases = ["0.22", "4", "-3.141592653589793", "1e-10", "123456.789"];
        for m in [24u32, 53, 80] {
            for s in cases {
                let (x, _) = MpFloat::from_decimal(s, p(m)).unwrap();
                let printed = x.to_decimal();
                let (back, _) = MpFloat::from_decimal(&printed, p(m)).unwrap();
                assert!(back.identical(&x), "m={m} s={s} printed={printed}");
            }
        }
    }

    #[test]
    fn error_bound_printing_rounds_away_from_zero() {
        // 1/3 printed at 3 digits must not round down to 3.33e-1.
        let x = MpFloat::from_rational(&rat(1, 3), p(60), RoundingMode::Up);
        assert_eq!(x.to_decimal_up(3), "3.34e-1");
        assert_eq!(MpFloat::zero(p(24)).to_decimal_up(3), "0");
        let exact = MpFloat::from_decimal("0.25", p(24)).unwrap().0;
        assert_eq!(exact.to_decimal_up(3), "2.50e-1");
    }

    #[test]
    fn value_comparison_ignores_mantissa_length() {
        let a = MpFloat::from_decimal("0.5", p(24)).unwrap().0;
        let b = MpFloat::from_decimal("0.5", p(64)).unwrap().0;
        assert_eq!(a, b);
        assert!(!a.identical(&b));
        let c = MpFloat::from_decimal("0.50000001", p(64)).unwrap().0;
        assert!(a < c);
        assert!(c > b);
        let neg = MpFloat::from_decimal("-0.5", p(24)).unwrap().0;
        assert!(neg < a);
        assert!(neg < MpFloat::zero(p(24)));
    }

    fn rational_strategy() -> impl Strategy<Value = BigRational> {
        (any::<i32>(), 1u32..=1_000_000u32).prop_map(|(n, d)| rat(i64::from(n), i64::from(d)))
    }

    fn nonzero_rational_strategy() -> impl Strategy<Value = BigRational> {
        rational_strategy().prop_filter("nonzero", |r| !r.is_zero())
    }

    proptest! {
        #[test]
        fn rounding_modes_bracket_the_exact_value(r in nonzero_rational_strategy(), m in 2u32..120) {
            let m = p(m);
            let down = MpFloat::from_rational(&r, m, RoundingMode::Down);
            let near = MpFloat::from_rational(&r, m, RoundingMode::NearestEven);
            let up = MpFloat::from_rational(&r, m, RoundingMode::Up);
            prop_assert!(down.to_rational() <= r);
            prop_assert!(up.to_rational() >= r);
            prop_assert!(down <= near && near <= up);
        }

        #[test]
        fn nearest_rounding_matches_oracle(r in nonzero_rational_strategy(), m in 2u32..100) {
            let target = p(m);
            let got = MpFloat::from_rational(&r, target, RoundingMode::NearestEven);
            let expect = if r.is_positive() {
                oracle_round_nearest(&r, m)
            } else {
                -oracle_round_nearest(&(-&r), m)
            };
            prop_assert_eq!(got.to_rational(), expect);
        }

        #[test]
        fn negation_swaps_directed_modes(r in nonzero_rational_strategy(), m in 2u32..100) {
            let m = p(m);
            let neg = -&r;
            let up = MpFloat::from_rational(&r, m, RoundingMode::Up);
            let down_of_neg = MpFloat::from_rational(&neg, m, RoundingMode::Down);
            prop_assert_eq!(up.to_rational(), -down_of_neg.to_rational());
        }

        #[test]
        fn more_mantissa_bits_never_hurt(r in nonzero_rational_strategy(), m in 2u32..90, extra in 1u32..40) {
            let coarse = MpFloat::from_rational(&r, p(m), RoundingMode::NearestEven);
            let fine = MpFloat::from_rational(&r, p(m + extra), RoundingMode::NearestEven);
            let d_coarse = (coarse.to_rational() - &r).abs();
            let d_fine = (fine.to_rational() - &r).abs();
            prop_assert!(d_fine <= d_coarse);
        }

        #[test]
        fn arithmetic_rounds_the_exact_result(
            a in nonzero_rational_strategy(),
            b in nonzero_rational_strategy(),
            m in 2u32..90,
        ) {
            let ma = p(120);
            let m = p(m);
            // Inputs are representable at 120 bits by construction (i32 / small den
            // may not be dyadic, so round first and take the rounded value as the input).
            let fa = MpFloat::from_rational(&a, ma, RoundingMode::NearestEven);
            let fb = MpFloat::from_rational(&b, ma, RoundingMode::NearestEven);
            let (ra, rb) = (fa.to_rational(), fb.to_rational());
            for (op, exact) in [
                (ArithOp::Add, Some(&ra + &rb)),
                (ArithOp::Sub, Some(&ra - &rb)),
                (ArithOp::Mul, Some(&ra * &rb)),
                (ArithOp::Div, if rb.is_zero() { None } else { Some(&ra / &rb) }),
            ] {
                let Some(exact) = exact else { continue };
                let got = MpFloat::apply(op, &fa, &fb, m, RoundingMode::NearestEven).unwrap();
                let want = MpFloat::from_rational(&exact, m, RoundingMode::NearestEven);
                prop_assert!(got.identical(&want), "{op:?}");
            }
        }

        #[test]
        fn decimal_round_trip_is_identity(n in any::<i32>(), d in 1u32..100_000u32, m in 2u32..100) {
            let r = rat(i64::from(n), i64::from(d));
            if r.is_zero() { return Ok(()); }
            let x = MpFloat::from_rational(&r, p(m), RoundingMode::NearestEven);
            let (back, _) = MpFloat::from_decimal(&x.to_decimal(), p(m)).unwrap();
            prop_assert!(back.identical(&x));
        }
    }
}
