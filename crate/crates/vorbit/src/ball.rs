//! Value-plus-error-bound arithmetic: one verified map step.
//!
//! An [`FpRepr`] pairs a computed point `fl` (at the pass mantissa length)
//! with `err`, an upper bound on the distance |fl - x| to the real number x
//! it stands for, kept at the 64-bit working precision and always rounded
//! up. One verified step maps (fl, err) to
//!
//! ```text
//! fl'  = f(fl) with every operation correctly rounded to m bits
//! err' = Lbar(fl, err) * err  +  rho * |fl'|
//! ```
//!
//! where `Lbar` bounds |f'| over the error ball (mean value theorem: moving
//! the input by at most `err` moves the exact image by at most `Lbar * err`)
//! and `rho = K*2^-m / (1 - K*2^-m)` bounds the relative roundoff of one
//! K-rounding evaluation, so `rho * |fl'|` covers the difference between
//! f(fl) and the computed fl'. Every operation producing `err'` rounds up.
//!
//! [`FpRepr::meets_precision`] decides whether the bound already guarantees
//! p correct decimal digits, comparing exactly in rational arithmetic:
//! err <= |fl| * t/(1+t) with t = 10^-p implies |fl - x| <= t * |x|.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::error::Error;
use crate::interval::deriv_range_bound;
use crate::mp::{MpFloat, Precision, RoundingMode, WORKING_PRECISION};
use crate::systems::FeasibleMap;

/// A point with a rigorous absolute error bound: |fl - x| <= err for the
/// real x it represents. `err` is non-negative and lives at the working
/// precision.
#[derive(Clone, Debug)]
pub struct FpRepr {
    pub fl: MpFloat,
    pub err: MpFloat,
}

/// Per-pass constants of the verified step: the map's rounding-operation
/// count K at mantissa length m, the precomputed roundoff factor rho, and
/// whether derivative bounds may clamp the error ball to the map's domain.
#[derive(Clone, Debug)]
pub struct StepBoundParams {
    pub k: u32,
    pub m: Precision,
    pub domain_clamp: bool,
    rho: MpFloat,
}

impl StepBoundParams {
    /// Computes rho = K*2^-m / (1 - K*2^-m) rounded up (numerator exact,
    /// denominator rounded down, quotient rounded up). Requires K*2^-m < 1;
    /// below that the bound is meaningless and the pass must escalate m.
    pub fn new(k: u32, m: Precision, domain_clamp: bool) -> Result<Self, Error> {
        let w = WORKING_PRECISION;
        let too_small = || Error::PrecisionTooSmall { k, m: m.bits() };
        // K has a handful of bits, so K * 2^-m is exact at working precision.
        let ku = MpFloat::from_u32(k, w, RoundingMode::NearestEven).mul_round(
            &MpFloat::power_of_two(-i64::from(m.bits()), w),
            w,
            RoundingMode::NearestEven,
        );
        if ku >= MpFloat::one(w) {
            return Err(too_small());
        }
        let den = MpFloat::one(w).sub_round(&ku, w, RoundingMode::Down);
        if den.signum() <= 0 {
            return Err(too_small());
        }
        let rho = ku
            .div_round(&den, w, RoundingMode::Up)
            .map_err(|_| too_small())?;
        Ok(StepBoundParams {
            k,
            m,
            domain_clamp,
            rho,
        })
    }

    /// Upper bound on the relative roundoff of one map evaluation.
    pub fn rho(&self) -> &MpFloat {
        &self.rho
    }
}

impl FpRepr {
    pub fn new(fl: MpFloat, err: MpFloat) -> Self {
        debug_assert!(err.signum() >= 0, "negative error bound");
        FpRepr { fl, err }
    }

    /// Representation of a known rational starting point: fl is the nearest
    /// m-bit float and err the larger of the conversion error and the
    /// one-evaluation roundoff floor rho * |fl|.
    pub fn initial(x0: &BigRational, params: &StepBoundParams) -> Self {
        let w = WORKING_PRECISION;
        let (fl, conv_err) = MpFloat::from_rational_with_bound(x0, params.m);
        let floor = params.rho.mul_round(&fl.abs(), w, RoundingMode::Up);
        let err = if conv_err >= floor { conv_err } else { floor };
        FpRepr::new(fl, err)
    }

    /// True when the error bound already certifies p correct decimal digits:
    /// err <= |fl| * 10^-p / (1 + 10^-p), compared exactly over the
    /// rationals. The all-zero representation passes (it stands for an exact
    /// zero); fl = 0 with err > 0 certifies nothing and fails.
    pub fn meets_precision(&self, p: i32) -> bool {
        // err * (1 + t) <= |fl| * t with t = 10^-p, cleared of denominators.
        let t = pow10(-p);
        let e = self.err.to_rational();
        let f = self.fl.to_rational().abs();
        e * (BigRational::one() + &t) <= f * &t
    }

    /// One verified map step at the pass precision. `step` only labels the
    /// domain-escape error.
    pub fn apply_map(
        &self,
        map: &FeasibleMap,
        params: &StepBoundParams,
        step: usize,
    ) -> Result<FpRepr, Error> {
        let w = WORKING_PRECISION;
        let lbar = deriv_range_bound(map, &self.fl, &self.err, w, params.domain_clamp).map_err(
            |e| match e {
                Error::DomainEscape { value, .. } => Error::DomainEscape { step, value },
                other => other,
            },
        )?;
        let fl = map.eval_rounded(&self.fl, params.m);
        let travel = lbar.mul_round(&self.err, w, RoundingMode::Up);
        let roundoff = params.rho.mul_round(&fl.abs(), w, RoundingMode::Up);
        let err = travel.add_round(&roundoff, w, RoundingMode::Up);
        // A result further outside the domain than its own error bound means
        // the represented point escaped; self-maps cannot produce this from
        // a valid input, so treat it as a hard error.
        let (dlo, dhi) = map.domain();
        let fl_r = fl.to_rational();
        let err_r = err.to_rational();
        if fl_r < dlo - &err_r || fl_r > dhi + &err_r {
            return Err(Error::DomainEscape {
                step,
                value: fl.to_decimal(),
            });
        }
        Ok(FpRepr::new(fl, err))
    }
}

/// 10^p as an exact rational, for any sign of p.
fn pow10(p: i32) -> BigRational {
    let mag = BigInt::from(10u32).pow(p.unsigned_abs());
    if p >= 0 {
        BigRational::from_integer(mag)
    } else {
        BigRational::new(BigInt::one(), mag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rational_orbit;
    use crate::systems::LogisticVariant;
    use num_traits::{Signed, Zero};
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn p(bits: u32) -> Precision {
        Precision::new(bits).unwrap()
    }

    fn from_rat(r: &BigRational, bits: u32) -> MpFloat {
        MpFloat::from_rational(r, p(bits), RoundingMode::NearestEven)
    }

    fn logistic(mu: &str) -> FeasibleMap {
        FeasibleMap::logistic(LogisticVariant::Factored, mu, false).unwrap()
    }

    #[test]
    fn precision_predicate_examples() {
        let zero = FpRepr::new(MpFloat::zero(p(53)), MpFloat::zero(p(64)));
        assert!(zero.meets_precision(6), "exact zero passes any p");
        assert!(zero.meets_precision(-2));

        let one = from_rat(&rat(1, 1), 53);
        let exact_one = FpRepr::new(one.clone(), MpFloat::zero(p(64)));
        for q in [-2, 0, 3, 6, 12] {
            assert!(exact_one.meets_precision(q), "zero error passes p={q}");
        }

        // 2e-6 exceeds the p=6 threshold 10^-6/(1+10^-6).
        let e = MpFloat::from_decimal("2e-6", p(64)).unwrap().0;
        assert!(!FpRepr::new(one.clone(), e).meets_precision(6));
        // 9.9e-7 is below it.
        let e = MpFloat::from_decimal("9.9e-7", p(64)).unwrap().0;
        assert!(FpRepr::new(one.clone(), e).meets_precision(6));

        // fl = 0 with a positive bound certifies no digits at all.
        let stuck = FpRepr::new(MpFloat::zero(p(53)), MpFloat::power_of_two(-80, p(64)));
        assert!(!stuck.meets_precision(6));
    }

    #[test]
    fn precision_predicate_flips_exactly_at_the_threshold() {
        let one = from_rat(&rat(1, 1), 53);
        for q in [-2i32, 0, 3, 6, 12] {
            let t = pow10(-q);
            let threshold = &t / (BigRational::one() + &t);
            let below = MpFloat::from_rational(&threshold, p(64), RoundingMode::Down);
            let above = MpFloat::from_rational(
                &(&threshold * (BigRational::one() + rat(1, 1 << 40))),
                p(64),
                RoundingMode::Up,
            );
            assert!(
                FpRepr::new(one.clone(), below).meets_precision(q),
                "p={q}: error just below the threshold must pass"
            );
            assert!(
                !FpRepr::new(one.clone(), above).meets_precision(q),
                "p={q}: error just above the threshold must fail"
            );
        }
    }

    #[test]
    fn roundoff_factor_brackets_the_exact_value() {
        let params = StepBoundParams::new(4, p(24), true).unwrap();
        // Exact rho = 2^-22 / (1 - 2^-22).
        let exact = rat(1, 1 << 22) / (rat(1, 1) - rat(1, 1 << 22));
        let got = params.rho().to_rational();
        assert!(got >= exact, "rho must not under-approximate");
        assert!(got <= exact * (rat(1, 1) + rat(1, 1 << 62)));
    }

    #[test]
    fn mantissa_too_short_for_the_operation_count() {
        assert!(matches!(
            StepBoundParams::new(4, p(2), true),
            Err(Error::PrecisionTooSmall { k: 4, m: 2 })
        ));
        assert!(matches!(
            StepBoundParams::new(5, p(2), true),
            Err(Error::PrecisionTooSmall { .. })
        ));
        assert!(StepBoundParams::new(4, p(3), true).is_ok());
    }

    #[test]
    fn initial_representation_of_a_representable_point() {
        // "0.5" converts exactly, so the error is the roundoff floor
        // rho * 0.5, an exact product (multiplying by 0.5 shifts the
        // exponent).
        let params = StepBoundParams::new(4, p(24), true).unwrap();
        let r = FpRepr::initial(&rat(1, 2), &params);
        assert_eq!(r.fl.to_rational(), rat(1, 2));
        assert_eq!(r.err.to_rational(), params.rho().to_rational() / rat(2, 1));
    }

    #[test]
    fn initial_representation_bounds_the_conversion_error() {
        let params = StepBoundParams::new(4, p(53), true).unwrap();
        let x0 = rat(11, 50);
        let r = FpRepr::initial(&x0, &params);
        let true_err = (r.fl.to_rational() - &x0).abs();
        assert!(r.err.to_rational() >= true_err);
        // And it should not be grossly above one ulp + floor.
        assert!(r.err.to_rational() <= rat(1, 1i64 << 52));
    }

    #[test]
    fn initial_error_never_grows_with_the_mantissa() {
        let x0 = rat(11, 50);
        let mut prev: Option<BigRational> = None;
        for m in [24u32, 30, 53, 100] {
            let params = StepBoundParams::new(4, p(m), true).unwrap();
            let e = FpRepr::initial(&x0, &params).err.to_rational();
            if let Some(prev) = &prev {
                assert!(e <= *prev, "error grew from m to {m}");
            }
            prev = Some(e);
        }
    }

    #[test]
    fn fixed_point_step_keeps_only_the_roundoff_term() {
        // mu = 2 fixes x = 0.5 where f' vanishes, so a zero-error input
        // comes back with err = rho * 0.5 exactly.
        let map = logistic("2");
        let params = StepBoundParams::new(map.k(), p(53), true).unwrap();
        let r = FpRepr::new(from_rat(&rat(1, 2), 53), MpFloat::zero(p(64)));
        let next = r.apply_map(&map, &params, 0).unwrap();
        assert_eq!(next.fl.to_rational(), rat(1, 2));
        assert_eq!(
            next.err.to_rational(),
            params.rho().to_rational() / rat(2, 1)
        );
    }

    #[test]
    fn critical_point_maps_to_exactly_one() {
        let map = logistic("4");
        let params = StepBoundParams::new(map.k(), p(53), true).unwrap();
        let r = FpRepr::new(from_rat(&rat(1, 2), 53), MpFloat::zero(p(64)));
        let next = r.apply_map(&map, &params, 0).unwrap();
        assert_eq!(next.fl.to_rational(), rat(1, 1));
    }

    /// |a - b| <= bound, compared by cross-multiplication so that huge
    /// oracle denominators are never run through a normalizing gcd.
    fn abs_diff_within(a: &BigRational, b: &BigRational, bound: &BigRational) -> bool {
        let left = (a.numer() * b.denom() - b.numer() * a.denom()).abs() * bound.denom();
        let right = bound.numer() * (a.denom() * b.denom());
        left <= right
    }

    fn assert_sound_against_oracle(mu: &str, x0: &BigRational, n: usize, ms: &[u32], guard: u64) {
        let map = logistic(mu);
        let exact = rational_orbit(&map.params()[0].value, x0, n, guard).unwrap();
        for &m in ms {
            let params = StepBoundParams::new(map.k(), p(m), true).unwrap();
            let mut r = FpRepr::initial(x0, &params);
            for (n, x_n) in exact.iter().enumerate() {
                assert!(
                    abs_diff_within(&r.fl.to_rational(), x_n, &r.err.to_rational()),
                    "mu={mu} m={m} n={n}: true error exceeds bound {}",
                    r.err.to_decimal()
                );
                if n < exact.len() - 1 {
                    r = r.apply_map(&map, &params, n).unwrap();
                }
            }
        }
    }

    #[test]
    fn error_bound_is_sound_against_exact_orbits() {
        // The central promise: |fl_n - x_n| <= err_n with x_n from exact
        // rational iteration, for several parameters and mantissa lengths.
        // Orbit denominators square each step, so the length 25 chain runs
        // from the one-bit seed 1/2 and the parameter grid stops at 20.
        for mu in ["4", "3.5", "2.5"] {
            assert_sound_against_oracle(mu, &rat(11, 50), 20, &[24, 53], 1 << 24);
        }
        assert_sound_against_oracle("2.5", &rat(1, 2), 25, &[24, 53], 1 << 27);
    }

    #[test]
    fn error_bounds_never_grow_with_the_mantissa() {
        let map = logistic("3.9");
        let x0 = rat(11, 50);
        let runs: Vec<Vec<BigRational>> = [24u32, 53, 100]
            .iter()
            .map(|&m| {
                let params = StepBoundParams::new(map.k(), p(m), true).unwrap();
                let mut r = FpRepr::initial(&x0, &params);
                let mut errs = vec![r.err.to_rational()];
                for n in 0..20 {
                    r = r.apply_map(&map, &params, n).unwrap();
                    errs.push(r.err.to_rational());
                }
                errs
            })
            .collect();
        for pair in runs.windows(2) {
            for (n, (coarse, fine)) in pair[0].iter().zip(&pair[1]).enumerate() {
                assert!(
                    fine <= coarse,
                    "step {n}: finer mantissa gave a larger bound"
                );
            }
        }
    }

    #[test]
    fn step_error_brackets_its_defining_formula() {
        // err' must equal Lsup * err + rho * |fl'| up to upward roundings:
        // at least the exact value, at most a few ulps above.
        let map = logistic("3.9");
        let params = StepBoundParams::new(map.k(), p(53), true).unwrap();
        let fl = from_rat(&rat(5, 16), 53);
        let err = MpFloat::power_of_two(-6, p(64));
        let r = FpRepr::new(fl.clone(), err.clone());
        let next = r.apply_map(&map, &params, 0).unwrap();
        // Exact sup of |3.9 (1 - 2x)| over [5/16 - 1/64, 5/16 + 1/64]: the
        // derivative is affine, so it peaks at the lower endpoint.
        let lsup = rat(39, 10) * (rat(1, 1) - rat(2, 1) * rat(19, 64));
        let expected =
            &lsup * err.to_rational() + params.rho().to_rational() * next.fl.to_rational().abs();
        let got = next.err.to_rational();
        assert!(got >= expected, "upward rounding cannot undershoot");
        assert!(
            got <= &expected * (rat(1, 1) + rat(1, 1 << 50)),
            "bound drifted more than rounding can explain"
        );
    }

    #[test]
    fn step_error_dominates_the_derivative_low_end() {
        // The bound can never beat the inf of |f'| over the ball: moving the
        // input truly moves the image at least that much.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(57);
        let map = logistic("3.9");
        let params = StepBoundParams::new(map.k(), p(53), true).unwrap();
        for _ in 0..100 {
            let fl_r = rat(rng.gen_range(1..=999), 1000);
            let fl = from_rat(&fl_r, 53);
            let err = MpFloat::power_of_two(-rng.gen_range(8..=30), p(64));
            let r = FpRepr::new(fl.clone(), err.clone());
            let next = r.apply_map(&map, &params, 0).unwrap();
            let (a, b) = (
                fl.to_rational() - err.to_rational(),
                fl.to_rational() + err.to_rational(),
            );
            let half = rat(1, 2);
            let inf = if a <= half && half <= b {
                BigRational::zero()
            } else {
                let da = (rat(39, 10) * (rat(1, 1) - rat(2, 1) * &a)).abs();
                let db = (rat(39, 10) * (rat(1, 1) - rat(2, 1) * &b)).abs();
                da.min(db)
            };
            assert!(next.err.to_rational() >= inf * err.to_rational());
        }
    }

    #[test]
    fn input_outside_the_domain_is_a_domain_escape() {
        let map = logistic("4");
        let params = StepBoundParams::new(map.k(), p(53), true).unwrap();
        let r = FpRepr::new(from_rat(&rat(5, 1), 53), MpFloat::zero(p(64)));
        match r.apply_map(&map, &params, 17) {
            Err(Error::DomainEscape { step: 17, .. }) => {}
            other => panic!("expected a domain escape at step 17, got {other:?}"),
        }
    }
}
