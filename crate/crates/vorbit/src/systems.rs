//! Map descriptions: the logistic family and coordinate shifts.
//!
//! A map is stored as a small arithmetic expression (variable, named
//! parameters, short dyadic constants, +, -, *, squaring) together with its
//! derivative expression, its domain and its rounding-operation count K. The
//! expression is interpreted at whatever mantissa length the caller asks
//! for, with every arithmetic operation correctly rounded to nearest, so K
//! is a property of the description rather than of any particular run.
//!
//! K counts the operations that can round: the arithmetic nodes of the
//! expression plus one for each parameter whose value the mantissa cannot
//! hold exactly. The per-step roundoff term K*2^-m/(1 - K*2^-m) derived from
//! it treats every rounding as a small relative perturbation of the final
//! result. For the factored form mu*x*(1-x) that model is rigorous on all of
//! [0,1]: the subtraction has exact operands, everything else is a product.
//! The expanded form mu*(x-x^2) and the centered form mu/4 - mu*(x-1/2)^2
//! lose it near the points where their final subtraction cancels (x near 1,
//! respectively near both edges), which is why the factored form is the
//! default and the one to use when error bounds matter.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;
use crate::mp::{parse_decimal, MpFloat, Precision, RoundingMode};

/// Evaluation order of the logistic map mu * x * (1 - x).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogisticVariant {
    /// mu * x * (1 - x); 3 arithmetic operations. The default.
    Factored,
    /// mu * (x - x^2); 3 arithmetic operations.
    Expanded,
    /// mu/4 - mu * (x - 1/2)^2; 4 arithmetic operations.
    Centered,
}

impl LogisticVariant {
    pub fn name(self) -> &'static str {
        match self {
            LogisticVariant::Factored => "factored",
            LogisticVariant::Expanded => "expanded",
            LogisticVariant::Centered => "centered",
        }
    }
}

/// Arithmetic expression over one variable and a parameter table.
///
/// `Sq` exists so a repeated subterm like (x - 1/2)^2 costs one rounding,
/// not two; constants are short dyadics (built-in maps use 1, 2 and 1/2)
/// that every supported mantissa length holds exactly.
#[derive(Clone, Debug)]
pub enum Expr {
    /// The variable.
    X,
    /// Index into the parameter table.
    Param(usize),
    /// An exact dyadic constant.
    Const(BigRational),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Sq(Box<Expr>),
}

impl Expr {
    /// Number of arithmetic (rounding) nodes.
    pub fn op_count(&self) -> u32 {
        match self {
            Expr::X | Expr::Param(_) | Expr::Const(_) => 0,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => 1 + a.op_count() + b.op_count(),
            Expr::Sq(a) => 1 + a.op_count(),
        }
    }

    /// Evaluates with every operation rounded to nearest at `m` bits.
    /// `params` must already be rounded at `m`.
    pub fn eval_mp(&self, x: &MpFloat, params: &[MpFloat], m: Precision) -> MpFloat {
        let mode = RoundingMode::NearestEven;
        match self {
            Expr::X => x.round_to(m, mode),
            Expr::Param(i) => params[*i].clone(),
            Expr::Const(c) => MpFloat::from_rational(c, m, mode),
            Expr::Add(a, b) => a
                .eval_mp(x, params, m)
                .add_round(&b.eval_mp(x, params, m), m, mode),
            Expr::Sub(a, b) => a
                .eval_mp(x, params, m)
                .sub_round(&b.eval_mp(x, params, m), m, mode),
            Expr::Mul(a, b) => a
                .eval_mp(x, params, m)
                .mul_round(&b.eval_mp(x, params, m), m, mode),
            Expr::Sq(a) => {
                let v = a.eval_mp(x, params, m);
                v.mul_round(&v, m, mode)
            }
        }
    }

    /// Exact rational evaluation.
    pub fn eval_rational(&self, x: &BigRational, params: &[BigRational]) -> BigRational {
        match self {
            Expr::X => x.clone(),
            Expr::Param(i) => params[*i].clone(),
            Expr::Const(c) => c.clone(),
            Expr::Add(a, b) => a.eval_rational(x, params) + b.eval_rational(x, params),
            Expr::Sub(a, b) => a.eval_rational(x, params) - b.eval_rational(x, params),
            Expr::Mul(a, b) => a.eval_rational(x, params) * b.eval_rational(x, params),
            Expr::Sq(a) => {
                let v = a.eval_rational(x, params);
                &v * &v
            }
        }
    }
}

/// A named map parameter with its exact value.
#[derive(Clone, Debug)]
pub struct ParamDef {
    pub name: String,
    pub value: BigRational,
    /// True when the value is dyadic and rounding it is guaranteed exact at
    /// every mantissa length the map will run at, so it adds nothing to K.
    pub exact: bool,
}

/// Optional coordinate shift f~(x) = f(x - M) + M applied around the base
/// expression. Stored structurally (not substituted into the expression
/// tree) so the inner subtraction is computed, and counted, exactly once.
#[derive(Clone, Debug)]
struct Shift {
    /// Index of the shift amount in the parameter table.
    param: usize,
}

/// A self-map of a closed interval, evaluable at any mantissa length, with
/// its derivative expression and rounding-operation count.
#[derive(Clone, Debug)]
pub struct FeasibleMap {
    name: String,
    expr: Expr,
    deriv: Expr,
    params: Vec<ParamDef>,
    domain: (BigRational, BigRational),
    shift: Option<Shift>,
    k: u32,
}

fn is_dyadic(r: &BigRational) -> bool {
    // Reduced denominators that are powers of two have a single set bit.
    let d = r.denom().magnitude();
    d.count_ones() == 1
}

impl FeasibleMap {
    /// Builds a logistic map x -> mu * x * (1 - x) on [0, 1] in the given
    /// evaluation order. `mu` is a decimal literal with 0 < mu <= 4.
    ///
    /// With `exact_mu` the parameter must be dyadic (e.g. 4, 3.75, 2.5); its
    /// rounding is then exact at any mantissa length that can hold it and is
    /// excluded from K, flooring K at the arithmetic-operation count.
    pub fn logistic(variant: LogisticVariant, mu: &str, exact_mu: bool) -> Result<Self, Error> {
        let mu_r = parse_decimal(mu)?;
        Self::logistic_rational(variant, &mu_r, mu, exact_mu)
    }

    /// Same as [`logistic`](Self::logistic) for a parameter already held as
    /// an exact rational; `label` is only used in the map name and messages.
    pub fn logistic_rational(
        variant: LogisticVariant,
        mu_rat: &BigRational,
        label: &str,
        exact_mu: bool,
    ) -> Result<Self, Error> {
        let mu = label;
        let mu_r = mu_rat.clone();
        if !mu_r.is_positive() || mu_r > BigRational::from_integer(4.into()) {
            return Err(Error::InvalidParameter(format!(
                "logistic parameter mu={mu} outside (0, 4]"
            )));
        }
        if exact_mu && !is_dyadic(&mu_r) {
            return Err(Error::InvalidParameter(format!(
                "mu={mu} is not dyadic, cannot be treated as exact"
            )));
        }
        let mut params = vec![ParamDef {
            name: "mu".to_string(),
            value: mu_r.clone(),
            exact: exact_mu,
        }];
        let expr = match variant {
            LogisticVariant::Factored => Expr::Mul(
                Box::new(Expr::Mul(Box::new(Expr::Param(0)), Box::new(Expr::X))),
                Box::new(Expr::Sub(
                    Box::new(Expr::Const(BigRational::one())),
                    Box::new(Expr::X),
                )),
            ),
            LogisticVariant::Expanded => Expr::Mul(
                Box::new(Expr::Param(0)),
                Box::new(Expr::Sub(
                    Box::new(Expr::X),
                    Box::new(Expr::Sq(Box::new(Expr::X))),
                )),
            ),
            LogisticVariant::Centered => {
                params.push(ParamDef {
                    name: "mu_over_4".to_string(),
                    value: &mu_r / BigRational::from_integer(4.into()),
                    exact: exact_mu,
                });
                let half = BigRational::new(1.into(), 2.into());
                Expr::Sub(
                    Box::new(Expr::Param(1)),
                    Box::new(Expr::Mul(
                        Box::new(Expr::Param(0)),
                        Box::new(Expr::Sq(Box::new(Expr::Sub(
                            Box::new(Expr::X),
                            Box::new(Expr::Const(half)),
                        )))),
                    )),
                )
            }
        };
        // f'(x) = mu * (1 - 2x) in every evaluation order.
        let deriv = Expr::Mul(
            Box::new(Expr::Param(0)),
            Box::new(Expr::Sub(
                Box::new(Expr::Const(BigRational::one())),
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(BigRational::from_integer(2.into()))),
                    Box::new(Expr::X),
                )),
            )),
        );
        // K = arithmetic nodes + one for the single rounded parameter source
        // (mu and mu/4 share one mantissa, hence one rounding).
        let k = expr.op_count() + u32::from(!exact_mu);
        debug_assert_eq!(
            expr.op_count(),
            match variant {
                LogisticVariant::Centered => 4,
                _ => 3,
            }
        );
        Ok(FeasibleMap {
            name: format!("logistic-{} mu={mu}", variant.name()),
            expr,
            deriv,
            params,
            domain: (BigRational::zero(), BigRational::one()),
            shift: None,
            k,
        })
    }

    /// The conjugate map f~(x) = f(x - M) + M on the shifted domain D + M.
    /// Rejects shifts that leave zero inside the new domain (the point the
    /// relative-precision predicate is singular at).
    pub fn shifted(&self, shift: &str) -> Result<Self, Error> {
        if self.shift.is_some() {
            return Err(Error::InvalidShift(
                "map is already shifted; compose shifts into one amount".to_string(),
            ));
        }
        let m_r = parse_decimal(shift)?;
        let lo = &self.domain.0 + &m_r;
        let hi = &self.domain.1 + &m_r;
        if !lo.is_positive() && !hi.is_negative() {
            return Err(Error::InvalidShift(format!(
                "shifted domain [{lo}, {hi}] contains zero"
            )));
        }
        let mut params = self.params.clone();
        let exact = is_dyadic(&m_r);
        params.push(ParamDef {
            name: "shift".to_string(),
            value: m_r,
            exact,
        });
        // One subtraction going in, one addition coming out; a non-dyadic
        // shift amount also rounds once.
        let k = self.k + 2 + u32::from(!exact);
        Ok(FeasibleMap {
            name: format!("{} shift={shift}", self.name),
            expr: self.expr.clone(),
            deriv: self.deriv.clone(),
            params,
            domain: (lo, hi),
            shift: Some(Shift {
                param: self.params.len(),
            }),
            k,
        })
    }

    /// Rounding-operation count of one evaluation.
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Closed domain [lo, hi] as exact rationals.
    pub fn domain(&self) -> (&BigRational, &BigRational) {
        (&self.domain.0, &self.domain.1)
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    /// Base expression (in unshifted coordinates) for interval walkers.
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Base derivative expression (in unshifted coordinates).
    pub fn deriv(&self) -> &Expr {
        &self.deriv
    }

    /// Parameter index of the shift amount, if this map is shifted.
    pub fn shift_param(&self) -> Option<usize> {
        self.shift.as_ref().map(|s| s.param)
    }

    /// Parameters rounded to nearest at `m` bits, in table order.
    pub fn rounded_params(&self, m: Precision) -> Vec<MpFloat> {
        self.params
            .iter()
            .map(|p| MpFloat::from_rational(&p.value, m, RoundingMode::NearestEven))
            .collect()
    }

    /// Checks that every parameter marked exact really rounds exactly at
    /// `m` bits, so the advertised K stays valid. Call once per mantissa
    /// length before iterating.
    pub fn check_exact_params_at(&self, m: Precision) -> Result<(), Error> {
        for p in &self.params {
            if p.exact {
                let rounded = MpFloat::from_rational(&p.value, m, RoundingMode::NearestEven);
                if rounded.to_rational() != p.value {
                    return Err(Error::InvalidParameter(format!(
                        "parameter {} marked exact does not fit in {} bits",
                        p.name, m
                    )));
                }
            }
        }
        Ok(())
    }

    /// One map step with every operation correctly rounded to nearest at
    /// `m` bits (parameters included). Deterministic: equal inputs give the
    /// identical result.
    pub fn eval_rounded(&self, x: &MpFloat, m: Precision) -> MpFloat {
        let mode = RoundingMode::NearestEven;
        let params = self.rounded_params(m);
        match &self.shift {
            None => self.expr.eval_mp(x, &params, m),
            Some(s) => {
                let t = x.sub_round(&params[s.param], m, mode);
                let v = self.expr.eval_mp(&t, &params, m);
                v.add_round(&params[s.param], m, mode)
            }
        }
    }

    /// Derivative evaluated with every operation rounded to nearest at `m`
    /// bits. For shifted maps f~'(x) = f'(x - M).
    pub fn eval_deriv_rounded(&self, x: &MpFloat, m: Precision) -> MpFloat {
        let params = self.rounded_params(m);
        match &self.shift {
            None => self.deriv.eval_mp(x, &params, m),
            Some(s) => {
                let t = x.sub_round(&params[s.param], m, RoundingMode::NearestEven);
                self.deriv.eval_mp(&t, &params, m)
            }
        }
    }

    fn rational_params(&self) -> Vec<BigRational> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Exact map value over the rationals.
    pub fn eval_rational(&self, x: &BigRational) -> BigRational {
        let params = self.rational_params();
        match &self.shift {
            None => self.expr.eval_rational(x, &params),
            Some(s) => {
                let t = x - &params[s.param];
                self.expr.eval_rational(&t, &params) + &params[s.param]
            }
        }
    }

    /// Exact derivative over the rationals.
    pub fn eval_deriv_rational(&self, x: &BigRational) -> BigRational {
        let params = self.rational_params();
        match &self.shift {
            None => self.deriv.eval_rational(x, &params),
            Some(s) => {
                let t = x - &params[s.param];
                self.deriv.eval_rational(&t, &params)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn p(bits: u32) -> Precision {
        Precision::new(bits).unwrap()
    }

    fn all_variants() -> [LogisticVariant; 3] {
        [
            LogisticVariant::Factored,
            LogisticVariant::Expanded,
            LogisticVariant::Centered,
        ]
    }

    #[test]
    fn rounding_op_counts() {
        assert_eq!(
            FeasibleMap::logistic(LogisticVariant::Factored, "4", false)
                .unwrap()
                .k(),
            4
        );
        assert_eq!(
            FeasibleMap::logistic(LogisticVariant::Expanded, "4", false)
                .unwrap()
                .k(),
            4
        );
        assert_eq!(
            FeasibleMap::logistic(LogisticVariant::Centered, "4", false)
                .unwrap()
                .k(),
            5
        );
        // Dyadic mu taken exactly drops the parameter rounding.
        assert_eq!(
            FeasibleMap::logistic(LogisticVariant::Factored, "3.75", true)
                .unwrap()
                .k(),
            3
        );
        assert_eq!(
            FeasibleMap::logistic(LogisticVariant::Centered, "4", true)
                .unwrap()
                .k(),
            4
        );
        // A shift adds a subtraction and an addition.
        let shifted = FeasibleMap::logistic(LogisticVariant::Factored, "4", false)
            .unwrap()
            .shifted("1")
            .unwrap();
        assert_eq!(shifted.k(), 6);
    }

    #[test]
    fn parameter_validation() {
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "0", false).is_err());
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "4.01", false).is_err());
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "-1", false).is_err());
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "4", false).is_ok());
        // 3.3 = 33/10 is not dyadic.
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "3.3", true).is_err());
        assert!(FeasibleMap::logistic(LogisticVariant::Factored, "3.3", false).is_ok());
    }

    #[test]
    fn shift_must_not_cover_zero() {
        let base = FeasibleMap::logistic(LogisticVariant::Factored, "0.5", false).unwrap();
        assert!(base.shifted("1").is_ok());
        assert!(base.shifted("-2").is_ok());
        for bad in ["0", "-0.5", "-1", "0.0"] {
            assert!(
                base.shifted(bad).is_err(),
                "shift {bad} keeps 0 in the domain"
            );
        }
        let (lo, hi) = base.shifted("1").unwrap().domain;
        assert_eq!((lo, hi), (rat(1, 1), rat(2, 1)));
    }

    #[test]
    fn evaluation_at_the_critical_point_is_exact() {
        // Every intermediate of mu*x*(1-x) at x = 1/2 is a short dyadic.
        let map = FeasibleMap::logistic(LogisticVariant::Factored, "4", false).unwrap();
        let x = MpFloat::from_decimal("0.5", p(24)).unwrap().0;
        let y = map.eval_rounded(&x, p(24));
        assert_eq!(y.to_rational(), rat(1, 1));
        let map375 = FeasibleMap::logistic(LogisticVariant::Factored, "3.75", false).unwrap();
        let y = map375.eval_rounded(&x, p(24));
        assert_eq!(y.to_rational(), rat(15, 16));
    }

    #[test]
    fn variants_agree_exactly_over_the_rationals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let maps: Vec<FeasibleMap> = all_variants()
            .iter()
            .map(|v| FeasibleMap::logistic(*v, "3.5", false).unwrap())
            .collect();
        for _ in 0..50 {
            let x = rat(rng.gen_range(0..=1000), 1000);
            let base = maps[0].eval_rational(&x);
            for map in &maps[1..] {
                assert_eq!(map.eval_rational(&x), base, "variants differ at {x}");
            }
            // All variants share the derivative mu * (1 - 2x).
            let expect = rat(7, 2) * (rat(1, 1) - rat(2, 1) * &x);
            for map in &maps {
                assert_eq!(map.eval_deriv_rational(&x), expect);
            }
        }
    }

    #[test]
    fn rounded_evaluation_is_deterministic() {
        let map = FeasibleMap::logistic(LogisticVariant::Factored, "3.9", false).unwrap();
        let x = MpFloat::from_decimal("0.22", p(53)).unwrap().0;
        let a = map.eval_rounded(&x, p(53));
        let b = map.eval_rounded(&x, p(53));
        assert!(a.identical(&b));
    }

    #[test]
    fn roundoff_bound_on_random_points() {
        // |eval_rounded(x) - f(x)| <= (K*2^-m/(1-K*2^-m)) * |result| checked
        // in exact rational arithmetic on random dyadic points. Each variant
        // is sampled over the region where its final subtraction cannot
        // cancel (see module docs); the factored form has no such region and
        // is sampled over all of [0, 1].
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cases = [
            (LogisticVariant::Factored, rat(0, 1), rat(1, 1)),
            (LogisticVariant::Expanded, rat(0, 1), rat(3, 4)),
            (LogisticVariant::Centered, rat(1, 4), rat(3, 4)),
        ];
        for (variant, lo, hi) in cases {
            let map = FeasibleMap::logistic(variant, "3.9", false).unwrap();
            for m in [24u32, 53] {
                let gamma = {
                    let ku = rat(i64::from(map.k()), 1) / rat(2, 1).pow(m as i32);
                    &ku / (rat(1, 1) - &ku)
                };
                for _ in 0..100 {
                    // Random dyadic point of m bits inside [lo, hi].
                    let span = &hi - &lo;
                    let t = rat(rng.gen_range(0..=(1i64 << 30)), 1i64 << 30);
                    let x_r = &lo + span * t;
                    let x = MpFloat::from_rational(&x_r, p(m), RoundingMode::Down);
                    let x_r = x.to_rational();
                    let got = map.eval_rounded(&x, p(m));
                    let exact = map.eval_rational(&x_r);
                    let err = (got.to_rational() - exact).abs();
                    let allowed = &gamma * got.to_rational().abs();
                    assert!(
                        err <= allowed,
                        "{variant:?} m={m} x={x_r}: err {err} > allowed {allowed}"
                    );
                }
            }
        }
    }

    #[test]
    fn shifted_map_translates_values_and_derivative() {
        let base = FeasibleMap::logistic(LogisticVariant::Factored, "4", false).unwrap();
        let map = base.shifted("1").unwrap();
        // f~(1.5) = f(0.5) + 1 = 2, exactly representable.
        let x = MpFloat::from_decimal("1.5", p(24)).unwrap().0;
        assert_eq!(map.eval_rounded(&x, p(24)).to_rational(), rat(2, 1));
        // f~'(1.25) = f'(0.25) = 2.
        let y = MpFloat::from_decimal("1.25", p(24)).unwrap().0;
        assert_eq!(map.eval_deriv_rounded(&y, p(24)).to_rational(), rat(2, 1));
    }

    #[test]
    fn shifted_orbit_is_the_translated_orbit() {
        let base = FeasibleMap::logistic(LogisticVariant::Factored, "3.5", false).unwrap();
        let map = base.shifted("1").unwrap();
        let mut x = rat(11, 50);
        let mut y = &x + rat(1, 1);
        for n in 0..10 {
            assert_eq!(y, &x + rat(1, 1), "orbits diverge at step {n}");
            x = base.eval_rational(&x);
            y = map.eval_rational(&y);
        }
    }

    #[test]
    fn exact_params_are_checked_against_the_mantissa() {
        // 3.75 needs 4 mantissa bits; 53 is plenty, 3 is not.
        let map = FeasibleMap::logistic(LogisticVariant::Factored, "3.75", true).unwrap();
        assert!(map.check_exact_params_at(p(53)).is_ok());
        assert!(map.check_exact_params_at(p(3)).is_err());
    }
}
