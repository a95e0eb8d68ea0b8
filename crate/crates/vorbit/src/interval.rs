//! Outward-rounded interval arithmetic and derivative range bounds.
//!
//! An [`Interval`] is a pair of floats `lo <= hi` enclosing a set of reals.
//! Every operation rounds the lower endpoint down and the upper endpoint up,
//! so the result encloses the exact image of the operands. Endpoint products
//! and squares are first computed exactly (a product of two mantissas fits
//! in the sum of their lengths) and only the final min/max endpoints are
//! rounded, which keeps the enclosures one rounding wide.
//!
//! [`deriv_range_bound`] turns this into the quantity the verified orbit
//! needs: an upper bound on |f'| over a ball around a computed point. For
//! the built-in maps the derivative is affine in x, so the natural interval
//! extension gives the exact range up to rounding.

use num_rational::BigRational;

use crate::error::Error;
use crate::mp::{MpFloat, Precision, RoundingMode};
use crate::systems::{Expr, FeasibleMap};

/// A closed interval with floating-point endpoints, `lo <= hi`.
#[derive(Clone, Debug)]
pub struct Interval {
    lo: MpFloat,
    hi: MpFloat,
}

fn val_min(a: &MpFloat, b: &MpFloat) -> MpFloat {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}

fn val_max(a: &MpFloat, b: &MpFloat) -> MpFloat {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}

/// Product of two floats without rounding: the result gets enough mantissa
/// bits to hold it exactly.
fn exact_mul(a: &MpFloat, b: &MpFloat) -> MpFloat {
    let bits = a.precision().bits() + b.precision().bits();
    a.mul_round(b, Precision::new(bits).unwrap(), RoundingMode::NearestEven)
}

impl Interval {
    /// The degenerate interval [x, x].
    pub fn point(x: &MpFloat) -> Self {
        Interval {
            lo: x.clone(),
            hi: x.clone(),
        }
    }

    /// [lo, hi]; panics if the endpoints are out of order.
    pub fn new(lo: MpFloat, hi: MpFloat) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi }
    }

    /// Encloses the exact rational interval [lo, hi] outward at `w` bits.
    pub fn from_rational_bounds(lo: &BigRational, hi: &BigRational, w: Precision) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval {
            lo: MpFloat::from_rational(lo, w, RoundingMode::Down),
            hi: MpFloat::from_rational(hi, w, RoundingMode::Up),
        }
    }

    /// The thin enclosure [down(c), up(c)] of a single rational.
    pub fn thin(c: &BigRational, w: Precision) -> Self {
        Self::from_rational_bounds(c, c, w)
    }

    /// Encloses [center - radius, center + radius] outward at `w` bits.
    /// `radius` must be non-negative.
    pub fn from_center_radius(center: &MpFloat, radius: &MpFloat, w: Precision) -> Self {
        assert!(radius.signum() >= 0, "negative radius");
        Interval {
            lo: center.sub_round(radius, w, RoundingMode::Down),
            hi: center.add_round(radius, w, RoundingMode::Up),
        }
    }

    pub fn lo(&self) -> &MpFloat {
        &self.lo
    }

    pub fn hi(&self) -> &MpFloat {
        &self.hi
    }

    pub fn contains(&self, x: &MpFloat) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn contains_rational(&self, x: &BigRational) -> bool {
        self.lo.to_rational() <= *x && *x <= self.hi.to_rational()
    }

    /// Largest absolute value over the interval: max(|lo|, |hi|).
    pub fn mag_upper(&self) -> MpFloat {
        val_max(&self.lo.abs(), &self.hi.abs())
    }

    /// hi - lo, rounded up at `w` bits.
    pub fn width_upper(&self, w: Precision) -> MpFloat {
        self.hi.sub_round(&self.lo, w, RoundingMode::Up)
    }

    /// Midpoint (lo + hi) / 2, correctly rounded to nearest at `m` bits.
    pub fn midpoint(&self, m: Precision) -> MpFloat {
        let sum = self.lo.to_rational() + self.hi.to_rational();
        let half = sum / BigRational::from_integer(2.into());
        MpFloat::from_rational(&half, m, RoundingMode::NearestEven)
    }

    /// Intersection, or None when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = val_max(&self.lo, &other.lo);
        let hi = val_min(&self.hi, &other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn add(&self, other: &Interval, w: Precision) -> Interval {
        Interval {
            lo: self.lo.add_round(&other.lo, w, RoundingMode::Down),
            hi: self.hi.add_round(&other.hi, w, RoundingMode::Up),
        }
    }

    pub fn sub(&self, other: &Interval, w: Precision) -> Interval {
        Interval {
            lo: self.lo.sub_round(&other.hi, w, RoundingMode::Down),
            hi: self.hi.sub_round(&other.lo, w, RoundingMode::Up),
        }
    }

    pub fn mul(&self, other: &Interval, w: Precision) -> Interval {
        let products = [
            exact_mul(&self.lo, &other.lo),
            exact_mul(&self.lo, &other.hi),
            exact_mul(&self.hi, &other.lo),
            exact_mul(&self.hi, &other.hi),
        ];
        let mut lo = products[0].clone();
        let mut hi = products[0].clone();
        for p in &products[1..] {
            lo = val_min(&lo, p);
            hi = val_max(&hi, p);
        }
        Interval {
            lo: lo.round_to(w, RoundingMode::Down),
            hi: hi.round_to(w, RoundingMode::Up),
        }
    }

    /// [lo, hi]^2 as a range of x^2, which is tighter than `mul` with self
    /// when the interval straddles zero (the square is then never negative).
    pub fn sq(&self, w: Precision) -> Interval {
        let lo2 = exact_mul(&self.lo, &self.lo);
        let hi2 = exact_mul(&self.hi, &self.hi);
        let (lo, hi) = if self.lo.signum() >= 0 {
            (lo2, hi2)
        } else if self.hi.signum() <= 0 {
            (hi2, lo2)
        } else {
            (MpFloat::zero(w), val_max(&lo2, &hi2))
        };
        Interval {
            lo: lo.round_to(w, RoundingMode::Down),
            hi: hi.round_to(w, RoundingMode::Up),
        }
    }
}

/// Natural interval extension of an expression: each node evaluated with
/// outward rounding at `w` bits. `params` are thin enclosures in table order.
pub fn eval_expr_interval(
    expr: &Expr,
    x: &Interval,
    params: &[Interval],
    w: Precision,
) -> Interval {
    match expr {
        Expr::X => Interval {
            lo: x.lo.round_to(w, RoundingMode::Down),
            hi: x.hi.round_to(w, RoundingMode::Up),
        },
        Expr::Param(i) => params[*i].clone(),
        Expr::Const(c) => Interval::thin(c, w),
        Expr::Add(a, b) => {
            eval_expr_interval(a, x, params, w).add(&eval_expr_interval(b, x, params, w), w)
        }
        Expr::Sub(a, b) => {
            eval_expr_interval(a, x, params, w).sub(&eval_expr_interval(b, x, params, w), w)
        }
        Expr::Mul(a, b) => {
            eval_expr_interval(a, x, params, w).mul(&eval_expr_interval(b, x, params, w), w)
        }
        Expr::Sq(a) => eval_expr_interval(a, x, params, w).sq(w),
    }
}

fn thin_params(map: &FeasibleMap, w: Precision) -> Vec<Interval> {
    map.params()
        .iter()
        .map(|p| Interval::thin(&p.value, w))
        .collect()
}

/// Encloses the image of `x` under the map, outward-rounded at `w` bits.
/// Shifted maps translate in, apply the base expression, translate out.
pub fn eval_map_interval(map: &FeasibleMap, x: &Interval, w: Precision) -> Interval {
    let params = thin_params(map, w);
    match map.shift_param() {
        None => eval_expr_interval(map.expr(), x, &params, w),
        Some(i) => {
            let t = x.sub(&params[i], w);
            eval_expr_interval(map.expr(), &t, &params, w).add(&params[i], w)
        }
    }
}

/// Upper bound on |f'| over [center - radius, center + radius], computed
/// with outward rounding at `w` bits.
///
/// With `clamp_to_domain` the ball is first intersected with the hull of the
/// map's domain and the center. A verified orbit keeps the true point inside
/// the domain, so discarding the rest of the ball is sound and avoids paying
/// for derivative growth just outside the edges; taking the hull with the
/// center (rather than the bare domain) keeps the intersection non-empty
/// when rounding has pushed the computed point marginally past an endpoint.
pub fn deriv_range_bound(
    map: &FeasibleMap,
    center: &MpFloat,
    radius: &MpFloat,
    w: Precision,
    clamp_to_domain: bool,
) -> Result<MpFloat, Error> {
    let mut ball = Interval::from_center_radius(center, radius, w);
    {
        // The true point is promised to lie both in the ball and in the
        // domain; if those are disjoint the calling computation is broken.
        let (dlo, dhi) = map.domain();
        if &ball.hi().to_rational() < dlo || &ball.lo().to_rational() > dhi {
            return Err(Error::DomainEscape {
                step: 0,
                value: center.to_decimal(),
            });
        }
    }
    if clamp_to_domain {
        let (dlo, dhi) = map.domain();
        let clamp = Interval {
            lo: val_min(&MpFloat::from_rational(dlo, w, RoundingMode::Down), center),
            hi: val_max(&MpFloat::from_rational(dhi, w, RoundingMode::Up), center),
        };
        // Both contain the center, so the intersection cannot be empty.
        ball = ball.intersect(&clamp).ok_or_else(|| Error::DomainEscape {
            step: 0,
            value: center.to_decimal(),
        })?;
    }
    let params = thin_params(map, w);
    let range = match map.shift_param() {
        None => eval_expr_interval(map.deriv(), &ball, &params, w),
        Some(i) => {
            let t = ball.sub(&params[i], w);
            eval_expr_interval(map.deriv(), &t, &params, w)
        }
    };
    Ok(range.mag_upper())
}
