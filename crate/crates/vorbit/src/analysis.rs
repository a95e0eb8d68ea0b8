//! Loss-of-significance rates, Ljapunov exponents, and parameter sweeps.
//!
//! A converged minimal-mantissa search tells us how many mantissa bits an
//! orbit of length N demands; `m_min / N` is the observed number of bits lost
//! per step. For chaotic parameters that slope is predicted by the Ljapunov
//! exponent: the demand grows like `lambda / ln 2` bits per step, so every
//! converged run should satisfy `sigma_est >= lambda/ln 2 - slack` for a
//! small slack. This module estimates both sides of that inequality and
//! compares them, per parameter or over a whole parameter grid.

use std::io::{self, Write};
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::engine::{self, Mode, OrbitRun, RunConfig, RunStatus, SearchStrategy};
use crate::error::Error;
use crate::mp::{self, MpFloat, Precision, RoundingMode, WORKING_PRECISION};
use crate::systems::{FeasibleMap, LogisticVariant};

/// Internal mantissa length for logarithm evaluation. The series runs here
/// and only the final value is rounded to [`WORKING_PRECISION`] bits, keeping
/// the total relative error of `ln` below 2^-60.
const LN_INTERNAL_BITS: u32 = 96;

/// Relative accuracy (decimal digits) requested for the orbit points that
/// feed derivative evaluations in [`lyapunov_partial`].
pub const DEFAULT_ORBIT_P: i32 = 10;

/// Default slack for [`bound_check`]: the observed bits-per-step slope may
/// undershoot the Ljapunov prediction by at most this much.
pub const DEFAULT_SLACK: f64 = 0.1;

/// Default truncation floor 2^-30 for derivative magnitudes.
pub fn default_alpha() -> MpFloat {
    MpFloat::power_of_two(-30, WORKING_PRECISION)
}

fn working() -> Precision {
    WORKING_PRECISION
}

fn ln_internal_precision() -> Precision {
    Precision::new(LN_INTERNAL_BITS).expect("96 bits is a valid mantissa length")
}

/// Core series: `ln x` for `x` in [1/2, 2], evaluated at `w` bits via
/// `ln x = 2 artanh(t)` with `t = (x-1)/(x+1)`, |t| <= 1/3. All terms have
/// the sign of `t`, so the sum never cancels and every rounding is a
/// half-ulp of the running value.
fn ln_series(x: &MpFloat, w: Precision) -> MpFloat {
    let ne = RoundingMode::NearestEven;
    let one = MpFloat::one(w);
    let num = x.sub_round(&one, w, ne);
    if num.is_zero() {
        return MpFloat::zero(w);
    }
    let den = x.add_round(&one, w, ne);
    let t = num.div_round(&den, w, ne).expect("x + 1 > 0");
    let t2 = t.mul_round(&t, w, ne);
    let mut power = t.clone();
    let mut sum = t.clone();
    let mut j = 3u32;
    loop {
        power = power.mul_round(&t2, w, ne);
        let term = power
            .div_round(&MpFloat::from_u32(j, w, ne), w, ne)
            .expect("odd j > 0");
        // |t| <= 1/3 shrinks terms at least 9x per round; once a term drops
        // below an ulp of the sum the remaining tail is below that too.
        if term.is_zero() || term.sci_exponent() < sum.sci_exponent() - i64::from(w.bits()) - 4 {
            break;
        }
        sum = sum.add_round(&term, w, ne);
        j += 2;
    }
    sum.add_round(&sum, w, ne)
}

fn ln2_internal() -> &'static MpFloat {
    static LN2: OnceLock<MpFloat> = OnceLock::new();
    LN2.get_or_init(|| {
        let w = ln_internal_precision();
        ln_series(&MpFloat::from_u32(2, w, RoundingMode::NearestEven), w)
    })
}

/// `ln 2` at working precision.
pub fn ln_2() -> MpFloat {
    ln2_internal().round_to(working(), RoundingMode::NearestEven)
}

/// Natural logarithm at working precision, relative error at most 2^-60.
///
/// Arguments in [1/2, 2) go straight into the artanh series, so values near 1
/// never suffer cancellation against a multiple of `ln 2`. Everything else is
/// scaled into [1, 2) by a power of two, which keeps `|ln x| >= ln 2` and the
/// recombination `ln s + k ln 2` benign. Fails on zero or negative input.
pub fn ln_working(x: &MpFloat) -> Result<MpFloat, Error> {
    if x.is_zero() || x.signum() < 0 {
        return Err(Error::InvalidParameter(format!(
            "ln needs a positive argument, got {}",
            x.to_decimal()
        )));
    }
    let w = ln_internal_precision();
    let ne = RoundingMode::NearestEven;
    let wide = x.round_to(w, ne);
    let e = x.sci_exponent();
    let value = if e == -1 || e == 0 {
        ln_series(&wide, w)
    } else {
        let s = wide.mul_round(&MpFloat::power_of_two(-e, w), w, ne);
        let k = MpFloat::from_rational(&BigRational::from_integer(BigInt::from(e)), w, ne);
        ln_series(&s, w).add_round(&k.mul_round(ln2_internal(), w, ne), w, ne)
    };
    Ok(value.round_to(working(), ne))
}

/// Nearest `f64` to a stored value, for reports and CSV output only.
pub fn to_f64(x: &MpFloat) -> f64 {
    x.to_decimal().parse().unwrap_or(f64::NAN)
}

fn rational_to_f64(r: &BigRational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if d != 0.0 => n / d,
        _ => f64::NAN,
    }
}

/// Observed precision-demand slope of a converged minimal-mantissa search:
/// bits per orbit step, kept as an exact ratio of integers.
#[derive(Clone, Debug)]
pub struct LossRateEstimate {
    pub m_min: u32,
    /// Number of map applications in the run.
    pub n: usize,
    pub p: i32,
    pub mode: Mode,
    /// `m_min / n` exactly.
    pub sigma_est: BigRational,
}

impl LossRateEstimate {
    pub fn sigma_f64(&self) -> f64 {
        rational_to_f64(&self.sigma_est)
    }
}

/// Reads the slope off a finished search. Fails with [`Error::NotConverged`]
/// when the search hit its mantissa cap, and rejects zero-step runs (no
/// per-step rate exists).
pub fn loss_rate(run: &OrbitRun, cfg: &RunConfig) -> Result<LossRateEstimate, Error> {
    let m_min = match (run.status, run.m_min) {
        (RunStatus::Converged, Some(m)) => m,
        _ => return Err(Error::NotConverged),
    };
    if cfg.steps == 0 {
        return Err(Error::InvalidParameter(
            "a per-step loss rate needs at least one orbit step".to_string(),
        ));
    }
    Ok(LossRateEstimate {
        m_min,
        n: cfg.steps,
        p: cfg.p,
        mode: cfg.mode,
        sigma_est: BigRational::new(BigInt::from(m_min), BigInt::from(cfg.steps)),
    })
}

/// Truncated Ljapunov partial mean over the first `n` points of a verified
/// orbit: `(1/n) * sum of ln(max(alpha, |f'(x_k)|))` for `k < n`.
#[derive(Clone, Debug)]
pub struct LyapunovEstimate {
    /// Sum of the `n` floored log-derivative terms at working precision.
    pub partial_sum: MpFloat,
    pub n: usize,
    /// `partial_sum / n`; zero (with `neg_infinite` set) when the mean
    /// diverged to negative infinity.
    pub lambda_n: MpFloat,
    /// Truncation floor; zero means untruncated.
    pub alpha: MpFloat,
    /// Relative decimal accuracy the orbit points were verified to.
    pub orbit_p: i32,
    /// Set when `alpha` is zero and some derivative vanished exactly, i.e.
    /// the untruncated mean is negative infinity.
    pub neg_infinite: bool,
}

impl LyapunovEstimate {
    pub fn lambda_f64(&self) -> f64 {
        if self.neg_infinite {
            f64::NEG_INFINITY
        } else {
            to_f64(&self.lambda_n)
        }
    }

    /// The predicted bits-per-step slope `lambda_n / ln 2`.
    pub fn lambda_over_ln2(&self) -> f64 {
        if self.neg_infinite {
            f64::NEG_INFINITY
        } else {
            let ne = RoundingMode::NearestEven;
            let ratio = self
                .lambda_n
                .div_round(&ln_2(), working(), ne)
                .expect("ln 2 is nonzero");
            to_f64(&ratio)
        }
    }
}

/// Estimates the Ljapunov exponent of `map` along the orbit of `x0`.
///
/// The orbit points come from a mean-value search verified to `orbit_p`
/// correct decimal digits, so each derivative magnitude is evaluated at a
/// point within relative 10^-orbit_p of the true orbit. Magnitudes below
/// `alpha` are floored to `alpha` before taking logarithms; with `alpha` zero
/// a vanishing derivative makes the mean negative infinity, reported via
/// [`LyapunovEstimate::neg_infinite`] instead of an error.
pub fn lyapunov_partial(
    map: &FeasibleMap,
    x0: &str,
    n: usize,
    alpha: &MpFloat,
    orbit_p: i32,
) -> Result<LyapunovEstimate, Error> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "a Ljapunov mean needs at least one orbit point".to_string(),
        ));
    }
    if alpha.signum() < 0 {
        return Err(Error::InvalidParameter(format!(
            "truncation floor must be nonnegative, got {}",
            alpha.to_decimal()
        )));
    }
    let mut cfg = RunConfig::new(x0, n - 1, orbit_p);
    cfg.strategy = SearchStrategy::DoubleThenBisect;
    let run = engine::find_minimal_mantissa(map, &cfg)?;
    if run.status != RunStatus::Converged {
        return Err(Error::NotConverged);
    }
    debug_assert_eq!(run.steps.len(), n);

    let w = working();
    let ne = RoundingMode::NearestEven;
    let mut sum = MpFloat::zero(w);
    let mut neg_infinite = false;
    for rec in run.steps.iter().take(n) {
        let d = map.eval_deriv_rounded(&rec.fl, w).abs();
        let floored = if d < *alpha { alpha.clone() } else { d };
        if floored.is_zero() {
            neg_infinite = true;
            break;
        }
        sum = sum.add_round(&ln_working(&floored)?, w, ne);
    }
    let lambda_n = if neg_infinite {
        MpFloat::zero(w)
    } else {
        let count = u32::try_from(n)
            .map_err(|_| Error::InvalidParameter(format!("orbit length {n} too large")))?;
        sum.div_round(&MpFloat::from_u32(count, w, ne), w, ne)?
    };
    Ok(LyapunovEstimate {
        partial_sum: sum,
        n,
        lambda_n,
        alpha: alpha.clone(),
        orbit_p,
        neg_infinite,
    })
}

/// Result of comparing an observed slope against the Ljapunov prediction.
#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub sigma_est: f64,
    pub lambda_over_ln2: f64,
    /// `sigma_est - lambda_over_ln2`; positive infinity when the prediction
    /// is negative infinity.
    pub difference: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Checks `sigma_est >= lambda/ln 2 - slack`. A negative-infinite prediction
/// (derivative vanished, untruncated) passes vacuously.
pub fn bound_check(sigma: &LossRateEstimate, lambda: &LyapunovEstimate, slack: f64) -> BoundCheck {
    let s = sigma.sigma_f64();
    let l = lambda.lambda_over_ln2();
    BoundCheck {
        sigma_est: s,
        lambda_over_ln2: l,
        difference: s - l,
        slack,
        pass: s >= l - slack,
    }
}

/// A parameter sweep: one minimal-mantissa search plus Ljapunov comparison
/// per grid point `mu = mu_from + k * mu_step <= mu_to`, stepped exactly in
/// rational arithmetic so no grid point drifts.
#[derive(Clone, Debug)]
pub struct SweepGrid {
    pub mu_from: String,
    pub mu_to: String,
    pub mu_step: String,
    pub x0: String,
    /// Map applications per run.
    pub steps: usize,
    pub p: i32,
    pub mode: Mode,
    pub variant: LogisticVariant,
    pub m0: u32,
    pub m_max: u32,
    pub alpha: MpFloat,
    pub orbit_p: i32,
    pub slack: f64,
}

impl SweepGrid {
    pub fn new(mu_from: &str, mu_to: &str, mu_step: &str, x0: &str, steps: usize, p: i32) -> Self {
        SweepGrid {
            mu_from: mu_from.to_string(),
            mu_to: mu_to.to_string(),
            mu_step: mu_step.to_string(),
            x0: x0.to_string(),
            steps,
            p,
            mode: Mode::MeanValue,
            variant: LogisticVariant::Factored,
            m0: 24,
            m_max: 1 << 16,
            alpha: default_alpha(),
            orbit_p: DEFAULT_ORBIT_P,
            slack: DEFAULT_SLACK,
        }
    }
}

/// One line of a sweep report. Optional fields stay empty when the stage
/// that would fill them did not complete; `status` says why.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Exact decimal form of the grid value.
    pub mu: String,
    pub x0: String,
    pub n: usize,
    pub p: i32,
    pub mode: Mode,
    pub m_min: Option<u32>,
    pub sigma_est: Option<f64>,
    pub lambda_est: Option<f64>,
    pub lambda_over_ln2: Option<f64>,
    pub alpha: f64,
    /// "ok", "bound_check_failed", "precision_cap_exceeded", or "error: ...".
    pub status: String,
}

/// Exact decimal representation when the reduced denominator divides a power
/// of ten, else a 17-significant-digit float fallback.
pub(crate) fn decimal_string(r: &BigRational) -> String {
    let mut den = r.denom().magnitude().clone();
    let mut twos = 0u64;
    let mut fives = 0u64;
    let two = num_bigint::BigUint::from(2u32);
    let five = num_bigint::BigUint::from(5u32);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format_float(rational_to_f64(r));
    }
    let places = twos.max(fives);
    let scale = two.pow(u32::try_from(places - twos.min(places)).unwrap_or(u32::MAX))
        * five.pow(u32::try_from(places - fives.min(places)).unwrap_or(u32::MAX));
    let digits = (r.numer().magnitude() * scale).to_str_radix(10);
    let sign = if r.numer().is_negative() { "-" } else { "" };
    if places == 0 {
        return format!("{sign}{digits}");
    }
    let places = usize::try_from(places).expect("denominator exponent fits usize");
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// 17 significant decimal digits, the shortest form that identifies any f64.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else {
        "nan".to_string()
    }
}

/// Enumerates the grid values `mu_from + k * mu_step <= mu_to` exactly,
/// with their canonical decimal labels.
pub fn grid_points(grid: &SweepGrid) -> Result<Vec<(BigRational, String)>, Error> {
    let from = mp::parse_decimal(&grid.mu_from)?;
    let to = mp::parse_decimal(&grid.mu_to)?;
    let step = mp::parse_decimal(&grid.mu_step)?;
    if !step.is_positive() {
        return Err(Error::InvalidParameter(format!(
            "sweep step must be positive, got {}",
            grid.mu_step
        )));
    }
    let mut values = Vec::new();
    for k in 0u64.. {
        let mu = &from + &step * BigRational::from_integer(BigInt::from(k));
        if mu > to {
            break;
        }
        let label = decimal_string(&mu);
        values.push((mu, label));
    }
    Ok(values)
}

/// Computes one sweep row for an exact parameter value with its display
/// label. Any failure is recorded in `status`; the function never errors.
pub fn sweep_point(grid: &SweepGrid, mu: &BigRational, label: &str) -> SweepRow {
    let mut row = SweepRow {
        mu: label.to_string(),
        x0: grid.x0.clone(),
        n: grid.steps,
        p: grid.p,
        mode: grid.mode,
        m_min: None,
        sigma_est: None,
        lambda_est: None,
        lambda_over_ln2: None,
        alpha: to_f64(&grid.alpha),
        status: String::new(),
    };
    let map = match FeasibleMap::logistic_rational(grid.variant, mu, label, false) {
        Ok(map) => map,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let mut cfg = RunConfig::new(&grid.x0, grid.steps, grid.p);
    cfg.mode = grid.mode;
    cfg.strategy = SearchStrategy::DoubleThenBisect;
    cfg.m0 = grid.m0;
    cfg.m_max = grid.m_max;
    let run = match engine::find_minimal_mantissa(&map, &cfg) {
        Ok(run) => run,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    if run.status != RunStatus::Converged {
        row.status = RunStatus::PrecisionCapExceeded.name().to_string();
        return row;
    }
    let rate = match loss_rate(&run, &cfg) {
        Ok(rate) => rate,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    row.m_min = run.m_min;
    row.sigma_est = Some(rate.sigma_f64());
    let lambda = match lyapunov_partial(&map, &grid.x0, grid.steps, &grid.alpha, grid.orbit_p) {
        Ok(lambda) => lambda,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let check = bound_check(&rate, &lambda, grid.slack);
    row.lambda_est = Some(lambda.lambda_f64());
    row.lambda_over_ln2 = Some(check.lambda_over_ln2);
    row.status = if check.pass {
        "ok".to_string()
    } else {
        "bound_check_failed".to_string()
    };
    row
}

/// Runs the whole grid, one row per parameter value, in parallel. Row order
/// follows the grid regardless of scheduling, and a failing row records its
/// failure in `status` without aborting the sweep. An empty grid is fine and
/// yields no rows.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>, Error> {
    if grid.steps == 0 {
        return Err(Error::InvalidParameter(
            "sweep runs need at least one orbit step".to_string(),
        ));
    }
    let values = grid_points(grid)?;
    Ok(values
        .par_iter()
        .map(|(mu, label)| sweep_point(grid, mu, label))
        .collect())
}

pub const CSV_HEADER: &str =
    "mu,x0,N,p,mode,m_min,sigma_est,lambda_est,lambda_over_ln2,alpha,status";

/// Renders one row as a CSV line matching [`CSV_HEADER`]. Optional fields
/// print as empty cells; floats carry 17 significant digits.
pub fn csv_line(row: &SweepRow) -> String {
    let opt_u32 = |v: Option<u32>| v.map(|m| m.to_string()).unwrap_or_default();
    let opt_f64 = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        row.mu,
        row.x0,
        row.n,
        row.p,
        row.mode.name(),
        opt_u32(row.m_min),
        opt_f64(row.sigma_est),
        opt_f64(row.lambda_est),
        opt_f64(row.lambda_over_ln2),
        format_float(row.alpha),
        row.status
    )
}

/// Writes rows as CSV with the fixed [`CSV_HEADER`] schema.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", csv_line(row))?;
    }
    Ok(())
}
