//! Orbit passes and the minimal-mantissa search.
//!
//! A *pass* runs one orbit of N steps at a fixed mantissa length m, checking
//! after every step that the error bound still certifies the requested
//! number of decimal digits; it stops at the first point that fails. The
//! *search* repeats passes with growing m until one succeeds end to end and
//! reports the smallest such m, which measures how much precision the orbit
//! demands — the central observable this crate exists to produce.
//!
//! Two pass flavors share the protocol: the mean-value mode iterates a
//! point with the per-step error recurrence of the ball module, and the
//! naive mode iterates an outward-rounded interval and represents it by its
//! rounded midpoint and half-width. Two search strategies are available:
//! increasing m by one (every pass between m0 and the answer is run, so the
//! result is minimal by construction) and doubling-then-bisecting (relies
//! on success being monotone in m, which the tests check empirically).

use std::io::{self, Write};

use num_rational::BigRational;

use crate::ball::{FpRepr, StepBoundParams};
use crate::error::Error;
use crate::interval::{eval_map_interval, Interval};
use crate::mp::{parse_decimal, MpFloat, Precision, RoundingMode, WORKING_PRECISION};
use crate::systems::FeasibleMap;

/// How a pass tracks its orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Point plus mean-value error recurrence (default).
    MeanValue,
    /// Outward-rounded interval iteration, reported by midpoint.
    NaiveInterval,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::MeanValue => "mean-value",
            Mode::NaiveInterval => "naive-interval",
        }
    }
}

/// Order in which the search tries mantissa lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchStrategy {
    /// m0, m0+1, m0+2, ...: minimal by construction.
    IncrementByOne,
    /// Double m until a pass succeeds, then bisect down to the edge.
    DoubleThenBisect,
}

impl SearchStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SearchStrategy::IncrementByOne => "increment",
            SearchStrategy::DoubleThenBisect => "double-bisect",
        }
    }
}

/// Everything a search needs besides the map itself.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Starting point as a decimal literal, e.g. "0.22".
    pub x0: String,
    /// Number of map applications; the orbit has steps + 1 points.
    pub steps: usize,
    /// Requested correct decimal digits (relative error 10^-p); may be <= 0.
    pub p: i32,
    /// First mantissa length the search tries.
    pub m0: u32,
    /// Mantissa cap; exceeding it aborts with PrecisionCapExceeded status.
    pub m_max: u32,
    pub mode: Mode,
    pub strategy: SearchStrategy,
    /// Clamp derivative-range balls to the map domain (mean-value mode).
    pub domain_clamp: bool,
}

impl RunConfig {
    pub fn new(x0: &str, steps: usize, p: i32) -> Self {
        RunConfig {
            x0: x0.to_string(),
            steps,
            p,
            m0: 24,
            m_max: 1 << 16,
            mode: Mode::MeanValue,
            strategy: SearchStrategy::IncrementByOne,
            domain_clamp: true,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.m0 < 2 {
            return Err(Error::InvalidPrecision(self.m0));
        }
        if self.m0 > self.m_max {
            return Err(Error::InvalidParameter(format!(
                "m0 = {} exceeds the cap m_max = {}",
                self.m0, self.m_max
            )));
        }
        Ok(())
    }
}

/// One orbit point of a pass: index, value, certified error bound.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub n: usize,
    pub fl: MpFloat,
    pub err: MpFloat,
}

/// Why one pass of the search did not succeed.
#[derive(Clone, Debug)]
pub struct PassFailure {
    pub m: u32,
    /// Index of the first orbit point whose digits could not be certified,
    /// or None when the pass could not start at all.
    pub failed_at: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    PrecisionCapExceeded,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::PrecisionCapExceeded => "precision_cap_exceeded",
        }
    }
}

/// Result of a minimal-mantissa search.
#[derive(Clone, Debug)]
pub struct OrbitRun {
    /// Smallest mantissa length whose pass succeeded; None when the cap was
    /// reached first.
    pub m_min: Option<u32>,
    pub status: RunStatus,
    /// Orbit of the successful pass (or of the last attempted pass when the
    /// search hit the cap, for diagnostics).
    pub steps: Vec<StepRecord>,
    /// Number of passes the search ran.
    pub pass_count: u32,
    /// One entry per unsuccessful pass, in the order they were run.
    pub failures: Vec<PassFailure>,
}

enum PassOutcome {
    Success(Vec<StepRecord>),
    /// Pass ran but some orbit point missed the digit target.
    PrecFail(Vec<StepRecord>, usize),
    /// Pass could not start at this m (roundoff factor undefined or an
    /// exact-tagged parameter does not fit); a longer mantissa may work.
    TooShort(String),
}

/// One pass at fixed m. Domain escapes and invalid configurations are hard
/// errors; everything the search can fix by raising m is a [`PassOutcome`].
fn one_pass(
    map: &FeasibleMap,
    x0: &BigRational,
    cfg: &RunConfig,
    m_bits: u32,
) -> Result<PassOutcome, Error> {
    let m = Precision::new(m_bits)?;
    match cfg.mode {
        Mode::MeanValue => {
            if let Err(e) = map.check_exact_params_at(m) {
                return Ok(PassOutcome::TooShort(e.to_string()));
            }
            let params = match StepBoundParams::new(map.k(), m, cfg.domain_clamp) {
                Ok(p) => p,
                Err(e @ Error::PrecisionTooSmall { .. }) => {
                    return Ok(PassOutcome::TooShort(e.to_string()))
                }
                Err(e) => return Err(e),
            };
            let mut recs = Vec::with_capacity(cfg.steps + 1);
            let mut r = FpRepr::initial(x0, &params);
            for n in 0..=cfg.steps {
                recs.push(StepRecord {
                    n,
                    fl: r.fl.clone(),
                    err: r.err.clone(),
                });
                if !r.meets_precision(cfg.p) {
                    return Ok(PassOutcome::PrecFail(recs, n));
                }
                if n < cfg.steps {
                    r = r.apply_map(map, &params, n + 1)?;
                }
            }
            Ok(PassOutcome::Success(recs))
        }
        Mode::NaiveInterval => {
            let w = WORKING_PRECISION;
            let mut x = Interval::from_rational_bounds(x0, x0, m);
            let mut recs = Vec::with_capacity(cfg.steps + 1);
            for n in 0..=cfg.steps {
                let mid = x.midpoint(m);
                let left = mid.sub_round(x.lo(), w, RoundingMode::Up);
                let right = x.hi().sub_round(&mid, w, RoundingMode::Up);
                let err = if left >= right { left } else { right };
                let r = FpRepr::new(mid, err);
                recs.push(StepRecord {
                    n,
                    fl: r.fl.clone(),
                    err: r.err.clone(),
                });
                if !r.meets_precision(cfg.p) {
                    return Ok(PassOutcome::PrecFail(recs, n));
                }
                if n < cfg.steps {
                    x = eval_map_interval(map, &x, m);
                }
            }
            Ok(PassOutcome::Success(recs))
        }
    }
}

/// Runs a single pass at an explicit mantissa length, without searching.
/// Returns the recorded orbit and the index of the first uncertified point,
/// if any.
pub fn run_at(
    map: &FeasibleMap,
    cfg: &RunConfig,
    m_bits: u32,
) -> Result<(Vec<StepRecord>, Option<usize>), Error> {
    cfg.validate()?;
    let x0 = start_point(map, &cfg.x0)?;
    match one_pass(map, &x0, cfg, m_bits)? {
        PassOutcome::Success(recs) => Ok((recs, None)),
        PassOutcome::PrecFail(recs, at) => Ok((recs, Some(at))),
        PassOutcome::TooShort(detail) => Err(Error::InvalidParameter(detail)),
    }
}

fn start_point(map: &FeasibleMap, x0: &str) -> Result<BigRational, Error> {
    let x0_r = parse_decimal(x0)?;
    let (dlo, dhi) = map.domain();
    if x0_r < *dlo || x0_r > *dhi {
        return Err(Error::InvalidParameter(format!(
            "starting point {x0} outside the map domain"
        )));
    }
    Ok(x0_r)
}

/// Searches for the smallest mantissa length at which a pass certifies the
/// requested digits at every orbit point.
pub fn find_minimal_mantissa(map: &FeasibleMap, cfg: &RunConfig) -> Result<OrbitRun, Error> {
    cfg.validate()?;
    let x0 = start_point(map, &cfg.x0)?;
    let mut failures: Vec<PassFailure> = Vec::new();
    let mut pass_count = 0u32;
    let mut last_steps: Vec<StepRecord> = Vec::new();

    let attempt = |m: u32,
                   pass_count: &mut u32,
                   failures: &mut Vec<PassFailure>,
                   last_steps: &mut Vec<StepRecord>|
     -> Result<Option<Vec<StepRecord>>, Error> {
        *pass_count += 1;
        match one_pass(map, &x0, cfg, m)? {
            PassOutcome::Success(recs) => Ok(Some(recs)),
            PassOutcome::PrecFail(recs, at) => {
                failures.push(PassFailure {
                    m,
                    failed_at: Some(at),
                    detail: format!("digit target missed at orbit point {at}"),
                });
                *last_steps = recs;
                Ok(None)
            }
            PassOutcome::TooShort(detail) => {
                failures.push(PassFailure {
                    m,
                    failed_at: None,
                    detail,
                });
                Ok(None)
            }
        }
    };

    let converged = |m_min: u32, steps, pass_count, failures| OrbitRun {
        m_min: Some(m_min),
        status: RunStatus::Converged,
        steps,
        pass_count,
        failures,
    };

    match cfg.strategy {
        SearchStrategy::IncrementByOne => {
            for m in cfg.m0..=cfg.m_max {
                if let Some(recs) = attempt(m, &mut pass_count, &mut failures, &mut last_steps)? {
                    return Ok(converged(m, recs, pass_count, failures));
                }
            }
            Ok(OrbitRun {
                m_min: None,
                status: RunStatus::PrecisionCapExceeded,
                steps: last_steps,
                pass_count,
                failures,
            })
        }
        SearchStrategy::DoubleThenBisect => {
            let mut m = cfg.m0;
            let mut lo_fail: Option<u32> = None;
            let (mut hi, mut best) = loop {
                match attempt(m, &mut pass_count, &mut failures, &mut last_steps)? {
                    Some(recs) => break (m, recs),
                    None => lo_fail = Some(m),
                }
                if m >= cfg.m_max {
                    return Ok(OrbitRun {
                        m_min: None,
                        status: RunStatus::PrecisionCapExceeded,
                        steps: last_steps,
                        pass_count,
                        failures,
                    });
                }
                m = m.saturating_mul(2).min(cfg.m_max);
            };
            if let Some(mut lo) = lo_fail {
                // Success at hi, failure at lo: shrink (lo, hi] to one point.
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    match attempt(mid, &mut pass_count, &mut failures, &mut last_steps)? {
                        Some(recs) => {
                            hi = mid;
                            best = recs;
                        }
                        None => lo = mid,
                    }
                }
            }
            Ok(converged(hi, best, pass_count, failures))
        }
    }
}

/// Writes the orbit as JSON lines — one object per orbit point, then one
/// summary object — with both hex (exact) and decimal renderings of each
/// value. The output is deterministic byte for byte.
pub fn write_jsonl(
    map: &FeasibleMap,
    cfg: &RunConfig,
    run: &OrbitRun,
    out: &mut impl Write,
) -> io::Result<()> {
    for s in &run.steps {
        writeln!(
            out,
            "{{\"n\":{},\"fl_hex\":\"{}\",\"err_hex\":\"{}\",\"fl_dec\":\"{}\",\"err_dec\":\"{}\"}}",
            s.n,
            s.fl.to_hex(),
            s.err.to_hex(),
            s.fl.to_decimal(),
            s.err.to_decimal_up(3),
        )?;
    }
    let m_min = match run.m_min {
        Some(m) => m.to_string(),
        None => "null".to_string(),
    };
    writeln!(
        out,
        "{{\"summary\":true,\"map\":\"{}\",\"mode\":\"{}\",\"p\":{},\"steps\":{},\"m_min\":{},\"status\":\"{}\",\"pass_count\":{}}}",
        map.name(),
        cfg.mode.name(),
        cfg.p,
        cfg.steps,
        m_min,
        run.status.name(),
        run.pass_count,
    )
}
