//! Command-line front end for verified orbit computation.
//!
//! Subcommands: `run` (one pass at a fixed mantissa length), `search`
//! (minimal-mantissa search), `lyapunov` (exponent estimates over a
//! truncation-floor grid), `sweep` (parameter sweep with per-row search and
//! exponent comparison) and `verify` (exact-rational containment check of the
//! certified error bounds).
//!
//! Output is a pure function of the argument vector plus the optional config
//! file; repeated invocations produce byte-identical output, including the
//! parallel sweep. Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid
//! arguments, 3 mantissa cap exceeded before certification, 4 a certified
//! bound failed the exact-rational check. Errors go to stderr.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::Signed;

use vorbit::analysis::{self, SweepGrid, SweepRow};
use vorbit::ball::{FpRepr, StepBoundParams};
use vorbit::engine::{self, Mode, OrbitRun, PassFailure, RunConfig, RunStatus, SearchStrategy};
use vorbit::mp::{parse_decimal, MpFloat, Precision, RoundingMode, WORKING_PRECISION};
use vorbit::oracle;
use vorbit::systems::{FeasibleMap, LogisticVariant};
use vorbit::Error;

fn main() {
    // Unknown flags, unknown subcommands and malformed values exit here with
    // the usage code 2 (clap's default), matching our own usage failures.
    let cli = Cli::parse();
    let code = match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Lyapunov(a) => cmd_lyapunov(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Verify(a) => cmd_verify(a),
    }
}

/// A diagnostic message plus the process exit code it maps to.
struct Failure {
    code: i32,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure {
        code: 1,
        msg: format!("output failed: {e}"),
    }
}

/// Maps engine errors to exit codes: bad user-supplied values are usage
/// errors (2), an exhausted mantissa cap is 3, runtime failures are 1.
fn engine_failure(e: Error) -> Failure {
    let code = match e {
        Error::ParseDecimal(_)
        | Error::InvalidPrecision(_)
        | Error::InvalidParameter(_)
        | Error::InvalidShift(_)
        | Error::PrecisionTooSmall { .. }
        | Error::OracleTooLarge { .. } => 2,
        Error::NotConverged => 3,
        Error::DivisionByZero | Error::DomainEscape { .. } => 1,
    };
    Failure {
        code,
        msg: e.to_string(),
    }
}

#[derive(Parser)]
#[command(
    name = "vorbit",
    version,
    about = "Orbits of one-dimensional maps with certified per-point error bounds"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one orbit pass at a fixed mantissa length
    Run(RunArgs),
    /// Search for the smallest mantissa length certifying every orbit point
    Search(SearchArgs),
    /// Estimate the Ljapunov exponent over a truncation-floor grid
    Lyapunov(LyapunovArgs),
    /// Sweep the map parameter: one search plus exponent comparison per value
    Sweep(SweepArgs),
    /// Check certified error bounds against exact rational orbits
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantOpt {
    /// mu * x * (1 - x)
    Factored,
    /// mu * (x - x^2)
    Expanded,
    /// mu/4 - mu * (x - 1/2)^2
    Centered,
}

impl From<VariantOpt> for LogisticVariant {
    fn from(v: VariantOpt) -> Self {
        match v {
            VariantOpt::Factored => LogisticVariant::Factored,
            VariantOpt::Expanded => LogisticVariant::Expanded,
            VariantOpt::Centered => LogisticVariant::Centered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeOpt {
    /// Certified mean-value error propagation
    #[value(alias = "mean-value")]
    #[value(alias = "mv")]
    Meanvalue,
    /// Plain outward-rounded interval iteration, midpoint tracked
    #[value(alias = "naive-interval")]
    #[value(alias = "ni")]
    Naive,
}

impl From<ModeOpt> for Mode {
    fn from(v: ModeOpt) -> Self {
        match v {
            ModeOpt::Meanvalue => Mode::MeanValue,
            ModeOpt::Naive => Mode::NaiveInterval,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyOpt {
    /// Try m0, m0+1, m0+2, ... until a pass certifies
    Increment,
    /// Double from m0 until a pass certifies, then bisect down
    DoubleBisect,
}

impl From<StrategyOpt> for SearchStrategy {
    fn from(v: StrategyOpt) -> Self {
        match v {
            StrategyOpt::Increment => SearchStrategy::IncrementByOne,
            StrategyOpt::DoubleBisect => SearchStrategy::DoubleThenBisect,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatOpt {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct RunArgs {
    /// Map family (only "logistic")
    #[arg(long)]
    map: Option<String>,
    /// Evaluation form of the logistic map [default: factored]
    #[arg(long, value_enum)]
    variant: Option<VariantOpt>,
    /// Map parameter, a decimal literal in (0, 4]
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Starting point, a decimal literal inside the map domain
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Number of map applications
    #[arg(long = "N")]
    n: Option<usize>,
    /// Requested relative accuracy 10^-p at every orbit point
    #[arg(long, allow_hyphen_values = true)]
    p: Option<i32>,
    /// Error-tracking mode [default: meanvalue]
    #[arg(long, value_enum)]
    mode: Option<ModeOpt>,
    /// Mantissa length in bits for this single pass
    #[arg(long)]
    m: Option<u32>,
    /// Conjugate the map by an additive domain shift
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<String>,
    /// Treat a dyadic mu as exact (not counted as a rounding source)
    #[arg(long)]
    exact_mu: bool,
    /// Do not clamp iterates that overshoot the domain within their radius
    #[arg(long)]
    no_domain_clamp: bool,
    /// Write primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: jsonl]
    #[arg(long, value_enum)]
    format: Option<FormatOpt>,
    /// Read flag defaults from a key=value file (one flag per line, argv wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    /// Map family (only "logistic")
    #[arg(long)]
    map: Option<String>,
    /// Evaluation form of the logistic map [default: factored]
    #[arg(long, value_enum)]
    variant: Option<VariantOpt>,
    /// Map parameter, a decimal literal in (0, 4]
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Starting point, a decimal literal inside the map domain
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Number of map applications
    #[arg(long = "N")]
    n: Option<usize>,
    /// Requested relative accuracy 10^-p at every orbit point
    #[arg(long, allow_hyphen_values = true)]
    p: Option<i32>,
    /// Error-tracking mode [default: meanvalue]
    #[arg(long, value_enum)]
    mode: Option<ModeOpt>,
    /// Mantissa length the search starts from [default: 24]
    #[arg(long)]
    m0: Option<u32>,
    /// Mantissa length the search gives up at [default: 65536]
    #[arg(long)]
    m_max: Option<u32>,
    /// Search strategy [default: double-bisect]
    #[arg(long, value_enum)]
    strategy: Option<StrategyOpt>,
    /// Conjugate the map by an additive domain shift
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<String>,
    /// Treat a dyadic mu as exact (not counted as a rounding source)
    #[arg(long)]
    exact_mu: bool,
    /// Do not clamp iterates that overshoot the domain within their radius
    #[arg(long)]
    no_domain_clamp: bool,
    /// Write primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: jsonl]
    #[arg(long, value_enum)]
    format: Option<FormatOpt>,
    /// Read flag defaults from a key=value file (one flag per line, argv wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LyapunovArgs {
    /// Map family (only "logistic")
    #[arg(long)]
    map: Option<String>,
    /// Evaluation form of the logistic map [default: factored]
    #[arg(long, value_enum)]
    variant: Option<VariantOpt>,
    /// Map parameter, a decimal literal in (0, 4]
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Starting point, a decimal literal inside the map domain
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Number of orbit points averaged
    #[arg(long = "N")]
    n: Option<usize>,
    /// Relative accuracy 10^-p required of the orbit points [default: 10]
    #[arg(long, allow_hyphen_values = true)]
    p: Option<i32>,
    /// Truncation floor for derivative magnitudes, a decimal literal;
    /// without it a three-point floor grid 2^-10, 2^-20, 2^-30 is reported
    #[arg(long)]
    alpha: Option<String>,
    /// Conjugate the map by an additive domain shift
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<String>,
    /// Treat a dyadic mu as exact (not counted as a rounding source)
    #[arg(long)]
    exact_mu: bool,
    /// Write primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: jsonl]
    #[arg(long, value_enum)]
    format: Option<FormatOpt>,
    /// Read flag defaults from a key=value file (one flag per line, argv wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// First parameter value, a decimal literal
    #[arg(long)]
    mu_from: Option<String>,
    /// Last parameter value (inclusive), a decimal literal
    #[arg(long)]
    mu_to: Option<String>,
    /// Grid step, a positive decimal literal; values step exactly in
    /// rational arithmetic, so no grid point drifts
    #[arg(long)]
    mu_step: Option<String>,
    /// Evaluation form of the logistic map [default: factored]
    #[arg(long, value_enum)]
    variant: Option<VariantOpt>,
    /// Starting point, a decimal literal inside the map domain
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Number of map applications per grid point
    #[arg(long = "N")]
    n: Option<usize>,
    /// Requested relative accuracy 10^-p at every orbit point
    #[arg(long, allow_hyphen_values = true)]
    p: Option<i32>,
    /// Error-tracking mode [default: meanvalue]
    #[arg(long, value_enum)]
    mode: Option<ModeOpt>,
    /// Mantissa length each search starts from [default: 24]
    #[arg(long)]
    m0: Option<u32>,
    /// Mantissa length each search gives up at [default: 65536]
    #[arg(long)]
    m_max: Option<u32>,
    /// Truncation floor for derivative magnitudes [default: 2^-30]
    #[arg(long)]
    alpha: Option<String>,
    /// Maximum number of grid points processed in parallel
    /// [default: one per CPU]
    #[arg(long)]
    jobs: Option<usize>,
    /// Write primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    format: Option<FormatOpt>,
    /// Read flag defaults from a key=value file (one flag per line, argv wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Single parameter value to check; without it a five-value grid
    /// spanning contraction to full chaos is used
    #[arg(long)]
    mu: Option<String>,
    /// Evaluation form of the logistic map [default: factored]
    #[arg(long, value_enum)]
    variant: Option<VariantOpt>,
    /// Starting point, a decimal literal in the unit interval [default: 0.22]
    #[arg(long)]
    x0: Option<String>,
    /// Orbit length per check; exact denominators roughly double each step,
    /// so lengths much beyond 20 hit the size guard [default: 20]
    #[arg(long = "N")]
    n: Option<usize>,
    /// Single mantissa length to check; without it 24, 53 and 100 bits
    #[arg(long)]
    m: Option<u32>,
    /// Write primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read flag defaults from a key=value file (one flag per line, argv wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Config files: plain key=value text, one flag per line, # comments. A file
// can set any flag of its subcommand; values given on the command line win.

type Cfg = HashMap<String, String>;

fn read_config(path: &Path) -> Result<Overlay, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut cfg = Cfg::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(usage(format!(
                "config line {}: expected key=value, got {line:?}",
                i + 1
            )));
        };
        let key = k.trim().to_string();
        if key == "config" {
            return Err(usage("config files cannot chain another config file"));
        }
        // Later lines override earlier ones, like repeated flags would.
        cfg.insert(key, v.trim().to_string());
    }
    Ok(Overlay { cfg })
}

/// Tracks which config keys the subcommand consumed so leftovers can be
/// rejected as unknown, mirroring clap's treatment of unknown flags.
struct Overlay {
    cfg: Cfg,
}

impl Overlay {
    fn take(&mut self, key: &str) -> Option<String> {
        self.cfg.remove(key)
    }

    fn finish(self) -> Result<(), Failure> {
        let mut leftover: Vec<&String> = self.cfg.keys().collect();
        leftover.sort();
        match leftover.first() {
            Some(k) => Err(usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn fill_str(slot: &mut Option<String>, o: &mut Overlay, key: &str) {
    let v = o.take(key);
    if slot.is_none() {
        *slot = v;
    }
}

fn fill_parse<T: FromStr>(slot: &mut Option<T>, o: &mut Overlay, key: &str) -> Result<(), Failure>
where
    T::Err: Display,
{
    if let Some(v) = o.take(key) {
        if slot.is_none() {
            let parsed = v
                .parse::<T>()
                .map_err(|e| usage(format!("config key {key}={v:?}: {e}")))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

fn fill_enum<T: ValueEnum>(
    slot: &mut Option<T>,
    o: &mut Overlay,
    key: &str,
) -> Result<(), Failure> {
    if let Some(v) = o.take(key) {
        if slot.is_none() {
            let parsed =
                T::from_str(&v, true).map_err(|e| usage(format!("config key {key}={v:?}: {e}")))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

fn fill_flag(slot: &mut bool, o: &mut Overlay, key: &str) -> Result<(), Failure> {
    if let Some(v) = o.take(key) {
        let parsed = match v.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => true,
            "false" | "0" | "no" | "off" => false,
            _ => return Err(usage(format!("config key {key}={v:?}: expected a boolean"))),
        };
        if !*slot {
            *slot = parsed;
        }
    }
    Ok(())
}

impl RunArgs {
    fn apply_config(&mut self) -> Result<(), Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let mut o = read_config(&path)?;
        fill_str(&mut self.map, &mut o, "map");
        fill_enum(&mut self.variant, &mut o, "variant")?;
        fill_str(&mut self.mu, &mut o, "mu");
        fill_str(&mut self.x0, &mut o, "x0");
        fill_parse(&mut self.n, &mut o, "N")?;
        fill_parse(&mut self.p, &mut o, "p")?;
        fill_enum(&mut self.mode, &mut o, "mode")?;
        fill_parse(&mut self.m, &mut o, "m")?;
        fill_str(&mut self.shift, &mut o, "shift");
        fill_flag(&mut self.exact_mu, &mut o, "exact-mu")?;
        fill_flag(&mut self.no_domain_clamp, &mut o, "no-domain-clamp")?;
        fill_parse(&mut self.out, &mut o, "out")?;
        fill_enum(&mut self.format, &mut o, "format")?;
        o.finish()
    }
}

impl SearchArgs {
    fn apply_config(&mut self) -> Result<(), Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let mut o = read_config(&path)?;
        fill_str(&mut self.map, &mut o, "map");
        fill_enum(&mut self.variant, &mut o, "variant")?;
        fill_str(&mut self.mu, &mut o, "mu");
        fill_str(&mut self.x0, &mut o, "x0");
        fill_parse(&mut self.n, &mut o, "N")?;
        fill_parse(&mut self.p, &mut o, "p")?;
        fill_enum(&mut self.mode, &mut o, "mode")?;
        fill_parse(&mut self.m0, &mut o, "m0")?;
        fill_parse(&mut self.m_max, &mut o, "m-max")?;
        fill_enum(&mut self.strategy, &mut o, "strategy")?;
        fill_str(&mut self.shift, &mut o, "shift");
        fill_flag(&mut self.exact_mu, &mut o, "exact-mu")?;
        fill_flag(&mut self.no_domain_clamp, &mut o, "no-domain-clamp")?;
        fill_parse(&mut self.out, &mut o, "out")?;
        fill_enum(&mut self.format, &mut o, "format")?;
        o.finish()
    }
}

impl LyapunovArgs {
    fn apply_config(&mut self) -> Result<(), Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let mut o = read_config(&path)?;
        fill_str(&mut self.map, &mut o, "map");
        fill_enum(&mut self.variant, &mut o, "variant")?;
        fill_str(&mut self.mu, &mut o, "mu");
        fill_str(&mut self.x0, &mut o, "x0");
        fill_parse(&mut self.n, &mut o, "N")?;
        fill_parse(&mut self.p, &mut o, "p")?;
        fill_str(&mut self.alpha, &mut o, "alpha");
        fill_str(&mut self.shift, &mut o, "shift");
        fill_flag(&mut self.exact_mu, &mut o, "exact-mu")?;
        fill_parse(&mut self.out, &mut o, "out")?;
        fill_enum(&mut self.format, &mut o, "format")?;
        o.finish()
    }
}

impl SweepArgs {
    fn apply_config(&mut self) -> Result<(), Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let mut o = read_config(&path)?;
        fill_str(&mut self.mu_from, &mut o, "mu-from");
        fill_str(&mut self.mu_to, &mut o, "mu-to");
        fill_str(&mut self.mu_step, &mut o, "mu-step");
        fill_enum(&mut self.variant, &mut o, "variant")?;
        fill_str(&mut self.x0, &mut o, "x0");
        fill_parse(&mut self.n, &mut o, "N")?;
        fill_parse(&mut self.p, &mut o, "p")?;
        fill_enum(&mut self.mode, &mut o, "mode")?;
        fill_parse(&mut self.m0, &mut o, "m0")?;
        fill_parse(&mut self.m_max, &mut o, "m-max")?;
        fill_str(&mut self.alpha, &mut o, "alpha");
        fill_parse(&mut self.jobs, &mut o, "jobs")?;
        fill_parse(&mut self.out, &mut o, "out")?;
        fill_enum(&mut self.format, &mut o, "format")?;
        o.finish()
    }
}

impl VerifyArgs {
    fn apply_config(&mut self) -> Result<(), Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let mut o = read_config(&path)?;
        fill_str(&mut self.mu, &mut o, "mu");
        fill_enum(&mut self.variant, &mut o, "variant")?;
        fill_str(&mut self.x0, &mut o, "x0");
        fill_parse(&mut self.n, &mut o, "N")?;
        fill_parse(&mut self.m, &mut o, "m")?;
        fill_parse(&mut self.out, &mut o, "out")?;
        o.finish()
    }
}

// ---------------------------------------------------------------------------
// Shared pieces.

fn require<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

fn build_map(
    map: &Option<String>,
    variant: Option<VariantOpt>,
    mu: &Option<String>,
    shift: &Option<String>,
    exact_mu: bool,
) -> Result<FeasibleMap, Failure> {
    let name = map.as_deref().unwrap_or("logistic");
    if name != "logistic" {
        return Err(usage(format!("unknown map {name:?} (supported: logistic)")));
    }
    let mu = require(mu.as_deref(), "mu")?;
    let variant = variant.unwrap_or(VariantOpt::Factored).into();
    let built = FeasibleMap::logistic(variant, mu, exact_mu).map_err(engine_failure)?;
    match shift {
        Some(s) => built.shifted(s).map_err(engine_failure),
        None => Ok(built),
    }
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Failure {
                code: 1,
                msg: format!("cannot create {}: {e}", path.display()),
            })?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

/// Floats in JSON lines: finite values as plain 17-digit numbers, infinities
/// and NaN as quoted strings (bare they would not be valid JSON).
fn json_float(v: f64) -> String {
    if v.is_finite() {
        analysis::format_float(v)
    } else {
        format!("\"{}\"", analysis::format_float(v))
    }
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

const ORBIT_CSV_HEADER: &str = "n,fl_hex,err_hex,fl_dec,err_dec";

/// Prints an orbit run: JSON lines include a trailing summary object, CSV is
/// the bare orbit table in the header's schema.
fn write_orbit(
    map: &FeasibleMap,
    cfg: &RunConfig,
    run: &OrbitRun,
    format: FormatOpt,
    mut out: &mut dyn Write,
) -> Result<(), Failure> {
    match format {
        FormatOpt::Jsonl => engine::write_jsonl(map, cfg, run, &mut out).map_err(io_failure),
        FormatOpt::Csv => {
            writeln!(out, "{ORBIT_CSV_HEADER}").map_err(io_failure)?;
            for s in &run.steps {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.n,
                    s.fl.to_hex(),
                    s.err.to_hex(),
                    s.fl.to_decimal(),
                    s.err.to_decimal_up(3)
                )
                .map_err(io_failure)?;
            }
            Ok(())
        }
    }
}

fn parse_alpha(s: &str) -> Result<MpFloat, Failure> {
    let r = parse_decimal(s).map_err(engine_failure)?;
    if r.is_negative() {
        return Err(usage(format!("--alpha must be nonnegative, got {s}")));
    }
    Ok(MpFloat::from_rational(
        &r,
        WORKING_PRECISION,
        RoundingMode::NearestEven,
    ))
}

/// Exact check |a - b| <= c by cross-multiplication; never normalizes, so it
/// stays linear in the operand sizes even for multi-megabit denominators.
fn abs_diff_within(a: &BigRational, b: &BigRational, c: &BigRational) -> bool {
    let lhs = (a.numer() * b.denom() - b.numer() * a.denom()).abs() * c.denom();
    let rhs = c.numer() * (a.denom() * b.denom());
    lhs <= rhs
}

// ---------------------------------------------------------------------------
// Subcommands.

fn cmd_run(mut a: RunArgs) -> Result<(), Failure> {
    a.apply_config()?;
    let map = build_map(&a.map, a.variant, &a.mu, &a.shift, a.exact_mu)?;
    let x0 = require(a.x0.as_deref(), "x0")?;
    let steps = require(a.n, "N")?;
    let p = require(a.p, "p")?;
    let m = require(a.m, "m")?;
    let mut cfg = RunConfig::new(x0, steps, p);
    cfg.mode = a.mode.unwrap_or(ModeOpt::Meanvalue).into();
    cfg.domain_clamp = !a.no_domain_clamp;
    let (records, failed_at) = engine::run_at(&map, &cfg, m).map_err(engine_failure)?;
    let run = OrbitRun {
        m_min: failed_at.is_none().then_some(m),
        status: if failed_at.is_none() {
            RunStatus::Converged
        } else {
            RunStatus::PrecisionCapExceeded
        },
        steps: records,
        pass_count: 1,
        failures: failed_at
            .map(|at| {
                vec![PassFailure {
                    m,
                    failed_at: Some(at),
                    detail: format!("digit target missed at orbit point {at}"),
                }]
            })
            .unwrap_or_default(),
    };
    let mut out = open_out(&a.out)?;
    write_orbit(
        &map,
        &cfg,
        &run,
        a.format.unwrap_or(FormatOpt::Jsonl),
        out.as_mut(),
    )?;
    out.flush().map_err(io_failure)?;
    match failed_at {
        Some(at) => Err(Failure {
            code: 3,
            msg: format!("{m} mantissa bits cannot certify {p} digits at orbit point {at}"),
        }),
        None => Ok(()),
    }
}

fn cmd_search(mut a: SearchArgs) -> Result<(), Failure> {
    a.apply_config()?;
    let map = build_map(&a.map, a.variant, &a.mu, &a.shift, a.exact_mu)?;
    let x0 = require(a.x0.as_deref(), "x0")?;
    let steps = require(a.n, "N")?;
    let p = require(a.p, "p")?;
    let mut cfg = RunConfig::new(x0, steps, p);
    cfg.mode = a.mode.unwrap_or(ModeOpt::Meanvalue).into();
    cfg.strategy = a.strategy.unwrap_or(StrategyOpt::DoubleBisect).into();
    if let Some(m0) = a.m0 {
        cfg.m0 = m0;
    }
    if let Some(m_max) = a.m_max {
        cfg.m_max = m_max;
    }
    cfg.domain_clamp = !a.no_domain_clamp;
    let run = engine::find_minimal_mantissa(&map, &cfg).map_err(engine_failure)?;
    let mut out = open_out(&a.out)?;
    write_orbit(
        &map,
        &cfg,
        &run,
        a.format.unwrap_or(FormatOpt::Jsonl),
        out.as_mut(),
    )?;
    out.flush().map_err(io_failure)?;
    if run.status == RunStatus::PrecisionCapExceeded {
        return Err(Failure {
            code: 3,
            msg: format!(
                "no mantissa length up to {} certifies {} digits over {} steps",
                cfg.m_max, cfg.p, cfg.steps
            ),
        });
    }
    Ok(())
}

const LYAPUNOV_CSV_HEADER: &str = "alpha,N,lambda,lambda_over_ln2,neg_infinite";

fn cmd_lyapunov(mut a: LyapunovArgs) -> Result<(), Failure> {
    a.apply_config()?;
    let map = build_map(&a.map, a.variant, &a.mu, &a.shift, a.exact_mu)?;
    let x0 = require(a.x0.as_deref(), "x0")?;
    let n = require(a.n, "N")?;
    let orbit_p = a.p.unwrap_or(analysis::DEFAULT_ORBIT_P);
    let alphas: Vec<MpFloat> = match &a.alpha {
        Some(s) => vec![parse_alpha(s)?],
        None => [-10i64, -20, -30]
            .iter()
            .map(|&k| MpFloat::power_of_two(k, WORKING_PRECISION))
            .collect(),
    };
    let format = a.format.unwrap_or(FormatOpt::Jsonl);
    let mut out = open_out(&a.out)?;
    if format == FormatOpt::Csv {
        writeln!(out, "{LYAPUNOV_CSV_HEADER}").map_err(io_failure)?;
    }
    for alpha in &alphas {
        let est =
            analysis::lyapunov_partial(&map, x0, n, alpha, orbit_p).map_err(engine_failure)?;
        let alpha_v = json_float(analysis::to_f64(&est.alpha));
        let lambda = json_float(est.lambda_f64());
        let ratio = json_float(est.lambda_over_ln2());
        match format {
            FormatOpt::Jsonl => writeln!(
                out,
                "{{\"alpha\":{alpha_v},\"N\":{},\"lambda\":{lambda},\"lambda_over_ln2\":{ratio},\"neg_infinite\":{}}}",
                est.n, est.neg_infinite
            ),
            FormatOpt::Csv => writeln!(
                out,
                "{},{},{},{},{}",
                analysis::format_float(analysis::to_f64(&est.alpha)),
                est.n,
                analysis::format_float(est.lambda_f64()),
                analysis::format_float(est.lambda_over_ln2()),
                est.neg_infinite
            ),
        }
        .map_err(io_failure)?;
    }
    out.flush().map_err(io_failure)
}

fn row_json(r: &SweepRow) -> String {
    let m_min = r
        .m_min
        .map(|m| m.to_string())
        .unwrap_or_else(|| "null".to_string());
    let opt = |v: Option<f64>| v.map(json_float).unwrap_or_else(|| "null".to_string());
    format!(
        "{{\"mu\":\"{}\",\"x0\":\"{}\",\"N\":{},\"p\":{},\"mode\":\"{}\",\"m_min\":{},\"sigma_est\":{},\"lambda_est\":{},\"lambda_over_ln2\":{},\"alpha\":{},\"status\":\"{}\"}}",
        r.mu,
        r.x0,
        r.n,
        r.p,
        r.mode.name(),
        m_min,
        opt(r.sigma_est),
        opt(r.lambda_est),
        opt(r.lambda_over_ln2),
        json_float(r.alpha),
        json_escape(&r.status)
    )
}

fn cmd_sweep(mut a: SweepArgs) -> Result<(), Failure> {
    a.apply_config()?;
    let mu_from = require(a.mu_from.as_deref(), "mu-from")?;
    let mu_to = require(a.mu_to.as_deref(), "mu-to")?;
    let mu_step = require(a.mu_step.as_deref(), "mu-step")?;
    let x0 = require(a.x0.as_deref(), "x0")?;
    let steps = require(a.n, "N")?;
    let p = require(a.p, "p")?;
    if steps == 0 {
        return Err(usage("--N must be at least 1"));
    }
    if let Some(0) = a.jobs {
        return Err(usage("--jobs must be at least 1"));
    }
    let mut grid = SweepGrid::new(mu_from, mu_to, mu_step, x0, steps, p);
    if let Some(mode) = a.mode {
        grid.mode = mode.into();
    }
    if let Some(variant) = a.variant {
        grid.variant = variant.into();
    }
    if let Some(m0) = a.m0 {
        grid.m0 = m0;
    }
    if let Some(m_max) = a.m_max {
        grid.m_max = m_max;
    }
    if let Some(alpha) = &a.alpha {
        grid.alpha = parse_alpha(alpha)?;
    }
    let points = analysis::grid_points(&grid).map_err(engine_failure)?;
    let format = a.format.unwrap_or(FormatOpt::Csv);
    let mut out = open_out(&a.out)?;
    if format == FormatOpt::Csv {
        writeln!(out, "{}", analysis::CSV_HEADER).map_err(io_failure)?;
    }

    // Grid points are computed in parallel but rows stream out strictly in
    // grid order: a reorder buffer holds finished rows until all their
    // predecessors have been flushed. Output bytes are independent of the
    // thread count.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure {
            code: 1,
            msg: format!("cannot build worker pool: {e}"),
        })?;
    let grid_ref = &grid;
    let mut write_err: Option<io::Error> = None;
    pool.in_place_scope(|scope| {
        let (tx, rx) = std::sync::mpsc::channel::<(usize, SweepRow)>();
        for (i, (mu, label)) in points.iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move |_| {
                let row = analysis::sweep_point(grid_ref, mu, label);
                let _ = tx.send((i, row));
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, SweepRow> = BTreeMap::new();
        let mut next = 0usize;
        for (i, row) in rx {
            pending.insert(i, row);
            while let Some(row) = pending.remove(&next) {
                if write_err.is_none() {
                    let res = match format {
                        FormatOpt::Csv => writeln!(out, "{}", analysis::csv_line(&row)),
                        FormatOpt::Jsonl => writeln!(out, "{}", row_json(&row)),
                    }
                    .and_then(|_| out.flush());
                    if let Err(e) = res {
                        write_err = Some(e);
                    }
                }
                next += 1;
            }
        }
    });
    match write_err {
        Some(e) => Err(io_failure(e)),
        None => Ok(()),
    }
}

fn cmd_verify(mut a: VerifyArgs) -> Result<(), Failure> {
    a.apply_config()?;
    let n = a.n.unwrap_or(20);
    let x0_text = a.x0.as_deref().unwrap_or("0.22");
    let x0 = parse_decimal(x0_text).map_err(engine_failure)?;
    let variant: LogisticVariant = a.variant.unwrap_or(VariantOpt::Factored).into();
    let mus: Vec<String> = match a.mu {
        Some(m) => vec![m],
        None => ["1", "2.5", "3.5", "3.75", "4"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let lengths: Vec<u32> = match a.m {
        Some(m) => vec![m],
        None => vec![24, 53, 100],
    };
    let mut out = open_out(&a.out)?;
    let mut checks = 0usize;
    for mu in &mus {
        let map = FeasibleMap::logistic(variant, mu, false).map_err(engine_failure)?;
        let mu_r = parse_decimal(mu).map_err(engine_failure)?;
        let exact = oracle::rational_orbit(&mu_r, &x0, n, oracle::DEFAULT_ORACLE_GUARD_BITS)
            .map_err(engine_failure)?;
        for &bits in &lengths {
            let m = Precision::new(bits).map_err(engine_failure)?;
            let params = StepBoundParams::new(map.k(), m, true).map_err(engine_failure)?;
            let mut r = FpRepr::initial(&x0, &params);
            for (k, truth) in exact.iter().enumerate() {
                if !abs_diff_within(&r.fl.to_rational(), truth, &r.err.to_rational()) {
                    return Err(Failure {
                        code: 4,
                        msg: format!(
                            "certified bound violated at mu={mu}, m={bits}, orbit point {k}: \
                             |tracked - exact| exceeds the error radius"
                        ),
                    });
                }
                checks += 1;
                if k < n {
                    r = r.apply_map(&map, &params, k + 1).map_err(engine_failure)?;
                }
            }
            writeln!(
                out,
                "mu={mu} m={bits}: {} points within their certified radius",
                n + 1
            )
            .map_err(io_failure)?;
        }
    }
    writeln!(
        out,
        "verify: {checks} containment checks passed ({} parameters x {} mantissa lengths x {} points)",
        mus.len(),
        lengths.len(),
        n + 1
    )
    .map_err(io_failure)?;
    out.flush().map_err(io_failure)
}
