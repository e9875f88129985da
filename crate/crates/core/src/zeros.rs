//! Zero counting for signal paths and the Kac–Rice expectation.
//!
//! Three counters share one [`ZeroReport`] format:
//!
//! * [`count_zeros_pwl`] is exact for piecewise-linear shapes. Between two
//!   consecutive points of the [`BreakpointGrid`] every term of `X_n` stays in
//!   one affine cell of `f`, so `X_n` is affine there and its zeros are read
//!   off the node values.
//! * [`count_zeros_bracketed`] samples a path on a uniform grid tied to its
//!   highest frequency and bisects each sign change.
//! * [`grid_oracle`] is a brute-force sign-change scan on a fine grid, used
//!   as an independent check.
//!
//! Endpoint zeros are counted once. A sample or node whose magnitude is below
//! a small threshold counts as a zero, and two adjacent zero nodes mark the
//! path as degenerate.

use std::f64::consts::{PI, TAU};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::periodic_fn::{reduce_angle, PeriodicFunction, PiecewiseLinearPeriodic};
use crate::signals::SignalInstance;
use crate::sum::CompensatedSum;

/// Number of sweep steps between direct re-evaluations of `X_n`.
const RESYNC_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroError {
    #[error("the exact counter needs a piecewise-linear shape")]
    NotPiecewiseLinear,
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("path evaluated to a non-finite value at t = {0}")]
    NonFinite(f64),
    #[error("degenerate shape: <f, f> = {0}")]
    DegenerateFunction(f64),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ZeroError {
    ZeroError::Invalid {
        field,
        message: message.into(),
    }
}

/// Closed interval `[a, b]`, possibly of length zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    a: f64,
    b: f64,
}

impl Window {
    pub fn new(a: f64, b: f64) -> Result<Self, ZeroError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(invalid("window", "endpoints must be finite"));
        }
        if b < a {
            return Err(invalid("window", format!("need a <= b, got [{a}, {b}]")));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_empty(&self) -> bool {
        self.b == self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.a && t <= self.b
    }
}

impl FromStr for Window {
    type Err = ZeroError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| invalid("window", format!("expected `a,b`, got `{s}`")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| invalid("window", format!("cannot parse `{}`", x.trim())))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroMethod {
    PwlExact,
    Bracketed,
    GridOracle,
}

impl ZeroMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroMethod::PwlExact => "pwl-exact",
            ZeroMethod::Bracketed => "bracketed",
            ZeroMethod::GridOracle => "grid-oracle",
        }
    }
}

/// Zeros found on a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroReport {
    pub count: usize,
    pub locations: Vec<f64>,
    pub degenerate: bool,
    pub method: ZeroMethod,
    /// Cells on which the path vanishes identically.
    #[serde(skip)]
    pub plateaus: Vec<(f64, f64)>,
}

impl ZeroReport {
    fn from_locations(locations: Vec<f64>, plateaus: Vec<(f64, f64)>, degenerate: bool, method: ZeroMethod) -> Self {
        Self {
            count: locations.len(),
            locations,
            degenerate,
            method,
            plateaus,
        }
    }

    /// Writes the report as one JSON object, floats with 17 significant digits.
    pub fn write_json(&self, out: &mut String) {
        let _ = write!(out, "{{\"count\":{},\"locations\":[", self.count);
        for (i, x) in self.locations.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_f64(out, *x);
        }
        let _ = write!(
            out,
            "],\"degenerate\":{},\"method\":\"{}\"}}",
            self.degenerate,
            self.method.as_str()
        );
    }

    pub fn to_json_line(&self) -> String {
        let mut s = String::new();
        self.write_json(&mut s);
        s
    }
}

/// Appends `x` in scientific notation with 17 significant digits.
pub fn write_f64(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

/// Points of `[a, b]` where `X_n'` may jump, together with `a` and `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakpointGrid {
    points: Vec<f64>,
}

impl BreakpointGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Term `k` (zero based) enters cell `cell` at time `t`.
#[derive(Clone, Copy, Debug)]
struct Event {
    t: f64,
    term: u32,
    cell: u32,
}

fn merge_tol(p_n: f64, t: f64) -> f64 {
    1e-12 * (1.0 + p_n.abs() + t.abs())
}

fn pwl_of(inst: &SignalInstance) -> Result<&PiecewiseLinearPeriodic, ZeroError> {
    inst.function().as_piecewise_linear().ok_or(ZeroError::NotPiecewiseLinear)
}

fn collect_events(inst: &SignalInstance, pwl: &PiecewiseLinearPeriodic, window: Window) -> Vec<Event> {
    let n = inst.n();
    let nf = n as f64;
    let p = inst.p_n();
    let (a, b) = (window.a(), window.b());
    let tol = merge_tol(p, a.abs().max(b.abs()));
    let starts = &pwl.knots()[..pwl.cell_count()];
    let mut events = Vec::new();
    for k in 1..=n {
        let c = k as f64 / nf;
        let u_lo = c * (p + a - tol);
        let u_hi = c * (p + b + tol);
        for (j, &s) in starts.iter().enumerate() {
            let q_lo = ((u_lo - s) / TAU).ceil() as i64;
            let q_hi = ((u_hi - s) / TAU).floor() as i64;
            for q in q_lo..=q_hi {
                let t = (s + TAU * q as f64) * nf / k as f64 - p;
                if t >= a - tol && t <= b + tol {
                    events.push(Event {
                        t: t.clamp(a, b),
                        term: (k - 1) as u32,
                        cell: j as u32,
                    });
                }
            }
        }
    }
    events.sort_by(|x, y| x.t.total_cmp(&y.t));
    events
}

/// Merges event times into strictly increasing nodes from `a` to `b`.
/// Returns the nodes and, for each node, the end of its slice of `events`.
fn build_nodes(events: &[Event], window: Window, p_n: f64) -> (Vec<f64>, Vec<usize>) {
    let (a, b) = (window.a(), window.b());
    let mut nodes = vec![a];
    let mut ends = vec![0usize];
    for (i, e) in events.iter().enumerate() {
        let last = *nodes.last().expect("nonempty");
        if e.t - last > merge_tol(p_n, last) {
            nodes.push(e.t);
            ends.push(i + 1);
        } else {
            *ends.last_mut().expect("nonempty") = i + 1;
        }
    }
    let last = *nodes.last().expect("nonempty");
    if b - last > merge_tol(p_n, last) {
        nodes.push(b);
        ends.push(events.len());
    } else if nodes.len() > 1 {
        *nodes.last_mut().expect("nonempty") = b;
    }
    (nodes, ends)
}

/// Breakpoint grid of a piecewise-linear instance on `window`.
pub fn breakpoints(inst: &SignalInstance, window: Window) -> Result<BreakpointGrid, ZeroError> {
    let pwl = pwl_of(inst)?;
    if window.is_empty() {
        return Ok(BreakpointGrid {
            points: vec![window.a()],
        });
    }
    let events = collect_events(inst, pwl, window);
    let (points, _) = build_nodes(&events, window, inst.p_n());
    Ok(BreakpointGrid { points })
}

fn zero_threshold(inst: &SignalInstance) -> f64 {
    let l1: f64 = inst.coefficients().iter().map(|a| a.abs()).sum();
    1e-12 * l1 * inst.function().sup_bound() / (inst.n() as f64).sqrt()
}

fn slope_at_state(inst: &SignalInstance, pwl: &PiecewiseLinearPeriodic, cells: &[u32]) -> f64 {
    let nf = inst.n() as f64;
    let slopes = pwl.slopes();
    let acc: CompensatedSum = inst
        .coefficients()
        .iter()
        .zip(cells)
        .enumerate()
        .map(|(i, (a, &j))| a * ((i + 1) as f64 / nf) * slopes[j as usize])
        .collect();
    acc.value() / nf.sqrt()
}

/// Exact zero count of a piecewise-linear instance.
pub fn count_zeros_pwl(inst: &SignalInstance, window: Window) -> Result<ZeroReport, ZeroError> {
    let pwl = pwl_of(inst)?;
    let ztol = zero_threshold(inst);
    if window.is_empty() {
        let y = inst.eval(window.a());
        let locations = if y.abs() <= ztol { vec![window.a()] } else { vec![] };
        return Ok(ZeroReport::from_locations(locations, vec![], false, ZeroMethod::PwlExact));
    }

    let events = collect_events(inst, pwl, window);
    let (nodes, ends) = build_nodes(&events, window, inst.p_n());

    let n = inst.n();
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let p = inst.p_n();
    let slopes = pwl.slopes();
    let coeffs = inst.coefficients();
    let mut cells: Vec<u32> = (1..=n)
        .map(|k| pwl.cell_of(reduce_angle(k as f64 / nf * (p + window.a()))) as u32)
        .collect();

    let mut values = Vec::with_capacity(nodes.len());
    values.push(inst.eval(nodes[0]));
    let mut start = 0usize;
    let mut slope = 0.0;
    for i in 0..nodes.len() - 1 {
        let fresh = i % RESYNC_EVERY == 0;
        for e in &events[start..ends[i]] {
            let k = e.term as usize;
            let old = cells[k];
            cells[k] = e.cell;
            if !fresh && old != e.cell {
                let w = coeffs[k] * ((k + 1) as f64 / nf) / sqrt_n;
                slope += w * (slopes[e.cell as usize] - slopes[old as usize]);
            }
        }
        start = ends[i];
        if fresh {
            slope = slope_at_state(inst, pwl, &cells);
        }
        let next = i + 1;
        let y = if next % RESYNC_EVERY == 0 || next == nodes.len() - 1 {
            inst.eval(nodes[next])
        } else {
            values[i] + slope * (nodes[next] - nodes[i])
        };
        values.push(y);
    }

    let mut locations = Vec::new();
    let mut plateaus = Vec::new();
    let mut degenerate = false;
    let is_zero: Vec<bool> = values.iter().map(|y| y.abs() <= ztol).collect();
    for i in 0..nodes.len() {
        if is_zero[i] {
            if i > 0 && is_zero[i - 1] {
                degenerate = true;
                plateaus.push((nodes[i - 1], nodes[i]));
            }
            locations.push(nodes[i]);
            continue;
        }
        if i + 1 < nodes.len() && !is_zero[i + 1] && values[i] * values[i + 1] < 0.0 {
            let (yl, yr) = (values[i], values[i + 1]);
            let root = nodes[i] + (nodes[i + 1] - nodes[i]) * (yl / (yl - yr));
            locations.push(root.clamp(nodes[i], nodes[i + 1]));
        }
    }
    Ok(ZeroReport::from_locations(locations, plateaus, degenerate, ZeroMethod::PwlExact))
}

/// A zero sample, or a sign change between samples `i` and `i + 1`.
enum ScanEvent {
    Sample(usize),
    Change(usize),
}

fn scan(values: &[f64], thresh: f64) -> Vec<ScanEvent> {
    let mut out = Vec::new();
    let zero = |y: f64| y.abs() <= thresh;
    for i in 0..values.len() {
        if zero(values[i]) {
            out.push(ScanEvent::Sample(i));
        } else if i + 1 < values.len() && !zero(values[i + 1]) && values[i] * values[i + 1] < 0.0 {
            out.push(ScanEvent::Change(i));
        }
    }
    out
}

fn sample_path<F: Fn(f64) -> f64>(path: &F, times: &[f64]) -> Result<Vec<f64>, ZeroError> {
    times
        .iter()
        .map(|&t| {
            let y = path(t);
            if y.is_finite() {
                Ok(y)
            } else {
                Err(ZeroError::NonFinite(t))
            }
        })
        .collect()
}

fn uniform_times(window: Window, intervals: usize) -> Vec<f64> {
    let (a, len) = (window.a(), window.len());
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                window.b()
            } else {
                a + len * (i as f64 / intervals as f64)
            }
        })
        .collect()
}

fn near_zero_threshold(values: &[f64]) -> f64 {
    4.0 * f64::EPSILON * values.iter().fold(0.0f64, |m, y| m.max(y.abs()))
}

/// Counts zeros of `path` by uniform sampling at spacing
/// `(2π / max_freq) / oversample` and bisection of every sign change.
pub fn count_zeros_bracketed<F: Fn(f64) -> f64>(
    path: F,
    window: Window,
    max_freq: f64,
    oversample: f64,
    tol: f64,
) -> Result<ZeroReport, ZeroError> {
    if !(max_freq > 0.0 && max_freq.is_finite()) {
        return Err(invalid("max_freq", format!("must be positive, got {max_freq}")));
    }
    if !(oversample >= 4.0 && oversample.is_finite()) {
        return Err(invalid("oversample", format!("must be at least 4, got {oversample}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let spacing = TAU / max_freq / oversample;
    let intervals = if window.is_empty() {
        0
    } else {
        (window.len() / spacing).ceil().max(1.0) as usize
    };
    let times = uniform_times(window, intervals);
    let values = sample_path(&path, &times)?;
    let thresh = near_zero_threshold(&values);

    let mut locations = Vec::new();
    let mut degenerate = false;
    for ev in scan(&values, thresh) {
        match ev {
            ScanEvent::Sample(i) => {
                degenerate = true;
                locations.push(times[i]);
            }
            ScanEvent::Change(i) => {
                locations.push(bisect(&path, times[i], times[i + 1], values[i], tol)?);
            }
        }
    }
    Ok(ZeroReport::from_locations(locations, vec![], degenerate, ZeroMethod::Bracketed))
}

fn bisect<F: Fn(f64) -> f64>(path: &F, mut lo: f64, mut hi: f64, y_lo: f64, tol: f64) -> Result<f64, ZeroError> {
    let sign_lo = y_lo.signum();
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = path(mid);
        if !y.is_finite() {
            return Err(ZeroError::NonFinite(mid));
        }
        if y == 0.0 {
            return Ok(mid);
        }
        if y.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Brute-force count: sign changes on `points` uniform samples, each change
/// located by a ten-fold subdivision of its interval.
pub fn grid_oracle<F: Fn(f64) -> f64>(path: F, window: Window, points: usize) -> Result<ZeroReport, ZeroError> {
    if points < 2 {
        return Err(invalid("points", "need at least two grid points"));
    }
    let intervals = if window.is_empty() { 0 } else { points - 1 };
    let times = uniform_times(window, intervals);
    let values = sample_path(&path, &times)?;
    let thresh = near_zero_threshold(&values);

    let mut locations = Vec::new();
    let mut degenerate = false;
    for ev in scan(&values, thresh) {
        match ev {
            ScanEvent::Sample(i) => {
                degenerate = true;
                locations.push(times[i]);
            }
            ScanEvent::Change(i) => {
                let (t0, t1) = (times[i], times[i + 1]);
                let mut prev = (t0, values[i]);
                let mut root = 0.5 * (t0 + t1);
                for m in 1..=10 {
                    let t = if m == 10 { t1 } else { t0 + (t1 - t0) * (m as f64 / 10.0) };
                    let y = if m == 10 { values[i + 1] } else { path(t) };
                    if y == 0.0 {
                        root = t;
                        break;
                    }
                    if y.signum() != prev.1.signum() {
                        root = prev.0 + (t - prev.0) * (prev.1 / (prev.1 - y));
                        break;
                    }
                    prev = (t, y);
                }
                locations.push(root);
            }
        }
    }
    Ok(ZeroReport::from_locations(locations, vec![], degenerate, ZeroMethod::GridOracle))
}

/// Highest frequency of `t ↦ X_n(t)` for a harmonic shape.
pub fn signal_max_freq(f: &PeriodicFunction) -> Option<f64> {
    match f {
        PeriodicFunction::Harmonic(h) => Some(h.band() as f64),
        PeriodicFunction::PiecewiseLinear(_) => None,
    }
}

/// Counting parameters for smooth shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketOptions {
    pub oversample: f64,
    pub tol: f64,
}

impl Default for BracketOptions {
    fn default() -> Self {
        Self {
            oversample: 8.0,
            tol: 1e-12,
        }
    }
}

/// Exact counter for piecewise-linear shapes, bracketing otherwise.
pub fn count_zeros(inst: &SignalInstance, window: Window, opts: BracketOptions) -> Result<ZeroReport, ZeroError> {
    match signal_max_freq(inst.function()) {
        None => count_zeros_pwl(inst, window),
        Some(freq) => count_zeros_bracketed(|t| inst.eval(t), window, freq, opts.oversample, opts.tol),
    }
}

/// `E[N(X_∞, [a, b])] = ((b - a) / π) √(<f', f'> / (3 <f, f>))`.
pub fn kac_rice_expected(f: &PeriodicFunction, window: Window) -> Result<f64, ZeroError> {
    let ff = f.inner_product(f);
    if !(ff > 0.0) {
        return Err(ZeroError::DegenerateFunction(ff));
    }
    let dd = f.derivative_inner_product(f);
    Ok(window.len() / PI * (dd / ff).sqrt() / 3f64.sqrt())
}
