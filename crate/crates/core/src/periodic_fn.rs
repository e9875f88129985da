//! Continuous 2π-periodic input shapes and their Fourier data.
//!
//! Two families are supported: continuous piecewise-linear functions given by
//! knots on `[0, 2π]`, and finite harmonic sums. All inner products use the
//! normalized pairing `(1/2π) ∫₀^{2π} f g`, and Fourier coefficients follow
//! `f̂(p) = (1/2π) ∫₀^{2π} f(t) e^{-ipt} dt`, so that `⟨f, f⟩ = Σ |f̂(p)|²`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

/// Tolerance used when snapping user-supplied end knots onto `0` and `2π`.
const KNOT_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("truncation must be at least 1, got {0}")]
    Truncation(i64),
}

fn invalid(field: &'static str, message: impl Into<String>) -> FunctionError {
    FunctionError::Invalid {
        field,
        message: message.into(),
    }
}

/// Reduces `x` to `[0, 2π)` by floor division.
#[inline]
pub fn reduce_angle(x: f64) -> f64 {
    let r = x - TAU * (x / TAU).floor();
    if r >= TAU {
        r - TAU
    } else if r < 0.0 {
        0.0
    } else {
        r
    }
}

/// A value computed from a truncated series, with a bound on the neglected tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub tail_bound: f64,
}

/// Continuous piecewise-linear 2π-periodic function.
///
/// Cell `j` is `[s_j, s_{j+1})`, on which `f(x) = v_j + m_j (x - s_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearPeriodic {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseLinearPeriodic {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, FunctionError> {
        if knots.len() < 2 {
            return Err(invalid("knots", "need at least the two end knots 0 and 2π"));
        }
        if knots.len() != values.len() {
            return Err(invalid(
                "values",
                format!("expected {} values, got {}", knots.len(), values.len()),
            ));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("knots", "knots and values must be finite"));
        }
        let mut knots = knots;
        let mut values = values;
        if knots[0].abs() > KNOT_SNAP {
            return Err(invalid("knots", format!("first knot must be 0, got {}", knots[0])));
        }
        let last = knots.len() - 1;
        if (knots[last] - TAU).abs() > KNOT_SNAP {
            return Err(invalid(
                "knots",
                format!("last knot must be 2π, got {}", knots[last]),
            ));
        }
        knots[0] = 0.0;
        knots[last] = TAU;
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("knots", "knots must be strictly increasing"));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if (values[0] - values[last]).abs() > 1e-12 * scale {
            return Err(invalid(
                "values",
                "first and last values must agree (periodic continuity)",
            ));
        }
        values[last] = values[0];
        if values.iter().all(|&v| v == values[0]) {
            return Err(invalid("values", "function must not be constant"));
        }
        let slopes = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(s, v)| (v[1] - v[0]) / (s[1] - s[0]))
            .collect();
        Ok(Self {
            knots,
            values,
            slopes,
        })
    }

    /// The symmetric triangle wave with `f(0) = 1`, `f(π) = -1`.
    pub fn triangle() -> Self {
        Self::new(vec![0.0, PI, TAU], vec![1.0, -1.0, 1.0]).expect("valid triangle")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slope on each cell.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn cell_count(&self) -> usize {
        self.slopes.len()
    }

    /// Index of the cell containing `x ∈ [0, 2π)`.
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let idx = self.knots.partition_point(|&s| s <= x);
        idx.saturating_sub(1).min(self.slopes.len() - 1)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let x = reduce_angle(x);
        let j = self.cell_of(x);
        self.values[j] + self.slopes[j] * (x - self.knots[j])
    }

    /// Right-hand derivative.
    #[inline]
    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.slopes[self.cell_of(reduce_angle(x))]
    }

    /// Slope jump `m_j - m_{j-1}` at each knot `s_j`, `j = 0..cells`.
    pub fn slope_jumps(&self) -> Vec<f64> {
        let c = self.slopes.len();
        (0..c)
            .map(|j| self.slopes[j] - self.slopes[(j + c - 1) % c])
            .collect()
    }

    /// Constant `C` in `|f̂(p)| ≤ C / p²`.
    pub fn coefficient_decay_constant(&self) -> f64 {
        self.slope_jumps().iter().map(|d| d.abs()).sum::<f64>() / TAU
    }

    fn mean(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(s, v)| 0.5 * (s[1] - s[0]) * (v[0] + v[1]))
            .sum::<f64>()
            / TAU
    }

    fn coefficient(&self, p: i64) -> Complex64 {
        if p == 0 {
            return Complex64::new(self.mean(), 0.0);
        }
        let pf = p as f64;
        let sum: Complex64 = self
            .knots
            .iter()
            .zip(self.slope_jumps())
            .map(|(&s, dm)| Complex64::from_polar(dm, -pf * s))
            .sum();
        -sum / (TAU * pf * pf)
    }

    fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Finite harmonic sum `Σ_p a_p cos(px) + b_p sin(px)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicFunction {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl HarmonicFunction {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self, FunctionError> {
        if cos.iter().chain(sin.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("cos", "coefficients must be finite"));
        }
        let len = cos.len().max(sin.len());
        let mut cos = cos;
        let mut sin = sin;
        cos.resize(len, 0.0);
        sin.resize(len, 0.0);
        if len > 0 {
            sin[0] = 0.0;
        }
        while cos.len() > 1 && cos.last() == Some(&0.0) && sin.last() == Some(&0.0) {
            cos.pop();
            sin.pop();
        }
        if !cos.iter().zip(&sin).skip(1).any(|(a, b)| *a != 0.0 || *b != 0.0) {
            return Err(invalid(
                "cos",
                "need a nonzero coefficient at some frequency p >= 1",
            ));
        }
        Ok(Self { cos, sin })
    }

    pub fn cosine() -> Self {
        Self::new(vec![0.0, 1.0], vec![0.0, 0.0]).expect("valid cosine")
    }

    /// Highest frequency with a nonzero coefficient.
    pub fn band(&self) -> usize {
        self.cos.len() - 1
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    fn is_cosine(&self) -> bool {
        self.cos == [0.0, 1.0] && self.sin == [0.0, 0.0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = reduce_angle(x);
        self.cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .map(|(p, (a, b))| {
                let (s, c) = (p as f64 * x).sin_cos();
                a * c + b * s
            })
            .sum()
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let x = reduce_angle(x);
        self.cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .skip(1)
            .map(|(p, (a, b))| {
                let pf = p as f64;
                let (s, c) = (pf * x).sin_cos();
                pf * (b * c - a * s)
            })
            .sum()
    }

    fn coefficient(&self, p: i64) -> Complex64 {
        let q = p.unsigned_abs() as usize;
        if q >= self.cos.len() {
            return Complex64::new(0.0, 0.0);
        }
        if q == 0 {
            return Complex64::new(self.cos[0], 0.0);
        }
        let c = Complex64::new(0.5 * self.cos[q], -0.5 * self.sin[q]);
        if p < 0 {
            c.conj()
        } else {
            c
        }
    }

    fn sup_norm(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|v| v.abs()).sum()
    }
}

/// An admissible input shape.
#[derive(Clone, Debug, PartialEq)]
pub enum PeriodicFunction {
    PiecewiseLinear(PiecewiseLinearPeriodic),
    Harmonic(HarmonicFunction),
}

/// Closed-form Fourier coefficients `f̂(p)` for `0 ≤ p ≤ P`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSpectrum {
    truncation: usize,
    coeffs: Vec<Complex64>,
    tail_energy_bound: f64,
    tail_derivative_energy_bound: f64,
}

impl FourierSpectrum {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// `f̂(p)`; zero for `|p| > P`.
    pub fn coeff(&self, p: i64) -> Complex64 {
        let q = p.unsigned_abs() as usize;
        if q > self.truncation {
            return Complex64::new(0.0, 0.0);
        }
        if p < 0 {
            self.coeffs[q].conj()
        } else {
            self.coeffs[q]
        }
    }

    /// Coefficients for `p = 0..=P`.
    pub fn nonnegative(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Bound on `Σ_{|p|>P} |f̂(p)|²`.
    pub fn tail_energy_bound(&self) -> f64 {
        self.tail_energy_bound
    }

    /// Bound on `Σ_{|p|>P} p² |f̂(p)|²`.
    pub fn tail_derivative_energy_bound(&self) -> f64 {
        self.tail_derivative_energy_bound
    }

    /// `Σ_{|p|≤P} |f̂(p)|²`.
    pub fn energy(&self) -> f64 {
        self.coeffs[0].norm_sqr() + 2.0 * self.coeffs[1..].iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `Σ_{|p|≤P} p² |f̂(p)|²`.
    pub fn derivative_energy(&self) -> f64 {
        2.0 * self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(p, c)| (p * p) as f64 * c.norm_sqr())
            .sum::<f64>()
    }
}

impl PeriodicFunction {
    pub fn cosine() -> Self {
        PeriodicFunction::Harmonic(HarmonicFunction::cosine())
    }

    pub fn triangle() -> Self {
        PeriodicFunction::PiecewiseLinear(PiecewiseLinearPeriodic::triangle())
    }

    pub fn as_piecewise_linear(&self) -> Option<&PiecewiseLinearPeriodic> {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => Some(f),
            PeriodicFunction::Harmonic(_) => None,
        }
    }

    /// `f(x mod 2π)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => f.eval(x),
            PeriodicFunction::Harmonic(f) => f.eval(x),
        }
    }

    /// `f'(x)`, right-hand slope at knots.
    #[inline]
    pub fn eval_derivative(&self, x: f64) -> f64 {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => f.eval_derivative(x),
            PeriodicFunction::Harmonic(f) => f.eval_derivative(x),
        }
    }

    /// An upper bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => f.sup_norm(),
            PeriodicFunction::Harmonic(f) => f.sup_norm(),
        }
    }

    /// Default spectrum truncation: the exact band for harmonic sums, 512 otherwise.
    pub fn default_truncation(&self) -> usize {
        match self {
            PeriodicFunction::PiecewiseLinear(_) => 512,
            PeriodicFunction::Harmonic(f) => f.band(),
        }
    }

    pub fn fourier_coefficient(&self, p: i64) -> Complex64 {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => f.coefficient(p),
            PeriodicFunction::Harmonic(f) => f.coefficient(p),
        }
    }

    pub fn fourier_spectrum(&self, truncation: i64) -> Result<FourierSpectrum, FunctionError> {
        if truncation < 1 {
            return Err(FunctionError::Truncation(truncation));
        }
        let big_p = truncation as usize;
        let coeffs: Vec<Complex64> = (0..=truncation).map(|p| self.fourier_coefficient(p)).collect();
        let (tail_energy_bound, tail_derivative_energy_bound) = match self {
            PeriodicFunction::Harmonic(f) => {
                if big_p >= f.band() {
                    (0.0, 0.0)
                } else {
                    let tail = |w: fn(f64) -> f64| {
                        (big_p + 1..=f.band())
                            .map(|p| 2.0 * w(p as f64) * f.coefficient(p as i64).norm_sqr())
                            .sum::<f64>()
                    };
                    (tail(|_| 1.0), tail(|p| p * p))
                }
            }
            PeriodicFunction::PiecewiseLinear(f) => {
                let c = f.coefficient_decay_constant();
                let pf = big_p as f64;
                (2.0 * c * c / (3.0 * pf * pf * pf), 2.0 * c * c / pf)
            }
        };
        Ok(FourierSpectrum {
            truncation: big_p,
            coeffs,
            tail_energy_bound,
            tail_derivative_energy_bound,
        })
    }

    /// `⟨f, g⟩ = (1/2π) ∫₀^{2π} f g`, exact for every supported pair.
    pub fn inner_product(&self, other: &PeriodicFunction) -> f64 {
        use PeriodicFunction::*;
        match (self, other) {
            (PiecewiseLinear(f), PiecewiseLinear(g)) => {
                merged_cells(f.knots(), g.knots())
                    .map(|(l, r)| {
                        let m = 0.5 * (l + r);
                        // Simpson's rule is exact on the quadratic product.
                        let at = |x: f64| eval_in_cell(f, x, l) * eval_in_cell(g, x, l);
                        (r - l) / 6.0 * (at(l) + 4.0 * at(m) + at(r))
                    })
                    .sum::<f64>()
                    / TAU
            }
            (Harmonic(f), Harmonic(g)) => {
                let n = f.cos.len().min(g.cos.len());
                f.cos[0] * g.cos[0]
                    + 0.5
                        * (1..n)
                            .map(|p| f.cos[p] * g.cos[p] + f.sin[p] * g.sin[p])
                            .sum::<f64>()
            }
            (Harmonic(h), other) | (other, Harmonic(h)) => {
                let band = h.band() as i64;
                (-band..=band)
                    .map(|p| (h.coefficient(p) * other.fourier_coefficient(p).conj()).re)
                    .sum()
            }
        }
    }

    /// `⟨f', g'⟩`, exact for every supported pair.
    pub fn derivative_inner_product(&self, other: &PeriodicFunction) -> f64 {
        use PeriodicFunction::*;
        match (self, other) {
            (PiecewiseLinear(f), PiecewiseLinear(g)) => {
                merged_cells(f.knots(), g.knots())
                    .map(|(l, r)| {
                        let m = 0.5 * (l + r);
                        (r - l) * f.slopes[f.cell_of(m)] * g.slopes[g.cell_of(m)]
                    })
                    .sum::<f64>()
                    / TAU
            }
            (Harmonic(f), Harmonic(g)) => {
                let n = f.cos.len().min(g.cos.len());
                0.5 * (1..n)
                    .map(|p| (p * p) as f64 * (f.cos[p] * g.cos[p] + f.sin[p] * g.sin[p]))
                    .sum::<f64>()
            }
            (Harmonic(h), other) | (other, Harmonic(h)) => {
                let band = h.band() as i64;
                (-band..=band)
                    .map(|p| {
                        (p * p) as f64 * (h.coefficient(p) * other.fourier_coefficient(p).conj()).re
                    })
                    .sum()
            }
        }
    }

    /// `(f ∗ f̌)(x) = Σ_{|p|≤P} |f̂(p)|² e^{ipx}`.
    pub fn autocorrelation(&self, x: f64, truncation: i64) -> Result<Truncated, FunctionError> {
        let spectrum = self.fourier_spectrum(truncation)?;
        let c = spectrum.nonnegative();
        let value = c[0].norm_sqr()
            + 2.0
                * c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(p, z)| z.norm_sqr() * (p as f64 * x).cos())
                    .sum::<f64>();
        Ok(Truncated {
            value,
            tail_bound: spectrum.tail_energy_bound(),
        })
    }

    /// `(f' ∗ f̌')(s) = (1/2π) ∫ f'(u) f'(u - s) du`, exact.
    pub fn derivative_autocorrelation(&self, s: f64) -> f64 {
        match self {
            PeriodicFunction::PiecewiseLinear(f) => {
                let shift = reduce_angle(s);
                let mut shifted: Vec<f64> = f.knots[..f.knots.len() - 1]
                    .iter()
                    .map(|&k| reduce_angle(k + shift))
                    .collect();
                shifted.push(0.0);
                shifted.push(TAU);
                shifted.sort_by(f64::total_cmp);
                shifted.dedup();
                merged_cells(f.knots(), &shifted)
                    .map(|(l, r)| {
                        let m = 0.5 * (l + r);
                        (r - l) * f.eval_derivative(m) * f.eval_derivative(m - shift)
                    })
                    .sum::<f64>()
                    / TAU
            }
            PeriodicFunction::Harmonic(f) => {
                0.5 * (1..f.cos.len())
                    .map(|p| {
                        let pf = p as f64;
                        pf * pf * (f.cos[p] * f.cos[p] + f.sin[p] * f.sin[p]) * (pf * s).cos()
                    })
                    .sum::<f64>()
            }
        }
    }
}

/// Value of the affine piece of `f` on the merged cell starting at `left`.
fn eval_in_cell(f: &PiecewiseLinearPeriodic, x: f64, left: f64) -> f64 {
    let j = f.cell_of(left);
    f.values[j] + f.slopes[j] * (x - f.knots[j])
}

/// Cells of the common refinement of two knot sets on `[0, 2π]`.
fn merged_cells<'a>(a: &'a [f64], b: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    let mut all: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let cells: Vec<(f64, f64)> = all.windows(2).map(|w| (w[0], w[1])).filter(|(l, r)| r > l).collect();
    cells.into_iter()
}

fn parse_list(field: &'static str, s: &str) -> Result<Vec<f64>, FunctionError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| invalid(field, format!("cannot parse `{t}` as a number")))
        })
        .collect()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl FromStr for PeriodicFunction {
    type Err = FunctionError;

    /// Parses `kind=cos`, `kind=triangle`, `kind=pwl; knots=...; values=...`
    /// or `kind=harmonic; cos=...; sin=...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut kind = None;
        let mut knots = None;
        let mut values = None;
        let mut cos = None;
        let mut sin = None;
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| invalid("fn", format!("expected key=value, got `{part}`")))?;
            let value = value.trim();
            match key.trim() {
                "kind" => kind = Some(value.to_string()),
                "knots" => knots = Some(parse_list("knots", value)?),
                "values" => values = Some(parse_list("values", value)?),
                "cos" => cos = Some(parse_list("cos", value)?),
                "sin" => sin = Some(parse_list("sin", value)?),
                other => return Err(invalid("fn", format!("unknown key `{other}`"))),
            }
        }
        let kind = kind.ok_or_else(|| invalid("kind", "missing"))?;
        match kind.as_str() {
            "cos" => Ok(PeriodicFunction::cosine()),
            "triangle" => Ok(PeriodicFunction::triangle()),
            "pwl" => {
                let knots = knots.ok_or_else(|| invalid("knots", "missing"))?;
                let values = values.ok_or_else(|| invalid("values", "missing"))?;
                Ok(PeriodicFunction::PiecewiseLinear(PiecewiseLinearPeriodic::new(
                    knots, values,
                )?))
            }
            "harmonic" => {
                let cos = cos.unwrap_or_default();
                let sin = sin.unwrap_or_default();
                Ok(PeriodicFunction::Harmonic(HarmonicFunction::new(cos, sin)?))
            }
            other => Err(invalid("kind", format!("unknown kind `{other}`"))),
        }
    }
}

impl fmt::Display for PeriodicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodicFunction::Harmonic(h) if h.is_cosine() => write!(f, "kind=cos"),
            PeriodicFunction::Harmonic(h) => {
                write!(f, "kind=harmonic; cos={}; sin={}", join(&h.cos), join(&h.sin))
            }
            PeriodicFunction::PiecewiseLinear(p) => write!(
                f,
                "kind=pwl; knots={}; values={}",
                join(&p.knots),
                join(&p.values)
            ),
        }
    }
}
