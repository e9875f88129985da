//! Limit kernel `K(x) = ∫₀¹ e^{iux} du`, its Riemann sums `K_n`, the ergodic
//! sums `C_n`, `D_n`, `E_n` and the limit covariance `ρ` of the localized
//! signal.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::periodic_fn::{reduce_angle, FourierSpectrum, FunctionError, PeriodicFunction, Truncated};
use crate::quad::adaptive_simpson;
use crate::sum::CompensatedSum;

/// Below this radius the kernels are evaluated from their power series.
const SERIES_RADIUS: f64 = 1.0;
const SERIES_TERMS: usize = 30;
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel order must be 0, 1 or 2, got {0}")]
    Order(u8),
    #[error("n must be at least 1")]
    ZeroN,
    #[error("spectra have different truncations ({0} vs {1})")]
    TruncationMismatch(usize, usize),
    #[error("series has a non-negligible imaginary part {0:e}")]
    ImaginaryResidual(f64),
    #[error("times must be sorted and distinct (index {0})")]
    Times(usize),
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// Derivative order of a kernel evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    Zero,
    One,
    Two,
}

impl Order {
    pub const ALL: [Order; 3] = [Order::Zero, Order::One, Order::Two];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<u8> for Order {
    type Error = KernelError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Order::Zero),
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            other => Err(KernelError::Order(other)),
        }
    }
}

/// `(K, K', K'')` at `x`.
pub fn k_all(x: f64) -> [Complex64; 3] {
    if x.abs() < SERIES_RADIUS {
        // ∫₀¹ u^j e^{iux} du = Σ_m (ix)^m / (m! (m + j + 1))
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        let mut term = Complex64::new(1.0, 0.0);
        for m in 0..SERIES_TERMS {
            for (j, a) in acc.iter_mut().enumerate() {
                *a += term / (m + j + 1) as f64;
            }
            term *= I * x / (m + 1) as f64;
        }
        [acc[0], I * acc[1], -acc[2]]
    } else {
        let z = I * x;
        let e = Complex64::from_polar(1.0, x);
        let i0 = (e - 1.0) / z;
        let i1 = (e - i0) / z;
        let i2 = (e - 2.0 * i1) / z;
        [i0, I * i1, -i2]
    }
}

/// `K^{(order)}(x)`.
pub fn k_eval(order: Order, x: f64) -> Complex64 {
    k_all(x)[order.index()]
}

/// How `K_n` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnMethod {
    /// The n-term exponential sum.
    Direct,
    /// `e^{i(n+1)x/2n} sin(x/2) / (n sin(x/2n))` and its derivatives.
    Closed,
}

/// `K_n^{(order)}(x)`.
pub fn kn_eval(order: Order, n: usize, x: f64, method: KnMethod) -> Result<Complex64, KernelError> {
    if n == 0 {
        return Err(KernelError::ZeroN);
    }
    Ok(match method {
        KnMethod::Direct => kn_direct(order, n, x),
        KnMethod::Closed => kn_closed(order, n, x),
    })
}

fn kn_direct(order: Order, n: usize, x: f64) -> Complex64 {
    let nf = n as f64;
    let j = order.index() as i32;
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for k in 1..=n {
        let w = k as f64 / nf;
        let z = I.powi(j) * w.powi(j) * Complex64::from_polar(1.0, w * x);
        re.add(z.re);
        im.add(z.im);
    }
    Complex64::new(re.value(), im.value()) / nf
}

fn kn_closed(order: Order, n: usize, x: f64) -> Complex64 {
    let nf = n as f64;
    let period = TAU * nf;
    // K_n and its derivatives are 2πn-periodic.
    let y = x - period * (x / period).round();
    if y.abs() < SERIES_RADIUS {
        return kn_series(order, n, y);
    }
    let b = y / (2.0 * nf);
    if b.sin().abs() < 1e-12 {
        return kn_direct(order, n, x);
    }
    let a = 0.5 * y;
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let num = [sa, 0.5 * ca, -0.25 * sa];
    let den = [nf * sb, 0.5 * cb, -0.25 * sb / nf];
    let s0 = num[0] / den[0];
    let cross = num[1] * den[0] - num[0] * den[1];
    let s1 = cross / (den[0] * den[0]);
    let s2 = (num[2] * den[0] - num[0] * den[2]) / (den[0] * den[0])
        - 2.0 * den[1] * cross / (den[0] * den[0] * den[0]);
    let phi = (nf + 1.0) / (2.0 * nf);
    let e = Complex64::from_polar(1.0, phi * y);
    match order {
        Order::Zero => e * s0,
        Order::One => e * (I * phi * s0 + s1),
        Order::Two => e * (s2 + 2.0 * I * phi * s1 - phi * phi * s0),
    }
}

/// Power series of `e^{iφy} sin(y/2) / (n sin(y/2n))` about `y = 0`.
fn kn_series(order: Order, n: usize, y: f64) -> Complex64 {
    const DEG: usize = 2 * SERIES_TERMS;
    let nf = n as f64;
    // sin(y/2)/(y/2) and sin(y/2n)/(y/2n) as series in y².
    let half = SERIES_TERMS;
    let mut num = vec![0.0; half];
    let mut den = vec![0.0; half];
    let mut fact = 1.0; // (2k+1)!
    for k in 0..half {
        if k > 0 {
            fact *= ((2 * k) * (2 * k + 1)) as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        num[k] = sign / (4f64.powi(k as i32) * fact);
        den[k] = sign / ((4.0 * nf * nf).powi(k as i32) * fact);
    }
    let mut ratio = vec![0.0; half];
    for k in 0..half {
        let mut c = num[k];
        for i in 1..=k {
            c -= den[i] * ratio[k - i];
        }
        ratio[k] = c / den[0];
    }
    let phi = (nf + 1.0) / (2.0 * nf);
    // coefficients of e^{iφy}
    let mut expo = vec![Complex64::new(0.0, 0.0); DEG];
    expo[0] = Complex64::new(1.0, 0.0);
    for m in 1..DEG {
        expo[m] = expo[m - 1] * I * phi / m as f64;
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); DEG];
    for (k, r) in ratio.iter().enumerate() {
        for m in 0..DEG - 2 * k {
            coeffs[2 * k + m] += expo[m] * *r;
        }
    }
    let j = order.index();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pow = 1.0;
    for m in j..DEG {
        let falling: f64 = (0..j).map(|i| (m - i) as f64).product();
        acc += coeffs[m] * falling * pow;
        pow *= y;
    }
    acc
}

/// Which ergodic sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SumKind {
    /// `(1/n) Σ g(x_t) h(x_s)`
    C,
    /// `(1/n) Σ (k/n)² g'(x_t) h'(x_s)`
    D,
    /// `(1/n) Σ (k/n) g(x_t) h'(x_s)`
    E,
}

impl SumKind {
    pub const ALL: [SumKind; 3] = [SumKind::C, SumKind::D, SumKind::E];
}

/// The finite ergodic sum with `x_t = k (p_n + t) / n`.
pub fn ergodic_sum(
    kind: SumKind,
    g: &PeriodicFunction,
    h: &PeriodicFunction,
    s: f64,
    t: f64,
    n: usize,
    p_n: f64,
) -> Result<f64, KernelError> {
    if n == 0 {
        return Err(KernelError::ZeroN);
    }
    let nf = n as f64;
    let mut acc = CompensatedSum::new();
    for k in 1..=n {
        let w = k as f64 / nf;
        let xt = w * (p_n + t);
        let xs = w * (p_n + s);
        acc.add(match kind {
            SumKind::C => g.eval(xt) * h.eval(xs),
            SumKind::D => w * w * g.eval_derivative(xt) * h.eval_derivative(xs),
            SumKind::E => w * g.eval(xt) * h.eval_derivative(xs),
        });
    }
    Ok(acc.value() / nf)
}

/// Truncated series limit of an ergodic sum at lag `u = t - s`.
pub fn ergodic_limit(
    kind: SumKind,
    g: &FourierSpectrum,
    h: &FourierSpectrum,
    u: f64,
) -> Result<f64, KernelError> {
    if g.truncation() != h.truncation() {
        return Err(KernelError::TruncationMismatch(g.truncation(), h.truncation()));
    }
    let big_p = g.truncation() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for p in -big_p..=big_p {
        let pf = p as f64;
        let kernel = k_all(pf * u);
        let weight = g.coeff(p) * h.coeff(-p);
        let term = match kind {
            SumKind::C => weight * kernel[0],
            SumKind::D => -weight * pf * pf * kernel[2],
            SumKind::E => -weight * pf * kernel[1],
        };
        scale += term.norm();
        acc += term;
    }
    if acc.im.abs() > 1e-10 * scale.max(1.0) {
        return Err(KernelError::ImaginaryResidual(acc.im));
    }
    Ok(acc.re)
}

/// `ρ''(t) - ρ''(0)`, flagged when evaluated at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub value: f64,
    pub at_origin: bool,
}

/// Covariance of the stationary limit `(X_∞, X_∞')` built from `f`.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    function: PeriodicFunction,
    spectrum: FourierSpectrum,
    weights: Vec<f64>,
    energy: f64,
    derivative_energy: f64,
    tail_energy: f64,
    tail_derivative_energy: f64,
}

impl CovarianceModel {
    /// Model with the function's default truncation.
    pub fn new(function: PeriodicFunction) -> Result<Self, KernelError> {
        let p = function.default_truncation();
        Self::with_truncation(function, p)
    }

    pub fn with_truncation(function: PeriodicFunction, truncation: usize) -> Result<Self, KernelError> {
        let spectrum = function.fourier_spectrum(truncation as i64)?;
        let weights: Vec<f64> = spectrum.nonnegative().iter().map(|c| c.norm_sqr()).collect();
        let energy = function.inner_product(&function);
        let derivative_energy = function.derivative_inner_product(&function);
        let tail_energy = (energy - spectrum.energy()).max(0.0);
        let tail_derivative_energy = (derivative_energy - spectrum.derivative_energy()).max(0.0);
        Ok(Self {
            function,
            spectrum,
            weights,
            energy,
            derivative_energy,
            tail_energy,
            tail_derivative_energy,
        })
    }

    pub fn function(&self) -> &PeriodicFunction {
        &self.function
    }

    pub fn spectrum(&self) -> &FourierSpectrum {
        &self.spectrum
    }

    pub fn truncation(&self) -> usize {
        self.spectrum.truncation()
    }

    /// `⟨f, f⟩ = ρ(0)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `⟨f', f'⟩ = -3 ρ''(0)`.
    pub fn derivative_energy(&self) -> f64 {
        self.derivative_energy
    }

    /// `ρ^{(order)}(u)`. The origin uses the exact inner products.
    pub fn rho(&self, order: Order, u: f64) -> Truncated {
        let tails = self.tail_bounds();
        if u == 0.0 {
            let value = match order {
                Order::Zero => self.energy,
                Order::One => 0.0,
                Order::Two => -self.derivative_energy / 3.0,
            };
            return Truncated {
                value,
                tail_bound: 0.0,
            };
        }
        Truncated {
            value: self.rho_triple(u)[order.index()],
            tail_bound: tails[order.index()],
        }
    }

    fn tail_bounds(&self) -> [f64; 3] {
        [
            self.tail_energy,
            0.5 * (self.tail_energy * self.tail_derivative_energy).sqrt(),
            self.tail_derivative_energy / 3.0,
        ]
    }

    /// `(ρ(u), ρ'(u), ρ''(u))` from the truncated series.
    pub fn rho_triple(&self, u: f64) -> [f64; 3] {
        if u == 0.0 {
            return [self.energy, 0.0, -self.derivative_energy / 3.0];
        }
        let mut acc = [self.weights[0], 0.0, 0.0];
        for (p, &w) in self.weights.iter().enumerate().skip(1) {
            if w == 0.0 {
                continue;
            }
            let pf = p as f64;
            let k = k_all(pf * u);
            acc[0] += 2.0 * w * k[0].re;
            acc[1] += 2.0 * w * pf * k[1].re;
            acc[2] += 2.0 * w * pf * pf * k[2].re;
        }
        acc
    }

    /// `ρ''(t) - ρ''(0) = t⁻³ ∫₀ᵗ s² (A(0) - A(s)) ds` with `A = f' ∗ f̌'`,
    /// integrated by adaptive Simpson between the kinks of `A`.
    pub fn rho2_gap(&self, t: f64) -> Gap {
        if t == 0.0 {
            return Gap {
                value: 0.0,
                at_origin: true,
            };
        }
        let a0 = self.function.derivative_autocorrelation(0.0);
        let integrand = |s: f64| s * s * (a0 - self.function.derivative_autocorrelation(s));
        let (lo, hi) = if t > 0.0 { (0.0, t) } else { (t, 0.0) };
        let mut nodes = vec![lo, hi];
        nodes.extend(
            self.autocorrelation_kinks()
                .into_iter()
                .filter(|&k| k > lo && k < hi),
        );
        nodes.sort_by(f64::total_cmp);
        let t3 = t * t * t;
        let tol = 1e-10 * t3.abs() / nodes.len() as f64;
        let integral: f64 = nodes
            .windows(2)
            .map(|w| adaptive_simpson(integrand, w[0], w[1], tol))
            .sum();
        let signed = if t > 0.0 { integral } else { -integral };
        Gap {
            value: signed / t3,
            at_origin: false,
        }
    }

    /// Lags in `(-4π, 4π)` where `f' ∗ f̌'` may fail to be smooth.
    fn autocorrelation_kinks(&self) -> Vec<f64> {
        match &self.function {
            PeriodicFunction::Harmonic(_) => Vec::new(),
            PeriodicFunction::PiecewiseLinear(f) => {
                let knots = &f.knots()[..f.knots().len() - 1];
                let mut out = Vec::new();
                for &a in knots {
                    for &b in knots {
                        let d = reduce_angle(a - b);
                        for q in -2..2 {
                            out.push(d + TAU * q as f64);
                        }
                    }
                }
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
        }
    }

    /// Covariance of `(X(t_1..t_m), X'(t_1..t_m))` in that block order.
    pub fn cov_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>, KernelError> {
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(KernelError::Times(i + 1));
            }
        }
        let m = times.len();
        let mut cov = DMatrix::zeros(2 * m, 2 * m);
        if m == 0 {
            return Ok(cov);
        }
        let uniform_step = uniform_step(times);
        let lag_table: Option<Vec<[f64; 3]>> =
            uniform_step.map(|h| (0..m).map(|k| self.rho_triple(k as f64 * h)).collect());
        for i in 0..m {
            for j in i..m {
                let r = match &lag_table {
                    Some(table) => table[j - i],
                    None => self.rho_triple(times[j] - times[i]),
                };
                cov[(i, j)] = r[0];
                cov[(j, i)] = r[0];
                cov[(m + i, m + j)] = -r[2];
                cov[(m + j, m + i)] = -r[2];
                // Cov(X(t_i), X'(t_j)) = ρ'(t_j - t_i), and ρ' is odd.
                cov[(i, m + j)] = r[1];
                cov[(m + j, i)] = r[1];
                cov[(j, m + i)] = -r[1];
                cov[(m + i, j)] = -r[1];
            }
        }
        Ok(cov)
    }

    /// `diag(⟨f,f⟩, ⟨f',f'⟩/3)`, the covariance of `(X_∞(t), X_∞'(t))`.
    pub fn nondegeneracy_matrix(&self) -> [[f64; 2]; 2] {
        [[self.energy, 0.0], [0.0, self.derivative_energy / 3.0]]
    }
}

fn uniform_step(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return Some(0.0);
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let ok = times
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (times[0] + i as f64 * h)).abs() <= 1e-12 * (1.0 + t.abs()));
    ok.then_some(h)
}

/// `sin(u) / (2u)`, the limit covariance for `f = cos`.
pub fn cosine_rho(u: f64) -> f64 {
    if u == 0.0 {
        0.5
    } else {
        0.5 * u.sin() / u
    }
}
