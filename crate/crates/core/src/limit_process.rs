//! Samplers for the stationary Gaussian limit `(X_∞, X_∞')`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernels::{CovarianceModel, KernelError};
use crate::zeros::{Window, ZeroError, ZeroMethod, ZeroReport};

pub const MAX_GRID_TIMES: usize = 4096;
pub const MIN_GRID_POINTS: usize = 64;
pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_ATOMS: usize = 64;
const JITTERS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("covariance factorization failed even with relative jitter {0:e}; coarsen the grid")]
    Factorization(f64),
    #[error("at most {MAX_GRID_TIMES} times are supported, got {0}")]
    TooManyTimes(usize),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Zero(#[from] ZeroError),
}

/// One joint draw of `(X_∞(t_i), X_∞'(t_i))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// Relative diagonal jitter that made the factorization succeed.
    pub jitter: f64,
}

/// Lower Cholesky factor of a covariance, packed by rows.
#[derive(Clone, Debug)]
struct PackedFactor {
    dim: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl PackedFactor {
    fn new(cov: &DMatrix<f64>) -> Result<Self, LimitError> {
        let dim = cov.nrows();
        let mean_diag = if dim == 0 { 0.0 } else { cov.diagonal().mean() };
        for &jitter in &JITTERS {
            let mut c = cov.clone();
            for i in 0..dim {
                c[(i, i)] += jitter * mean_diag;
            }
            if let Some(chol) = c.cholesky() {
                let l = chol.l();
                let mut data = Vec::with_capacity(dim * (dim + 1) / 2);
                for i in 0..dim {
                    for j in 0..=i {
                        data.push(l[(i, j)]);
                    }
                }
                return Ok(Self { dim, data, jitter });
            }
        }
        Err(LimitError::Factorization(*JITTERS.last().expect("nonempty")))
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.data[offset..offset + i + 1];
            *o = row.iter().zip(&z[..=i]).map(|(l, x)| l * x).sum();
            offset += i + 1;
        }
    }
}

/// Reusable exact sampler on a fixed set of times.
#[derive(Clone, Debug)]
pub struct GridSampler {
    times: Vec<f64>,
    factor: PackedFactor,
}

impl GridSampler {
    pub fn new(model: &CovarianceModel, times: &[f64]) -> Result<Self, LimitError> {
        if times.len() > MAX_GRID_TIMES {
            return Err(LimitError::TooManyTimes(times.len()));
        }
        let cov = model.cov_matrix(times)?;
        Ok(Self {
            times: times.to_vec(),
            factor: PackedFactor::new(&cov)?,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridSample {
        let m = self.times.len();
        let z: Vec<f64> = (0..2 * m).map(|_| rng.sample(StandardNormal)).collect();
        let mut joint = vec![0.0; 2 * m];
        self.factor.apply(&z, &mut joint);
        let derivs = joint.split_off(m);
        GridSample {
            times: self.times.clone(),
            values: joint,
            derivs,
            jitter: self.factor.jitter,
        }
    }
}

/// Exact joint draw on `times`.
pub fn sample_limit_grid<R: Rng + ?Sized>(
    model: &CovarianceModel,
    times: &[f64],
    rng: &mut R,
) -> Result<GridSample, LimitError> {
    Ok(GridSampler::new(model, times)?.sample(rng))
}

/// Random-frequency path
/// `|f̂(0)| ξ₀ + Σ_p Σ_m √(2/M) |f̂(p)| (ξ cos(p U t) + η sin(p U t))`.
///
/// Its covariance is exactly `ρ` for every `M`; it is Gaussian only as
/// `M → ∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPath {
    truncation: usize,
    atoms_per_freq: usize,
    constant: f64,
    omegas: Vec<f64>,
    cos_amps: Vec<f64>,
    sin_amps: Vec<f64>,
    max_freq: f64,
}

impl SpectralPath {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn atoms_per_freq(&self) -> usize {
        self.atoms_per_freq
    }

    /// Largest frequency `p` with `f̂(p) ≠ 0`.
    pub fn max_freq(&self) -> f64 {
        self.max_freq
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.constant;
        for ((w, c), s) in self.omegas.iter().zip(&self.cos_amps).zip(&self.sin_amps) {
            let (sn, cs) = (w * t).sin_cos();
            acc += c * cs + s * sn;
        }
        acc
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for ((w, c), s) in self.omegas.iter().zip(&self.cos_amps).zip(&self.sin_amps) {
            let (sn, cs) = (w * t).sin_cos();
            acc += w * (s * cs - c * sn);
        }
        acc
    }
}

pub fn sample_limit_spectral<R: Rng + ?Sized>(
    model: &CovarianceModel,
    atoms_per_freq: usize,
    rng: &mut R,
) -> Result<SpectralPath, LimitError> {
    if atoms_per_freq == 0 {
        return Err(LimitError::Invalid {
            field: "spectral_atoms",
            message: "need at least one atom per frequency".into(),
        });
    }
    let coeffs = model.spectrum().nonnegative();
    let xi0: f64 = rng.sample(StandardNormal);
    let constant = coeffs[0].norm() * xi0;
    let scale = (2.0 / atoms_per_freq as f64).sqrt();
    let mut omegas = Vec::new();
    let mut cos_amps = Vec::new();
    let mut sin_amps = Vec::new();
    let mut max_freq = 0.0;
    for (p, c) in coeffs.iter().enumerate().skip(1) {
        let amp = c.norm();
        if amp == 0.0 {
            continue;
        }
        max_freq = p as f64;
        for _ in 0..atoms_per_freq {
            let u: f64 = rng.random();
            let xi: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            omegas.push(p as f64 * u);
            cos_amps.push(scale * amp * xi);
            sin_amps.push(scale * amp * eta);
        }
    }
    Ok(SpectralPath {
        truncation: model.truncation(),
        atoms_per_freq,
        constant,
        omegas,
        cos_amps,
        sin_amps,
        max_freq,
    })
}

/// Law of `X(h/2)` given `(X(0), X'(0), X(h), X'(h))`.
#[derive(Clone, Debug)]
struct MidpointLaw {
    gain: [[f64; 4]; 1],
    sd: f64,
}

impl MidpointLaw {
    fn new(model: &CovarianceModel, h: f64) -> Result<Self, LimitError> {
        let cov = model.cov_matrix(&[0.0, 0.5 * h, h])?;
        // block order: X(0), X(h/2), X(h), X'(0), X'(h/2), X'(h)
        let given = [0usize, 3, 2, 5];
        let target = [1usize];
        let s_gg = DMatrix::from_fn(4, 4, |i, j| cov[(given[i], given[j])]);
        let s_tg = DMatrix::from_fn(1, 4, |i, j| cov[(target[i], given[j])]);
        let s_tt = DMatrix::from_fn(1, 1, |i, j| cov[(target[i], target[j])]);
        let scale = s_gg.amax().max(f64::MIN_POSITIVE);
        let inv = s_gg
            .pseudo_inverse(1e-14 * scale)
            .map_err(|m| LimitError::Invalid {
                field: "grid_points",
                message: m.to_string(),
            })?;
        let g = &s_tg * inv;
        let cond = s_tt - &g * s_tg.transpose();
        let mut gain = [[0.0; 4]; 1];
        for (i, row) in gain.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = g[(i, j)];
            }
        }
        Ok(Self {
            gain,
            sd: cond[(0, 0)].max(0.0).sqrt(),
        })
    }

    fn sample_value<R: Rng + ?Sized>(&self, given: [f64; 4], rng: &mut R) -> f64 {
        let z0: f64 = rng.sample(StandardNormal);
        let mean: f64 = self.gain[0].iter().zip(&given).map(|(g, x)| g * x).sum();
        mean + self.sd * z0
    }
}

fn hermite(x0: f64, d0: f64, x1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * x0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * x1
        + (s3 - s2) * h * d1
}

/// True when a same-sign cell looks like a dip towards zero that the grid
/// might have stepped over.
fn dip_suspected(x0: f64, d0: f64, x1: f64, d1: f64, h: f64) -> bool {
    let sign = x0.signum();
    if x0 * d0 >= 0.0 || x1 * d1 <= 0.0 {
        return false;
    }
    let floor = 0.5 * x0.abs().min(x1.abs());
    (1..16).any(|i| sign * hermite(x0, d0, x1, d1, h, i as f64 / 16.0) <= floor)
}

/// Root of the Hermite cubic on a cell with a sign change.
fn hermite_root(t0: f64, x0: f64, d0: f64, x1: f64, d1: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let y = hermite(x0, d0, x1, d1, h, mid);
        if y == 0.0 {
            return t0 + h * mid;
        }
        if y.signum() == x0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t0 + h * 0.5 * (lo + hi)
}

/// Zero counter for `X_∞` on a window with a fixed uniform grid.
#[derive(Clone, Debug)]
pub struct LimitCounter {
    window: Window,
    sampler: Option<GridSampler>,
    midpoint: Option<MidpointLaw>,
    step: f64,
}

impl LimitCounter {
    pub fn new(model: &CovarianceModel, window: Window, grid_points: usize) -> Result<Self, LimitError> {
        if grid_points < MIN_GRID_POINTS {
            return Err(LimitError::Invalid {
                field: "grid_points",
                message: format!("need at least {MIN_GRID_POINTS}, got {grid_points}"),
            });
        }
        if window.is_empty() {
            return Ok(Self {
                window,
                sampler: None,
                midpoint: None,
                step: 0.0,
            });
        }
        let intervals = grid_points - 1;
        let step = window.len() / intervals as f64;
        let times: Vec<f64> = (0..grid_points)
            .map(|i| {
                if i == intervals {
                    window.b()
                } else {
                    window.a() + step * i as f64
                }
            })
            .collect();
        Ok(Self {
            window,
            sampler: Some(GridSampler::new(model, &times)?),
            midpoint: Some(MidpointLaw::new(model, step)?),
            step,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn jitter(&self) -> f64 {
        self.sampler.as_ref().map_or(0.0, GridSampler::jitter)
    }

    pub fn count<R: Rng + ?Sized>(&self, rng: &mut R) -> ZeroReport {
        let (Some(sampler), Some(mid)) = (&self.sampler, &self.midpoint) else {
            return ZeroReport {
                count: 0,
                locations: vec![],
                degenerate: false,
                method: ZeroMethod::Bracketed,
                plateaus: vec![],
            };
        };
        let g = sampler.sample(rng);
        let (t, x, d) = (&g.times, &g.values, &g.derivs);
        let h = self.step;
        let mut locations = Vec::new();
        for i in 0..t.len() {
            if x[i] == 0.0 {
                locations.push(t[i]);
                continue;
            }
            if i + 1 == t.len() || x[i + 1] == 0.0 {
                continue;
            }
            if x[i] * x[i + 1] < 0.0 {
                locations.push(hermite_root(t[i], x[i], d[i], x[i + 1], d[i + 1], h));
            } else if dip_suspected(x[i], d[i], x[i + 1], d[i + 1], h) {
                let xm = mid.sample_value([x[i], d[i], x[i + 1], d[i + 1]], rng);
                if xm * x[i] < 0.0 {
                    let half = 0.5 * h;
                    locations.push(t[i] + half * x[i] / (x[i] - xm));
                    locations.push(t[i] + half + half * xm / (xm - x[i + 1]));
                }
            }
        }
        ZeroReport {
            count: locations.len(),
            locations,
            degenerate: false,
            method: ZeroMethod::Bracketed,
            plateaus: vec![],
        }
    }
}

/// One-shot zero count of `X_∞` on `window`.
pub fn count_zeros_limit<R: Rng + ?Sized>(
    model: &CovarianceModel,
    window: Window,
    grid_points: usize,
    rng: &mut R,
) -> Result<ZeroReport, LimitError> {
    Ok(LimitCounter::new(model, window, grid_points)?.count(rng))
}
