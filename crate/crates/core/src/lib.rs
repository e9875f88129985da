//! Zeros of localized random periodic signals.
//!
//! For a continuous 2π-periodic shape `f` and i.i.d. centered unit-variance
//! coefficients `a_k`, the crate simulates
//!
//! ```text
//! X_n(t) = n^{-1/2} Σ_{k=1}^n a_k f(k (p_n + t) / n),    p_n / n → α,
//! ```
//!
//! counts its zeros on a window, samples the stationary Gaussian process
//! `X_∞` with covariance `ρ(u) = Σ_p |f̂(p)|² ∫₀¹ e^{ipux} dx`, and compares
//! the two zero-count laws by Monte Carlo.

pub mod cli;
pub mod experiments;
pub mod kernels;
pub mod limit_process;
pub mod periodic_fn;
pub mod quad;
pub mod rng;
pub mod signals;
pub mod sum;
pub mod zeros;
