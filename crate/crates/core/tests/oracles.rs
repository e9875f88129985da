//! Library behaviour checked against independent oracles.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use locuni::experiments::{
    run_limit_reference, run_universality, spacing_histogram, ExperimentConfig, RunRecord,
};
use locuni::kernels::{cosine_rho, ergodic_sum, CovarianceModel, SumKind};
use locuni::limit_process::sample_limit_spectral;
use locuni::periodic_fn::{PeriodicFunction, PiecewiseLinearPeriodic};
use locuni::rng::stream;
use locuni::signals::{CoefficientLaw, DiscreteLaw, FrequencySequence, SignalInstance};
use locuni::zeros::{
    breakpoints, count_zeros_bracketed, count_zeros_pwl, grid_oracle, signal_max_freq, Window,
};
use proptest::prelude::*;

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn instance(f: PeriodicFunction, law: &CoefficientLaw, n: usize, key: u64, rep: u64) -> SignalInstance {
    let p_n = FrequencySequence::golden().make_pn(n).unwrap();
    let coeffs = law.sample(n, &mut stream(7, key, rep));
    SignalInstance::new(Arc::new(f), p_n, coeffs).unwrap()
}

#[test]
fn triangle_fourier_data_match_quadrature() {
    let f = PeriodicFunction::triangle();
    for p in 0..6i64 {
        let re = simpson(|x| f.eval(x) * (p as f64 * x).cos(), 0.0, TAU, 1 << 16) / TAU;
        let im = -simpson(|x| f.eval(x) * (p as f64 * x).sin(), 0.0, TAU, 1 << 16) / TAU;
        let c = f.fourier_coefficient(p);
        assert!((c.re - re).abs() < 1e-9, "p={p}: {} vs {re}", c.re);
        assert!((c.im - im).abs() < 1e-9, "p={p}: {} vs {im}", c.im);
    }
    let energy = simpson(|x| f.eval(x).powi(2), 0.0, TAU, 1 << 16) / TAU;
    assert!((f.inner_product(&f) - energy).abs() < 1e-9);
    let slope_energy = simpson(|x| f.eval_derivative(x).powi(2), 0.0, TAU, 1 << 16) / TAU;
    assert!((f.derivative_inner_product(&f) - slope_energy).abs() < 1e-6);
}

#[test]
fn autocorrelation_matches_convolution_integral() {
    let f = PiecewiseLinearPeriodic::new(vec![0.0, 1.0, 2.5, 4.0, TAU], vec![0.3, -1.2, 0.8, 1.5, 0.3]).unwrap();
    let f = PeriodicFunction::PiecewiseLinear(f);
    for &x in &[0.0, 0.4, 1.7, 3.0, 5.5] {
        let exact = simpson(|y| f.eval(y + x) * f.eval(y), 0.0, TAU, 1 << 16) / TAU;
        let series = f.autocorrelation(x, 4096).unwrap();
        assert!(
            (series.value - exact).abs() <= series.tail_bound + 1e-8,
            "x={x}: {} vs {exact}",
            series.value
        );
        let slope_exact = simpson(|y| f.eval_derivative(y) * f.eval_derivative(y - x), 0.0, TAU, 1 << 18) / TAU;
        assert!((f.derivative_autocorrelation(x) - slope_exact).abs() < 1e-3);
    }
}

/// Error-free transformation of `a + b`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[test]
fn signal_value_matches_double_double_sum() {
    let n = 100;
    let p_n = FrequencySequence::golden().make_pn(n).unwrap();
    let coeffs = CoefficientLaw::Rademacher.sample(n, &mut stream(42, 0, 0));
    let f = Arc::new(PeriodicFunction::triangle());
    let inst = SignalInstance::new(Arc::clone(&f), p_n, coeffs.clone()).unwrap();
    let t = 0.5;
    let (mut hi, mut lo) = (0.0, 0.0);
    for (i, a) in coeffs.iter().enumerate() {
        let term = a * f.eval((i + 1) as f64 * (p_n + t) / n as f64);
        let (s, e) = two_sum(hi, term);
        hi = s;
        lo += e;
    }
    let oracle = (hi + lo) / (n as f64).sqrt();
    assert!((inst.eval(t) - oracle).abs() < 1e-12);
}

#[test]
fn derivative_matches_finite_difference() {
    let inst = instance(PeriodicFunction::cosine(), &CoefficientLaw::Gaussian, 100, 1, 0);
    let h = 1e-6;
    for &t in &[0.1, 0.9, 2.3] {
        let fd = (inst.eval(t + h) - inst.eval(t - h)) / (2.0 * h);
        assert!((fd - inst.eval_derivative(t)).abs() < 1e-4);
    }
}

#[test]
fn empirical_covariance_matches_ergodic_sum() {
    let n = 2000;
    let reps = 20_000;
    let (s, t) = (0.3, 1.1);
    let f = Arc::new(PeriodicFunction::triangle());
    let p_n = FrequencySequence::golden().make_pn(n).unwrap();
    let products: Vec<f64> = (0..reps)
        .map(|r| {
            let coeffs = CoefficientLaw::Gaussian.sample(n, &mut stream(11, 3, r));
            let inst = SignalInstance::new(Arc::clone(&f), p_n, coeffs).unwrap();
            inst.eval(s) * inst.eval(t)
        })
        .collect();
    let mean = products.iter().sum::<f64>() / reps as f64;
    let var = products.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    let exact = ergodic_sum(SumKind::C, &f, &f, s, t, n, p_n).unwrap();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn spectral_paths_have_the_cosine_covariance() {
    let model = CovarianceModel::new(PeriodicFunction::cosine()).unwrap();
    let reps = 40_000;
    for &u in &[0.0, 0.7, 2.0] {
        let products: Vec<f64> = (0..reps)
            .map(|r| {
                let path = sample_limit_spectral(&model, 16, &mut stream(5, 9, r)).unwrap();
                path.eval(1.0) * path.eval(1.0 + u)
            })
            .collect();
        let mean = products.iter().sum::<f64>() / reps as f64;
        let var = products.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - cosine_rho(u)).abs() < 4.0 * se, "u={u}: {mean}");
    }
}

#[test]
fn bracketed_counts_are_stable_under_refinement() {
    let window = Window::new(0.0, PI).unwrap();
    let f = PeriodicFunction::cosine();
    let mut stable = 0;
    for r in 0..500 {
        let inst = instance(f.clone(), &CoefficientLaw::Gaussian, 200, 21, r);
        let path = |t: f64| inst.eval(t);
        let m = signal_max_freq(inst.function()).unwrap();
        let c8 = count_zeros_bracketed(path, window, m, 8.0, 1e-12).unwrap().count;
        let c16 = count_zeros_bracketed(path, window, m, 16.0, 1e-12).unwrap().count;
        stable += usize::from(c8 == c16);
    }
    assert!(stable >= 495, "only {stable}/500 stable");
}

#[test]
fn breakpoint_grid_respects_its_cardinality_bound() {
    let window = Window::new(0.5, 2.0).unwrap();
    for &n in &[1usize, 10, 200] {
        let inst = instance(PeriodicFunction::triangle(), &CoefficientLaw::Gaussian, n, 4, 0);
        let cells = inst.function().as_piecewise_linear().unwrap().cell_count();
        let grid = breakpoints(&inst, window).unwrap();
        assert!(grid.len() <= 2 * (n + 1) * cells * 2, "n={n}: {}", grid.len());
        assert!(grid.points().windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn zero_spacings_match_the_limit() {
    let mut cfg = ExperimentConfig::default();
    cfg.window = Window::new(0.0, 3.0 * PI).unwrap();
    cfg.laws = vec![CoefficientLaw::Gaussian];
    cfg.replicates = 4000;
    cfg.grid_points = 512;
    let mut xn: Vec<RunRecord> = Vec::new();
    run_universality(&cfg, 99, None, |recs, _| {
        xn.extend_from_slice(recs);
        Ok(())
    })
    .unwrap();
    let mut limit: Vec<RunRecord> = Vec::new();
    run_limit_reference(&cfg, 99, None, |recs, _| {
        limit.extend_from_slice(recs);
        Ok(())
    })
    .unwrap();
    let a = spacing_histogram(&xn, cfg.window);
    let b = spacing_histogram(&limit, cfg.window);
    assert!(a.total() > 2000 && b.total() > 2000);
    let tv = a.tv_distance(&b);
    assert!(tv <= 0.1, "spacing TV {tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_laws_round_trip(v in 0.2f64..5.0, q in 0.05f64..0.45) {
        let law = CoefficientLaw::Discrete(
            DiscreteLaw::new(vec![-1.0 / (2.0 * q).sqrt(), 0.0, 1.0 / (2.0 * q).sqrt()], vec![q, 1.0 - 2.0 * q, q]).unwrap(),
        );
        let back: CoefficientLaw = law.to_string().parse().unwrap();
        prop_assert_eq!(back, law);
        let w = Window::new(-v, v).unwrap();
        prop_assert_eq!(w.to_string().parse::<Window>().unwrap(), w);
    }

    #[test]
    fn pwl_counter_agrees_with_grid_oracle(n in 1usize..12, rep in 0u64..1000) {
        let inst = instance(PeriodicFunction::triangle(), &CoefficientLaw::Gaussian, n, 31, rep);
        let window = Window::new(0.0, PI).unwrap();
        let exact = count_zeros_pwl(&inst, window).unwrap();
        let oracle = grid_oracle(|t| inst.eval(t), window, 200_000).unwrap();
        prop_assert_eq!(exact.count, oracle.count);
    }

    #[test]
    fn counts_add_over_adjacent_windows(n in 1usize..60, rep in 0u64..1000, m in 0.1f64..3.0) {
        let inst = instance(PeriodicFunction::triangle(), &CoefficientLaw::Rademacher, n, 41, rep);
        let whole = count_zeros_pwl(&inst, Window::new(0.0, PI).unwrap()).unwrap();
        let left = count_zeros_pwl(&inst, Window::new(0.0, m).unwrap()).unwrap();
        let right = count_zeros_pwl(&inst, Window::new(m, PI).unwrap()).unwrap();
        prop_assume!(!whole.degenerate && inst.eval(m).abs() > 1e-9);
        prop_assert_eq!(whole.count, left.count + right.count);
    }

    #[test]
    fn scaling_preserves_zero_locations(n in 1usize..80, rep in 0u64..1000, c in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
        let inst = instance(PeriodicFunction::triangle(), &CoefficientLaw::Gaussian, n, 51, rep);
        let window = Window::new(0.0, PI).unwrap();
        let a = count_zeros_pwl(&inst, window).unwrap();
        let b = count_zeros_pwl(&inst.scaled(c), window).unwrap();
        prop_assert_eq!(a.count, b.count);
        for (x, y) in a.locations.iter().zip(&b.locations) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
