//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use locuni::experiments::{
    compare_summaries, covariance_diagnostic, default_pairs, read_records, run_limit_reference, CellSummary,
    ExperimentConfig, SummaryStats, LIMIT_LAW,
};
use locuni::kernels::{ergodic_limit, kn_eval, cosine_rho, CovarianceModel, KnMethod, Order, SumKind};
use locuni::limit_process::{sample_limit_spectral, GridSampler, LimitCounter};
use locuni::periodic_fn::PeriodicFunction;
use locuni::rng::stream;
use locuni::signals::{CoefficientLaw, FrequencySequence, SignalInstance};
use locuni::zeros::{count_zeros_pwl, grid_oracle, kac_rice_expected, Window};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn kernel_identity() -> Outcome {
    let mut rng = stream(101, 0, 0);
    let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-50.0..=50.0)).collect();
    let mut worst = 0.0f64;
    for order in Order::ALL {
        for n in [1usize, 10, 100, 1000] {
            for &x in &xs {
                let closed = kn_eval(order, n, x, KnMethod::Closed).unwrap();
                let direct = kn_eval(order, n, x, KnMethod::Direct).unwrap();
                worst = worst.max((closed - direct).norm());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max |closed - direct| = {worst:.3e} (tol 1e-10)"))
}

fn cosine_covariance() -> Outcome {
    let spec = PeriodicFunction::cosine().fourier_spectrum(1).unwrap();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let u = -20.0 + 40.0 * i as f64 / 99.0 + 1e-3;
        let v = ergodic_limit(SumKind::C, &spec, &spec, u).unwrap();
        worst = worst.max((v - (u.sin() / (2.0 * u))).abs());
    }
    outcome(worst <= 1e-12, format!("max |C-limit - sin(u)/(2u)| = {worst:.3e} (tol 1e-12)"))
}

fn limit_mean(f: PeriodicFunction, seed: u64) -> Outcome {
    let window = Window::new(0.0, PI).unwrap();
    let expected = kac_rice_expected(&f, window).unwrap();
    let model = CovarianceModel::new(f).unwrap();
    let counter = LimitCounter::new(&model, window, 512).unwrap();
    let counts: Vec<f64> = (0..20_000u64)
        .map(|r| counter.count(&mut stream(seed, 0, r)).count as f64)
        .collect();
    let (m, se) = mean_se(&counts);
    outcome(
        (m - expected).abs() <= 3.0 * se,
        format!("mean {m:.5} vs {expected:.5}, |diff| = {:.2} SE (tol 3)", (m - expected).abs() / se),
    )
}

fn run_campaign(dir: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_locuni"))
        .args(["simulate", "--seed", "20240611", "--threads", &threads.to_string(), "--out"])
        .arg(dir)
        .args([
            "--set",
            "signal.fn=kind=triangle",
            "--set",
            "signal.laws=gaussian|rademacher",
            "--set",
            "experiment.n=4000",
            "--set",
            "experiment.replicates=5000",
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("simulate exited with {status}"))
    }
}

fn universality(dir: &Path) -> Outcome {
    let records = match run_campaign(dir, 1).and_then(|_| read_records(&dir.join("records.jsonl")).map_err(|e| e.to_string())) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let stats = SummaryStats::from_records(&records);
    let find = |law: &str| stats.cells.iter().find(|c| c.law == law).cloned();
    let (Some(g), Some(r)) = (find("gaussian"), find("rademacher")) else {
        return outcome(false, "missing cells");
    };
    let mut cfg = ExperimentConfig::default();
    cfg.replicates = 5000;
    let mut limit_records = Vec::new();
    if let Err(e) = run_limit_reference(&cfg, 20240611, None, |recs, _| {
        limit_records.extend_from_slice(recs);
        Ok(())
    }) {
        return outcome(false, e.to_string());
    }
    let limit = CellSummary::from_records(&limit_records).expect("limit cell");
    assert_eq!(limit.law, LIMIT_LAW);
    let gr = compare_summaries(&g, &r);
    let gl = compare_summaries(&g, &limit);
    let rl = compare_summaries(&r, &limit);
    let pass = gr.mean_diff.abs() <= 3.0 * gr.pooled_se && gr.ks <= 0.05 && gl.ks <= 0.07 && rl.ks <= 0.07;
    outcome(
        pass,
        format!(
            "means {:.4}/{:.4} differ by {:.2} pooled SE (tol 3); KS(g,r) = {:.4} (tol 0.05); KS vs limit {:.4}/{:.4} (tol 0.07)",
            g.mean,
            r.mean,
            gr.mean_diff.abs() / gr.pooled_se,
            gr.ks,
            gl.ks,
            rl.ks
        ),
    )
}

fn exact_counter() -> Outcome {
    let f = Arc::new(PeriodicFunction::triangle());
    let seq = FrequencySequence::golden();
    let window = Window::new(0.0, PI).unwrap();
    let mut mismatches = 0;
    let mut compared = 0;
    for rep in 0..200u64 {
        let mut rng = stream(606, 0, rep);
        let n = rng.random_range(1..=50usize);
        let coeffs = CoefficientLaw::Gaussian.sample(n, &mut rng);
        let inst = SignalInstance::new(Arc::clone(&f), seq.make_pn(n).unwrap(), coeffs).unwrap();
        let exact = count_zeros_pwl(&inst, window).unwrap();
        if exact.degenerate {
            continue;
        }
        compared += 1;
        let oracle = grid_oracle(|t| inst.eval(t), window, 1_000_000).unwrap();
        if oracle.count != exact.count {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && compared > 0,
        format!("{mismatches} mismatches over {compared} nondegenerate instances"),
    )
}

fn covariance_rate() -> Outcome {
    let window = Window::new(0.0, PI).unwrap();
    let ns = [500, 2000, 8000, 32000];
    let d = covariance_diagnostic(
        &PeriodicFunction::cosine(),
        &FrequencySequence::golden(),
        &ns,
        &default_pairs(window, 10),
    )
    .unwrap();
    let errs: Vec<f64> = d.rows.iter().map(|r| r.sup_d).collect();
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && d.slopes[1] < -0.1,
        format!("D sup-errors [{}], slope {:.3} (tol < -0.1)", shown.join(", "), d.slopes[1]),
    )
}

fn gap_positivity() -> Outcome {
    let models = [
        ("cos", CovarianceModel::new(PeriodicFunction::cosine()).unwrap()),
        (
            "triangle",
            CovarianceModel::with_truncation(PeriodicFunction::triangle(), 8192).unwrap(),
        ),
    ];
    let mut min_gap = f64::INFINITY;
    let mut worst = 0.0f64;
    for (_, m) in &models {
        let r0 = m.rho(Order::Two, 0.0).value;
        for i in 0..200 {
            let t = 0.05 + 1.95 * i as f64 / 199.0;
            let gap = m.rho2_gap(t).value;
            let series = m.rho(Order::Two, t).value - r0;
            min_gap = min_gap.min(gap);
            worst = worst.max((gap - series).abs());
        }
    }
    outcome(
        min_gap > 0.0 && worst <= 1e-8,
        format!("min gap {min_gap:.4e} (> 0), max |integral - series| = {worst:.3e} (tol 1e-8)"),
    )
}

fn nondegeneracy() -> Outcome {
    let cases = [
        (PeriodicFunction::cosine(), 0.5, 1.0 / 6.0),
        (PeriodicFunction::triangle(), 1.0 / 3.0, 4.0 / (3.0 * PI * PI)),
    ];
    let mut worst = 0.0f64;
    for (f, a, b) in cases {
        let m = CovarianceModel::new(f).unwrap();
        let c = m.cov_matrix(&[0.7]).unwrap();
        worst = worst
            .max((c[(0, 0)] - a).abs())
            .max((c[(1, 1)] - b).abs())
            .max(c[(0, 1)].abs())
            .max(c[(1, 0)].abs());
    }
    outcome(worst <= 1e-10, format!("max deviation from diag(<f,f>, <f',f'>/3) = {worst:.3e} (tol 1e-10)"))
}

fn sampler_agreement() -> Outcome {
    let model = CovarianceModel::new(PeriodicFunction::cosine()).unwrap();
    let times: Vec<f64> = (0..16).map(|i| PI * i as f64 / 15.0).collect();
    let draws = 50_000u64;
    let m = times.len();
    let grid = GridSampler::new(&model, &times).unwrap();
    let mut grid_values = Vec::with_capacity(draws as usize);
    for r in 0..draws {
        grid_values.push(grid.sample(&mut stream(1010, 0, r)).values);
    }
    let mut spec_values = Vec::with_capacity(draws as usize);
    for r in 0..draws {
        let path = sample_limit_spectral(&model, 64, &mut stream(1010, 1, r)).unwrap();
        spec_values.push(times.iter().map(|&t| path.eval(t)).collect::<Vec<f64>>());
    }
    let moments = |vals: &[Vec<f64>], i: usize, j: usize| {
        let prods: Vec<f64> = vals.iter().map(|v| v[i] * v[j]).collect();
        mean_se(&prods)
    };
    let mut worst = 0.0f64;
    let mut worst_truth = 0.0f64;
    for i in 0..m {
        for j in i..m {
            let (a, sa) = moments(&grid_values, i, j);
            let (b, sb) = moments(&spec_values, i, j);
            worst = worst.max((a - b).abs() / (sa * sa + sb * sb).sqrt());
            let truth = cosine_rho(times[j] - times[i]);
            worst_truth = worst_truth.max((a - truth).abs() / sa).max((b - truth).abs() / sb);
        }
    }
    outcome(
        worst <= 4.0,
        format!("max |grid - spectral| = {worst:.2} SE over 136 entries (tol 4); max deviation from rho {worst_truth:.2} SE"),
    )
}

fn reproducibility(dir_a: &Path, dir_b: &Path) -> Outcome {
    if let Err(e) = run_campaign(dir_b, 2) {
        return outcome(false, e);
    }
    let a = std::fs::read(dir_a.join("records.jsonl"));
    let b = std::fs::read(dir_b.join("records.jsonl"));
    match (a, b) {
        (Ok(a), Ok(b)) => outcome(
            a == b && !a.is_empty(),
            format!("records.jsonl {} bytes (--threads 1) vs {} bytes (--threads 2), identical = {}", a.len(), b.len(), a == b),
        ),
        (a, b) => outcome(false, format!("read failure: {:?} {:?}", a.err(), b.err())),
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir_a = tmp.path().join("threads1");
    let dir_b = tmp.path().join("threads2");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("kernel identity, closed vs direct K_n", Box::new(kernel_identity)),
        ("cosine limit covariance sin(u)/(2u)", Box::new(cosine_covariance)),
        ("limit zero count, cosine vs 1/sqrt(3)", Box::new(|| limit_mean(PeriodicFunction::cosine(), 303))),
        ("limit zero count, triangle vs 2/pi", Box::new(|| limit_mean(PeriodicFunction::triangle(), 404))),
        ("universality at n = 4000", Box::new(|| universality(&dir_a))),
        ("exact counter vs grid oracle", Box::new(exact_counter)),
        ("covariance convergence rate", Box::new(covariance_rate)),
        ("rho'' gap positivity", Box::new(gap_positivity)),
        ("non-degeneracy matrix", Box::new(nondegeneracy)),
        ("grid vs spectral sampler", Box::new(sampler_agreement)),
        ("reproducibility across thread counts", Box::new(|| reproducibility(&dir_a, &dir_b))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check();
        let secs = started.elapsed().as_secs_f64();
        if !result.pass {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {}: {} [{secs:.1} s] {}",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("acceptance summary: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
