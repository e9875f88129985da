//! Monte Carlo campaigns, summaries and deterministic diagnostics.
//!
//! Every replicate draws from its own stream keyed by the master seed, a
//! stable hash of its cell and the replicate index. Replicates of a cell are
//! computed in parallel and merged in replicate order, so the persisted
//! records do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::kernels::{k_eval, kn_eval, CovarianceModel, KernelError, KnMethod, Order, SumKind};
use crate::limit_process::{
    sample_limit_spectral, LimitCounter, LimitError, DEFAULT_ATOMS, DEFAULT_GRID_POINTS, MIN_GRID_POINTS,
};
use crate::periodic_fn::{FunctionError, PeriodicFunction};
use crate::rng::stream;
use crate::signals::{CoefficientLaw, FrequencySequence, SignalError, SignalInstance};
use crate::zeros::{count_zeros, count_zeros_bracketed, write_f64, BracketOptions, Window, ZeroError, ZeroMethod, ZeroReport};

/// Largest tolerated share of degenerate paths in one cell.
pub const MAX_DEGENERATE_RATE: f64 = 0.05;
pub const HISTOGRAM_BINS: usize = 50;
const CHUNK: usize = 256;
pub const LIMIT_LAW: &str = "limit";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cell n={n}, law={law}: {rate:.3} of paths are degenerate (limit {MAX_DEGENERATE_RATE})")]
    Degenerate { n: usize, law: String, rate: f64 },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ExperimentError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<SignalError> for ExperimentError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::Invalid { field, message } => ExperimentError::config(field, message),
            other => ExperimentError::config("n", other.to_string()),
        }
    }
}

impl From<FunctionError> for ExperimentError {
    fn from(e: FunctionError) -> Self {
        match e {
            FunctionError::Invalid { field, message } => ExperimentError::config(field, message),
            FunctionError::Truncation(_) => ExperimentError::config("truncation", e.to_string()),
        }
    }
}

impl From<ZeroError> for ExperimentError {
    fn from(e: ZeroError) -> Self {
        match e {
            ZeroError::Invalid { field, message } => ExperimentError::config(field, message),
            ZeroError::NotPiecewiseLinear => ExperimentError::config("fn", e.to_string()),
            other => ExperimentError::Numerical(other.to_string()),
        }
    }
}

impl From<KernelError> for ExperimentError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Function(f) => f.into(),
            KernelError::Order(_) => ExperimentError::config("order", e.to_string()),
            KernelError::ZeroN => ExperimentError::config("n", e.to_string()),
            other => ExperimentError::Numerical(other.to_string()),
        }
    }
}

impl From<LimitError> for ExperimentError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::Invalid { field, message } => ExperimentError::config(field, message),
            LimitError::TooManyTimes(_) => ExperimentError::config("grid_points", e.to_string()),
            LimitError::Kernel(k) => k.into(),
            LimitError::Zero(z) => z.into(),
            LimitError::Factorization(_) => ExperimentError::Numerical(e.to_string()),
        }
    }
}

/// Sampler used for the limit reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitSampler {
    Grid,
    Spectral,
}

/// Acceptance thresholds applied by `compare`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareThresholds {
    pub ks_laws: f64,
    pub ks_limit: f64,
    pub mean_se: f64,
}

impl Default for CompareThresholds {
    fn default() -> Self {
        Self {
            ks_laws: 0.05,
            ks_limit: 0.07,
            mean_se: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub function: PeriodicFunction,
    pub laws: Vec<CoefficientLaw>,
    pub alpha: FrequencySequence,
    pub window: Window,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub bracket: BracketOptions,
    pub grid_points: usize,
    pub truncation: Option<usize>,
    pub spectral_atoms: usize,
    pub limit_sampler: LimitSampler,
    pub thresholds: CompareThresholds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "universality".into(),
            function: PeriodicFunction::triangle(),
            laws: vec![CoefficientLaw::Gaussian, CoefficientLaw::Rademacher],
            alpha: FrequencySequence::golden(),
            window: Window::new(0.0, PI).expect("valid window"),
            ns: vec![4000],
            replicates: 5000,
            bracket: BracketOptions::default(),
            grid_points: DEFAULT_GRID_POINTS,
            truncation: None,
            spectral_atoms: DEFAULT_ATOMS,
            limit_sampler: LimitSampler::Grid,
            thresholds: CompareThresholds::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "experiment.id",
    "experiment.n",
    "experiment.replicates",
    "signal.fn",
    "signal.laws",
    "signal.alpha",
    "window.a",
    "window.b",
    "zeros.oversample",
    "zeros.tol",
    "limit.grid_points",
    "limit.truncation",
    "limit.spectral_atoms",
    "limit.sampler",
    "compare.ks_laws",
    "compare.ks_limit",
    "compare.mean_se",
];

fn parse_num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| ExperimentError::config(field, format!("cannot parse `{}`", value.trim())))
}

impl ExperimentConfig {
    /// Parses `[section]` headers and `key = value` lines on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        let mut section = String::new();
        let mut pending_a = None;
        let mut pending_b = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::config("config", format!("line {}: expected key = value", lineno + 1))
            })?;
            let full = format!("{section}.{}", key.trim());
            match full.as_str() {
                "window.a" => pending_a = Some(parse_num::<f64>("window", value)?),
                "window.b" => pending_b = Some(parse_num::<f64>("window", value)?),
                _ => self.set(&full, value)?,
            }
        }
        if pending_a.is_some() || pending_b.is_some() {
            let a = pending_a.unwrap_or(self.window.a());
            let b = pending_b.unwrap_or(self.window.b());
            self.window = Window::new(a, b)?;
        }
        self.validate()
    }

    /// Sets one `section.key` to `value`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let v = value.trim();
        match key {
            "experiment.id" => {
                if v.is_empty() || v.contains(['"', '\\']) {
                    return Err(ExperimentError::config("id", "must be nonempty without quotes"));
                }
                self.id = v.to_string();
            }
            "experiment.n" => {
                self.ns = v
                    .split(',')
                    .map(|x| parse_num::<usize>("n", x))
                    .collect::<Result<_, _>>()?;
            }
            "experiment.replicates" => self.replicates = parse_num("replicates", v)?,
            "signal.fn" => self.function = v.parse()?,
            "signal.laws" => {
                self.laws = v
                    .split('|')
                    .map(|l| l.parse::<CoefficientLaw>())
                    .collect::<Result<_, _>>()?;
            }
            "signal.alpha" => self.alpha = v.parse()?,
            "window.a" => self.window = Window::new(parse_num("window", v)?, self.window.b())?,
            "window.b" => self.window = Window::new(self.window.a(), parse_num("window", v)?)?,
            "zeros.oversample" => self.bracket.oversample = parse_num("oversample", v)?,
            "zeros.tol" => self.bracket.tol = parse_num("tol", v)?,
            "limit.grid_points" => self.grid_points = parse_num("grid_points", v)?,
            "limit.truncation" => {
                self.truncation = if v == "auto" {
                    None
                } else {
                    Some(parse_num("truncation", v)?)
                }
            }
            "limit.spectral_atoms" => self.spectral_atoms = parse_num("spectral_atoms", v)?,
            "limit.sampler" => {
                self.limit_sampler = match v {
                    "grid" => LimitSampler::Grid,
                    "spectral" => LimitSampler::Spectral,
                    other => {
                        return Err(ExperimentError::config(
                            "sampler",
                            format!("expected grid or spectral, got `{other}`"),
                        ))
                    }
                }
            }
            "compare.ks_laws" => self.thresholds.ks_laws = parse_num("ks_laws", v)?,
            "compare.ks_limit" => self.thresholds.ks_limit = parse_num("ks_limit", v)?,
            "compare.mean_se" => self.thresholds.mean_se = parse_num("mean_se", v)?,
            other => {
                return Err(ExperimentError::config(
                    other,
                    format!("unknown key; known keys: {}", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ExperimentError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ExperimentError::config("set", format!("expected section.key=value, got `{assignment}`")))?;
        self.set(key.trim(), value)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicates == 0 {
            return Err(ExperimentError::config("replicates", "must be at least 1"));
        }
        if self.ns.is_empty() || self.ns[0] == 0 || self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::config("n", "must be a nonempty increasing list of positive integers"));
        }
        if self.laws.is_empty() {
            return Err(ExperimentError::config("laws", "need at least one law"));
        }
        if !(self.bracket.oversample >= 4.0) {
            return Err(ExperimentError::config("oversample", "must be at least 4"));
        }
        if !(self.bracket.tol > 0.0) {
            return Err(ExperimentError::config("tol", "must be positive"));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(ExperimentError::config("grid_points", format!("must be at least {MIN_GRID_POINTS}")));
        }
        if self.truncation == Some(0) {
            return Err(ExperimentError::config("truncation", "must be at least 1"));
        }
        if self.spectral_atoms == 0 {
            return Err(ExperimentError::config("spectral_atoms", "must be at least 1"));
        }
        Ok(())
    }

    /// Text form accepted by [`ExperimentConfig::from_text`].
    pub fn to_text(&self) -> String {
        let laws: Vec<String> = self.laws.iter().map(ToString::to_string).collect();
        let ns: Vec<String> = self.ns.iter().map(ToString::to_string).collect();
        let truncation = self.truncation.map_or("auto".to_string(), |p| p.to_string());
        let sampler = match self.limit_sampler {
            LimitSampler::Grid => "grid",
            LimitSampler::Spectral => "spectral",
        };
        format!(
            "[experiment]\nid = {}\nn = {}\nreplicates = {}\n\n\
             [signal]\nfn = {}\nlaws = {}\nalpha = {}\n\n\
             [window]\na = {}\nb = {}\n\n\
             [zeros]\noversample = {}\ntol = {}\n\n\
             [limit]\ngrid_points = {}\ntruncation = {}\nspectral_atoms = {}\nsampler = {}\n\n\
             [compare]\nks_laws = {}\nks_limit = {}\nmean_se = {}\n",
            self.id,
            ns.join(","),
            self.replicates,
            self.function,
            laws.join("|"),
            self.alpha,
            self.window.a(),
            self.window.b(),
            self.bracket.oversample,
            self.bracket.tol,
            self.grid_points,
            truncation,
            self.spectral_atoms,
            sampler,
            self.thresholds.ks_laws,
            self.thresholds.ks_limit,
            self.thresholds.mean_se,
        )
    }

    pub fn model(&self) -> Result<CovarianceModel, ExperimentError> {
        let p = self.truncation.unwrap_or_else(|| self.function.default_truncation());
        Ok(CovarianceModel::with_truncation(self.function.clone(), p)?)
    }
}

/// One replicate of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub cell_n: usize,
    pub law: String,
    pub replicate: u64,
    pub report: ZeroReport,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(128);
        let _ = write!(
            s,
            "{{\"experiment\":\"{}\",\"cell_n\":{},\"law\":\"{}\",\"replicate\":{},\"count\":{},\"locations\":[",
            self.experiment, self.cell_n, self.law, self.replicate, self.report.count
        );
        for (i, x) in self.report.locations.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write_f64(&mut s, *x);
        }
        let _ = write!(
            s,
            "],\"degenerate\":{},\"method\":\"{}\"}}",
            self.report.degenerate,
            self.report.method.as_str()
        );
        s
    }

    pub fn from_json_line(line: &str) -> Result<Self, ExperimentError> {
        #[derive(Deserialize)]
        struct Line {
            experiment: String,
            cell_n: usize,
            law: String,
            replicate: u64,
            count: usize,
            locations: Vec<f64>,
            degenerate: bool,
            method: ZeroMethod,
        }
        let l: Line =
            serde_json::from_str(line).map_err(|e| ExperimentError::config("records", e.to_string()))?;
        Ok(Self {
            experiment: l.experiment,
            cell_n: l.cell_n,
            law: l.law,
            replicate: l.replicate,
            report: ZeroReport {
                count: l.count,
                locations: l.locations,
                degenerate: l.degenerate,
                method: l.method,
                plateaus: vec![],
            },
        })
    }
}

/// Wall time of one finished cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTiming {
    pub cell_n: usize,
    pub law: String,
    pub replicates: usize,
    pub seconds: f64,
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(RunRecord::from_json_line(&line)?);
        }
    }
    Ok(out)
}

/// Writes records, one JSON object per line.
pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stream key of a cell.
pub fn cell_key(n: usize, law: &str) -> u64 {
    fnv1a(&format!("{n}/{law}"))
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| ExperimentError::config("threads", e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

fn run_cell<F>(replicates: usize, make: F) -> Result<Vec<ZeroReport>, ExperimentError>
where
    F: Fn(u64) -> Result<ZeroReport, ExperimentError> + Sync,
{
    let mut out = Vec::with_capacity(replicates);
    for start in (0..replicates).step_by(CHUNK) {
        let end = (start + CHUNK).min(replicates);
        let chunk: Vec<Result<ZeroReport, ExperimentError>> =
            (start..end).into_par_iter().map(|r| make(r as u64)).collect();
        for r in chunk {
            out.push(r?);
        }
    }
    Ok(out)
}

fn check_degenerate(n: usize, law: &str, reports: &[ZeroReport]) -> Result<(), ExperimentError> {
    let bad = reports.iter().filter(|r| r.degenerate).count();
    let rate = bad as f64 / reports.len().max(1) as f64;
    if rate > MAX_DEGENERATE_RATE {
        return Err(ExperimentError::Degenerate {
            n,
            law: law.to_string(),
            rate,
        });
    }
    Ok(())
}

/// Zero counts of `X_n` for every `(n, law)` cell, in config order.
/// `sink` receives each cell's records as soon as the cell is finished.
pub fn run_universality(
    config: &ExperimentConfig,
    seed: u64,
    threads: Option<usize>,
    mut sink: impl FnMut(&[RunRecord], &CellTiming) -> Result<(), ExperimentError>,
) -> Result<(), ExperimentError> {
    config.validate()?;
    let function = Arc::new(config.function.clone());
    for &n in &config.ns {
        let p_n = config.alpha.make_pn(n)?;
        for law in &config.laws {
            let law_name = law.to_string();
            let key = cell_key(n, &law_name);
            let started = Instant::now();
            let reports = with_pool(threads, || {
                run_cell(config.replicates, |r| {
                    let mut rng = stream(seed, key, r);
                    let coeffs = law.sample(n, &mut rng);
                    let inst = SignalInstance::new(Arc::clone(&function), p_n, coeffs)?;
                    Ok(count_zeros(&inst, config.window, config.bracket)?)
                })
            })??;
            check_degenerate(n, &law_name, &reports)?;
            let records = to_records(config, n, &law_name, reports);
            sink(
                &records,
                &CellTiming {
                    cell_n: n,
                    law: law_name,
                    replicates: config.replicates,
                    seconds: started.elapsed().as_secs_f64(),
                },
            )?;
        }
    }
    Ok(())
}

fn to_records(config: &ExperimentConfig, n: usize, law: &str, reports: Vec<ZeroReport>) -> Vec<RunRecord> {
    reports
        .into_iter()
        .enumerate()
        .map(|(r, report)| RunRecord {
            experiment: config.id.clone(),
            cell_n: n,
            law: law.to_string(),
            replicate: r as u64,
            report,
        })
        .collect()
}

/// Zero counts of `X_∞`, recorded as cell `n = 0`, law `limit`.
pub fn run_limit_reference(
    config: &ExperimentConfig,
    seed: u64,
    threads: Option<usize>,
    mut sink: impl FnMut(&[RunRecord], &CellTiming) -> Result<(), ExperimentError>,
) -> Result<(), ExperimentError> {
    config.validate()?;
    let model = config.model()?;
    let key = cell_key(0, LIMIT_LAW);
    let started = Instant::now();
    let reports = match config.limit_sampler {
        LimitSampler::Grid => {
            let counter = LimitCounter::new(&model, config.window, config.grid_points)?;
            with_pool(threads, || {
                run_cell(config.replicates, |r| Ok(counter.count(&mut stream(seed, key, r))))
            })??
        }
        LimitSampler::Spectral => with_pool(threads, || {
            run_cell(config.replicates, |r| {
                let path = sample_limit_spectral(&model, config.spectral_atoms, &mut stream(seed, key, r))?;
                let freq = if path.max_freq() > 0.0 { path.max_freq() } else { 1.0 };
                Ok(count_zeros_bracketed(
                    |t| path.eval(t),
                    config.window,
                    freq,
                    config.bracket.oversample,
                    config.bracket.tol,
                )?)
            })
        })??,
    };
    check_degenerate(0, LIMIT_LAW, &reports)?;
    let records = to_records(config, 0, LIMIT_LAW, reports);
    sink(
        &records,
        &CellTiming {
            cell_n: 0,
            law: LIMIT_LAW.into(),
            replicates: config.replicates,
            seconds: started.elapsed().as_secs_f64(),
        },
    )
}

/// Count statistics of one cell; degenerate records are excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell_n: usize,
    pub law: String,
    pub replicates: usize,
    pub degenerate: usize,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
    pub pmf: Vec<f64>,
}

impl CellSummary {
    pub fn from_records(records: &[RunRecord]) -> Option<Self> {
        let first = records.first()?;
        let counts: Vec<usize> = records
            .iter()
            .filter(|r| !r.report.degenerate)
            .map(|r| r.report.count)
            .collect();
        let m = counts.len();
        let mean = counts.iter().sum::<usize>() as f64 / m.max(1) as f64;
        let var = if m > 1 {
            counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        Some(Self {
            cell_n: first.cell_n,
            law: first.law.clone(),
            replicates: m,
            degenerate: records.len() - m,
            mean,
            var,
            se: (var / m.max(1) as f64).sqrt(),
            pmf: pmf(&counts),
        })
    }
}

/// Empirical PMF of integer counts on `0..=max`.
pub fn pmf(counts: &[usize]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    for &c in counts {
        hist[c] += 1;
    }
    let total = counts.len().max(1) as f64;
    hist.into_iter().map(|h| h as f64 / total).collect()
}

/// Distances between two cells' count laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub ks: f64,
    pub tv: f64,
    pub mean_diff: f64,
    pub pooled_se: f64,
}

/// KS statistic on the right-continuous CDFs and TV distance between PMFs.
pub fn compare_distributions(a: &[RunRecord], b: &[RunRecord]) -> Option<Comparison> {
    let sa = CellSummary::from_records(a)?;
    let sb = CellSummary::from_records(b)?;
    Some(compare_summaries(&sa, &sb))
}

pub fn compare_summaries(a: &CellSummary, b: &CellSummary) -> Comparison {
    let len = a.pmf.len().max(b.pmf.len());
    let get = |p: &[f64], k: usize| p.get(k).copied().unwrap_or(0.0);
    let (mut ca, mut cb, mut ks, mut tv) = (0.0, 0.0, 0.0f64, 0.0);
    for k in 0..len {
        let (pa, pb) = (get(&a.pmf, k), get(&b.pmf, k));
        ca += pa;
        cb += pb;
        ks = ks.max((ca - cb).abs());
        tv += (pa - pb).abs();
    }
    Comparison {
        ks,
        tv: 0.5 * tv,
        mean_diff: a.mean - b.mean,
        pooled_se: (a.se * a.se + b.se * b.se).sqrt(),
    }
}

/// Groups records by `(cell_n, law)`, keeping first-appearance order.
pub fn group_cells(records: &[RunRecord]) -> Vec<Vec<RunRecord>> {
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, String), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.cell_n, r.law.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.clone());
    }
    order.into_iter().map(|k| groups.remove(&k).expect("grouped")).collect()
}

/// Per-cell statistics and the distance of each cell to the limit cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStats {
    pub cells: Vec<CellSummary>,
    pub vs_limit: Vec<Option<Comparison>>,
}

impl SummaryStats {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let cells: Vec<CellSummary> = group_cells(records)
            .iter()
            .filter_map(|g| CellSummary::from_records(g))
            .collect();
        let limit = cells.iter().find(|c| c.law == LIMIT_LAW).cloned();
        let vs_limit = cells
            .iter()
            .map(|c| limit.as_ref().map(|l| compare_summaries(c, l)))
            .collect();
        Self { cells, vs_limit }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell_n,law,mean,var,se,ks_vs_limit,tv_vs_limit\n");
        for (c, cmp) in self.cells.iter().zip(&self.vs_limit) {
            let _ = write!(s, "{},{},", c.cell_n, c.law);
            for v in [c.mean, c.var, c.se] {
                write_f64(&mut s, v);
                s.push(',');
            }
            if let Some(cmp) = cmp {
                write_f64(&mut s, cmp.ks);
                s.push(',');
                write_f64(&mut s, cmp.tv);
            } else {
                s.push(',');
            }
            s.push('\n');
        }
        s
    }
}

/// One failed acceptance check of `compare`.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub description: String,
}

/// Checks law-vs-law agreement per `n` and every cell against the limit.
pub fn check_thresholds(stats: &SummaryStats, th: &CompareThresholds) -> Vec<Violation> {
    let mut out = Vec::new();
    let prelimit: Vec<&CellSummary> = stats.cells.iter().filter(|c| c.law != LIMIT_LAW).collect();
    for (i, a) in prelimit.iter().enumerate() {
        for b in prelimit.iter().skip(i + 1).filter(|b| b.cell_n == a.cell_n) {
            let cmp = compare_summaries(a, b);
            if cmp.mean_diff.abs() > th.mean_se * cmp.pooled_se {
                out.push(Violation {
                    description: format!(
                        "n={}: mean({}) - mean({}) = {:.5} exceeds {} pooled SE ({:.5})",
                        a.cell_n, a.law, b.law, cmp.mean_diff, th.mean_se, cmp.pooled_se
                    ),
                });
            }
            if cmp.ks > th.ks_laws {
                out.push(Violation {
                    description: format!("n={}: KS({}, {}) = {:.5} > {}", a.cell_n, a.law, b.law, cmp.ks, th.ks_laws),
                });
            }
        }
    }
    for (c, cmp) in stats.cells.iter().zip(&stats.vs_limit) {
        if let (Some(cmp), true) = (cmp, c.law != LIMIT_LAW) {
            if cmp.ks > th.ks_limit {
                out.push(Violation {
                    description: format!("n={}: KS({}, limit) = {:.5} > {}", c.cell_n, c.law, cmp.ks, th.ks_limit),
                });
            }
        }
    }
    out
}

/// Histogram of gaps between consecutive zeros, pooled over records.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacingHistogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl SpacingHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn masses(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Total-variation distance between normalized histograms.
    pub fn tv_distance(&self, other: &SpacingHistogram) -> f64 {
        let (a, b) = (self.masses(), other.masses());
        0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }
}

pub fn spacing_histogram(records: &[RunRecord], window: Window) -> SpacingHistogram {
    let bin_width = window.len() / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for r in records.iter().filter(|r| !r.report.degenerate) {
        for w in r.report.locations.windows(2) {
            let gap = w[1] - w[0];
            let bin = if bin_width > 0.0 {
                ((gap / bin_width) * (1.0 + 1e-12)).floor() as usize
            } else {
                0
            };
            counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
    }
    SpacingHistogram { bin_width, counts }
}

/// Sup errors of the three ergodic sums at one `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub n: usize,
    pub sup_c: f64,
    pub sup_d: f64,
    pub sup_e: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceDiagnostic {
    pub rows: Vec<DiagnosticRow>,
    /// Least-squares slopes of `log(sup error)` against `log n` for C, D, E.
    pub slopes: [f64; 3],
}

impl CovarianceDiagnostic {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,sup_c,sup_d,sup_e\n");
        for r in &self.rows {
            let _ = write!(s, "{},", r.n);
            write_f64(&mut s, r.sup_c);
            s.push(',');
            write_f64(&mut s, r.sup_d);
            s.push(',');
            write_f64(&mut s, r.sup_e);
            s.push('\n');
        }
        s.push_str("slope,");
        for (i, v) in self.slopes.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write_f64(&mut s, *v);
        }
        s.push('\n');
        s
    }
}

/// `(s, t)` pairs on a `side × side` grid over `window`.
pub fn default_pairs(window: Window, side: usize) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (0..side)
        .map(|i| {
            if side == 1 {
                window.a()
            } else {
                window.a() + window.len() * i as f64 / (side - 1) as f64
            }
        })
        .collect();
    pts.iter().flat_map(|&s| pts.iter().map(move |&t| (s, t))).collect()
}

/// Sup over `pairs` of `|C_n - ρ|`, `|D_n + ρ''|`, `|E_n + ρ'|` at lag `t - s`.
pub fn covariance_diagnostic(
    f: &PeriodicFunction,
    alpha: &FrequencySequence,
    ns: &[usize],
    pairs: &[(f64, f64)],
) -> Result<CovarianceDiagnostic, ExperimentError> {
    let model = CovarianceModel::new(f.clone())?;
    let limits: Vec<[f64; 3]> = pairs.iter().map(|&(s, t)| model.rho_triple(t - s)).collect();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let p_n = alpha.make_pn(n)?;
        let mut row = DiagnosticRow {
            n,
            sup_c: 0.0,
            sup_d: 0.0,
            sup_e: 0.0,
        };
        for (&(s, t), lim) in pairs.iter().zip(&limits) {
            let c = crate::kernels::ergodic_sum(SumKind::C, f, f, s, t, n, p_n)?;
            let d = crate::kernels::ergodic_sum(SumKind::D, f, f, s, t, n, p_n)?;
            let e = crate::kernels::ergodic_sum(SumKind::E, f, f, s, t, n, p_n)?;
            row.sup_c = row.sup_c.max((c - lim[0]).abs());
            row.sup_d = row.sup_d.max((d + lim[2]).abs());
            row.sup_e = row.sup_e.max((e + lim[1]).abs());
        }
        rows.push(row);
    }
    let slope = |pick: fn(&DiagnosticRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| pick(r) > 0.0)
            .map(|r| ((r.n as f64).ln(), pick(r).ln()))
            .collect();
        log_log_slope(&pts)
    };
    let slopes = [slope(|r| r.sup_c), slope(|r| r.sup_d), slope(|r| r.sup_e)];
    Ok(CovarianceDiagnostic { rows, slopes })
}

fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Uniform grid of `points` values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Default abscissae for kernel diagnostics: 2001 points on `[-50, 50]`.
pub fn default_kernel_grid() -> Vec<f64> {
    linspace(-50.0, 50.0, 2001)
}

/// `sup_x |K_n^{(order)}(x) - K^{(order)}(x)|` over `grid`.
pub fn kernel_sup_error(order: Order, n: usize, grid: &[f64]) -> Result<f64, ExperimentError> {
    let mut sup = 0.0f64;
    for &x in grid {
        let kn = kn_eval(order, n, x, KnMethod::Closed)?;
        sup = sup.max((kn - k_eval(order, x)).norm());
    }
    Ok(sup)
}
