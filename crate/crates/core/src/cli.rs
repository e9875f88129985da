//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure,
//! 3 acceptance threshold violated in `compare`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::experiments::{
    check_thresholds, covariance_diagnostic, default_kernel_grid, default_pairs, kernel_sup_error,
    run_limit_reference, run_universality, CellTiming, ExperimentConfig, ExperimentError, RunRecord,
    SummaryStats,
};
use crate::kernels::Order;
use crate::periodic_fn::PeriodicFunction;
use crate::signals::FrequencySequence;
use crate::zeros::{kac_rice_expected, write_f64, Window};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "locuni", version, about = "Zeros of localized random periodic signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count zeros of X_n for every (n, law) cell.
    Simulate(RunArgs),
    /// Count zeros of the Gaussian limit process.
    Limit(RunArgs),
    /// Run both campaigns and check the agreement thresholds.
    Compare(RunArgs),
    /// Expected zero count of the limit process on a window.
    Kacrice {
        #[arg(long = "fn")]
        function: String,
        #[arg(long, allow_hyphen_values = true)]
        window: String,
    },
    /// sup |K_n - K| on the default grid.
    DiagKernels {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        order: u8,
    },
    /// Sup errors of the ergodic sums against their series limits.
    DiagCov {
        #[arg(long = "fn", default_value = "kind=cos")]
        function: String,
        #[arg(long, default_value = "golden")]
        alpha: String,
        #[arg(long, value_delimiter = ',', default_value = "500,2000,8000,32000")]
        n: Vec<usize>,
        #[arg(long, default_value = "0,3.141592653589793", allow_hyphen_values = true)]
        window: String,
        /// Points per axis of the (s, t) grid.
        #[arg(long, default_value_t = 10)]
        side: usize,
    },
    /// Fourier coefficients of a shape.
    Spectrum {
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        truncation: Option<usize>,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Config file with [section] headers and key = value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override, as section.key=value.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for records.jsonl, summary.csv and timing.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dump_config: bool,
}

enum Failure {
    Experiment(ExperimentError),
    Threshold(Vec<String>),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Experiment(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Experiment(e.into())
    }
}

fn exit_code(e: &ExperimentError) -> i32 {
    match e {
        ExperimentError::Config { .. } | ExperimentError::Io(_) => EXIT_CONFIG,
        ExperimentError::Numerical(_) | ExperimentError::Degenerate { .. } => EXIT_NUMERICAL,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Experiment(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Threshold(lines)) => {
            for l in lines {
                let _ = writeln!(err, "threshold violated: {l}");
            }
            EXIT_THRESHOLD
        }
    }
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T, ExperimentError>
where
    T::Err: Into<ExperimentError>,
{
    value.parse::<T>().map_err(Into::into)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => campaign(args, Campaign::Simulate, out),
        Command::Limit(args) => campaign(args, Campaign::Limit, out),
        Command::Compare(args) => campaign(args, Campaign::Compare, out),
        Command::Kacrice { function, window } => {
            let f: PeriodicFunction = parse(&function)?;
            let w: Window = parse(&window)?;
            let v = kac_rice_expected(&f, w).map_err(ExperimentError::from)?;
            writeln!(out, "{v}")?;
            Ok(())
        }
        Command::DiagKernels { n, order } => {
            let order = Order::try_from(order).map_err(ExperimentError::from)?;
            let grid = default_kernel_grid();
            let mut s = String::from("n,order,sup_error\n");
            for &n in &n {
                let e = kernel_sup_error(order, n, &grid)?;
                let _ = write!(s, "{n},{},", order.index());
                write_f64(&mut s, e);
                s.push('\n');
            }
            out.write_all(s.as_bytes())?;
            Ok(())
        }
        Command::DiagCov {
            function,
            alpha,
            n,
            window,
            side,
        } => {
            let f: PeriodicFunction = parse(&function)?;
            let seq: FrequencySequence = parse(&alpha)?;
            let w: Window = parse(&window)?;
            if side == 0 {
                return Err(ExperimentError::config("side", "must be at least 1").into());
            }
            let diag = covariance_diagnostic(&f, &seq, &n, &default_pairs(w, side))?;
            out.write_all(diag.to_csv().as_bytes())?;
            Ok(())
        }
        Command::Spectrum { function, truncation } => {
            let f: PeriodicFunction = parse(&function)?;
            let p = truncation.unwrap_or_else(|| f.default_truncation());
            let spec = f.fourier_spectrum(p as i64).map_err(ExperimentError::from)?;
            let mut s = String::from("p,re,im,abs2\n");
            for (p, c) in spec.nonnegative().iter().enumerate() {
                let _ = write!(s, "{p},");
                for v in [c.re, c.im, c.norm_sqr()] {
                    write_f64(&mut s, v);
                    s.push(',');
                }
                s.pop();
                s.push('\n');
            }
            s.push_str("tail_energy_bound,");
            write_f64(&mut s, spec.tail_energy_bound());
            s.push_str(",,\n");
            out.write_all(s.as_bytes())?;
            Ok(())
        }
    }
}

impl From<crate::periodic_fn::FunctionError> for Failure {
    fn from(e: crate::periodic_fn::FunctionError) -> Self {
        Failure::Experiment(e.into())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Campaign {
    Simulate,
    Limit,
    Compare,
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ExperimentError::config("config", format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn campaign(args: RunArgs, kind: Campaign, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = resolve_config(&args)?;
    if args.dump_config {
        out.write_all(cfg.to_text().as_bytes())?;
        return Ok(());
    }
    let seed = args
        .seed
        .ok_or_else(|| ExperimentError::config("seed", "--seed is required for random subcommands"))?;
    if args.threads == Some(0) {
        return Err(ExperimentError::config("threads", "must be at least 1").into());
    }

    let mut writers = match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let records = BufWriter::new(File::create(dir.join("records.jsonl"))?);
            let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
            writeln!(timing, "cell_n,law,replicates,wall_seconds")?;
            Some((records, timing))
        }
        None => None,
    };
    let mut all: Vec<RunRecord> = Vec::new();
    let mut sink = |records: &[RunRecord], timing: &CellTiming| -> Result<(), ExperimentError> {
        if let Some((rec, tim)) = writers.as_mut() {
            for r in records {
                writeln!(rec, "{}", r.to_json_line())?;
            }
            rec.flush()?;
            writeln!(tim, "{},{},{},{:.6}", timing.cell_n, timing.law, timing.replicates, timing.seconds)?;
        }
        all.extend_from_slice(records);
        Ok(())
    };
    if kind != Campaign::Limit {
        run_universality(&cfg, seed, args.threads, &mut sink)?;
    }
    if kind != Campaign::Simulate {
        run_limit_reference(&cfg, seed, args.threads, &mut sink)?;
    }
    if let Some((mut rec, mut tim)) = writers {
        rec.flush()?;
        tim.flush()?;
    }

    let stats = SummaryStats::from_records(&all);
    let csv = stats.to_csv();
    if let Some(dir) = &args.out {
        fs::write(dir.join("summary.csv"), &csv)?;
    }
    out.write_all(csv.as_bytes())?;
    if kind == Campaign::Compare {
        let violations = check_thresholds(&stats, &cfg.thresholds);
        if !violations.is_empty() {
            return Err(Failure::Threshold(violations.into_iter().map(|v| v.description).collect()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("locuni").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn kacrice_cosine() {
        let (code, out, _) = call(&["kacrice", "--fn", "kind=cos", "--window", "0,3.141592653589793"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "0.5773502691896258");
        let (code, out, _) = call(&["kacrice", "--fn", "kind=cos", "--window", "0,3.14159265358979"]);
        assert_eq!(code, 0);
        let v: f64 = out.trim().parse().unwrap();
        assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bad_law_names_field() {
        let (code, _, err) = call(&["simulate", "--seed", "1", "--set", "signal.laws=cauchy"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("`law`"), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let (code, _, err) = call(&["limit"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("`seed`"));
    }

    #[test]
    fn unknown_subcommand_is_config_error() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn diag_kernels_matches_library() {
        let (code, out, _) = call(&["diag-kernels", "--n", "10,100", "--order", "0"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "n,order,sup_error");
        let grid = default_kernel_grid();
        for (line, n) in lines[1..].iter().zip([10usize, 100]) {
            let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(v, kernel_sup_error(Order::Zero, n, &grid).unwrap());
        }
        assert_eq!(call(&["diag-kernels", "--n", "10", "--order", "3"]).0, EXIT_CONFIG);
    }
}
