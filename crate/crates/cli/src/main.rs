use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dimercool::config::{OutputFormat, SweepConfig};
use dimercool::pipeline::{self, NmaxSetting, TransientSample};
use dimercool::sweep::{self, Series};
use dimercool::{selftest, validation, Error};

#[derive(Parser)]
#[command(name = "dimercool", version, about = "Phonon cooling and entanglement of a driven qubit pair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "csv|json")]
    format: Option<OutputFormat>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Fock truncation.
    #[arg(long, value_name = "N|auto")]
    nmax: Option<NmaxSetting>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter and tabulate the steady-state observables.
    Sweep(Common),
    /// All observables at a single parameter set.
    Point {
        #[command(flatten)]
        common: Common,
        /// Value of the sweep variable (defaults to `start`).
        #[arg(long)]
        at: Option<f64>,
        /// Also relax from the thermal state up to this time and report C(t).
        #[arg(long, value_name = "T")]
        transient: Option<f64>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Compare reduced equations with the full Liouvillian references.
    Validate(Common),
    /// Run the built-in invariant suite.
    Selftest {
        #[arg(long, value_name = "csv|json")]
        format: Option<OutputFormat>,
    },
}

/// Exit codes: 0 success, 1 usage or config error, 2 solver failure,
/// 3 validation threshold exceeded.
enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::Io(_) => Failure::Usage(e.into()),
            other => Failure::Solver(other.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(c: &Common) -> Result<SweepConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => SweepConfig::load(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?,
        None => SweepConfig::default(),
    };
    match (c.nmax, cfg.n_max) {
        (Some(NmaxSetting::Auto { .. }), NmaxSetting::Auto { cap }) => cfg.n_max = NmaxSetting::Auto { cap },
        (Some(n), _) => cfg.n_max = n,
        (None, _) => {}
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(usage)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(usage)?;
    writeln!(out).map_err(usage)?;
    out.flush().map_err(usage)
}

fn jobs(c: &Common) -> usize {
    c.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_sweep(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let rows = sweep::run_sweep(&cfg, jobs(c))?;
    let mut out = open_output(cfg.output.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => sweep::write_csv(&mut out, &rows).map_err(usage)?,
        OutputFormat::Json => sweep::write_json(&mut out, &cfg, &rows).map_err(usage)?,
    }
    out.flush().map_err(usage)?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.is_ok()).collect();
    if let Some(first) = failed.first() {
        return Err(Failure::Solver(anyhow::anyhow!(
            "{} of {} points failed; first at {}: {}",
            failed.len(),
            rows.len(),
            first.sweep_value,
            first.status
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct PointReport<'a> {
    sweep_variable: &'static str,
    sweep_value: f64,
    row: &'a sweep::SweepRow,
    model: &'a dimercool::Model,
    bare_density_matrix: &'a dimercool::entanglement::BareDensityMatrix,
    concurrence: &'a dimercool::entanglement::Concurrence,
    phonon_distribution: Vec<f64>,
    transient: Option<Vec<TransientSample>>,
}

fn run_point(c: &Common, at: Option<f64>, transient: Option<f64>, samples: usize) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let value = at.unwrap_or(cfg.start);
    let params = cfg.params_at(value);
    params.validate()?;
    let row = sweep::run_one(&cfg, Series::Coupled, value);
    let mut out = open_output(cfg.output.as_deref())?;
    if cfg.format == OutputFormat::Csv {
        if transient.is_some() {
            return Err(usage(anyhow::anyhow!("--transient needs --format json")));
        }
        sweep::write_csv(&mut out, std::slice::from_ref(&row)).map_err(usage)?;
        out.flush().map_err(usage)?;
        return if row.is_ok() { Ok(()) } else { Err(Failure::Solver(anyhow::anyhow!("{}", row.status))) };
    }
    let r = pipeline::evaluate_point(params, cfg.n_max)?;
    let transient = match transient {
        Some(t_final) => {
            if !(t_final > 0.0) || samples == 0 {
                return Err(usage(anyhow::anyhow!("--transient needs T > 0 and --samples >= 1")));
            }
            let times: Vec<f64> = (1..=samples).map(|k| t_final * k as f64 / samples as f64).collect();
            Some(pipeline::transient(&r.model, r.solution.n_max(), &times, 1e-8)?)
        }
        None => None,
    };
    let report = PointReport {
        sweep_variable: cfg.sweep_variable.name(),
        sweep_value: value,
        row: &row,
        model: &r.model,
        bare_density_matrix: &r.bare,
        concurrence: &r.concurrence,
        phonon_distribution: r.solution.state.phonon_distribution(),
        transient,
    };
    write_json(&mut out, &report)
}

fn run_validate(c: &Common) -> Result<i32, Failure> {
    let cfg = load_config(c)?;
    let report = validation::run_validation(&cfg)?;
    let mut out = open_output(cfg.output.as_deref())?;
    write_json(&mut out, &report)?;
    if report.points.iter().any(|p| p.regime_breakdown) {
        eprintln!("note: bare and dressed references differ by more than 10% at some points (secular regime breakdown)");
    }
    if !report.passed {
        eprintln!(
            "reduced vs dressed deviation {:.3e} exceeds threshold {:.1e}",
            report.max_reduced_vs_dressed, report.threshold
        );
    }
    Ok(report.exit_code())
}

fn run_selftest(format: Option<OutputFormat>) -> Result<i32, Failure> {
    let report = selftest::run();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if format == Some(OutputFormat::Json) {
        write_json(&mut out, &report)?;
    } else {
        for c in &report.checks {
            writeln!(out, "{} {:<24} {:>7.2}s  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail)
                .map_err(usage)?;
        }
    }
    Ok(if report.passed() { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sweep(c) => run_sweep(c).map(|_| 0),
        Command::Point { common, at, transient, samples } => run_point(common, *at, *transient, *samples).map(|_| 0),
        Command::Validate(c) => run_validate(c),
        Command::Selftest { format } => run_selftest(*format),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
