//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on data or domain errors, 2 on usage errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adjust::Method;
use crate::diagnostics::{bound_ratios, qq_pairs};
use crate::error::{Error, Result};
use crate::io::{
    load_csv, rho_with_note, write_csv_rows, write_json, write_qq_csv, BiasRow, CsvSchema,
    DiagnoseRecord, EstimateRecord, OutputFormat, RunConfig, SweepRow, SCHEMA_VERSION,
};
use crate::simulate::{
    derive_seed, generate_population, monte_carlo_bias, theta_sweep, DesignSpec, DgpParams,
};
use crate::variance::variance_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "sharpvar",
    version,
    about = "Sharp variance bounds for adjusted treatment effect estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point estimate, variance estimates and intervals for a CSV data set.
    Estimate(EstimateArgs),
    /// Simulation studies on generated populations.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Q-Q series of the adjusted outcomes plus a summary record.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long)]
    strata: Option<String>,
    #[arg(long, default_value = "lin")]
    estimator: Method,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    df_correct: bool,
}

impl InputArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            outcome_column: self.outcome.clone(),
            treatment_column: self.treatment.clone(),
            covariate_columns: self.covariates.clone(),
            strata_column: self.strata.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Destination of the Q-Q CSV (prob, q_treated, q_control).
    #[arg(long)]
    out: PathBuf,
    /// Evaluate the Q-Q pairs at i/G instead of the merged grid of both arms.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum SimulateCommand {
    /// Bias of each variance estimator against a Monte Carlo true variance.
    Bias(SimulateArgs),
    /// Mean cross-term estimates over a grid of effect-heterogeneity shares.
    ThetaSweep(SimulateArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Population sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Shares of units with a heterogeneous effect.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    theta: Vec<f64>,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta0: f64,
    /// `cre` (half treated), `cre:<n1>` or `bre:<pi>`.
    #[arg(long, default_value = "cre")]
    design: String,
    #[arg(long, default_value = "lin")]
    estimator: Method,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_design(spec: &str, n: usize) -> Result<DesignSpec> {
    let bad = || Error::InvalidParameter(format!("cannot parse design `{spec}`"));
    let design = match spec.split_once(':') {
        None if spec == "cre" => DesignSpec::Complete { n1: n / 2 },
        None if spec == "bre" => DesignSpec::Bernoulli { pi: 0.5 },
        Some(("cre", n1)) => DesignSpec::Complete {
            n1: n1.parse().map_err(|_| bad())?,
        },
        Some(("bre", pi)) => DesignSpec::Bernoulli {
            pi: pi.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    };
    design.validate(n)?;
    Ok(design)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::InvalidProbability(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, stdout, stderr),
        Command::Simulate(SimulateCommand::Bias(a)) => cmd_simulate(&a, false, stdout),
        Command::Simulate(SimulateCommand::ThetaSweep(a)) => cmd_simulate(&a, true, stdout),
        Command::Diagnose(a) => cmd_diagnose(&a, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

/// Resolves the estimator, downgrading Lin without covariates to DiM.
fn resolve_method(requested: Method, k: usize, stderr: &mut dyn Write) -> (Method, Option<String>) {
    if requested == Method::Lin && k == 0 {
        let msg = "lin requested without covariates; falling back to dim".to_string();
        let _ = writeln!(stderr, "warning: {msg}");
        (Method::Dim, Some(msg))
    } else {
        (requested, None)
    }
}

fn cmd_estimate(a: &EstimateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = RunConfig {
        estimator: a.input.estimator,
        alpha: a.input.alpha,
        df_correct: a.input.df_correct,
        seed: None,
        output_format: match a.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        },
        output_path: a.out.clone(),
    };
    config.validate()?;
    let data = load_csv(&a.input.input, &a.input.schema())?;
    let (method, warning) = resolve_method(config.estimator, data.n_covariates(), stderr);
    let (est, adj) = method.estimate(&data)?;
    let report = variance_report(&adj, est.tau_hat, config.alpha, config.df_correct)?;
    let record = EstimateRecord::new(method, &data, &adj, &report, warning);
    if record.degenerate {
        let _ = writeln!(stderr, "warning: degenerate variance estimate");
    }
    with_output(config.output_path.as_deref(), stdout, |w| {
        match config.output_format {
            OutputFormat::Json => write_json(w, &record),
            OutputFormat::Csv => write_csv_rows(w, std::slice::from_ref(&record)),
        }
    })
}

fn cmd_diagnose(a: &DiagnoseArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    RunConfig {
        alpha: a.input.alpha,
        ..RunConfig::default()
    }
    .validate()?;
    let data = load_csv(&a.input.input, &a.input.schema())?;
    let (method, warning) = resolve_method(a.input.estimator, data.n_covariates(), stderr);
    let (est, adj) = method.estimate(&data)?;
    let qq = qq_pairs(&adj, a.grid)?;
    let report = variance_report(&adj, est.tau_hat, a.input.alpha, a.input.df_correct)?;
    let ratios = bound_ratios(&report).ok();
    let (rho, rho_note) = rho_with_note(&adj);
    with_output(Some(&a.out), stdout, |w| write_qq_csv(w, &qq))?;
    let record = DiagnoseRecord {
        schema_version: SCHEMA_VERSION,
        estimator: method,
        n: data.len(),
        n_treated: data.n_treated(),
        n_control: data.n_control(),
        qq_points: qq.len(),
        rho,
        rho_note,
        conv_ratio: ratios.map(|r| r.conv_ratio),
        cs_ratio: ratios.map(|r| r.cs_ratio),
        conv_reduction: ratios.map(|r| r.conv_reduction),
        warning,
    };
    write_json(stdout, &record)
}

fn cmd_simulate(a: &SimulateArgs, sweep: bool, stdout: &mut dyn Write) -> Result<()> {
    if a.n.is_empty() || a.theta.is_empty() {
        return Err(Error::InvalidParameter("empty --n or --theta list".into()));
    }
    if let Some(t) = a.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParameter(format!(
            "theta = {t} outside [0, 1]"
        )));
    }
    let params = |n: usize, theta: f64| DgpParams {
        alpha0: a.alpha0,
        beta0: a.beta0,
        ..DgpParams::new(n, theta)
    };
    if sweep {
        let mut rows = Vec::new();
        for &n in &a.n {
            let design = parse_design(&a.design, n)?;
            let curve = theta_sweep(&a.theta, &params(n, 0.0), &design, a.reps, a.seed)?;
            rows.extend(curve.points.iter().map(|p| SweepRow::new(n, p, &design)));
        }
        with_output(a.out.as_deref(), stdout, |w| write_csv_rows(w, &rows))
    } else {
        let mut rows = Vec::new();
        for &n in &a.n {
            let design = parse_design(&a.design, n)?;
            for &theta in &a.theta {
                let pop_seed = derive_seed(a.seed, n as u64, theta.to_bits());
                let pop = generate_population(&params(n, theta), pop_seed)?;
                let summary = monte_carlo_bias(&pop, &design, a.estimator, a.reps, a.seed)?;
                rows.push(BiasRow::new(&summary, theta, &design));
            }
        }
        with_output(a.out.as_deref(), stdout, |w| write_csv_rows(w, &rows))
    }
}
