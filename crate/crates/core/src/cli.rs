//! Command-line front end. Exit codes: 0 when every requested check passes,
//! 1 when a check fails, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::adversarial::{compare_with_float, make_instance, run_lower_bound};
use crate::analysis::{adaptivity_report, lemma_suite, write_adaptivity_csv};
use crate::error::Error;
use crate::harness::{derive_seed, run_experiment, sweep, ExperimentConfig};
use crate::optimizers::{compare_ftrl_with_o2b, AlphaSeq};
use crate::problems::{make_convex_lipschitz, NoiseModel, ProblemRegistry};
use crate::schedules::ScheduleKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "stochopt",
    version,
    about = "Stochastic optimization experiments and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config; prints the summary JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config's `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a config once per value of a dotted config path.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path, e.g. `noise.params.sigma`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, parsed as JSON where possible.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Certify the last-iterate lower bound for momentum SGD.
    LowerBound {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        l: f64,
        /// Also replay the run in exact rational arithmetic (T <= 30).
        #[arg(long)]
        exact: bool,
    },
    /// Randomized check of the technical inequalities; prints JSON reports.
    Lemmas {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fitted rate slopes across noise levels; prints a CSV table.
    Rates {
        /// Supplies the problem, method, T and seeds.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        sigmas: Vec<f64>,
        #[arg(long, default_value = "f_gap")]
        field: String,
    },
    /// FTRL-based SGDM against anytime online-to-batch FTRL on a shared
    /// gradient stream, for every gamma rule.
    Equivalence {
        #[arg(long = "T", default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `alpha_t = t^p`; 0 gives unit weights.
        #[arg(long, default_value_t = 0.0)]
        alpha_power: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parameter(_) | Error::Io(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn cli_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_stdout(&text)
}

/// Writes to standard output, treating a closed pipe as success.
fn write_stdout(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::from(e).into()),
        _ => Ok(()),
    }
}

fn load(config: &PathBuf, output: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut c = ExperimentConfig::from_path(config).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", config.display())),
        other => other.into(),
    })?;
    if output.is_some() {
        c.output_dir = output;
    }
    Ok(c)
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Returns whether all checks passed.
fn dispatch(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Run { config, output } => {
            let c = load(&config, output)?;
            let result = run_experiment(&c)?;
            print_json(&result)?;
            eprintln!("wrote {}", result.dir.display());
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let c = load(&config, output)?;
            let values: Vec<Value> = values.iter().map(|v| parse_value(v)).collect();
            let results = sweep(&c, &axis, &values)?;
            let table: Vec<Value> = results
                .iter()
                .map(|(v, r)| {
                    serde_json::json!({
                        "value": v,
                        "dir": r.dir.display().to_string(),
                        "config_hash": r.config_hash,
                        "aggregate": r.aggregate,
                    })
                })
                .collect();
            print_json(&table)?;
            Ok(true)
        }
        Command::LowerBound {
            horizon,
            beta,
            alpha,
            c,
            l,
            exact,
        } => {
            let inst = make_instance(horizon, l, beta, alpha, c)?;
            let (_, cert) = run_lower_bound(&inst, false);
            let mut passed = cert.passed;
            let mut doc = serde_json::to_value(&cert).map_err(Error::from)?;
            if exact {
                let agreement = compare_with_float(&inst)?;
                passed &= agreement.passed;
                doc["exact"] = serde_json::to_value(&agreement).map_err(Error::from)?;
            }
            print_json(&doc)?;
            Ok(passed)
        }
        Command::Lemmas { trials, seed } => {
            let reports = lemma_suite(trials, seed)?;
            print_json(&reports)?;
            Ok(reports.iter().all(|r| !r.violated))
        }
        Command::Rates {
            config,
            sigmas,
            field,
        } => {
            let c = load(&config, None)?;
            let plan = c.validate(&ProblemRegistry::with_builtins())?;
            let seeds: Vec<u64> = c
                .seeds
                .iter()
                .map(|&i| derive_seed(c.master_seed, i))
                .collect();
            let rows = adaptivity_report(
                &plan.problem,
                &plan.method,
                &sigmas,
                c.horizon,
                &seeds,
                &field,
            )?;
            let mut buf = Vec::new();
            write_adaptivity_csv(&rows, &mut buf)?;
            write_stdout(String::from_utf8_lossy(&buf).trim_end())?;
            Ok(true)
        }
        Command::Equivalence {
            horizon,
            dim,
            seed,
            alpha_power,
            tol,
        } => {
            let problem = make_convex_lipschitz(dim)?;
            let noise = NoiseModel::BoundedSupport { radius: 1.0 };
            let g = 2.0;
            let alphas = if alpha_power == 0.0 {
                AlphaSeq::Constant(1.0)
            } else {
                AlphaSeq::Power(alpha_power)
            };
            let rules = [
                ScheduleKind::FtrlConstT { c: 1.0, g, horizon },
                ScheduleKind::FtrlSqrtT { c: 1.0, g },
                ScheduleKind::FtrlAdaGlobal { alpha: 1.0, g },
                ScheduleKind::FtrlAdaCoord {
                    alpha: 1.0,
                    g_inf: g,
                },
            ];
            let reports = rules
                .into_iter()
                .map(|gamma| {
                    compare_ftrl_with_o2b(
                        &problem,
                        &noise,
                        alphas.clone(),
                        gamma,
                        horizon,
                        seed,
                        tol,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&reports)?;
            Ok(reports.iter().all(|r| r.passed))
        }
    }
}
