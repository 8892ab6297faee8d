//! Config-driven experiments: run a method over many seeds, write one CSV
//! per run plus a summary, and sweep a config value.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::analysis::{fit_loglog_slope, RateFit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optimizers::{default_x1, noise_rng, run, Method, Oracle, RunOptions, RunStatus, Trace};
use crate::problems::ProblemRegistry;

pub use config::{
    derive_seed, ExperimentConfig, MomentumSpec, NoiseSpec, OptimizerSpec, Plan, ProblemSpec,
    ScheduleSpec, METRICS, SCHEMA_VERSION,
};

/// Environment variable overriding the directory relative output paths
/// resolve against (default `results`).
pub const OUTPUT_ROOT_ENV: &str = "STOCHOPT_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

/// Where `config` writes: its `output_dir` (or its name, or a hash-derived
/// name) under the output root. Absolute paths are used as they are.
pub fn experiment_dir(config: &ExperimentConfig) -> PathBuf {
    let rel = config.output_dir.clone().unwrap_or_else(|| {
        PathBuf::from(
            config
                .name
                .clone()
                .unwrap_or_else(|| format!("experiment-{}", &config.hash()[..12])),
        )
    });
    output_root().join(rel)
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(RateFit),
    Failed { error: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    /// Position in the config's seed list.
    pub run: usize,
    pub seed_index: u64,
    pub seed: u64,
    pub csv: String,
    pub status: RunStatus,
    /// `f(x_T) - f*`.
    pub f_gap_at_t: f64,
    /// `f(x_{T+1}) - f*`.
    pub final_gap: f64,
    pub gap_relative: bool,
    pub fits: BTreeMap<String, FitOutcome>,
}

/// Statistics over the runs that completed.
#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub completed: usize,
    pub diverged: usize,
    pub mean_f_gap_at_t: Option<f64>,
    pub median_f_gap_at_t: Option<f64>,
    pub mean_final_gap: Option<f64>,
    pub median_final_gap: Option<f64>,
    /// Median log-log slope per metric over the runs whose fit succeeded.
    pub median_slopes: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub schema: u32,
    pub version: String,
    pub config_hash: String,
    pub name: Option<String>,
    pub problem: String,
    pub method: Method,
    pub noise: Value,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
    #[serde(skip)]
    pub dir: PathBuf,
    #[serde(skip)]
    pub traces: Vec<Trace>,
}

impl ExperimentResult {
    pub fn summary_path(&self) -> PathBuf {
        self.dir.join("summary.json")
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    seed_index: u64,
    seed: u64,
    method: &'a Method,
    noise: Value,
    status: RunStatus,
    thin: usize,
    final_gap: f64,
    gap_relative: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_point: Option<&'a [f64]>,
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        (Some(linalg::mean(values)), Some(linalg::median(values)))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Validates `config` with the built-in problems, then runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &ProblemRegistry::with_builtins())
}

/// Runs every seed of `config` (in parallel), writing
/// `run-KKK-seed-I.csv` / `.json` per run and `summary.json` into
/// [`experiment_dir`]. Diverged runs are recorded, not fatal.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    registry: &ProblemRegistry,
) -> Result<ExperimentResult> {
    let plan = config.validate(registry)?;
    execute(config, &plan, experiment_dir(config))
}

fn execute(config: &ExperimentConfig, plan: &Plan, dir: PathBuf) -> Result<ExperimentResult> {
    fs::create_dir_all(&dir)?;
    let hash = config.hash();
    let noise_echo = plan.noise.echo();
    let dim = plan.problem.dim();

    let traces: Vec<Trace> = config
        .seeds
        .par_iter()
        .map(|&index| {
            let seed = derive_seed(config.master_seed, index);
            let x1 = config.x1.clone().unwrap_or_else(|| default_x1(dim, seed));
            let mut source = Oracle::new(&plan.problem, &plan.noise, noise_rng(seed));
            let opts = RunOptions {
                thin: config.thin,
                keep_iterates: false,
                seed,
            };
            run(
                &plan.problem,
                &plan.method,
                &mut source,
                config.horizon,
                &x1,
                &opts,
            )
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(traces.len());
    for (k, (trace, &index)) in traces.iter().zip(&config.seeds).enumerate() {
        let stem = format!("run-{k:03}-seed-{index}");
        let csv = format!("{stem}.csv");
        fs::write(dir.join(&csv), trace.to_csv())?;
        write_json(
            &dir.join(format!("{stem}.json")),
            &Sidecar {
                config_hash: &hash,
                seed_index: index,
                seed: trace.seed,
                method: &plan.method,
                noise: noise_echo.clone(),
                status: trace.status,
                thin: trace.thin,
                final_gap: trace.final_gap,
                gap_relative: trace.gap_relative,
                final_point: config
                    .record_final_point
                    .then_some(&trace.final_iterate[..]),
            },
        )?;
        let fits = config
            .metrics
            .iter()
            .map(|m| {
                let outcome = match fit_loglog_slope(trace, m, None) {
                    Ok(fit) => FitOutcome::Fit(fit),
                    Err(e) => FitOutcome::Failed {
                        error: e.to_string(),
                    },
                };
                (m.clone(), outcome)
            })
            .collect();
        runs.push(RunSummary {
            run: k,
            seed_index: index,
            seed: trace.seed,
            csv,
            status: trace.status,
            f_gap_at_t: trace.last()?.f_gap,
            final_gap: trace.final_gap,
            gap_relative: trace.gap_relative,
            fits,
        });
    }

    let done: Vec<&RunSummary> = runs
        .iter()
        .filter(|r| r.status == RunStatus::Completed)
        .collect();
    let at_t: Vec<f64> = done.iter().map(|r| r.f_gap_at_t).collect();
    let finals: Vec<f64> = done.iter().map(|r| r.final_gap).collect();
    let (mean_f_gap_at_t, median_f_gap_at_t) = stats(&at_t);
    let (mean_final_gap, median_final_gap) = stats(&finals);
    let median_slopes = config
        .metrics
        .iter()
        .map(|m| {
            let slopes: Vec<f64> = done
                .iter()
                .filter_map(|r| match r.fits.get(m) {
                    Some(FitOutcome::Fit(f)) => Some(f.slope),
                    _ => None,
                })
                .collect();
            (m.clone(), stats(&slopes).1)
        })
        .collect();

    let result = ExperimentResult {
        schema: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        name: config.name.clone(),
        problem: config.problem.id.clone(),
        method: plan.method.clone(),
        noise: noise_echo,
        horizon: config.horizon,
        aggregate: Aggregate {
            completed: done.len(),
            diverged: runs.len() - done.len(),
            mean_f_gap_at_t,
            median_f_gap_at_t,
            mean_final_gap,
            median_final_gap,
            median_slopes,
        },
        runs,
        dir,
        traces,
    };
    write_json(&result.summary_path(), &result)?;
    Ok(result)
}

/// Renders a sweep value for a directory name.
fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs `config` once per value of the dotted `axis`, each into
/// `<dir>/<axis>=<value>`. All variants are validated before any runs;
/// results come back in the order of `values`.
pub fn sweep(
    config: &ExperimentConfig,
    axis: &str,
    values: &[Value],
) -> Result<Vec<(Value, ExperimentResult)>> {
    sweep_with(config, axis, values, &ProblemRegistry::with_builtins())
}

pub fn sweep_with(
    config: &ExperimentConfig,
    axis: &str,
    values: &[Value],
    registry: &ProblemRegistry,
) -> Result<Vec<(Value, ExperimentResult)>> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "the value list is empty"));
    }
    let base = experiment_dir(config);
    let variants: Vec<(Value, ExperimentConfig, Plan, PathBuf)> = values
        .iter()
        .map(|v| {
            let variant = config.with_value(axis, v.clone())?;
            let plan = variant.validate(registry)?;
            let dir = base.join(format!("{axis}={}", value_label(v)));
            Ok((v.clone(), variant, plan, dir))
        })
        .collect::<Result<_>>()?;
    variants
        .into_par_iter()
        .map(|(v, variant, plan, dir)| Ok((v, execute(&variant, &plan, dir)?)))
        .collect()
}
