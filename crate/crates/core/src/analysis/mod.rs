//! Rate-slope estimation, iterate selection, noise-adaptivity tables and the
//! randomized check of the technical inequalities.

mod lemmas;

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::optimizers::{default_x1, noise_rng, run, Method, Oracle, Record, RunOptions, Trace};
use crate::problems::{NoiseModel, Problem};

pub use lemmas::{cosine_sum, lemma_suite, LemmaReport, LEMMA_IDS, LEMMA_SLACK};

/// Least-squares line through transformed trace values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Inclusive range of `t` used in the fit.
    pub window: (usize, usize),
}

/// Default fit window: the second half `[T/2, T]` of the run.
pub fn default_window(trace: &Trace) -> Result<(usize, usize)> {
    let last = trace.last()?.t;
    Ok(((last / 2).max(1), last))
}

fn windowed(
    trace: &Trace,
    field: &str,
    window: Option<(usize, usize)>,
) -> Result<(Vec<(usize, f64)>, (usize, usize))> {
    let window = match window {
        Some(w) => w,
        None => default_window(trace)?,
    };
    let (lo, hi) = window;
    let first = trace.records.first().ok_or(Error::EmptyTrace)?.t;
    let last = trace.last()?.t;
    if lo > hi || lo < first || hi > last {
        return Err(Error::param(format!(
            "window [{lo}, {hi}] outside trace range [{first}, {last}]"
        )));
    }
    let pts: Vec<_> = trace
        .column(field)?
        .into_iter()
        .filter(|&(t, _)| t >= lo && t <= hi)
        .collect();
    if pts.len() < 2 {
        return Err(Error::param(format!(
            "window [{lo}, {hi}] holds {} recorded points, need 2",
            pts.len()
        )));
    }
    if let Some(&(t, value)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::NonPositive { t, value });
    }
    Ok((pts, window))
}

fn least_squares(xs: &[f64], ys: &[f64], window: (usize, usize)) -> RateFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        window,
    }
}

/// Fits `ln(field) = slope * ln(t) + intercept`; the slope estimates `-p` in
/// an `O(t^-p)` rate. `window = None` uses [`default_window`].
pub fn fit_loglog_slope(
    trace: &Trace,
    field: &str,
    window: Option<(usize, usize)>,
) -> Result<RateFit> {
    let (pts, window) = windowed(trace, field, window)?;
    let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    Ok(least_squares(&xs, &ys, window))
}

/// Fits `ln(field) = slope * t + intercept`: a good fit means linear
/// (geometric) convergence.
pub fn fit_semilog(trace: &Trace, field: &str, window: Option<(usize, usize)>) -> Result<RateFit> {
    let (pts, window) = windowed(trace, field, window)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    Ok(least_squares(&xs, &ys, window))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub loglog: RateFit,
    pub semilog: RateFit,
    /// The decay is better explained as geometric than as a power law.
    pub super_polynomial: bool,
}

pub fn classify_decay(
    trace: &Trace,
    field: &str,
    window: Option<(usize, usize)>,
) -> Result<DecayFit> {
    let loglog = fit_loglog_slope(trace, field, window)?;
    let semilog = fit_semilog(trace, field, window)?;
    Ok(DecayFit {
        loglog,
        semilog,
        super_polynomial: semilog.slope < 0.0 && semilog.r_squared > loglog.r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    Last,
    BestGrad,
    BestF,
    /// `x_t` with probability `eta_t / sum_i eta_i` over the recorded iterates.
    EtaWeightedRandom,
}

pub fn select_iterate<'a, R: Rng + ?Sized>(
    trace: &'a Trace,
    rule: SelectionRule,
    rng: &mut R,
) -> Result<&'a Record> {
    let records = &trace.records;
    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let argmin = |key: fn(&Record) -> f64| {
        records
            .iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .expect("non-empty")
    };
    Ok(match rule {
        SelectionRule::Last => records.last().expect("non-empty"),
        SelectionRule::BestGrad => argmin(|r| r.grad_norm_sq),
        SelectionRule::BestF => argmin(|r| r.f_gap),
        SelectionRule::EtaWeightedRandom => {
            let dist = WeightedIndex::new(records.iter().map(|r| r.eta.max(0.0)))
                .map_err(|e| Error::param(format!("step-size weights: {e}")))?;
            &records[dist.sample(rng)]
        }
    })
}

/// One row of an adaptivity table: all seeds at one noise level.
#[derive(Clone, Debug, Serialize)]
pub struct AdaptivityRow {
    pub sigma: f64,
    pub slopes: Vec<f64>,
    pub median_slope: f64,
    pub median_r_squared: f64,
    /// At `sigma = 0`: the median run decays geometrically.
    pub geometric_decay: Option<bool>,
    /// Seeds whose run diverged; they are left out of the statistics.
    pub diverged: Vec<u64>,
}

/// Runs `method` over every `(sigma, seed)` pair with affine-variance noise
/// `E||xi||^2 = sigma^2` and fits the decay of `field` over `[T/2, T]`.
pub fn adaptivity_report(
    problem: &Problem,
    method: &Method,
    sigma_grid: &[f64],
    horizon: usize,
    seeds: &[u64],
    field: &str,
) -> Result<Vec<AdaptivityRow>> {
    if !sigma_grid.contains(&0.0) {
        return Err(Error::param("sigma grid must include 0"));
    }
    if seeds.is_empty() {
        return Err(Error::param("at least one seed is required"));
    }
    let jobs: Vec<(f64, u64)> = sigma_grid
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let fits: Vec<Result<Option<DecayFit>>> = jobs
        .par_iter()
        .map(|&(sigma, seed)| {
            let noise = NoiseModel::AffineVariance {
                a: 0.0,
                b: sigma * sigma,
            };
            noise.validate()?;
            let mut source = Oracle::new(problem, &noise, noise_rng(seed));
            let x1 = default_x1(problem.dim(), seed);
            let opts = RunOptions {
                seed,
                ..RunOptions::default()
            };
            let trace = run(problem, method, &mut source, horizon, &x1, &opts)?;
            if trace.is_diverged() {
                return Ok(None);
            }
            classify_decay(&trace, field, None).map(Some)
        })
        .collect();

    let mut rows = Vec::with_capacity(sigma_grid.len());
    for (k, &sigma) in sigma_grid.iter().enumerate() {
        let mut slopes = Vec::new();
        let mut r2 = Vec::new();
        let mut geometric = Vec::new();
        let mut diverged = Vec::new();
        for (i, &seed) in seeds.iter().enumerate() {
            match fits[k * seeds.len() + i].as_ref() {
                Err(e) => return Err(Error::param(format!("sigma={sigma} seed={seed}: {e}"))),
                Ok(None) => diverged.push(seed),
                Ok(Some(fit)) => {
                    slopes.push(fit.loglog.slope);
                    r2.push(fit.loglog.r_squared);
                    geometric.push(if fit.super_polynomial { 1.0 } else { 0.0 });
                }
            }
        }
        rows.push(AdaptivityRow {
            sigma,
            median_slope: if slopes.is_empty() {
                f64::NAN
            } else {
                linalg::median(&slopes)
            },
            median_r_squared: if r2.is_empty() {
                f64::NAN
            } else {
                linalg::median(&r2)
            },
            geometric_decay: (sigma == 0.0 && !geometric.is_empty())
                .then(|| linalg::median(&geometric) >= 0.5),
            slopes,
            diverged,
        });
    }
    Ok(rows)
}

pub const ADAPTIVITY_CSV_HEADER: &str =
    "sigma,median_slope,min_slope,max_slope,median_r_squared,geometric_decay,diverged";

pub fn write_adaptivity_csv<W: Write>(rows: &[AdaptivityRow], mut w: W) -> Result<()> {
    writeln!(w, "{ADAPTIVITY_CSV_HEADER}")?;
    for r in rows {
        let min = r.slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let geo = r.geometric_decay.map_or(String::new(), |g| g.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.sigma,
            r.median_slope,
            min,
            max,
            r.median_r_squared,
            geo,
            r.diverged.len()
        )?;
    }
    Ok(())
}
