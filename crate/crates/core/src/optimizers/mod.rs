//! Optimization loops: SGD, heavy-ball and EMA momentum, Delayed AdaGrad
//! with momentum, FTRL-based SGDM and the anytime online-to-batch reference.
//!
//! Every loop records the metrics of `x_t` before stepping, honours the
//! schedule's information contract, and stops (without erroring) when the
//! iterate diverges.

mod source;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{NoiseModel, Problem};
use crate::schedules::{InfoPattern, Schedule, ScheduleKind, Step};

pub use source::{FnSource, GradientSource, Oracle, Recorder, Replay};
pub use trace::{Record, RunStatus, Trace, CSV_HEADER};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_RADIUS: f64 = 1e12;

/// Weights `alpha_t` of FTRL-based SGDM and online-to-batch averaging.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum AlphaSeq {
    Constant(f64),
    /// `alpha_t = t^p`.
    Power(f64),
    /// `alpha_1, alpha_2, ...`; must cover `T + 1` entries.
    Explicit(Vec<f64>),
}

impl AlphaSeq {
    pub fn get(&self, t: usize) -> Result<f64> {
        let a = match self {
            AlphaSeq::Constant(a) => *a,
            AlphaSeq::Power(p) => (t as f64).powf(*p),
            AlphaSeq::Explicit(v) => *v
                .get(t - 1)
                .ok_or_else(|| Error::param(format!("alpha sequence has no entry for t={t}")))?,
        };
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::param(format!("alpha_{t} must be positive, got {a}")))
        }
    }
}

/// Momentum coefficients `beta_t` of the EMA rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum BetaSeq {
    Constant(f64),
    /// `beta_t = sum_{i<t} alpha_i / sum_{i<=t} alpha_i`.
    FtrlWeights(AlphaSeq),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentumRule {
    None,
    /// `m_t = mu m_{t-1} + eta_t g_t`, `x_{t+1} = x_t - m_t`.
    ClassicHb {
        mu: f64,
    },
    /// `m_t = mu m_{t-1} + g_t`, `x_{t+1} = x_t - eta_t m_t`.
    CurrentRateHb {
        mu: f64,
    },
    /// `m_t = beta_t m_{t-1} + (1 - beta_t) g_t`, `x_{t+1} = x_t - eta_t m_t`.
    Ema(BetaSeq),
}

impl MomentumRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            MomentumRule::None => Ok(()),
            MomentumRule::ClassicHb { mu } | MomentumRule::CurrentRateHb { mu } => {
                if (0.0..=1.0).contains(mu) {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "momentum mu must lie in [0, 1], got {mu}"
                    )))
                }
            }
            MomentumRule::Ema(BetaSeq::Constant(b)) => {
                if (0.0..=1.0).contains(b) {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "EMA beta must lie in [0, 1], got {b}"
                    )))
                }
            }
            MomentumRule::Ema(BetaSeq::Explicit(v)) => {
                if v.iter().all(|b| (0.0..=1.0).contains(b)) {
                    Ok(())
                } else {
                    Err(Error::param("EMA betas must lie in [0, 1]"))
                }
            }
            MomentumRule::Ema(BetaSeq::FtrlWeights(_)) => Ok(()),
        }
    }
}

/// An optimization algorithm with all of its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Sgd {
        schedule: ScheduleKind,
    },
    Sgdm {
        schedule: ScheduleKind,
        momentum: MomentumRule,
    },
    /// Classic heavy ball with a coordinate-wise Delayed AdaGrad step.
    DelayedAdaGradMomentum {
        alpha: f64,
        beta: f64,
        mu: f64,
    },
    FtrlSgdm {
        alphas: AlphaSeq,
        gamma: ScheduleKind,
    },
    AnytimeO2b {
        alphas: AlphaSeq,
        gamma: ScheduleKind,
    },
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Record every `thin`-th iterate (the first and last are always kept).
    pub thin: usize,
    /// Keep `x_1, ..., x_{T+1}` in the trace.
    pub keep_iterates: bool,
    /// Stored in the trace for provenance.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            thin: 1,
            keep_iterates: false,
            seed: 0,
        }
    }
}

/// Generator for the gradient noise of run `seed`.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Default starting point: a unit vector drawn from a stream disjoint from
/// the noise stream of the same seed.
pub fn default_x1(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    linalg::random_unit_vector(dim, &mut rng)
}

fn mul_step(step: &Step, v: &[f64], out: &mut [f64], sign: f64) {
    for (j, (o, vi)) in out.iter_mut().zip(v).enumerate() {
        *o += sign * step.coord(j) * vi;
    }
}

/// Fails unless `cur <= prev` in every coordinate.
pub fn check_non_increasing(t: usize, prev: &Step, cur: &Step, dim: usize) -> Result<()> {
    if cur.le(prev, dim, 0.0) {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "gamma increased at t={t}: {} > {}",
            cur.mean(),
            prev.mean()
        )))
    }
}

/// Reads the step for `t` and observes `g_t` in the order the rule's
/// information pattern demands. `scale` multiplies the gradient passed to
/// `observe` (FTRL rules accumulate `alpha_t g_t`).
fn consult(
    sched: &mut Schedule,
    t: usize,
    x: &[f64],
    source: &mut dyn GradientSource,
    scale: f64,
) -> Result<(Step, Vec<f64>)> {
    let observe = |sched: &mut Schedule, g: &[f64]| {
        if scale == 1.0 {
            sched.observe(t, g)
        } else {
            let scaled: Vec<f64> = g.iter().map(|v| scale * v).collect();
            sched.observe(t, &scaled)
        }
    };
    match sched.kind().pattern() {
        InfoPattern::Delayed => {
            let eta = sched.step_size(t)?;
            let g = source.gradient(t, x);
            observe(sched, &g)?;
            Ok((eta, g))
        }
        InfoPattern::Inclusive => {
            let g = source.gradient(t, x);
            observe(sched, &g)?;
            Ok((sched.step_size(t)?, g))
        }
    }
}

/// One algorithm's per-step state. `step` moves `x` from `x_t` to `x_{t+1}`
/// and returns the logged step size and momentum norm.
trait Stepper {
    fn step(
        &mut self,
        t: usize,
        x: &mut Vec<f64>,
        src: &mut dyn GradientSource,
    ) -> Result<(f64, f64)>;
}

struct MomentumStepper {
    sched: Schedule,
    rule: MomentumRule,
    m: Vec<f64>,
    alpha_sum: f64,
}

impl Stepper for MomentumStepper {
    fn step(
        &mut self,
        t: usize,
        x: &mut Vec<f64>,
        src: &mut dyn GradientSource,
    ) -> Result<(f64, f64)> {
        let (eta, g) = consult(&mut self.sched, t, x, src, 1.0)?;
        match &self.rule {
            MomentumRule::None => mul_step(&eta, &g, x, -1.0),
            MomentumRule::ClassicHb { mu } => {
                for (j, (m, gj)) in self.m.iter_mut().zip(&g).enumerate() {
                    *m = mu * *m + eta.coord(j) * gj;
                }
                linalg::axpy(-1.0, &self.m, x);
            }
            MomentumRule::CurrentRateHb { mu } => {
                for (m, gj) in self.m.iter_mut().zip(&g) {
                    *m = mu * *m + gj;
                }
                mul_step(&eta, &self.m, x, -1.0);
            }
            MomentumRule::Ema(betas) => {
                // Keep (1 - beta_t) exact for the FTRL weights: alpha_t / S_t.
                let (b, one_minus_b) = match betas {
                    BetaSeq::Constant(b) => (*b, 1.0 - b),
                    BetaSeq::Explicit(v) => {
                        let b = *v.get(t - 1).ok_or_else(|| {
                            Error::param(format!("beta sequence has no entry for t={t}"))
                        })?;
                        (b, 1.0 - b)
                    }
                    BetaSeq::FtrlWeights(alphas) => {
                        let a = alphas.get(t)?;
                        let prev = self.alpha_sum;
                        self.alpha_sum += a;
                        (prev / self.alpha_sum, a / self.alpha_sum)
                    }
                };
                for (m, gj) in self.m.iter_mut().zip(&g) {
                    *m = b * *m + one_minus_b * gj;
                }
                mul_step(&eta, &self.m, x, -1.0);
            }
        }
        Ok((eta.mean(), linalg::norm(&self.m)))
    }
}

struct FtrlSgdmStepper {
    alphas: AlphaSeq,
    gamma: Schedule,
    prev_gamma: Option<Step>,
    x1: Vec<f64>,
    m: Vec<f64>,
    /// `S_{t-1}` before the step, `S_t` after.
    sum: f64,
}

impl Stepper for FtrlSgdmStepper {
    fn step(
        &mut self,
        t: usize,
        x: &mut Vec<f64>,
        src: &mut dyn GradientSource,
    ) -> Result<(f64, f64)> {
        let a_t = self.alphas.get(t)?;
        let a_next = self.alphas.get(t + 1)?;
        let (gamma, g) = consult(&mut self.gamma, t, x, src, a_t)?;
        if let Some(prev) = &self.prev_gamma {
            check_non_increasing(t, prev, &gamma, x.len())?;
        }
        let s_prev = self.sum;
        let s_t = s_prev + a_t;
        let s_next = s_t + a_next;
        self.sum = s_t;
        let (beta, one_minus_beta) = (s_prev / s_t, a_t / s_t);
        for (m, gj) in self.m.iter_mut().zip(&g) {
            *m = beta * *m + one_minus_beta * gj;
        }
        let eta = gamma.scaled(a_next * s_t / s_next);
        let keep = s_t / s_next;
        let pull = a_next / s_next;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = keep * *xj + pull * self.x1[j] - eta.coord(j) * self.m[j];
        }
        self.prev_gamma = Some(gamma);
        Ok((eta.mean(), linalg::norm(&self.m)))
    }
}

struct AnytimeO2bStepper {
    alphas: AlphaSeq,
    gamma: Schedule,
    prev_gamma: Option<Step>,
    w1: Vec<f64>,
    /// `sum_{i<=t} alpha_i g_i`
    grad_sum: Vec<f64>,
    /// `sum_{i<=t} alpha_i w_i`
    point_sum: Vec<f64>,
    alpha_sum: f64,
}

impl Stepper for AnytimeO2bStepper {
    fn step(
        &mut self,
        t: usize,
        x: &mut Vec<f64>,
        src: &mut dyn GradientSource,
    ) -> Result<(f64, f64)> {
        let a_t = self.alphas.get(t)?;
        let a_next = self.alphas.get(t + 1)?;
        let (gamma, g) = consult(&mut self.gamma, t, x, src, a_t)?;
        if let Some(prev) = &self.prev_gamma {
            check_non_increasing(t, prev, &gamma, x.len())?;
        }
        linalg::axpy(a_t, &g, &mut self.grad_sum);
        // w_{t+1} = w_1 - gamma_t sum_{i<=t} alpha_i g_i
        let mut w_next = self.w1.clone();
        mul_step(&gamma, &self.grad_sum, &mut w_next, -1.0);
        self.alpha_sum += a_next;
        linalg::axpy(a_next, &w_next, &mut self.point_sum);
        for (xj, pj) in x.iter_mut().zip(&self.point_sum) {
            *xj = pj / self.alpha_sum;
        }
        let logged = gamma.mean();
        self.prev_gamma = Some(gamma);
        // The reference keeps no momentum buffer; it logs gamma_t.
        Ok((logged, 0.0))
    }
}

fn require_inclusive(gamma: &ScheduleKind) -> Result<()> {
    if gamma.pattern() == InfoPattern::Inclusive {
        Ok(())
    } else {
        Err(Error::param(format!(
            "`{}` is not an FTRL gamma rule",
            gamma.name()
        )))
    }
}

fn build_stepper(method: &Method, dim: usize, x1: &[f64]) -> Result<Box<dyn Stepper>> {
    Ok(match method {
        Method::Sgd { schedule } => Box::new(MomentumStepper {
            sched: Schedule::new(schedule.clone(), dim)?,
            rule: MomentumRule::None,
            m: vec![0.0; dim],
            alpha_sum: 0.0,
        }),
        Method::Sgdm { schedule, momentum } => {
            momentum.validate()?;
            Box::new(MomentumStepper {
                sched: Schedule::new(schedule.clone(), dim)?,
                rule: momentum.clone(),
                m: vec![0.0; dim],
                alpha_sum: 0.0,
            })
        }
        Method::DelayedAdaGradMomentum { alpha, beta, mu } => {
            if !(0.0..1.0).contains(mu) {
                return Err(Error::param(format!("mu must lie in [0, 1), got {mu}")));
            }
            Box::new(MomentumStepper {
                sched: Schedule::new(
                    ScheduleKind::DelayedAdaGradCoord {
                        alpha: *alpha,
                        beta: *beta,
                        eps: 0.0,
                    },
                    dim,
                )?,
                rule: MomentumRule::ClassicHb { mu: *mu },
                m: vec![0.0; dim],
                alpha_sum: 0.0,
            })
        }
        Method::FtrlSgdm { alphas, gamma } => {
            require_inclusive(gamma)?;
            Box::new(FtrlSgdmStepper {
                alphas: alphas.clone(),
                gamma: Schedule::new(gamma.clone(), dim)?,
                prev_gamma: None,
                x1: x1.to_vec(),
                m: vec![0.0; dim],
                sum: 0.0,
            })
        }
        Method::AnytimeO2b { alphas, gamma } => {
            require_inclusive(gamma)?;
            let a1 = alphas.get(1)?;
            Box::new(AnytimeO2bStepper {
                alphas: alphas.clone(),
                gamma: Schedule::new(gamma.clone(), dim)?,
                prev_gamma: None,
                w1: x1.to_vec(),
                grad_sum: vec![0.0; dim],
                point_sum: x1.iter().map(|v| a1 * v).collect(),
                alpha_sum: a1,
            })
        }
    })
}

/// Runs `method` for `horizon` steps from `x1`, drawing gradients from
/// `source`.
///
/// Contract violations (wrong call order, increasing `gamma`) are errors;
/// divergence is reported through [`Trace::status`].
pub fn run(
    problem: &Problem,
    method: &Method,
    source: &mut dyn GradientSource,
    horizon: usize,
    x1: &[f64],
    opts: &RunOptions,
) -> Result<Trace> {
    if horizon == 0 {
        return Err(Error::param("horizon T must be >= 1"));
    }
    let dim = problem.dim();
    if x1.len() != dim {
        return Err(Error::param(format!(
            "x1 has dimension {}, problem has {dim}",
            x1.len()
        )));
    }
    if !linalg::all_finite(x1) {
        return Err(Error::param("x1 must be finite"));
    }
    let thin = opts.thin.max(1);
    let mut stepper = build_stepper(method, dim, x1)?;
    let mut x = x1.to_vec();
    let mut records = Vec::with_capacity(horizon / thin + 2);
    let mut iterates = opts.keep_iterates.then(|| vec![x.clone()]);
    let mut status = RunStatus::Completed;
    let mut best_f = f64::INFINITY;

    for t in 1..=horizon {
        let f = problem.value(&x);
        if !f.is_finite() {
            status = RunStatus::Diverged { t };
            break;
        }
        best_f = best_f.min(f);
        let grad_norm_sq = linalg::norm_sq(&problem.gradient(&x));
        let x_t = x.clone();
        let (eta, m_norm) = stepper.step(t, &mut x, source)?;
        if t == 1 || t == horizon || (t - 1) % thin == 0 {
            records.push(Record {
                t,
                f_gap: f,
                grad_norm_sq,
                eta,
                m_norm,
            });
        }
        if !linalg::all_finite(&x) || linalg::norm(&x) > DIVERGENCE_RADIUS {
            status = RunStatus::Diverged { t };
            x = x_t;
            break;
        }
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
    }

    let f_final = problem.value(&x);
    if f_final.is_finite() {
        best_f = best_f.min(f_final);
    }
    let (reference, gap_relative) = match problem.f_star {
        Some(f_star) => (f_star, false),
        None => (best_f, true),
    };
    for r in &mut records {
        r.f_gap -= reference;
    }
    Ok(Trace {
        records,
        thin,
        final_iterate: x,
        final_gap: f_final - reference,
        seed: opts.seed,
        status,
        gap_relative,
        iterates,
    })
}

fn run_seeded(
    problem: &Problem,
    noise: &NoiseModel,
    method: &Method,
    horizon: usize,
    x1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    noise.validate()?;
    let x1 = x1.map_or_else(|| default_x1(problem.dim(), seed), <[f64]>::to_vec);
    let mut source = Oracle::new(problem, noise, noise_rng(seed));
    let opts = RunOptions {
        seed,
        ..RunOptions::default()
    };
    run(problem, method, &mut source, horizon, &x1, &opts)
}

/// `x_{t+1} = x_t - eta_t g_t`. A `None` start uses [`default_x1`].
pub fn run_sgd(
    problem: &Problem,
    noise: &NoiseModel,
    schedule: ScheduleKind,
    horizon: usize,
    x1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    run_seeded(problem, noise, &Method::Sgd { schedule }, horizon, x1, seed)
}

pub fn run_sgdm(
    problem: &Problem,
    noise: &NoiseModel,
    schedule: ScheduleKind,
    momentum: MomentumRule,
    horizon: usize,
    x1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    let method = Method::Sgdm { schedule, momentum };
    run_seeded(problem, noise, &method, horizon, x1, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn run_delayed_adagrad_momentum(
    problem: &Problem,
    noise: &NoiseModel,
    alpha: f64,
    beta: f64,
    mu: f64,
    horizon: usize,
    x1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    let method = Method::DelayedAdaGradMomentum { alpha, beta, mu };
    run_seeded(problem, noise, &method, horizon, x1, seed)
}

pub fn run_ftrl_sgdm(
    problem: &Problem,
    noise: &NoiseModel,
    alphas: AlphaSeq,
    gamma: ScheduleKind,
    horizon: usize,
    x1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    run_seeded(
        problem,
        noise,
        &Method::FtrlSgdm { alphas, gamma },
        horizon,
        x1,
        seed,
    )
}

pub fn run_anytime_o2b_ftrl(
    problem: &Problem,
    noise: &NoiseModel,
    alphas: AlphaSeq,
    gamma: ScheduleKind,
    horizon: usize,
    w1: Option<&[f64]>,
    seed: u64,
) -> Result<Trace> {
    run_seeded(
        problem,
        noise,
        &Method::AnytimeO2b { alphas, gamma },
        horizon,
        w1,
        seed,
    )
}

/// Outcome of running FTRL-based SGDM and anytime online-to-batch FTRL on
/// one shared gradient stream.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub gamma: &'static str,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// `max_t ||x_t - x'_t|| / max(||x_t||, 1)`.
    pub max_rel_dist: f64,
    pub passed: bool,
}

/// Runs both methods from the same `x_1`, the second one replaying the
/// gradients the first one drew, and compares `x_1, ..., x_{T+1}`.
pub fn compare_ftrl_with_o2b(
    problem: &Problem,
    noise: &NoiseModel,
    alphas: AlphaSeq,
    gamma: ScheduleKind,
    horizon: usize,
    seed: u64,
    tol: f64,
) -> Result<EquivalenceReport> {
    noise.validate()?;
    let x1 = default_x1(problem.dim(), seed);
    let opts = RunOptions {
        keep_iterates: true,
        seed,
        ..RunOptions::default()
    };
    let mut rec = Recorder::new(Oracle::new(problem, noise, noise_rng(seed)));
    let name = gamma.name();
    let sgdm = Method::FtrlSgdm {
        alphas: alphas.clone(),
        gamma: gamma.clone(),
    };
    let a = run(problem, &sgdm, &mut rec, horizon, &x1, &opts)?;
    let o2b = Method::AnytimeO2b { alphas, gamma };
    let b = run(
        problem,
        &o2b,
        &mut Replay::new(rec.into_stream()),
        horizon,
        &x1,
        &opts,
    )?;
    let (xa, xb) = (
        a.iterates.unwrap_or_default(),
        b.iterates.unwrap_or_default(),
    );
    let mut max_rel_dist = if xa.len() == xb.len() {
        0.0
    } else {
        f64::INFINITY
    };
    for (u, v) in xa.iter().zip(&xb) {
        max_rel_dist = f64::max(max_rel_dist, linalg::dist(u, v) / linalg::norm(u).max(1.0));
    }
    Ok(EquivalenceReport {
        gamma: name,
        horizon,
        max_rel_dist,
        passed: max_rel_dist <= tol,
    })
}

/// `E <eta_{t+1} g_t, f'(x_t)>` for `f(x) = x^2/2` when the step uses the
/// current gradient: `g = x + xi` with `xi` taking `sigma`, `-3 sigma/2`,
/// `-sigma/2` with probabilities `7/15`, `1/5`, `1/3`, and
/// `eta = alpha / (A + g^2)^(1/2 + eps)`.
///
/// The noise has mean zero, yet the expectation can be negative: a step size
/// that sees `g_t` can bias the update away from descent.
pub fn example_ninety_expectation(x: f64, sigma: f64, a: f64, eps: f64, alpha: f64) -> f64 {
    let outcomes = [
        (7.0 / 15.0, sigma),
        (1.0 / 5.0, -1.5 * sigma),
        (1.0 / 3.0, -0.5 * sigma),
    ];
    outcomes
        .iter()
        .map(|&(p, xi)| {
            let g = x + xi;
            p * alpha * g * x / (a + g * g).powf(0.5 + eps)
        })
        .sum()
}
