//! Step-size rules with an explicit information contract.
//!
//! A [`Schedule`] counts the gradients it has observed. Rules with the
//! *delayed* pattern answer `step_size(t)` only after exactly `t - 1`
//! observations, so `eta_t` can never depend on `g_t`. The FTRL `gamma`
//! rules use the *inclusive* pattern: `gamma_t` is read after `g_t` has been
//! observed. Calls in any other order are contract errors.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{check_keys, get_f64, get_usize, Params};

/// A step size: one scalar for all coordinates or one per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Scalar(f64),
    PerCoord(Vec<f64>),
}

impl Step {
    pub fn coord(&self, j: usize) -> f64 {
        match self {
            Step::Scalar(v) => *v,
            Step::PerCoord(v) => v[j],
        }
    }

    /// The scalar, or the coordinate mean; this is what traces log.
    pub fn mean(&self) -> f64 {
        match self {
            Step::Scalar(v) => *v,
            Step::PerCoord(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    pub fn scaled(&self, s: f64) -> Step {
        match self {
            Step::Scalar(v) => Step::Scalar(v * s),
            Step::PerCoord(v) => Step::PerCoord(v.iter().map(|x| x * s).collect()),
        }
    }

    /// `true` when every coordinate of `self` is `<= other` (up to `tol`
    /// relative).
    pub fn le(&self, other: &Step, dim: usize, tol: f64) -> bool {
        (0..dim).all(|j| {
            let (a, b) = (self.coord(j), other.coord(j));
            a <= b + tol * b.abs()
        })
    }
}

/// Which gradients `eta_t` may depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoPattern {
    /// `eta_t` uses `g_1..g_{t-1}`: read step `t`, then observe `g_t`.
    Delayed,
    /// `gamma_t` uses `g_1..g_t`: observe `g_t`, then read step `t`.
    Inclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant {
        c: f64,
    },
    /// `c * t^(-p)`.
    PolySqrt {
        c: f64,
        p: f64,
    },
    /// `min(1/(L(1+a)), (2t+1)/(mu (t+1)^2))`.
    PolyPl {
        l: f64,
        a: f64,
        mu: f64,
    },
    /// `alpha / (beta + sum_{i<t} |g_i|^2)^(1/2+eps)`.
    DelayedAdaGradGlobal {
        alpha: f64,
        beta: f64,
        eps: f64,
    },
    /// Per-coordinate version of [`ScheduleKind::DelayedAdaGradGlobal`].
    DelayedAdaGradCoord {
        alpha: f64,
        beta: f64,
        eps: f64,
    },
    /// `eta0 * alpha^t`, optionally capped at a horizon.
    Exponential {
        eta0: f64,
        alpha: f64,
        horizon: Option<usize>,
    },
    /// `eta0/2 * (1 + cos(t pi / T))` for `t = 1..T`.
    Cosine {
        eta0: f64,
        horizon: usize,
    },
    /// Cosine stages of lengths `floor(T0 r^i)`, each indexed from 0 so
    /// every stage restarts at `eta0`.
    CosineRestart {
        eta0: f64,
        t0: usize,
        r: f64,
        stages: usize,
    },
    /// `c / (G sqrt(T))`.
    FtrlConstT {
        c: f64,
        g: f64,
        horizon: usize,
    },
    /// `gamma_t = c / (G sqrt(t + 1))`, i.e. `gamma_{t-1} = c / (G sqrt t)`.
    FtrlSqrtT {
        c: f64,
        g: f64,
    },
    /// `alpha / sqrt(G^2 + sum_{i<=t} |g_i|^2)`.
    FtrlAdaGlobal {
        alpha: f64,
        g: f64,
    },
    /// `alpha / sqrt(G_inf^2 + sum_{i<=t} g_i^2)` per coordinate.
    FtrlAdaCoord {
        alpha: f64,
        g_inf: f64,
    },
}

/// `alpha = (beta / T)^(1/T)`, so that `alpha^T = beta / T`.
pub fn exponential_alpha_from_horizon(beta: f64, horizon: usize) -> Result<f64> {
    let t = horizon as f64;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    if horizon < 3 || beta >= t {
        return Err(Error::param(format!(
            "horizon form needs T >= 3 and beta < T, got beta={beta}, T={horizon}"
        )));
    }
    Ok((beta / t).powf(1.0 / t))
}

/// Stage lengths `floor(T0 r^i)` for `i = 0..stages`.
pub fn cosine_restart_plan(t0: usize, r: f64, stages: usize) -> Result<Vec<usize>> {
    if t0 < 1 || !(r >= 1.0 && r.is_finite()) || stages < 1 {
        return Err(Error::param(format!(
            "restart plan needs T0 >= 1, r >= 1, stages >= 1; got T0={t0}, r={r}, stages={stages}"
        )));
    }
    Ok((0..stages)
        .map(|i| ((t0 as f64) * r.powi(i as i32)).floor() as usize)
        .collect())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if (0.0..=0.5).contains(&eps) {
        Ok(())
    } else {
        Err(Error::param(format!("eps must lie in [0, 1/2], got {eps}")))
    }
}

impl ScheduleKind {
    pub fn constant(c: f64) -> Self {
        ScheduleKind::Constant { c }
    }

    pub fn exponential(eta0: f64, alpha: f64) -> Self {
        ScheduleKind::Exponential {
            eta0,
            alpha,
            horizon: None,
        }
    }

    /// Exponential decay reaching `eta0 * beta / T` at `t = T`.
    pub fn exponential_horizon(eta0: f64, beta: f64, horizon: usize) -> Result<Self> {
        Ok(ScheduleKind::Exponential {
            eta0,
            alpha: exponential_alpha_from_horizon(beta, horizon)?,
            horizon: Some(horizon),
        })
    }

    pub fn validate(&self) -> Result<()> {
        use ScheduleKind::*;
        match *self {
            Constant { c } => check_positive("c", c),
            PolySqrt { c, p } => {
                check_positive("c", c)?;
                if p >= 0.0 && p.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(format!("exponent p must be >= 0, got {p}")))
                }
            }
            PolyPl { l, a, mu } => {
                check_positive("L", l)?;
                check_positive("mu", mu)?;
                if a >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!("a must be >= 0, got {a}")))
                }
            }
            DelayedAdaGradGlobal { alpha, beta, eps }
            | DelayedAdaGradCoord { alpha, beta, eps } => {
                check_positive("alpha", alpha)?;
                check_positive("beta", beta)?;
                check_eps(eps)
            }
            Exponential { eta0, alpha, .. } => {
                check_positive("eta0", eta0)?;
                if alpha > 0.0 && alpha <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "decay alpha must lie in (0, 1], got {alpha}"
                    )))
                }
            }
            Cosine { eta0, horizon } => {
                check_positive("eta0", eta0)?;
                if horizon >= 1 {
                    Ok(())
                } else {
                    Err(Error::param("cosine horizon must be >= 1"))
                }
            }
            CosineRestart {
                eta0,
                t0,
                r,
                stages,
            } => {
                check_positive("eta0", eta0)?;
                cosine_restart_plan(t0, r, stages).map(|_| ())
            }
            FtrlConstT { c, g, horizon } => {
                check_positive("c", c)?;
                check_positive("G", g)?;
                if horizon >= 1 {
                    Ok(())
                } else {
                    Err(Error::param("horizon must be >= 1"))
                }
            }
            FtrlSqrtT { c, g } => check_positive("c", c).and(check_positive("G", g)),
            FtrlAdaGlobal { alpha, g } => {
                check_positive("alpha", alpha).and(check_positive("G", g))
            }
            FtrlAdaCoord { alpha, g_inf } => {
                check_positive("alpha", alpha).and(check_positive("G_inf", g_inf))
            }
        }
    }

    pub fn pattern(&self) -> InfoPattern {
        use ScheduleKind::*;
        match self {
            FtrlConstT { .. } | FtrlSqrtT { .. } | FtrlAdaGlobal { .. } | FtrlAdaCoord { .. } => {
                InfoPattern::Inclusive
            }
            _ => InfoPattern::Delayed,
        }
    }

    /// Last valid step index for finite-horizon rules.
    pub fn horizon(&self) -> Option<usize> {
        use ScheduleKind::*;
        match self {
            Exponential { horizon, .. } => *horizon,
            Cosine { horizon, .. } | FtrlConstT { horizon, .. } => Some(*horizon),
            CosineRestart { t0, r, stages, .. } => cosine_restart_plan(*t0, *r, *stages)
                .ok()
                .map(|p| p.iter().sum()),
            _ => None,
        }
    }

    fn is_coordinatewise(&self) -> bool {
        matches!(
            self,
            ScheduleKind::DelayedAdaGradCoord { .. } | ScheduleKind::FtrlAdaCoord { .. }
        )
    }

    /// Short name used in config files.
    pub fn name(&self) -> &'static str {
        use ScheduleKind::*;
        match self {
            Constant { .. } => "constant",
            PolySqrt { .. } => "poly",
            PolyPl { .. } => "poly-pl",
            DelayedAdaGradGlobal { .. } => "delayed-adagrad",
            DelayedAdaGradCoord { .. } => "delayed-adagrad-coord",
            Exponential { .. } => "exponential",
            Cosine { .. } => "cosine",
            CosineRestart { .. } => "cosine-restart",
            FtrlConstT { .. } => "ftrl-const",
            FtrlSqrtT { .. } => "ftrl-sqrt",
            FtrlAdaGlobal { .. } => "ftrl-ada",
            FtrlAdaCoord { .. } => "ftrl-ada-coord",
        }
    }

    /// Builds a rule from its config name and parameter map. `horizon` fills
    /// in `T` for finite-horizon rules that do not set it explicitly.
    pub fn from_params(kind: &str, p: &Params, horizon: usize) -> Result<Self> {
        let ctx = "schedule.params";
        let k = match kind {
            "constant" => {
                check_keys(p, &["c"], ctx)?;
                ScheduleKind::Constant {
                    c: get_f64(p, "c", None)?,
                }
            }
            "poly" => {
                check_keys(p, &["c", "p"], ctx)?;
                ScheduleKind::PolySqrt {
                    c: get_f64(p, "c", None)?,
                    p: get_f64(p, "p", Some(0.5))?,
                }
            }
            "poly-pl" => {
                check_keys(p, &["L", "a", "mu"], ctx)?;
                ScheduleKind::PolyPl {
                    l: get_f64(p, "L", None)?,
                    a: get_f64(p, "a", Some(0.0))?,
                    mu: get_f64(p, "mu", None)?,
                }
            }
            "delayed-adagrad" | "delayed-adagrad-coord" => {
                check_keys(p, &["alpha", "beta", "eps"], ctx)?;
                let alpha = get_f64(p, "alpha", None)?;
                let beta = get_f64(p, "beta", Some(1.0))?;
                let eps = get_f64(p, "eps", Some(0.0))?;
                if kind == "delayed-adagrad" {
                    ScheduleKind::DelayedAdaGradGlobal { alpha, beta, eps }
                } else {
                    ScheduleKind::DelayedAdaGradCoord { alpha, beta, eps }
                }
            }
            "exponential" => {
                check_keys(p, &["eta0", "alpha", "beta", "T"], ctx)?;
                let eta0 = get_f64(p, "eta0", None)?;
                match (p.contains_key("alpha"), p.contains_key("beta")) {
                    (true, false) => ScheduleKind::Exponential {
                        eta0,
                        alpha: get_f64(p, "alpha", None)?,
                        horizon: p.get("T").map(|_| get_usize(p, "T", None)).transpose()?,
                    },
                    (false, true) => ScheduleKind::exponential_horizon(
                        eta0,
                        get_f64(p, "beta", None)?,
                        get_usize(p, "T", Some(horizon))?,
                    )?,
                    _ => {
                        return Err(Error::config(
                            "schedule.params",
                            "exponential needs exactly one of `alpha` or `beta`",
                        ))
                    }
                }
            }
            "cosine" => {
                check_keys(p, &["eta0", "T"], ctx)?;
                ScheduleKind::Cosine {
                    eta0: get_f64(p, "eta0", None)?,
                    horizon: get_usize(p, "T", Some(horizon))?,
                }
            }
            "cosine-restart" => {
                check_keys(p, &["eta0", "T0", "r", "stages"], ctx)?;
                ScheduleKind::CosineRestart {
                    eta0: get_f64(p, "eta0", None)?,
                    t0: get_usize(p, "T0", None)?,
                    r: get_f64(p, "r", Some(2.0))?,
                    stages: get_usize(p, "stages", None)?,
                }
            }
            "ftrl-const" => {
                check_keys(p, &["c", "G", "T"], ctx)?;
                ScheduleKind::FtrlConstT {
                    c: get_f64(p, "c", None)?,
                    g: get_f64(p, "G", None)?,
                    horizon: get_usize(p, "T", Some(horizon))?,
                }
            }
            "ftrl-sqrt" => {
                check_keys(p, &["c", "G"], ctx)?;
                ScheduleKind::FtrlSqrtT {
                    c: get_f64(p, "c", None)?,
                    g: get_f64(p, "G", None)?,
                }
            }
            "ftrl-ada" => {
                check_keys(p, &["alpha", "G"], ctx)?;
                ScheduleKind::FtrlAdaGlobal {
                    alpha: get_f64(p, "alpha", None)?,
                    g: get_f64(p, "G", None)?,
                }
            }
            "ftrl-ada-coord" => {
                check_keys(p, &["alpha", "G_inf"], ctx)?;
                ScheduleKind::FtrlAdaCoord {
                    alpha: get_f64(p, "alpha", None)?,
                    g_inf: get_f64(p, "G_inf", None)?,
                }
            }
            other => {
                return Err(Error::config(
                    "schedule.kind",
                    format!("unknown schedule kind `{other}`"),
                ))
            }
        };
        k.validate()
            .map_err(|e| Error::config("schedule.params", e.to_string()))?;
        Ok(k)
    }
}

/// A step-size rule together with its running gradient statistics.
///
/// Cloning forks an independent, deterministic replica.
#[derive(Clone, Debug)]
pub struct Schedule {
    kind: ScheduleKind,
    dim: usize,
    observed: usize,
    acc: f64,
    acc_coord: Vec<f64>,
    plan: Vec<usize>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, dim: usize) -> Result<Self> {
        kind.validate()?;
        if dim == 0 {
            return Err(Error::param("schedule dimension must be positive"));
        }
        let plan = match &kind {
            ScheduleKind::CosineRestart { t0, r, stages, .. } => {
                cosine_restart_plan(*t0, *r, *stages)?
            }
            _ => Vec::new(),
        };
        let acc_coord = if kind.is_coordinatewise() {
            vec![0.0; dim]
        } else {
            Vec::new()
        };
        Ok(Self {
            kind,
            dim,
            observed: 0,
            acc: 0.0,
            acc_coord,
            plan,
        })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of gradients observed so far.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Running `sum |g_i|^2` (global rules).
    pub fn accumulator(&self) -> f64 {
        self.acc
    }

    /// Running `sum g_i^2` per coordinate (coordinate-wise rules).
    pub fn coord_accumulator(&self) -> &[f64] {
        &self.acc_coord
    }

    /// Restart stage lengths; empty for other rules.
    pub fn plan(&self) -> &[usize] {
        &self.plan
    }

    /// `eta_t`. Never mutates state.
    pub fn step_size(&self, t: usize) -> Result<Step> {
        if t == 0 {
            return Err(Error::contract("step index starts at 1"));
        }
        if let Some(h) = self.kind.horizon() {
            if t > h {
                return Err(Error::contract(format!(
                    "step {t} is past the horizon T={h}"
                )));
            }
        }
        let needed = match self.kind.pattern() {
            InfoPattern::Delayed => t - 1,
            InfoPattern::Inclusive => t,
        };
        if self.observed != needed {
            return Err(Error::contract(format!(
                "{} step {t} requires exactly {needed} observed gradients, have {}",
                self.kind.name(),
                self.observed
            )));
        }
        Ok(self.evaluate(t))
    }

    fn evaluate(&self, t: usize) -> Step {
        use ScheduleKind::*;
        let tf = t as f64;
        match self.kind {
            Constant { c } => Step::Scalar(c),
            PolySqrt { c, p } => Step::Scalar(c * tf.powf(-p)),
            PolyPl { l, a, mu } => {
                let cap = 1.0 / (l * (1.0 + a));
                Step::Scalar(cap.min((2.0 * tf + 1.0) / (mu * (tf + 1.0).powi(2))))
            }
            DelayedAdaGradGlobal { alpha, beta, eps } => {
                Step::Scalar(alpha / (beta + self.acc).powf(0.5 + eps))
            }
            DelayedAdaGradCoord { alpha, beta, eps } => Step::PerCoord(
                self.acc_coord
                    .iter()
                    .map(|s| alpha / (beta + s).powf(0.5 + eps))
                    .collect(),
            ),
            Exponential { eta0, alpha, .. } => Step::Scalar(eta0 * alpha.powf(tf)),
            Cosine { eta0, horizon } => {
                Step::Scalar(0.5 * eta0 * (1.0 + (tf * PI / horizon as f64).cos()))
            }
            CosineRestart { eta0, .. } => {
                let (len, tau) = self.stage_position(t);
                Step::Scalar(0.5 * eta0 * (1.0 + (tau as f64 * PI / len as f64).cos()))
            }
            FtrlConstT { c, g, horizon } => Step::Scalar(c / (g * (horizon as f64).sqrt())),
            FtrlSqrtT { c, g } => Step::Scalar(c / (g * (tf + 1.0).sqrt())),
            FtrlAdaGlobal { alpha, g } => Step::Scalar(alpha / (g * g + self.acc).sqrt()),
            FtrlAdaCoord { alpha, g_inf } => Step::PerCoord(
                self.acc_coord
                    .iter()
                    .map(|s| alpha / (g_inf * g_inf + s).sqrt())
                    .collect(),
            ),
        }
    }

    /// For restart schedules: `(stage length, local index tau)` of global
    /// step `t`, with `tau` counted from 0 within the stage.
    pub fn stage_position(&self, t: usize) -> (usize, usize) {
        let mut start = 1;
        for &len in &self.plan {
            if t < start + len {
                return (len, t - start);
            }
            start += len;
        }
        let last = *self.plan.last().unwrap_or(&1);
        (last, last - 1)
    }

    /// Records `g_t`. Must be called exactly once per step, in order.
    pub fn observe(&mut self, t: usize, g: &[f64]) -> Result<()> {
        if t != self.observed + 1 {
            return Err(Error::contract(format!(
                "observe({t}) after {} observations; each step is observed once, in order",
                self.observed
            )));
        }
        if g.len() != self.dim {
            return Err(Error::param(format!(
                "gradient has dimension {}, schedule expects {}",
                g.len(),
                self.dim
            )));
        }
        if self.kind.is_coordinatewise() {
            for (s, gi) in self.acc_coord.iter_mut().zip(g) {
                *s += gi * gi;
            }
        } else {
            self.acc += g.iter().map(|v| v * v).sum::<f64>();
        }
        self.observed = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(s: Step) -> f64 {
        match s {
            Step::Scalar(v) => v,
            Step::PerCoord(_) => panic!("expected scalar"),
        }
    }

    fn global(alpha: f64, beta: f64, eps: f64) -> Schedule {
        Schedule::new(ScheduleKind::DelayedAdaGradGlobal { alpha, beta, eps }, 2).unwrap()
    }

    #[test]
    fn delayed_adagrad_examples() {
        let mut s = global(1.0, 1.0, 0.0);
        assert_eq!(scalar(s.step_size(1).unwrap()), 1.0);
        s.observe(1, &[1.0, 2f64.sqrt()]).unwrap();
        assert!((s.accumulator() - 3.0).abs() < 1e-15);
        assert!((scalar(s.step_size(2).unwrap()) - 0.5).abs() < 1e-15);

        let mut s = global(1.0, 1.0, 0.5);
        s.step_size(1).unwrap();
        s.observe(1, &[1.0, 2f64.sqrt()]).unwrap();
        assert!((scalar(s.step_size(2).unwrap()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn running_sum_over_two_observations() {
        for eps in [0.0, 0.2, 0.5] {
            let mut s = global(0.7, 1.0, eps);
            s.observe(1, &[3f64.sqrt(), 0.0]).unwrap();
            s.observe(2, &[1.0, 2.0]).unwrap();
            assert!((s.accumulator() - 8.0).abs() < 1e-14);
            let eta3 = scalar(s.step_size(3).unwrap());
            assert!((eta3 - 0.7 / 9f64.powf(0.5 + eps)).abs() < 1e-15);
        }
    }

    #[test]
    fn coordinate_accumulator() {
        let mut s = Schedule::new(
            ScheduleKind::DelayedAdaGradCoord {
                alpha: 1.0,
                beta: 1.0,
                eps: 0.0,
            },
            2,
        )
        .unwrap();
        s.observe(1, &[1.0, 2f64.sqrt()]).unwrap();
        let acc = s.coord_accumulator();
        assert!((acc[0] - 1.0).abs() < 1e-15 && (acc[1] - 2.0).abs() < 1e-15);
        match s.step_size(2).unwrap() {
            Step::PerCoord(v) => {
                assert!((v[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
                assert!((v[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn zero_gradient_keeps_step() {
        let mut s = global(1.0, 2.0, 0.1);
        let before = scalar(s.step_size(1).unwrap());
        s.observe(1, &[0.0, 0.0]).unwrap();
        assert_eq!(scalar(s.step_size(2).unwrap()), before);
    }

    #[test]
    fn contract_violations() {
        let mut s = global(1.0, 1.0, 0.0);
        assert!(matches!(s.step_size(0), Err(Error::Contract(_))));
        assert!(matches!(s.step_size(2), Err(Error::Contract(_))));
        s.observe(1, &[1.0, 1.0]).unwrap();
        assert!(matches!(s.observe(1, &[1.0, 1.0]), Err(Error::Contract(_))));
        assert!(matches!(s.observe(3, &[1.0, 1.0]), Err(Error::Contract(_))));
        // Reading step 1 after g_1 was observed would leak g_1.
        assert!(matches!(s.step_size(1), Err(Error::Contract(_))));

        let c = Schedule::new(
            ScheduleKind::Cosine {
                eta0: 1.0,
                horizon: 4,
            },
            1,
        )
        .unwrap();
        let mut c2 = c.clone();
        for t in 1..=4 {
            c2.step_size(t).unwrap();
            c2.observe(t, &[0.0]).unwrap();
        }
        assert!(matches!(c2.step_size(5), Err(Error::Contract(_))));
    }

    #[test]
    fn inclusive_pattern_reads_after_observe() {
        let mut s = Schedule::new(ScheduleKind::FtrlAdaGlobal { alpha: 1.0, g: 1.0 }, 1).unwrap();
        assert!(matches!(s.step_size(1), Err(Error::Contract(_))));
        s.observe(1, &[3.0]).unwrap();
        assert!((scalar(s.step_size(1).unwrap()) - 1.0 / 10f64.sqrt()).abs() < 1e-15);

        let mut s = Schedule::new(ScheduleKind::FtrlSqrtT { c: 2.0, g: 1.0 }, 1).unwrap();
        s.observe(1, &[1.0]).unwrap();
        assert!((scalar(s.step_size(1).unwrap()) - 2.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_and_exponential_values() {
        let mut c = Schedule::new(
            ScheduleKind::Cosine {
                eta0: 1.0,
                horizon: 4,
            },
            1,
        )
        .unwrap();
        let mut etas = Vec::new();
        for t in 1..=4 {
            etas.push(scalar(c.step_size(t).unwrap()));
            c.observe(t, &[0.0]).unwrap();
        }
        assert!((etas[1] - 0.5).abs() < 1e-15);
        assert_eq!(etas[3], 0.0);
        assert!(etas[..3].iter().all(|&e| e > 0.0));

        let mut e = Schedule::new(ScheduleKind::exponential(1.0, 0.5), 1).unwrap();
        for t in 1..=2 {
            e.observe(t, &[0.0]).unwrap();
        }
        assert_eq!(scalar(e.step_size(3).unwrap()), 0.125);
    }

    #[test]
    fn exponential_horizon_form() {
        let a = exponential_alpha_from_horizon(1.0, 100).unwrap();
        let oracle = (-(100f64).ln() / 100.0).exp();
        assert!((a - oracle).abs() < 1e-15);
        assert!((a - 0.954993).abs() < 1e-6);
        assert!(exponential_alpha_from_horizon(50.0, 50).is_err());
        assert!(exponential_alpha_from_horizon(1.0, 2).is_err());
        let a = exponential_alpha_from_horizon(2.0, 50).unwrap();
        assert!((a.powi(50) - 2.0 / 50.0).abs() < 1e-12);

        let t = 40;
        let mut s =
            Schedule::new(ScheduleKind::exponential_horizon(3.0, 1.0, t).unwrap(), 1).unwrap();
        for i in 1..t {
            s.observe(i, &[1.0]).unwrap();
        }
        let eta_t = scalar(s.step_size(t).unwrap());
        assert!((eta_t - 3.0 / t as f64).abs() < 1e-12);
    }

    #[test]
    fn restart_plans() {
        assert_eq!(cosine_restart_plan(4, 1.0, 3).unwrap(), vec![4, 4, 4]);
        assert_eq!(cosine_restart_plan(2, 2.0, 3).unwrap(), vec![2, 4, 8]);
        assert_eq!(cosine_restart_plan(3, 1.5, 3).unwrap(), vec![3, 4, 6]);
        assert!(cosine_restart_plan(0, 2.0, 3).is_err());
    }

    #[test]
    fn restart_stages_begin_at_eta0() {
        let kind = ScheduleKind::CosineRestart {
            eta0: 2.0,
            t0: 2,
            r: 2.0,
            stages: 3,
        };
        assert_eq!(kind.horizon(), Some(14));
        let mut s = Schedule::new(kind, 1).unwrap();
        let mut etas = Vec::new();
        for t in 1..=14 {
            etas.push(scalar(s.step_size(t).unwrap()));
            s.observe(t, &[0.0]).unwrap();
        }
        // Stage starts at t = 1, 3, 7.
        for start in [0, 2, 6] {
            assert_eq!(etas[start], 2.0);
        }
        assert!((etas[1] - 1.0).abs() < 1e-15);
        assert!((etas[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn poly_pl_switches_regime() {
        let s = Schedule::new(
            ScheduleKind::PolyPl {
                l: 4.0,
                a: 1.0,
                mu: 1.0,
            },
            1,
        )
        .unwrap();
        assert_eq!(scalar(s.step_size(1).unwrap()), 1.0 / 8.0);
        let mut s = s;
        for t in 1..100 {
            s.observe(t, &[0.0]).unwrap();
        }
        assert!((scalar(s.step_size(100).unwrap()) - 201.0 / 10201.0).abs() < 1e-15);
    }

    #[test]
    fn constant_equals_zero_exponent_poly() {
        let a = Schedule::new(ScheduleKind::Constant { c: 0.3 }, 1).unwrap();
        let b = Schedule::new(ScheduleKind::PolySqrt { c: 0.3, p: 0.0 }, 1).unwrap();
        assert_eq!(a.step_size(1).unwrap(), b.step_size(1).unwrap());
    }

    #[test]
    fn cosine_steps_sum_to_half_horizon() {
        for horizon in [1usize, 2, 7, 100, 1000] {
            let mut s = Schedule::new(ScheduleKind::Cosine { eta0: 1.0, horizon }, 1).unwrap();
            let mut sum = 0.0;
            for t in 1..=horizon {
                sum += scalar(s.step_size(t).unwrap());
                s.observe(t, &[0.0]).unwrap();
            }
            let expected = (horizon as f64 - 1.0) / 2.0;
            assert!((sum - expected).abs() < 1e-10, "T={horizon}: {sum}");
        }
    }

    #[test]
    fn adagrad_squared_steps_are_not_summable() {
        // With |g| <= 1, eta_t^2 >= 1/(1 + t), so partial sums grow like ln N.
        let mut s = global(1.0, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut partial = 0.0;
        let mut checkpoints = Vec::new();
        for t in 1..=1_000_000usize {
            let eta = scalar(s.step_size(t).unwrap());
            partial += eta * eta;
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            s.observe(t, &[angle.cos(), angle.sin()]).unwrap();
            if t.is_power_of_two() {
                checkpoints.push(partial);
            }
        }
        // Each doubling adds about ln 2 / 1: no plateau.
        for w in checkpoints.windows(2).skip(4) {
            assert!(w[1] - w[0] > 0.5, "{:?}", w);
        }
    }

    #[test]
    fn config_round_trip() {
        let mut p = Params::new();
        p.insert("eta0".into(), serde_json::json!(1.0));
        p.insert("beta".into(), serde_json::json!(8.0));
        let k = ScheduleKind::from_params("exponential", &p, 1000).unwrap();
        assert_eq!(k.horizon(), Some(1000));
        assert!(matches!(
            ScheduleKind::from_params("warmup", &p, 10),
            Err(Error::Config { .. })
        ));
        let err = ScheduleKind::from_params("cosine", &p, 10).unwrap_err();
        assert!(err.to_string().contains("schedule.params.beta"));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = [
            ScheduleKind::DelayedAdaGradGlobal {
                alpha: 1.0,
                beta: 0.0,
                eps: 0.0,
            },
            ScheduleKind::DelayedAdaGradCoord {
                alpha: 1.0,
                beta: 1.0,
                eps: 0.6,
            },
            ScheduleKind::exponential(1.0, 1.5),
            ScheduleKind::Cosine {
                eta0: 1.0,
                horizon: 0,
            },
        ];
        for k in bad {
            assert!(Schedule::new(k, 1).is_err());
        }
    }
}
