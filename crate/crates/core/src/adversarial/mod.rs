//! The last-iterate lower-bound construction for SGD with momentum.
//!
//! `f(x) = max_{i <= T+1} h_i^T x` on `R^T`, where row `i <= T` is
//! `(a_1, ..., a_{i-1}, -b_i, 0, ..., 0)` and row `T+1` is `(a_1, ..., a_T)`,
//! with `b_j = L j^alpha / (2 T^alpha)` and `a_j = L (1-beta) / (8 (T-j+1))`.
//! Momentum SGD with `eta_t = c t^-alpha`, started at 0 and fed `h_t` at step
//! `t`, ends at a point whose value stays of order `ln T / T^alpha`.
//!
//! Rows are never materialized: `h_i^T x = P_i - b_i x_i` with the prefix
//! sums `P_i = sum_{j<i} a_j x_j`, so one evaluation of `f` costs `O(T)`.

pub mod exact;

pub use exact::{compare_with_float, ExactAgreement, MAX_EXACT_HORIZON};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundInstance {
    pub horizon: usize,
    pub l: f64,
    pub beta: f64,
    pub alpha: f64,
    pub c: f64,
    /// `a_1, ..., a_T`
    pub a: Vec<f64>,
    /// `b_1, ..., b_T`
    pub b: Vec<f64>,
}

pub fn make_instance(
    horizon: usize,
    l: f64,
    beta: f64,
    alpha: f64,
    c: f64,
) -> Result<LowerBoundInstance> {
    if horizon < 2 {
        return Err(Error::param(format!("horizon must be >= 2, got {horizon}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::param(format!(
            "momentum beta must lie in [0, 1), got {beta}"
        )));
    }
    if !(0.0..=0.5).contains(&alpha) {
        return Err(Error::param(format!(
            "step exponent alpha must lie in [0, 1/2], got {alpha}"
        )));
    }
    if !(l > 0.0 && l.is_finite() && c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!(
            "L and c must be positive, got L={l}, c={c}"
        )));
    }
    let tf = horizon as f64;
    let t_alpha = tf.powf(alpha);
    let b = (1..=horizon)
        .map(|j| l * (j as f64).powf(alpha) / (2.0 * t_alpha))
        .collect();
    let a = (1..=horizon)
        .map(|j| l * (1.0 - beta) / (8.0 * (tf - j as f64 + 1.0)))
        .collect();
    let inst = LowerBoundInstance {
        horizon,
        l,
        beta,
        alpha,
        c,
        a,
        b,
    };
    let worst = inst.max_row_norm_sq();
    if worst > l * l * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "construction is not L-Lipschitz: max |h_i|^2 = {worst} > {}",
            l * l
        )));
    }
    Ok(inst)
}

impl LowerBoundInstance {
    /// Row `i` (1-based, `1..=T+1`) as a dense vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let t = self.horizon;
        assert!((1..=t + 1).contains(&i), "row index {i} out of range");
        (1..=t)
            .map(|j| {
                if j < i {
                    self.a[j - 1]
                } else if j == i {
                    -self.b[j - 1]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `max_i |h_i|^2`.
    pub fn max_row_norm_sq(&self) -> f64 {
        let mut prefix = 0.0;
        let mut worst: f64 = 0.0;
        for j in 0..self.horizon {
            worst = worst.max(prefix + self.b[j] * self.b[j]);
            prefix += self.a[j] * self.a[j];
        }
        worst.max(prefix)
    }

    /// Step size `eta_t = c t^-alpha`.
    pub fn eta(&self, t: usize) -> f64 {
        self.c * (t as f64).powf(-self.alpha)
    }

    /// `h_i^T x` for every row, in order.
    pub fn row_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.horizon + 1);
        let mut prefix = 0.0;
        for j in 0..self.horizon {
            out.push(prefix - self.b[j] * x[j]);
            prefix += self.a[j] * x[j];
        }
        out.push(prefix);
        out
    }
}

/// `(f(x), i)` with `i` the smallest 1-based row index attaining the max.
pub fn eval_f(inst: &LowerBoundInstance, x: &[f64]) -> Result<(f64, usize)> {
    if x.len() != inst.horizon {
        return Err(Error::param(format!(
            "point has dimension {}, instance has {}",
            x.len(),
            inst.horizon
        )));
    }
    let vals = inst.row_values(x);
    let mut best = (vals[0], 1);
    for (i, &v) in vals.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// First offending `(t, j)` (`j = 0` when not coordinate-specific).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offending: Option<(usize, usize)>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub beta: f64,
    pub alpha: f64,
    pub c: f64,
    /// `f(z_{T+1})`
    pub f_last: f64,
    /// `f(z_T)`
    pub f_penultimate: f64,
    /// `L^2 (1-beta)^2 c ln T / (32 T^alpha)`
    pub bound: f64,
    pub ratio: f64,
    /// The same bound with denominator 4 instead of 32; informational.
    pub bound_denominator_4: f64,
    pub bound_denominator_4_holds: bool,
    /// `f(z_{T+1}) T^alpha / (L^2 (1-beta)^2 c)`
    pub normalized: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Points `z_1..z_{T+1}` of the adversarial run, kept on request.
#[derive(Clone, Debug)]
pub struct AdversarialTrajectory {
    pub etas: Vec<f64>,
    pub z_penultimate: Vec<f64>,
    pub z_last: Vec<f64>,
    pub iterates: Option<Vec<Vec<f64>>>,
}

struct Failure {
    count: usize,
    first: Option<(usize, usize)>,
    detail: String,
}

impl Failure {
    fn new() -> Self {
        Self {
            count: 0,
            first: None,
            detail: String::new(),
        }
    }

    fn record(&mut self, at: (usize, usize), detail: impl FnOnce() -> String) {
        if self.first.is_none() {
            self.first = Some(at);
            self.detail = detail();
        }
        self.count += 1;
    }

    fn into_check(self, name: &str, ok_detail: String) -> Check {
        Check {
            name: name.to_string(),
            passed: self.count == 0,
            offending: self.first,
            detail: if self.count == 0 {
                ok_detail
            } else {
                format!("{} violation(s); first: {}", self.count, self.detail)
            },
        }
    }
}

/// Runs momentum SGD on the construction and certifies the lower bound.
///
/// The iterates follow `z_{t+1} = z_t - (1-beta) eta_t sum_{i<=t}
/// beta^(t-i) h_i` from `z_1 = 0`, i.e. EMA momentum with subgradient `h_t`
/// at step `t`. Along the way the run checks that `h_t` is a valid
/// subgradient at `z_t` (row `t` attains the max and is the smallest such
/// row), that `z_{t,j} = 0` for `t <= j`, and that
/// `z_{t,j} >= L (1-beta) c / (4 T^alpha)` for `t > j`.
pub fn run_lower_bound(
    inst: &LowerBoundInstance,
    keep_iterates: bool,
) -> (AdversarialTrajectory, Certificate) {
    let n = inst.horizon;
    let (l, beta, c) = (inst.l, inst.beta, inst.c);
    let t_alpha = (n as f64).powf(inst.alpha);
    let z_floor = l * (1.0 - beta) * c / (4.0 * t_alpha);

    let mut z = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut etas = Vec::with_capacity(n);
    let mut iterates = keep_iterates.then(|| vec![z.clone()]);
    let mut subgrad = Failure::new();
    let mut zeros = Failure::new();
    let mut floor = Failure::new();
    let mut z_prev = z.clone();
    let mut min_positive = f64::INFINITY;

    for t in 1..=n + 1 {
        // Checks on z_t.
        for (j0, &zj) in z.iter().enumerate() {
            let j = j0 + 1;
            if t <= j {
                if zj != 0.0 {
                    zeros.record((t, j), || format!("z[{t},{j}] = {zj}"));
                }
            } else {
                min_positive = min_positive.min(zj);
                if zj < z_floor {
                    floor.record((t, j), || format!("z[{t},{j}] = {zj} < {z_floor}"));
                }
            }
        }
        let (_, arg) = eval_f(inst, &z).expect("dimension matches");
        if arg != t {
            subgrad.record((t, 0), || format!("smallest argmax at z_{t} is row {arg}"));
        }
        if t == n + 1 {
            break;
        }
        // v_t = beta v_{t-1} + h_t, then z_{t+1} = z_t - (1-beta) eta_t v_t.
        let eta = inst.eta(t);
        etas.push(eta);
        for j in 0..t {
            let h = if j + 1 < t { inst.a[j] } else { -inst.b[j] };
            v[j] = beta * v[j] + h;
        }
        let s = (1.0 - beta) * eta;
        if t == n {
            z_prev = z.clone();
        }
        for j in 0..t {
            z[j] -= s * v[j];
        }
        if let Some(it) = iterates.as_mut() {
            it.push(z.clone());
        }
    }

    let (f_last, _) = eval_f(inst, &z).expect("dimension matches");
    let (f_penultimate, _) = eval_f(inst, &z_prev).expect("dimension matches");
    let scale = l * l * (1.0 - beta).powi(2) * c;
    let ln_t = (n as f64).ln();
    let bound = scale * ln_t / (32.0 * t_alpha);
    let bound4 = scale * ln_t / (4.0 * t_alpha);
    let bound_ok = f_last >= bound;

    let checks = vec![
        subgrad.into_check(
            "subgradient_oracle",
            format!(
                "row t is the smallest argmax at every z_t, t = 1..{}",
                n + 1
            ),
        ),
        zeros.into_check("z_zero_pattern", "z[t,j] = 0 for all t <= j".into()),
        floor.into_check(
            "z_lower_bound",
            format!("min z[t,j] over t > j is {min_positive} >= {z_floor}"),
        ),
        Check {
            name: "last_iterate_bound".into(),
            passed: bound_ok,
            offending: None,
            detail: format!("f(z_(T+1)) = {f_last} vs bound {bound}"),
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    let cert = Certificate {
        horizon: n,
        l,
        beta,
        alpha: inst.alpha,
        c,
        f_last,
        f_penultimate,
        bound,
        ratio: f_last / bound,
        bound_denominator_4: bound4,
        bound_denominator_4_holds: f_last >= bound4,
        normalized: f_last * t_alpha / scale,
        checks,
        passed,
    };
    let traj = AdversarialTrajectory {
        etas,
        z_penultimate: z_prev,
        z_last: z,
        iterates,
    };
    (traj, cert)
}
