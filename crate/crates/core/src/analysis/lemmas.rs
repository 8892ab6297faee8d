//! Randomized checks of the scalar inequalities and identities the
//! convergence proofs rest on.
//!
//! Every trial draws admissible inputs and returns a margin: the signed gap
//! `rhs - lhs` divided by the larger side for inequalities, and minus the
//! absolute (or scale-normalised) error for identities. A lemma is violated
//! when its worst margin drops below `-LEMMA_SLACK`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const LEMMA_SLACK: f64 = 1e-12;

pub const LEMMA_IDS: [&str; 14] = [
    "sum_bounded",
    "sum_integral_bounds",
    "solvex",
    "logsolvex",
    "exponential",
    "bound_log",
    "ineq_alpha",
    "ineq_constant",
    "integral_bound",
    "sum_cosine",
    "poly_bound",
    "ratio_bound",
    "doublesum",
    "smooth",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub trials: usize,
    /// Smallest margin seen; negative means the right side lost.
    pub worst_margin: f64,
    pub violated: bool,
}

/// Runs `trials` random instances of every lemma. Lemma `k` draws from
/// stream `k` of the generator seeded by `seed`, so reports do not depend on
/// thread scheduling.
pub fn lemma_suite(trials: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    if trials == 0 {
        return Err(Error::param("lemma suite needs at least one trial"));
    }
    Ok(LEMMA_IDS
        .par_iter()
        .enumerate()
        .map(|(k, &id)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let trial = trial_fn(id);
            let worst = (0..trials)
                .map(|_| {
                    let m = trial(&mut rng);
                    if m.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        m
                    }
                })
                .fold(f64::INFINITY, f64::min);
            LemmaReport {
                lemma_id: id.to_string(),
                trials,
                worst_margin: worst,
                violated: worst < -LEMMA_SLACK,
            }
        })
        .collect())
}

type Trial = fn(&mut ChaCha8Rng) -> f64;

fn trial_fn(id: &str) -> Trial {
    match id {
        "sum_bounded" => sum_bounded,
        "sum_integral_bounds" => sum_integral_bounds,
        "solvex" => solvex,
        "logsolvex" => logsolvex,
        "exponential" => exponential,
        "bound_log" => bound_log,
        "ineq_alpha" => ineq_alpha,
        "ineq_constant" => ineq_constant,
        "integral_bound" => integral_bound,
        "sum_cosine" => sum_cosine,
        "poly_bound" => poly_bound,
        "ratio_bound" => ratio_bound,
        "doublesum" => doublesum,
        "smooth" => smooth,
        _ => unreachable!("unknown lemma {id}"),
    }
}

// ---- margins -------------------------------------------------------------

/// `(rhs - lhs) / max(|lhs|, |rhs|)`.
fn rel_margin(lhs: f64, rhs: f64) -> f64 {
    if lhs == rhs {
        return 0.0;
    }
    if rhs == f64::INFINITY || lhs == f64::NEG_INFINITY {
        return 1.0;
    }
    if lhs == f64::INFINITY || rhs == f64::NEG_INFINITY {
        return -1.0;
    }
    (rhs - lhs) / lhs.abs().max(rhs.abs())
}

/// [`rel_margin`] for positive sides given by their logarithms.
fn log_margin(log_lhs: f64, log_rhs: f64) -> f64 {
    if log_lhs == log_rhs {
        0.0
    } else if log_rhs > log_lhs {
        -(log_lhs - log_rhs).exp_m1()
    } else {
        (log_rhs - log_lhs).exp_m1()
    }
}

fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

// ---- input distributions -------------------------------------------------

fn pos(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1e-3f64.ln()..=1e3f64.ln()).exp()
}

/// A nonnegative draw that is exactly zero one time in ten.
fn nonneg(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.1) {
        0.0
    } else {
        pos(rng)
    }
}

fn signed(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        pos(rng)
    } else {
        -pos(rng)
    }
}

fn len(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=200)
}

/// Uniform on `(0, 1/2]`.
fn eps(rng: &mut ChaCha8Rng) -> f64 {
    0.5 - rng.random_range(0.0..0.5)
}

/// Largest `x >= x0` (up to bisection precision) with `h(x) >= 0`, searching
/// to the right of a point where `h(x0) >= 0`. `None` if `h` stays
/// nonnegative up to overflow.
fn boundary(h: impl Fn(f64) -> f64, x0: f64) -> Option<f64> {
    let mut lo = x0;
    let mut hi = x0.max(1.0) * 2.0;
    while h(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Either the boundary point itself or a uniform draw below it.
fn near_boundary(rng: &mut ChaCha8Rng, b: f64) -> f64 {
    if rng.random_bool(0.5) {
        b
    } else {
        b * rng.random::<f64>()
    }
}

// ---- lemmas ----------------------------------------------------------------

/// `sum_t a_t / (a_0 + sum_{i<=t} a_i)^beta <= 1 / ((beta-1) a_0^(beta-1))`,
/// as logarithms of both sides.
fn sum_bounded_sides(a0: f64, a: &[f64], beta: f64) -> (f64, f64) {
    let mut s = a0;
    let mut terms = Vec::with_capacity(a.len());
    for &at in a {
        s += at;
        terms.push(at.ln() - beta * s.ln());
    }
    let log_rhs = -(beta - 1.0).ln() - (beta - 1.0) * a0.ln();
    (log_sum_exp(terms), log_rhs)
}

fn sum_bounded(rng: &mut ChaCha8Rng) -> f64 {
    let a0 = pos(rng);
    let a: Vec<f64> = (0..len(rng)).map(|_| nonneg(rng)).collect();
    let beta = 1.0 + pos(rng);
    let (l, r) = sum_bounded_sides(a0, &a, beta);
    log_margin(l, r)
}

/// `sum_t a_t f(a_0 + sum_{i<=t} a_i) <= int_{a_0}^{sum a} f` for a
/// nonincreasing `f`, either `(1+x)^-p` or `exp(-lambda x)`.
fn sum_integral_bounds(rng: &mut ChaCha8Rng) -> f64 {
    let a0 = nonneg(rng);
    let a: Vec<f64> = (0..len(rng)).map(|_| nonneg(rng)).collect();
    let rate = pos(rng);
    let power_law = rng.random_bool(0.5);
    let log_f = |x: f64| {
        if power_law {
            -rate * x.ln_1p()
        } else {
            -rate * x
        }
    };
    let mut s = a0;
    let mut terms = Vec::with_capacity(a.len());
    for &at in &a {
        s += at;
        terms.push(at.ln() + log_f(s));
    }
    let log_lhs = log_sum_exp(terms);
    let log_rhs = if s == a0 {
        f64::NEG_INFINITY
    } else if power_law {
        // int_{u0}^{u1} u^-p du = u0^(1-p) * expm1((1-p) ln(u1/u0)) / (1-p)
        let q = 1.0 - rate;
        let span = s.ln_1p() - a0.ln_1p();
        let factor = if q == 0.0 {
            span
        } else {
            (q * span).exp_m1() / q
        };
        q * a0.ln_1p() + factor.ln()
    } else {
        -rate * a0 + (-(-rate * (s - a0)).exp_m1() / rate).ln()
    };
    if log_lhs == f64::NEG_INFINITY {
        return if log_rhs == f64::NEG_INFINITY {
            0.0
        } else {
            1.0
        };
    }
    log_margin(log_lhs, log_rhs)
}

fn solvex_rhs(a: f64, b: f64, c: f64, e: f64) -> f64 {
    let p = 0.5 + e;
    let first = (c * (2.0 * b).powf(p)).powf(1.0 / (0.5 - e));
    first.max(c * (2.0 * a).powf(p))
}

/// `x <= C (A + Bx)^(1/2+eps)` implies
/// `x < max([C (2B)^(1/2+eps)]^(1/(1/2-eps)), C (2A)^(1/2+eps))`.
fn solvex(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let (a, b, c, e) = (pos(rng), pos(rng), pos(rng), eps(rng));
        let h = |x: f64| c * (a + b * x).powf(0.5 + e) - x;
        if let Some(xmax) = boundary(h, 0.0) {
            let x = near_boundary(rng, xmax);
            return rel_margin(x, solvex_rhs(a, b, c, e));
        }
    }
}

fn logsolvex_rhs(a: f64, b: f64, c: f64, d: f64) -> f64 {
    32.0 * b.powi(3) * d * d + 2.0 * b * c + 8.0 * b * b * d * c.sqrt() + a / b
}

/// `x^2 <= (A + Bx)(C + D ln(A + Bx))` implies
/// `x < 32 B^3 D^2 + 2BC + 8 B^2 D sqrt(C) + A/B`.
fn logsolvex(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let (a, b, c, d) = (nonneg(rng), pos(rng), nonneg(rng), nonneg(rng));
        let h = |x: f64| {
            let u = a + b * x;
            u * (c + d * u.ln()) - x * x
        };
        for _ in 0..64 {
            let x0 = rng.random_range(1e-6f64.ln()..=1e6f64.ln()).exp();
            if h(x0) < 0.0 {
                continue;
            }
            let x = if rng.random_bool(0.5) {
                x0
            } else {
                match boundary(h, x0) {
                    Some(b) => b,
                    None => break,
                }
            };
            return rel_margin(x, logsolvex_rhs(a, b, c, d));
        }
    }
}

/// `(x + y)^p <= x^p + y^p` for `p` in `[0, 1]`.
fn exponential(rng: &mut ChaCha8Rng) -> f64 {
    let (x, y) = (nonneg(rng), nonneg(rng));
    let p = rng.random_range(0.0..=1.0);
    rel_margin((x + y).powf(p), x.powf(p) + y.powf(p))
}

/// `ln x <= alpha (x^(1/alpha) - 1)`.
fn bound_log(rng: &mut ChaCha8Rng) -> f64 {
    let x = if rng.random_bool(0.05) { 1.0 } else { pos(rng) };
    let alpha = pos(rng);
    rel_margin(x.ln(), alpha * (x.ln() / alpha).exp_m1())
}

/// `1 - x <= ln(1/x)`.
fn ineq_alpha(rng: &mut ChaCha8Rng) -> f64 {
    let x = if rng.random_bool(0.05) { 1.0 } else { pos(rng) };
    rel_margin(1.0 - x, -x.ln())
}

/// With `alpha = (beta/T)^(1/T) >= 0.69`, `T >= 3` and `1 <= beta < T`:
/// `alpha^(T+1) / (1 - alpha) <= 2 beta / ln(T/beta)`.
fn ineq_constant(rng: &mut ChaCha8Rng) -> f64 {
    let horizon = rng.random_range(3..=200usize) as f64;
    let lo = 1f64.max(horizon * 0.69f64.powf(horizon));
    let beta = rng.random_range(lo.ln()..horizon.ln()).exp();
    let log_ratio = (beta / horizon).ln();
    let alpha = (log_ratio / horizon).exp();
    debug_assert!(alpha >= 0.69);
    let lhs = alpha * (beta / horizon) / -(log_ratio / horizon).exp_m1();
    rel_margin(lhs, 2.0 * beta / -log_ratio)
}

/// `sum_{t=0}^T exp(-bt) t^a <= 2 exp(-a) (a/b)^a + Gamma(a+1) / b^(a+1)`,
/// compared in log space.
fn integral_bound_sides(a: f64, b: f64, horizon: usize) -> (f64, f64) {
    let zero_term = if a == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    let log_lhs = log_sum_exp(
        std::iter::once(zero_term)
            .chain((1..=horizon).map(|t| -b * t as f64 + a * (t as f64).ln())),
    );
    let peak = if a == 0.0 {
        2f64.ln()
    } else {
        2f64.ln() - a + a * (a / b).ln()
    };
    let tail = ln_gamma(a + 1.0) - (a + 1.0) * b.ln();
    (log_lhs, log_sum_exp([peak, tail]))
}

fn integral_bound(rng: &mut ChaCha8Rng) -> f64 {
    let a = nonneg(rng);
    let b = pos(rng);
    let horizon = rng.random_range(0..=200);
    let (l, r) = integral_bound_sides(a, b, horizon);
    log_margin(l, r)
}

/// `sum_{t=1}^T cos(t pi / T)` with compensated summation.
pub fn cosine_sum(horizon: usize) -> f64 {
    let n = horizon as f64;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in 1..=horizon {
        let v = (t as f64 * std::f64::consts::PI / n).cos();
        let s = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - s) + v
        } else {
            (v - s) + sum
        };
        sum = s;
    }
    sum + comp
}

/// `sum_{t=1}^T cos(t pi / T) = -1`, with `T` log-uniform on `[1, 10^4]`.
fn sum_cosine(rng: &mut ChaCha8Rng) -> f64 {
    let horizon = (rng.random_range(0.0..=10_000f64.ln()).exp() as usize).clamp(1, 10_000);
    -(cosine_sum(horizon) + 1.0).abs()
}

/// `1/(T-j+1) sum_{k=j+1}^t k^-alpha <= 2 / T^alpha` for
/// `1 <= j <= t <= T` and `0 < alpha <= 1/2`.
fn poly_bound_sides(j: usize, t: usize, horizon: usize, alpha: f64) -> (f64, f64) {
    let sum: f64 = (j + 1..=t).map(|k| (k as f64).powf(-alpha)).sum();
    (
        sum / (horizon - j + 1) as f64,
        2.0 / (horizon as f64).powf(alpha),
    )
}

fn poly_bound(rng: &mut ChaCha8Rng) -> f64 {
    let horizon = len(rng);
    let j = rng.random_range(1..=horizon);
    let t = rng.random_range(j..=horizon);
    let (l, r) = poly_bound_sides(j, t, horizon, eps(rng));
    rel_margin(l, r)
}

/// `X_{k+1} <= A_k X_k + B_k` implies
/// `X_{k+1} <= prod_{i<=k} A_i X_1 + sum_i prod_{i<j<=k} A_j B_i`.
fn ratio_bound(rng: &mut ChaCha8Rng) -> f64 {
    'draw: loop {
        let n = len(rng);
        let a: Vec<f64> = (0..n).map(|_| pos(rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| nonneg(rng)).collect();
        let mut x = vec![pos(rng)];
        for k in 0..n {
            let u = if rng.random_bool(0.5) {
                1.0
            } else {
                rng.random::<f64>()
            };
            x.push(u * (a[k] * x[k] + b[k]));
        }
        let mut worst = f64::INFINITY;
        for k in [n, rng.random_range(1..=n)] {
            // Suffix products prod_{j=i+1}^k A_j, walking i down from k.
            let mut suffix = 1.0;
            let mut rhs = 0.0;
            for i in (0..k).rev() {
                rhs += suffix * b[i];
                suffix *= a[i];
            }
            rhs += suffix * x[0];
            if !rhs.is_finite() {
                continue 'draw;
            }
            worst = worst.min(rel_margin(x[k], rhs));
        }
        return worst;
    }
}

/// Both summation-swap identities, error normalised by
/// `sum |a| * sum |b|`.
fn doublesum_error(a: &[f64], b: &[f64]) -> f64 {
    // a = a_1..a_T, b = b_0..b_T
    let n = a.len();
    let mut prefix = 0.0;
    let mut prefix_excl = 0.0;
    let (mut lhs1, mut lhs2) = (0.0, 0.0);
    for t in 1..=n {
        prefix_excl += b[t - 1];
        prefix += b[t];
        lhs1 += a[t - 1] * prefix;
        lhs2 += a[t - 1] * prefix_excl;
    }
    let mut suffix = 0.0;
    let (mut rhs1, mut rhs2) = (0.0, 0.0);
    for t in (0..=n).rev() {
        // Here suffix = sum_{i=t+1}^T a_i.
        if t < n {
            rhs2 += b[t] * suffix;
        }
        if t >= 1 {
            suffix += a[t - 1];
            rhs1 += b[t] * suffix;
        }
    }
    let scale = a.iter().map(|v| v.abs()).sum::<f64>() * b.iter().map(|v| v.abs()).sum::<f64>();
    (lhs1 - rhs1).abs().max((lhs2 - rhs2).abs()) / scale.max(f64::MIN_POSITIVE)
}

fn doublesum(rng: &mut ChaCha8Rng) -> f64 {
    let n = len(rng);
    let a: Vec<f64> = (0..n).map(|_| signed(rng)).collect();
    let b: Vec<f64> = (0..=n).map(|_| signed(rng)).collect();
    -doublesum_error(&a, &b)
}

fn log_cosh(d: f64) -> f64 {
    let d = d.abs();
    if d < 20.0 {
        (2.0 * (0.5 * d).sinh().powi(2)).ln_1p()
    } else {
        d - std::f64::consts::LN_2 + (-2.0 * d).exp().ln_1p()
    }
}

/// `||grad f(x)||^2 <= 2M (f(x) - min f)` on random `M`-smooth separable
/// functions `sum_i lambda_i d_i^2 / 2 + kappa_i ln cosh d_i` with
/// `lambda_i + kappa_i <= M`, whose minimum is 0.
fn smooth(rng: &mut ChaCha8Rng) -> f64 {
    let m = pos(rng);
    let (mut grad_sq, mut f) = (0.0, 0.0);
    for _ in 0..len(rng) {
        let scale = if rng.random_bool(0.2) {
            1.0
        } else {
            rng.random::<f64>()
        };
        let w = rng.random::<f64>();
        let (lambda, kappa) = (m * scale * w, m * scale * (1.0 - w));
        let d = signed(rng);
        let g = lambda * d + kappa * d.tanh();
        grad_sq += g * g;
        f += 0.5 * lambda * d * d + kappa * log_cosh(d);
    }
    rel_margin(grad_sq, 2.0 * m * f)
}
