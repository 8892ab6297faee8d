//! Exact rational replay of the lower-bound trajectory for small horizons.
//!
//! The coefficients `a_j`, `b_j`, `eta_t` and `beta` are taken as the exact
//! rationals of their `f64` values, so the only difference from the float
//! run is rounding in the recursion itself.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use super::{run_lower_bound, LowerBoundInstance};
use crate::error::{Error, Result};

/// Largest horizon accepted by the exact oracle.
pub const MAX_EXACT_HORIZON: usize = 30;

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coefficient")
}

/// `z_1, ..., z_{T+1}` in exact arithmetic.
pub fn exact_trajectory(inst: &LowerBoundInstance) -> Result<Vec<Vec<BigRational>>> {
    let n = inst.horizon;
    if n > MAX_EXACT_HORIZON {
        return Err(Error::param(format!(
            "exact oracle supports T <= {MAX_EXACT_HORIZON}, got {n}"
        )));
    }
    let coeffs = ExactCoefficients {
        a: inst.a.iter().map(|&v| rational(v)).collect(),
        b: inst.b.iter().map(|&v| rational(v)).collect(),
        etas: (1..=n).map(|t| rational(inst.eta(t))).collect(),
        beta: rational(inst.beta),
    };
    Ok(coeffs.trajectory())
}

/// Coefficients of the construction as exact rationals.
#[derive(Clone, Debug)]
pub struct ExactCoefficients {
    pub a: Vec<BigRational>,
    pub b: Vec<BigRational>,
    pub etas: Vec<BigRational>,
    pub beta: BigRational,
}

impl ExactCoefficients {
    /// `z_1, ..., z_{T+1}`.
    pub fn trajectory(&self) -> Vec<Vec<BigRational>> {
        let n = self.a.len();
        let one_minus_beta = BigRational::from_integer(BigInt::from(1)) - &self.beta;
        let mut z = vec![BigRational::zero(); n];
        let mut v = vec![BigRational::zero(); n];
        let mut out = vec![z.clone()];
        for t in 1..=n {
            for j in 0..t {
                let h = if j + 1 < t {
                    self.a[j].clone()
                } else {
                    -self.b[j].clone()
                };
                v[j] = &self.beta * &v[j] + h;
            }
            let s = &one_minus_beta * &self.etas[t - 1];
            for j in 0..t {
                z[j] = &z[j] - &s * &v[j];
            }
            out.push(z.clone());
        }
        out
    }

    /// All row values `h_i^T x`.
    pub fn row_values(&self, x: &[BigRational]) -> Vec<BigRational> {
        let mut out = Vec::with_capacity(self.a.len() + 1);
        let mut prefix = BigRational::zero();
        for j in 0..self.a.len() {
            out.push(&prefix - &self.b[j] * &x[j]);
            prefix += &self.a[j] * &x[j];
        }
        out.push(prefix);
        out
    }
}

/// All row values `h_i^T x`, exactly.
pub fn exact_row_values(inst: &LowerBoundInstance, x: &[BigRational]) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(inst.horizon + 1);
    let mut prefix = BigRational::zero();
    for j in 0..inst.horizon {
        out.push(&prefix - rational(inst.b[j]) * &x[j]);
        prefix += rational(inst.a[j]) * &x[j];
    }
    out.push(prefix);
    out
}

fn argmax_set<T: PartialOrd + Clone>(vals: &[T]) -> Vec<usize> {
    let mut best = vals[0].clone();
    for v in &vals[1..] {
        if *v > best {
            best = v.clone();
        }
    }
    vals.iter()
        .enumerate()
        .filter(|(_, v)| **v == best)
        .map(|(i, _)| i + 1)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactAgreement {
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Float and exact iterates vanish on exactly the same coordinates.
    pub zero_pattern_equal: bool,
    /// Float and exact argmax sets coincide at every `z_t`.
    pub argmax_sets_equal: bool,
    /// The exact argmax set at `z_t` is `{t, ..., T+1}` for every `t`.
    pub argmax_sets_as_predicted: bool,
    /// Largest relative deviation of a nonzero float coordinate.
    pub max_rel_error: f64,
    pub f_last_exact: f64,
    pub passed: bool,
}

/// Replays the instance exactly and compares with the float run.
pub fn compare_with_float(inst: &LowerBoundInstance) -> Result<ExactAgreement> {
    let exact = exact_trajectory(inst)?;
    let (traj, _) = run_lower_bound(inst, true);
    let float = traj.iterates.expect("iterates requested");
    let n = inst.horizon;

    let mut zero_pattern_equal = true;
    let mut argmax_sets_equal = true;
    let mut argmax_sets_as_predicted = true;
    let mut max_rel_error: f64 = 0.0;
    for (t0, (ze, zf)) in exact.iter().zip(&float).enumerate() {
        let t = t0 + 1;
        for (e, &f) in ze.iter().zip(zf) {
            if e.is_zero() != (f == 0.0) {
                zero_pattern_equal = false;
            }
            if !e.is_zero() {
                let ev = e.to_f64().unwrap_or(f64::NAN);
                max_rel_error = max_rel_error.max((f - ev).abs() / ev.abs());
            }
        }
        let set_exact = argmax_set(&exact_row_values(inst, ze));
        let set_float = argmax_set(&inst.row_values(zf));
        if set_exact != set_float {
            argmax_sets_equal = false;
        }
        if set_exact != (t..=n + 1).collect::<Vec<_>>() {
            argmax_sets_as_predicted = false;
        }
    }
    let last = exact.last().expect("non-empty trajectory");
    let f_last = exact_row_values(inst, last)
        .into_iter()
        .max()
        .expect("non-empty rows");
    let passed = zero_pattern_equal
        && argmax_sets_equal
        && argmax_sets_as_predicted
        && max_rel_error <= 1e-12;
    Ok(ExactAgreement {
        horizon: n,
        zero_pattern_equal,
        argmax_sets_equal,
        argmax_sets_as_predicted,
        max_rel_error,
        f_last_exact: f_last.to_f64().unwrap_or(f64::NAN),
        passed,
    })
}
