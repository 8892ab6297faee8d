//! Randomized probes of the constants a [`Problem`] claims.
//!
//! Each function returns the worst normalized margin `(rhs - lhs) / scale`
//! over the probes; a negative value means the claim failed somewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Problem;
use crate::linalg;

fn probe_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    // Mix scales so that both the near-optimum and far-field regimes are hit.
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    (0..dim)
        .map(|_| scale * rng.random_range(-1.0..1.0))
        .collect()
}

fn margin(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / lhs.abs().max(rhs.abs()).max(1.0)
}

/// `f(x) >= f_star` on random probes. `NaN` when `f_star` is unknown.
pub fn lower_bound_margin(p: &Problem, probes: usize, seed: u64) -> f64 {
    let Some(f_star) = p.f_star else {
        return f64::NAN;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| margin(f_star, p.value(&probe_point(&mut rng, p.dim()))))
        .fold(f64::INFINITY, f64::min)
}

/// `|grad(x) - grad(y)| <= l |x - y|` on random probe pairs.
pub fn smoothness_margin(p: &Problem, l: f64, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| {
            let x = probe_point(&mut rng, p.dim());
            let y = if rng.random::<bool>() {
                probe_point(&mut rng, p.dim())
            } else {
                // Nearby pairs probe curvature, not just the global slope.
                x.iter()
                    .map(|v| v + 1e-3 * rng.random_range(-1.0..1.0))
                    .collect()
            };
            let lhs = linalg::dist(&p.gradient(&x), &p.gradient(&y));
            margin(lhs, l * linalg::dist(&x, &y))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `1/2 |grad f|^2 >= mu (f - f_star)` on random probes.
pub fn pl_margin(p: &Problem, mu: f64, probes: usize, seed: u64) -> f64 {
    let Some(f_star) = p.f_star else {
        return f64::NAN;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| {
            let x = probe_point(&mut rng, p.dim());
            let lhs = mu * (p.value(&x) - f_star);
            margin(lhs, 0.5 * linalg::norm_sq(&p.gradient(&x)))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `|grad f|^2 <= 2 l (f - min f)` for an `l`-smooth function.
pub fn smooth_gradient_margin(p: &Problem, probes: usize, seed: u64) -> f64 {
    let (Some(f_star), Some(l)) = (p.f_star, p.l_smooth) else {
        return f64::NAN;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| {
            let x = probe_point(&mut rng, p.dim());
            let lhs = linalg::norm_sq(&p.gradient(&x));
            margin(lhs, 2.0 * l * (p.value(&x) - f_star))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest relative deviation between the analytic gradient and central
/// finite differences of `f`.
pub fn fd_gradient_error(p: &Problem, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x = probe_point(&mut rng, p.dim());
        let g = p.gradient(&x);
        let mut fd = vec![0.0; x.len()];
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
        }
        let err = linalg::dist(&fd, &g) / linalg::norm(&g).max(1.0);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_convex_lipschitz, make_pl_nonconvex, make_quadratic};

    fn builtins() -> Vec<Problem> {
        vec![
            make_quadratic(1, 1.0, 1.0, 0).unwrap(),
            make_quadratic(6, 0.5, 7.0, 4).unwrap(),
            make_pl_nonconvex(),
            make_convex_lipschitz(3).unwrap(),
        ]
    }

    #[test]
    fn builtin_constants_hold_on_probes() {
        for p in builtins() {
            assert!(lower_bound_margin(&p, 2000, 1) >= -1e-12, "{}", p.id());
            if let Some(l) = p.l_smooth {
                assert!(smoothness_margin(&p, l, 2000, 2) >= -1e-12, "{}", p.id());
                assert!(smooth_gradient_margin(&p, 2000, 3) >= -1e-12, "{}", p.id());
            }
            if let Some(mu) = p.mu_pl {
                assert!(pl_margin(&p, mu, 2000, 4) >= -1e-12, "{}", p.id());
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for p in builtins() {
            let err = fd_gradient_error(&p, 500, 7);
            assert!(err < 1e-6, "{}: {err}", p.id());
        }
    }

    #[test]
    fn wrong_constants_are_caught() {
        let p = make_quadratic(3, 1.0, 4.0, 0).unwrap();
        assert!(smoothness_margin(&p, 2.0, 2000, 2) < 0.0);
        assert!(pl_margin(&p, 3.0, 2000, 4) < 0.0);
    }
}
