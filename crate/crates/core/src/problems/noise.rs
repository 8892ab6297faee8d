use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{Objective, Problem, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg;

/// Recipe turning an exact gradient into an unbiased stochastic one.
#[derive(Clone, Debug, Default)]
pub enum NoiseModel {
    #[default]
    None,
    /// Isotropic Gaussian with per-coordinate variance
    /// `sigma^2 (1 - exp(-2/d)) / 2`, which makes
    /// `E[exp(|g - grad|^2 / sigma^2)]` equal to `e`.
    AdditiveSubGaussian { sigma: f64 },
    /// Uniform direction, radius uniform in `[0, radius]`.
    BoundedSupport { radius: f64 },
    /// `E|g - grad|^2 = a |grad|^2 + b` exactly.
    AffineVariance { a: f64, b: f64 },
    /// One component of a finite sum drawn uniformly per query; all
    /// components share the minimizer of the sum.
    FiniteSumInterpolation {
        components: Vec<Arc<QuadraticForm>>,
        component_smoothness: f64,
    },
}

#[derive(Serialize)]
struct NoiseEcho<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    components: Option<usize>,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "noise parameter {name} must be finite and >= 0, got {v}"
                )))
            }
        };
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::AdditiveSubGaussian { sigma } => ok("sigma", *sigma),
            NoiseModel::BoundedSupport { radius } => ok("radius", *radius),
            NoiseModel::AffineVariance { a, b } => ok("a", *a).and(ok("b", *b)),
            NoiseModel::FiniteSumInterpolation { components, .. } => {
                if components.is_empty() {
                    Err(Error::param("finite sum needs at least one component"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::AdditiveSubGaussian { .. } => "subgaussian",
            NoiseModel::BoundedSupport { .. } => "bounded",
            NoiseModel::AffineVariance { .. } => "affine",
            NoiseModel::FiniteSumInterpolation { .. } => "finite-sum",
        }
    }

    /// Per-coordinate standard deviation of the sub-Gaussian sampler.
    pub fn subgaussian_scale(sigma: f64, dim: usize) -> f64 {
        let d = dim as f64;
        (sigma * sigma * (1.0 - (-2.0 / d).exp()) / 2.0).sqrt()
    }

    pub fn echo(&self) -> serde_json::Value {
        let mut e = NoiseEcho {
            kind: self.kind(),
            sigma: None,
            radius: None,
            a: None,
            b: None,
            components: None,
        };
        match self {
            NoiseModel::None => {}
            NoiseModel::AdditiveSubGaussian { sigma } => e.sigma = Some(*sigma),
            NoiseModel::BoundedSupport { radius } => e.radius = Some(*radius),
            NoiseModel::AffineVariance { a, b } => {
                e.a = Some(*a);
                e.b = Some(*b);
            }
            NoiseModel::FiniteSumInterpolation { components, .. } => {
                e.components = Some(components.len())
            }
        }
        serde_json::to_value(e).expect("noise echo serializes")
    }
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draws `g(x, xi)` with `E[g] = grad f(x)`.
///
/// The stream is a deterministic function of the generator state, so a
/// seeded generator and a fixed call sequence reproduce it bit for bit.
pub fn sample_gradient<R: Rng + ?Sized>(
    problem: &Problem,
    noise: &NoiseModel,
    x: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let dim = x.len();
    match noise {
        NoiseModel::None => problem.gradient(x),
        NoiseModel::AdditiveSubGaussian { sigma } => {
            let s = NoiseModel::subgaussian_scale(*sigma, dim);
            let mut g = problem.gradient(x);
            for gi in g.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *gi += s * z;
            }
            g
        }
        NoiseModel::BoundedSupport { radius } => {
            let mut g = problem.gradient(x);
            let u = linalg::random_unit_vector(dim, rng);
            let r = radius * rng.random::<f64>();
            linalg::axpy(r, &u, &mut g);
            g
        }
        NoiseModel::AffineVariance { a, b } => {
            let mut g = problem.gradient(x);
            let gnorm = linalg::norm(&g);
            let u1 = linalg::random_unit_vector(dim, rng);
            let u2 = linalg::random_unit_vector(dim, rng);
            let c1 = a.sqrt() * gnorm * rademacher(rng);
            let c2 = b.sqrt() * rademacher(rng);
            linalg::axpy(c1, &u1, &mut g);
            linalg::axpy(c2, &u2, &mut g);
            g
        }
        NoiseModel::FiniteSumInterpolation { components, .. } => {
            let i = rng.random_range(0..components.len());
            components[i].gradient(x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_finite_sum, make_quadratic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SAMPLES: usize = 100_000;

    fn noise_sq_mean(p: &Problem, noise: &NoiseModel, x: &[f64], seed: u64) -> (Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grad = p.gradient(x);
        let mut mean = vec![0.0; x.len()];
        let mut sq = 0.0;
        for _ in 0..SAMPLES {
            let g = sample_gradient(p, noise, x, &mut rng);
            linalg::axpy(1.0 / SAMPLES as f64, &g, &mut mean);
            sq += linalg::dist(&g, &grad).powi(2) / SAMPLES as f64;
        }
        (mean, sq)
    }

    #[test]
    fn no_noise_returns_exact_gradient() {
        let p = make_quadratic(3, 1.0, 4.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [0.1, -0.2, 0.3];
        assert_eq!(
            sample_gradient(&p, &NoiseModel::None, &x, &mut rng),
            p.gradient(&x)
        );
    }

    #[test]
    fn affine_variance_matches_law_and_is_unbiased() {
        let p = make_quadratic(4, 1.0, 4.0, 3).unwrap();
        let x = [0.5, -1.0, 0.25, 2.0];
        let grad = p.gradient(&x);
        for &(a, b) in &[(0.0, 2.0), (0.5, 1.0), (1.0, 0.0)] {
            let noise = NoiseModel::AffineVariance { a, b };
            let (mean, var) = noise_sq_mean(&p, &noise, &x, 17);
            let expected = a * linalg::norm_sq(&grad) + b;
            assert!(
                (var - expected).abs() <= 0.05 * expected,
                "a={a} b={b}: {var} vs {expected}"
            );
            for (m, g) in mean.iter().zip(&grad) {
                assert!((m - g).abs() < 1e-2 * (1.0 + expected.sqrt()), "{m} vs {g}");
            }
        }
    }

    #[test]
    fn bounded_support_never_exceeds_radius() {
        let p = make_quadratic(3, 1.0, 4.0, 0).unwrap();
        let x = [1.0, 1.0, 1.0];
        let grad = p.gradient(&x);
        let noise = NoiseModel::BoundedSupport { radius: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let worst = (0..SAMPLES)
            .map(|_| linalg::dist(&sample_gradient(&p, &noise, &x, &mut rng), &grad))
            .fold(0.0, f64::max);
        assert!(worst <= 1.0);
        let (mean, _) = noise_sq_mean(&p, &noise, &x, 6);
        for (m, g) in mean.iter().zip(&grad) {
            assert!((m - g).abs() < 1e-2);
        }
    }

    #[test]
    fn subgaussian_moment_bound() {
        let dim = 10;
        let p = make_quadratic(dim, 1.0, 4.0, 0).unwrap();
        let x = vec![0.0; dim];
        let sigma = 1.7;
        let noise = NoiseModel::AdditiveSubGaussian { sigma };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let est = (0..SAMPLES)
            .map(|_| {
                let g = sample_gradient(&p, &noise, &x, &mut rng);
                (linalg::norm_sq(&g) / (sigma * sigma)).exp()
            })
            .sum::<f64>()
            / SAMPLES as f64;
        let e = std::f64::consts::E;
        assert!(est <= e * 1.01, "estimate {est}");
        assert!(est >= e * 0.97, "estimate {est}");
    }

    #[test]
    fn finite_sum_sampler_is_unbiased() {
        let (p, noise) = make_finite_sum(3, 10, 1.0, 3.0, 4).unwrap();
        let x = [1.0, -0.5, 0.2];
        let (mean, _) = noise_sq_mean(&p, &noise, &x, 21);
        for (m, g) in mean.iter().zip(&p.gradient(&x)) {
            assert!((m - g).abs() < 1e-2, "{m} vs {g}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let p = make_quadratic(5, 1.0, 4.0, 0).unwrap();
        let x = [0.3; 5];
        let noise = NoiseModel::AffineVariance { a: 0.3, b: 0.7 };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .flat_map(|_| sample_gradient(&p, &noise, &x, &mut rng))
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(99), run(99));
        assert_ne!(run(99), run(100));
    }

    #[test]
    fn negative_parameters_rejected() {
        assert!(NoiseModel::AffineVariance { a: -1.0, b: 0.0 }
            .validate()
            .is_err());
        assert!(NoiseModel::BoundedSupport { radius: f64::NAN }
            .validate()
            .is_err());
        assert!(NoiseModel::AdditiveSubGaussian { sigma: 0.0 }
            .validate()
            .is_ok());
    }
}
