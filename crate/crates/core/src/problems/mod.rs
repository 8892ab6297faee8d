//! Test objectives with exact value and gradient oracles.
//!
//! The built-in instances are representatives of the assumption classes the
//! step-size results are stated for (smooth, PL, convex, Lipschitz); none of
//! them is singled out by the theory itself.

mod checks;
mod noise;
mod registry;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

pub use checks::{
    fd_gradient_error, lower_bound_margin, pl_margin, smooth_gradient_margin, smoothness_margin,
};
pub use noise::{sample_gradient, NoiseModel};
pub use registry::{ProblemFactory, ProblemRegistry};

/// Grid-certified PL constant of `x^2 + 3 sin^2 x`.
///
/// The minimum of `f'(x)^2 / (2 f(x))` over 2,000,001 equispaced points in
/// `[-10, 10]` is 0.175530986 (attained near x = -2.2017); outside the grid
/// the ratio exceeds 1.4. The stored constant is rounded down. See
/// `data/pl_sine_certificate.json`.
pub const PL_SINE_MU: f64 = 0.1755;

/// Smoothness constant of `x^2 + 3 sin^2 x`: `f'' = 2 + 6 cos 2x <= 8`.
pub const PL_SINE_L: f64 = 8.0;

/// A differentiable objective on `R^d`.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Structural properties the instance is known to have.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub convex: bool,
    pub smooth: bool,
    pub pl: bool,
    pub lipschitz: bool,
}

/// `f(x) = 1/2 (x - c)^T A (x - c)` with `A` symmetric positive semidefinite.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
    center: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl QuadraticForm {
    /// Builds `Q diag(eigenvalues) Q^T` from an orthogonal `Q` (columns are
    /// eigenvectors).
    pub fn from_eigen(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>, center: Vec<f64>) -> Self {
        let d = eigenvalues.len();
        assert_eq!(eigenvectors.nrows(), d);
        assert_eq!(eigenvectors.ncols(), d);
        assert_eq!(center.len(), d);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
        let mut matrix = &eigenvectors * diag * eigenvectors.transpose();
        // Exact symmetry keeps gradients of x and its mirror image consistent.
        let sym = (&matrix + matrix.transpose()) * 0.5;
        matrix.copy_from(&sym);
        Self {
            matrix,
            center,
            eigenvalues,
            eigenvectors,
        }
    }

    /// Eigendecomposes an arbitrary symmetric PSD matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, center: Vec<f64>) -> Self {
        let eig = matrix.clone().symmetric_eigen();
        Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
            matrix,
            center,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn shifted(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, c)| a - c))
    }
}

impl Objective for QuadraticForm {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let y = self.shifted(x);
        0.5 * y.dot(&(&self.matrix * &y))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let y = self.shifted(x);
        (&self.matrix * y).iter().copied().collect()
    }
}

/// `f(x) = x^2 + 3 sin^2(x)`: non-convex, smooth, and PL.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlSine;

impl Objective for PlSine {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0].sin();
        x[0] * x[0] + 3.0 * s * s
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0] + 3.0 * (2.0 * x[0]).sin()]
    }
}

/// Huber function of the Euclidean norm: quadratic inside radius `delta`,
/// linear with slope `g_lip` outside. Convex, `g_lip`-Lipschitz and
/// `(g_lip / delta)`-smooth, minimized at the origin.
#[derive(Clone, Copy, Debug)]
pub struct Huber {
    pub dim: usize,
    pub g_lip: f64,
    pub delta: f64,
}

impl Objective for Huber {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = linalg::norm(x);
        if r <= self.delta {
            self.g_lip * r * r / (2.0 * self.delta)
        } else {
            self.g_lip * (r - 0.5 * self.delta)
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = linalg::norm(x);
        let scale = if r <= self.delta {
            self.g_lip / self.delta
        } else {
            self.g_lip / r
        };
        x.iter().map(|v| scale * v).collect()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Quadratic(Arc<QuadraticForm>),
    PlSine,
    Huber(Huber),
    Custom(Arc<dyn Objective>),
}

/// An objective together with the constants known about it.
#[derive(Clone, Debug)]
pub struct Problem {
    id: String,
    kind: Kind,
    pub f_star: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    pub l_smooth: Option<f64>,
    pub mu_pl: Option<f64>,
    pub g_lip: Option<f64>,
    pub flags: Flags,
}

impl Problem {
    /// Wraps a user-supplied objective; constants are attached with the
    /// `with_*` builders.
    pub fn custom(id: impl Into<String>, objective: Arc<dyn Objective>) -> Self {
        Self {
            id: id.into(),
            kind: Kind::Custom(objective),
            f_star: None,
            x_star: None,
            l_smooth: None,
            mu_pl: None,
            g_lip: None,
            flags: Flags::default(),
        }
    }

    pub fn with_minimum(mut self, f_star: f64, x_star: Option<Vec<f64>>) -> Self {
        self.f_star = Some(f_star);
        self.x_star = x_star;
        self
    }

    pub fn with_smoothness(mut self, l: f64) -> Self {
        self.l_smooth = Some(l);
        self.flags.smooth = true;
        self
    }

    pub fn with_pl(mut self, mu: f64) -> Self {
        self.mu_pl = Some(mu);
        self.flags.pl = true;
        self
    }

    pub fn with_lipschitz(mut self, g: f64) -> Self {
        self.g_lip = Some(g);
        self.flags.lipschitz = true;
        self
    }

    pub fn with_convexity(mut self, convex: bool) -> Self {
        self.flags.convex = convex;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Quadratic(q) => q.dim(),
            Kind::PlSine => 1,
            Kind::Huber(h) => h.dim,
            Kind::Custom(o) => o.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic(q) => q.value(x),
            Kind::PlSine => PlSine.value(x),
            Kind::Huber(h) => h.value(x),
            Kind::Custom(o) => o.value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic(q) => q.gradient(x),
            Kind::PlSine => PlSine.gradient(x),
            Kind::Huber(h) => h.gradient(x),
            Kind::Custom(o) => o.gradient(x),
        }
    }

    /// The underlying quadratic form, for closed-form oracles.
    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        match &self.kind {
            Kind::Quadratic(q) => Some(q),
            _ => None,
        }
    }
}

fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

fn quadratic_problem(id: &str, form: QuadraticForm, l: f64, mu: f64) -> Problem {
    let center = form.center().to_vec();
    Problem {
        id: id.to_string(),
        kind: Kind::Quadratic(Arc::new(form)),
        f_star: Some(0.0),
        x_star: Some(center),
        l_smooth: Some(l),
        mu_pl: Some(mu),
        g_lip: None,
        flags: Flags {
            convex: true,
            smooth: true,
            pl: true,
            lipschitz: false,
        },
    }
}

/// `f(x) = 1/2 x^T A x` with a randomly rotated spectrum spread linearly over
/// `[mu, l]` (both endpoints attained when `dim >= 2`).
///
/// With `dim == 1` the single eigenvalue is `mu`, and `l` is recorded as the
/// smoothness bound.
pub fn make_quadratic(dim: usize, mu: f64, l: f64, seed: u64) -> Result<Problem> {
    if dim == 0 {
        return Err(Error::param("quadratic dimension must be positive"));
    }
    if !(mu > 0.0 && mu.is_finite() && l.is_finite()) {
        return Err(Error::param(format!(
            "quadratic needs finite 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    if mu > l {
        return Err(Error::param(format!("mu={mu} exceeds L={l}")));
    }
    let eigenvalues: Vec<f64> = if dim == 1 {
        vec![mu]
    } else {
        (0..dim)
            .map(|i| mu + (l - mu) * i as f64 / (dim - 1) as f64)
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(dim, &mut rng);
    let form = QuadraticForm::from_eigen(eigenvalues, q, vec![0.0; dim]);
    Ok(quadratic_problem("quadratic", form, l, mu))
}

/// `f(x) = x^2 + 3 sin^2(x)` with its grid-certified PL constant.
pub fn make_pl_nonconvex() -> Problem {
    Problem {
        id: "pl-sine".into(),
        kind: Kind::PlSine,
        f_star: Some(0.0),
        x_star: Some(vec![0.0]),
        l_smooth: Some(PL_SINE_L),
        mu_pl: Some(PL_SINE_MU),
        g_lip: None,
        flags: Flags {
            convex: false,
            smooth: true,
            pl: true,
            lipschitz: false,
        },
    }
}

/// Huber objective with unit slope and unit transition radius.
pub fn make_convex_lipschitz(dim: usize) -> Result<Problem> {
    make_huber(dim, 1.0, 1.0)
}

pub fn make_huber(dim: usize, g_lip: f64, delta: f64) -> Result<Problem> {
    if dim == 0 {
        return Err(Error::param("huber dimension must be positive"));
    }
    if !(g_lip > 0.0 && delta > 0.0) {
        return Err(Error::param("huber needs positive slope and radius"));
    }
    Ok(Problem {
        id: "huber".into(),
        kind: Kind::Huber(Huber { dim, g_lip, delta }),
        f_star: Some(0.0),
        x_star: Some(vec![0.0; dim]),
        l_smooth: Some(g_lip / delta),
        mu_pl: None,
        g_lip: Some(g_lip),
        flags: Flags {
            convex: true,
            smooth: true,
            pl: false,
            lipschitz: true,
        },
    })
}

/// A finite sum of `n` quadratics that all share the minimizer `0`, together
/// with the noise model that samples one component per gradient query.
///
/// Each component has a random rotation and eigenvalues drawn uniformly from
/// `[mu, l]`; the recorded constants are those of the average.
pub fn make_finite_sum(
    dim: usize,
    components: usize,
    mu: f64,
    l: f64,
    seed: u64,
) -> Result<(Problem, NoiseModel)> {
    if dim == 0 || components == 0 {
        return Err(Error::param(
            "finite sum needs dim >= 1 and at least one component",
        ));
    }
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::param(format!(
            "finite sum needs 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Uniform::new_inclusive(mu, l).map_err(|e| Error::param(e.to_string()))?;
    let mut forms = Vec::with_capacity(components);
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..components {
        let eig: Vec<f64> = (0..dim).map(|_| spread.sample(&mut rng)).collect();
        let q = random_orthogonal(dim, &mut rng);
        let form = QuadraticForm::from_eigen(eig, q, vec![0.0; dim]);
        sum += form.matrix();
        forms.push(Arc::new(form));
    }
    let avg = sum / components as f64;
    let avg = (&avg + avg.transpose()) * 0.5;
    let form = QuadraticForm::from_matrix(avg, vec![0.0; dim]);
    let (mu_avg, l_avg) = (form.min_eigenvalue(), form.max_eigenvalue());
    let problem = quadratic_problem("finite-sum", form, l_avg, mu_avg);
    // Per-component smoothness bounds the stochastic gradients too.
    let l_max = forms
        .iter()
        .map(|f| f.max_eigenvalue())
        .fold(l_avg, f64::max);
    let noise = NoiseModel::FiniteSumInterpolation {
        components: forms,
        component_smoothness: l_max,
    };
    Ok((problem, noise))
}
