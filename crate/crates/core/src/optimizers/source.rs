use rand::Rng;

use crate::problems::{sample_gradient, NoiseModel, Problem};

/// Supplies the stochastic gradient `g_t` queried at `x_t`.
pub trait GradientSource {
    fn gradient(&mut self, t: usize, x: &[f64]) -> Vec<f64>;
}

/// Samples from a problem's noise model with a private generator.
pub struct Oracle<'a, R: Rng> {
    problem: &'a Problem,
    noise: &'a NoiseModel,
    rng: R,
}

impl<'a, R: Rng> Oracle<'a, R> {
    pub fn new(problem: &'a Problem, noise: &'a NoiseModel, rng: R) -> Self {
        Self {
            problem,
            noise,
            rng,
        }
    }
}

impl<R: Rng> GradientSource for Oracle<'_, R> {
    fn gradient(&mut self, _t: usize, x: &[f64]) -> Vec<f64> {
        sample_gradient(self.problem, self.noise, x, &mut self.rng)
    }
}

/// Plays back a fixed gradient stream, ignoring the query point. Past the end
/// of the stream it returns zeros.
#[derive(Clone, Debug)]
pub struct Replay {
    stream: Vec<Vec<f64>>,
}

impl Replay {
    pub fn new(stream: Vec<Vec<f64>>) -> Self {
        Self { stream }
    }
}

impl GradientSource for Replay {
    fn gradient(&mut self, t: usize, x: &[f64]) -> Vec<f64> {
        self.stream
            .get(t - 1)
            .cloned()
            .unwrap_or_else(|| vec![0.0; x.len()])
    }
}

/// Passes gradients through while keeping a copy of each.
pub struct Recorder<S> {
    inner: S,
    pub log: Vec<Vec<f64>>,
}

impl<S: GradientSource> Recorder<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }

    pub fn into_stream(self) -> Vec<Vec<f64>> {
        self.log
    }
}

impl<S: GradientSource> GradientSource for Recorder<S> {
    fn gradient(&mut self, t: usize, x: &[f64]) -> Vec<f64> {
        let g = self.inner.gradient(t, x);
        self.log.push(g.clone());
        g
    }
}

/// Wraps a closure as a source; handy for adversarial streams in tests.
pub struct FnSource<F>(pub F);

impl<F: FnMut(usize, &[f64]) -> Vec<f64>> GradientSource for FnSource<F> {
    fn gradient(&mut self, t: usize, x: &[f64]) -> Vec<f64> {
        (self.0)(t, x)
    }
}
