use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{make_finite_sum, make_huber, make_pl_nonconvex, make_quadratic, NoiseModel, Problem};
use crate::error::{Error, Result};
use crate::params::{check_keys, get_f64, get_u64, get_usize, Params};

/// Builds a problem from its parameters. A factory may also supply a noise
/// model that is intrinsic to the problem (finite sums).
pub type ProblemFactory =
    Arc<dyn Fn(&Params) -> Result<(Problem, Option<NoiseModel>)> + Send + Sync>;

/// Problems addressable by string id. Custom problems are added with
/// [`ProblemRegistry::register`].
#[derive(Clone)]
pub struct ProblemRegistry {
    factories: BTreeMap<String, ProblemFactory>,
}

impl fmt::Debug for ProblemRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemRegistry")
            .field("ids", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ProblemRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `quadratic`, `pl-sine`, `huber` and `finite-sum`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("quadratic", |p: &Params| {
            check_keys(p, &["dim", "mu", "L", "seed"], "problem.params")?;
            let dim = get_usize(p, "dim", Some(10))?;
            let mu = get_f64(p, "mu", Some(1.0))?;
            let l = get_f64(p, "L", Some(4.0))?;
            let seed = get_u64(p, "seed", Some(0))?;
            Ok((make_quadratic(dim, mu, l, seed)?, None))
        });
        r.register("pl-sine", |p: &Params| {
            check_keys(p, &[], "problem.params")?;
            Ok((make_pl_nonconvex(), None))
        });
        r.register("huber", |p: &Params| {
            check_keys(p, &["dim", "G", "delta"], "problem.params")?;
            let dim = get_usize(p, "dim", Some(10))?;
            let g = get_f64(p, "G", Some(1.0))?;
            let delta = get_f64(p, "delta", Some(1.0))?;
            Ok((make_huber(dim, g, delta)?, None))
        });
        r.register("finite-sum", |p: &Params| {
            check_keys(
                p,
                &["dim", "components", "mu", "L", "seed"],
                "problem.params",
            )?;
            let dim = get_usize(p, "dim", Some(10))?;
            let n = get_usize(p, "components", Some(10))?;
            let mu = get_f64(p, "mu", Some(1.0))?;
            let l = get_f64(p, "L", Some(4.0))?;
            let seed = get_u64(p, "seed", Some(0))?;
            let (problem, noise) = make_finite_sum(dim, n, mu, l, seed)?;
            Ok((problem, Some(noise)))
        });
        r
    }

    /// Registers (or replaces) a factory under `id`.
    pub fn register<F>(&mut self, id: impl Into<String>, factory: F)
    where
        F: Fn(&Params) -> Result<(Problem, Option<NoiseModel>)> + Send + Sync + 'static,
    {
        self.factories.insert(id.into(), Arc::new(factory));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.factories.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, id: &str, params: &Params) -> Result<(Problem, Option<NoiseModel>)> {
        let f = self.factories.get(id).ok_or_else(|| {
            Error::config(
                "problem.id",
                format!(
                    "unknown problem `{id}` (known: {})",
                    self.ids().collect::<Vec<_>>().join(", ")
                ),
            )
        })?;
        f(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Objective;
    use serde_json::json;

    #[derive(Debug)]
    struct Shifted;

    impl Objective for Shifted {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 1.0).powi(2) + x[1] * x[1]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * (x[0] - 1.0), 2.0 * x[1]]
        }
    }

    #[test]
    fn builtin_ids_resolve() {
        let r = ProblemRegistry::with_builtins();
        for id in ["quadratic", "pl-sine", "huber", "finite-sum"] {
            let (p, noise) = r.build(id, &Params::new()).unwrap();
            assert_eq!(p.id(), id);
            assert_eq!(noise.is_some(), id == "finite-sum");
        }
    }

    #[test]
    fn unknown_id_and_unknown_key_are_errors() {
        let r = ProblemRegistry::with_builtins();
        assert!(matches!(
            r.build("rosenbrock", &Params::new()),
            Err(Error::Config { .. })
        ));
        let mut p = Params::new();
        p.insert("dimm".into(), json!(3));
        let err = r.build("quadratic", &p).unwrap_err();
        assert!(err.to_string().contains("dimm"));
    }

    #[test]
    fn custom_problem_registration() {
        let mut r = ProblemRegistry::with_builtins();
        r.register("shifted", |_p: &Params| {
            Ok((
                Problem::custom("shifted", Arc::new(Shifted))
                    .with_minimum(0.0, Some(vec![1.0, 0.0]))
                    .with_smoothness(2.0)
                    .with_convexity(true),
                None,
            ))
        });
        let (p, _) = r.build("shifted", &Params::new()).unwrap();
        assert_eq!(p.value(&[1.0, 0.0]), 0.0);
        assert_eq!(p.l_smooth, Some(2.0));
        assert!(p.flags.convex && p.flags.smooth);
    }
}
