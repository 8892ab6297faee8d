use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizers::{AlphaSeq, BetaSeq, Method, MomentumRule};
use crate::params::{check_keys, get_f64, Params};
use crate::problems::{NoiseModel, Problem, ProblemRegistry};
use crate::schedules::ScheduleKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Trace columns a config may ask slope fits for.
pub const METRICS: [&str; 5] = ["f_gap", "grad_norm_sq", "min_grad_norm_sq", "eta", "m_norm"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    #[serde(default)]
    pub params: Params,
}

/// `kind` is one of `none`, `subgaussian` (`sigma`), `bounded` (`radius`),
/// `affine` (`a`, `b`) or `problem` (the problem's own sampling noise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Params,
}

/// `rule` is one of `none`, `classic-hb` (`mu`), `current-rate-hb` (`mu`),
/// `ema` (`beta`) or `ema-ftrl` (`alpha_power`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumSpec {
    pub rule: String,
    #[serde(default)]
    pub params: Params,
}

/// `method` is one of `sgd`, `sgdm`, `delayed-adagrad-momentum`,
/// `ftrl-sgdm` or `anytime-o2b`; the last two read their `gamma` rule from
/// `schedule`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub method: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub momentum: Option<MomentumSpec>,
}

fn one() -> usize {
    1
}

fn default_metrics() -> Vec<String> {
    vec!["f_gap".into()]
}

/// One experiment: a problem, a noise model, an optimizer and a list of
/// seeds, all run for `T` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub optimizer: OptimizerSpec,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Seed indices; run `k` uses `derive_seed(master_seed, seeds[k])`.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    /// Relative paths resolve against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub record_final_point: bool,
    /// Shared starting point; by default each run draws its own unit vector.
    #[serde(default)]
    pub x1: Option<Vec<f64>>,
}

/// Everything a run needs, resolved from a config.
#[derive(Clone, Debug)]
pub struct Plan {
    pub problem: Problem,
    pub noise: NoiseModel,
    pub method: Method,
}

/// Re-roots a configuration error under `prefix`; bare keys are taken to be
/// entries of `params_path`.
fn scoped(err: Error, prefix: &str, params_path: &str) -> Error {
    match err {
        Error::Config { field, reason } => {
            let field = if field.contains('.') {
                if prefix.is_empty() || field.starts_with(prefix) {
                    field
                } else {
                    format!("{prefix}.{field}")
                }
            } else {
                format!("{params_path}.{field}")
            };
            Error::Config { field, reason }
        }
        Error::Parameter(reason) => Error::Config {
            field: params_path.to_string(),
            reason,
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Checks every field and resolves the problem, noise and method, before
    /// any compute is spent.
    pub fn validate(&self, registry: &ProblemRegistry) -> Result<Plan> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!(
                    "unsupported schema {} (expected {SCHEMA_VERSION})",
                    self.schema
                ),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("T", "horizon must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin", "thinning must be at least 1"));
        }
        if let Some(m) = self.metrics.iter().find(|m| !METRICS.contains(&m.as_str())) {
            return Err(Error::config(
                "metrics",
                format!("unknown metric `{m}` (known: {})", METRICS.join(", ")),
            ));
        }
        let (problem, intrinsic) = registry
            .build(&self.problem.id, &self.problem.params)
            .map_err(|e| scoped(e, "", "problem.params"))?;
        let noise = self.build_noise(intrinsic)?;
        noise
            .validate()
            .map_err(|e| scoped(e, "noise", "noise.params"))?;
        let method = self.build_method()?;
        if let Some(x1) = &self.x1 {
            if x1.len() != problem.dim() {
                return Err(Error::config(
                    "x1",
                    format!("has dimension {}, problem has {}", x1.len(), problem.dim()),
                ));
            }
        }
        Ok(Plan {
            problem,
            noise,
            method,
        })
    }

    fn build_noise(&self, intrinsic: Option<NoiseModel>) -> Result<NoiseModel> {
        let Some(spec) = &self.noise else {
            return Ok(intrinsic.unwrap_or(NoiseModel::None));
        };
        let p = &spec.params;
        let ctx = "noise.params";
        let noise = match spec.kind.as_str() {
            "none" => {
                check_keys(p, &[], ctx)?;
                NoiseModel::None
            }
            "subgaussian" => {
                check_keys(p, &["sigma"], ctx)?;
                NoiseModel::AdditiveSubGaussian {
                    sigma: get_f64(p, "sigma", None).map_err(|e| scoped(e, "noise", ctx))?,
                }
            }
            "bounded" => {
                check_keys(p, &["radius"], ctx)?;
                NoiseModel::BoundedSupport {
                    radius: get_f64(p, "radius", None).map_err(|e| scoped(e, "noise", ctx))?,
                }
            }
            "affine" => {
                check_keys(p, &["a", "b"], ctx)?;
                NoiseModel::AffineVariance {
                    a: get_f64(p, "a", Some(0.0)).map_err(|e| scoped(e, "noise", ctx))?,
                    b: get_f64(p, "b", Some(0.0)).map_err(|e| scoped(e, "noise", ctx))?,
                }
            }
            "problem" => {
                check_keys(p, &[], ctx)?;
                intrinsic.ok_or_else(|| {
                    Error::config("noise.kind", "the problem has no intrinsic noise model")
                })?
            }
            other => {
                return Err(Error::config(
                    "noise.kind",
                    format!("unknown noise kind `{other}`"),
                ))
            }
        };
        Ok(noise)
    }

    fn schedule(&self) -> Result<ScheduleKind> {
        let spec = self.optimizer.schedule.as_ref().ok_or_else(|| {
            Error::config(
                "optimizer.schedule",
                format!("method `{}` needs a schedule", self.optimizer.method),
            )
        })?;
        ScheduleKind::from_params(&spec.kind, &spec.params, self.horizon)
            .map_err(|e| scoped(e, "optimizer", "optimizer.schedule.params"))
    }

    fn momentum(&self) -> Result<MomentumRule> {
        let spec = self.optimizer.momentum.as_ref().ok_or_else(|| {
            Error::config("optimizer.momentum", "method `sgdm` needs a momentum rule")
        })?;
        let p = &spec.params;
        let ctx = "optimizer.momentum.params";
        let f = |key: &str| get_f64(p, key, None).map_err(|e| scoped(e, "", ctx));
        let rule = match spec.rule.as_str() {
            "none" => {
                check_keys(p, &[], ctx)?;
                MomentumRule::None
            }
            "classic-hb" => {
                check_keys(p, &["mu"], ctx)?;
                MomentumRule::ClassicHb { mu: f("mu")? }
            }
            "current-rate-hb" => {
                check_keys(p, &["mu"], ctx)?;
                MomentumRule::CurrentRateHb { mu: f("mu")? }
            }
            "ema" => {
                check_keys(p, &["beta"], ctx)?;
                MomentumRule::Ema(BetaSeq::Constant(f("beta")?))
            }
            "ema-ftrl" => {
                check_keys(p, &["alpha_power"], ctx)?;
                MomentumRule::Ema(BetaSeq::FtrlWeights(alpha_seq(p, ctx)?))
            }
            other => {
                return Err(Error::config(
                    "optimizer.momentum.rule",
                    format!("unknown momentum rule `{other}`"),
                ))
            }
        };
        rule.validate().map_err(|e| scoped(e, "", ctx))?;
        Ok(rule)
    }

    fn build_method(&self) -> Result<Method> {
        let p = &self.optimizer.params;
        let ctx = "optimizer.params";
        let method = match self.optimizer.method.as_str() {
            "sgd" => {
                check_keys(p, &[], ctx)?;
                Method::Sgd {
                    schedule: self.schedule()?,
                }
            }
            "sgdm" => {
                check_keys(p, &[], ctx)?;
                Method::Sgdm {
                    schedule: self.schedule()?,
                    momentum: self.momentum()?,
                }
            }
            "delayed-adagrad-momentum" => {
                check_keys(p, &["alpha", "beta", "mu"], ctx)?;
                let f = |key: &str, d| get_f64(p, key, d).map_err(|e| scoped(e, "", ctx));
                Method::DelayedAdaGradMomentum {
                    alpha: f("alpha", None)?,
                    beta: f("beta", Some(1.0))?,
                    mu: f("mu", Some(0.0))?,
                }
            }
            "ftrl-sgdm" | "anytime-o2b" => {
                check_keys(p, &["alpha_power"], ctx)?;
                let alphas = alpha_seq(p, ctx)?;
                let gamma = self.schedule()?;
                if self.optimizer.method == "ftrl-sgdm" {
                    Method::FtrlSgdm { alphas, gamma }
                } else {
                    Method::AnytimeO2b { alphas, gamma }
                }
            }
            other => {
                return Err(Error::config(
                    "optimizer.method",
                    format!("unknown method `{other}`"),
                ))
            }
        };
        Ok(method)
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, ignoring where the
    /// outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let canonical = serde_json::to_string(&serde_json::to_value(&c).expect("serializable"))
            .expect("serializable");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Copy with the value at dotted `path` replaced. Every segment but the
    /// last must name an existing table.
    pub fn with_value(&self, path: &str, value: Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let segments: Vec<&str> = path.split('.').collect();
        let (leaf, parents) = segments.split_last().expect("split yields one segment");
        let mut node = &mut doc;
        for seg in parents {
            node = node
                .get_mut(*seg)
                .filter(|n| n.is_object())
                .ok_or_else(|| {
                    Error::config(path, format!("`{seg}` is not a table in this config"))
                })?;
        }
        node.as_object_mut()
            .expect("checked above")
            .insert((*leaf).to_string(), value);
        serde_json::from_value(doc).map_err(|e| Error::config(path, e.to_string()))
    }
}

fn alpha_seq(p: &Params, ctx: &str) -> Result<AlphaSeq> {
    let power = get_f64(p, "alpha_power", Some(0.0)).map_err(|e| scoped(e, "", ctx))?;
    Ok(if power == 0.0 {
        AlphaSeq::Constant(1.0)
    } else {
        AlphaSeq::Power(power)
    })
}

/// Seed of run `index` under `master`: the first eight bytes of
/// `SHA-256(master || index)`, both little-endian.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
