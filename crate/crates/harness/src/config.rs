//! Experiment configuration, read from TOML.

use crate::HarnessError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; sub-seeds default to it.
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub data: DataSpec,
    /// Weight of the `l1` regularizer.
    #[serde(default)]
    pub l1: f64,
    /// Box constraint `[lower, upper]` on every coordinate, instead of `l1`.
    #[serde(default)]
    pub r#box: Option<[f64; 2]>,
    /// Ridge added to every local loss.
    #[serde(default)]
    pub ridge: f64,
    /// Choose the ridge so that `L / mu` hits this value (overrides `ridge`).
    #[serde(default)]
    pub kappa_g: Option<f64>,
    /// Choose the ridge so that the stochastic condition number hits this value.
    #[serde(default)]
    pub kappa_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossSpec {
    Logistic,
    LeastSquares,
    Huber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// LIBSVM file split across agents; relative paths resolve against the config file.
    Libsvm {
        path: PathBuf,
        loss: LossSpec,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        huber_lambda: Option<f64>,
        #[serde(default)]
        huber_gamma: Option<f64>,
    },
    Logistic {
        samples: usize,
        dim: usize,
        #[serde(default = "default_flip")]
        flip: f64,
    },
    HardLogistic {
        samples: usize,
        dim: usize,
        #[serde(default = "default_min_scale")]
        min_scale: f64,
        #[serde(default = "default_flip")]
        flip: f64,
    },
    Regression {
        samples: usize,
        dim: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        /// Smallest column scale; columns shrink log-linearly from 1.
        #[serde(default = "default_one")]
        min_scale: f64,
        #[serde(default)]
        huber_lambda: Option<f64>,
        #[serde(default)]
        huber_gamma: Option<f64>,
    },
    /// Quadratics with exact similarity `beta` and condition number `kappa_g`.
    Similarity {
        dim: usize,
        kappa_g: f64,
        beta: f64,
        #[serde(default)]
        top: Option<usize>,
        #[serde(default = "default_heterogeneity")]
        heterogeneity: f64,
    },
    /// Random strongly convex quadratics.
    Quadratic { dim: usize },
}

fn default_flip() -> f64 {
    0.05
}
fn default_min_scale() -> f64 {
    1e-3
}
fn default_one() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.1
}
fn default_heterogeneity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    ErdosRenyi,
    Path,
    Ring,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub m: usize,
    #[serde(default = "default_graph")]
    pub graph: GraphKind,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_graph() -> GraphKind {
    GraphKind::ErdosRenyi
}
fn default_p() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKind {
    SonataL,
    SonataF,
    PudaProxEd,
    PudaExtra,
    PmgtLsvrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleSpec {
    #[default]
    StronglyConvex,
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BudgetSpec {
    Fixed {
        steps: usize,
    },
    LogRatio {
        ratio: f64,
    },
    HalfLogRatio {
        ratio: f64,
    },
    LogOuter,
    TheoryStronglyConvex {
        #[serde(default = "default_c")]
        c: f64,
    },
    TheoryConvex {
        r0: f64,
    },
}

fn default_c() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MixingSpec {
    /// The contraction required by the inner solver's analysis.
    #[default]
    Theory,
    Plain,
    Chebyshev {
        rounds: usize,
    },
    ChebyshevTarget {
        rho: f64,
    },
    /// Accelerated gossip rounds for the variance-reduced solver.
    Fastmix {
        rounds: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub inner: InnerKind,
    /// Proximal weight; the solver's own policy when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub budget: BudgetSpec,
    pub outer_iterations: usize,
    #[serde(default)]
    pub mixing: MixingSpec,
    /// Stop the outer loop once the gap falls below this value.
    #[serde(default)]
    pub stop_gap: Option<f64>,
    /// Also run the bare inner solver for this many steps.
    #[serde(default)]
    pub baseline_steps: Option<usize>,
    #[serde(default = "default_record_every")]
    pub baseline_record_every: usize,
    /// Accuracy of the full-surrogate local solves.
    #[serde(default)]
    pub local_tol: Option<f64>,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Log the inner merit function at the end of every outer loop.
    #[serde(default)]
    pub merit: bool,
    /// Log `(1/(2 delta m)) sum_i ||grad M(x_i)||^2` per outer loop.
    #[serde(default)]
    pub moreau: bool,
    /// Record elapsed time; off by default so traces are byte-reproducible.
    #[serde(default)]
    pub wallclock: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir(), merit: false, moreau: false, wallclock: false }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSpec::Libsvm { path: data, .. } = &mut cfg.problem.data {
            if data.is_relative() {
                if let Some(parent) = path.parent() {
                    *data = parent.join(&*data);
                }
            }
            if !data.exists() {
                return Err(HarnessError::Config(format!("data file {} does not exist", data.display())));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn topology_seed(&self) -> u64 {
        self.topology.seed.unwrap_or(self.seed)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.topology.m == 0 {
            return bad("topology.m must be positive".into());
        }
        if !(self.topology.p > 0.0 && self.topology.p <= 1.0) {
            return bad(format!("edge probability {} outside (0, 1]", self.topology.p));
        }
        if self.problem.l1 < 0.0 || self.problem.ridge < 0.0 {
            return bad("l1 and ridge must be nonnegative".into());
        }
        if self.problem.l1 > 0.0 && self.problem.r#box.is_some() {
            return bad("choose either l1 or box".into());
        }
        if self.problem.kappa_g.is_some() && self.problem.kappa_s.is_some() {
            return bad("choose either kappa_g or kappa_s".into());
        }
        if let Some(d) = self.algorithm.delta {
            if !(d >= 0.0) {
                return bad(format!("delta {d} must be nonnegative"));
            }
        }
        if self.algorithm.baseline_record_every == 0 {
            return bad("baseline_record_every must be positive".into());
        }
        Ok(())
    }
}

/// Spec for the `datagen` command: one generated dataset written as LIBSVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSpec {
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
}

impl DatagenSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut spec: DatagenSpec = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if spec.output.is_relative() {
            if let Some(parent) = path.parent() {
                spec.output = parent.join(&spec.output);
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "demo"
seed = 4

[problem]
l1 = 0.001
kappa_g = 20.0
data = { source = "logistic", samples = 300, dim = 10 }

[topology]
m = 6
graph = "erdos-renyi"
p = 0.5

[algorithm]
inner = "sonata-l"
budget = { kind = "log-ratio", ratio = 20.0 }
outer_iterations = 40
mixing = { kind = "chebyshev", rounds = 3 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.algorithm.inner, InnerKind::SonataL);
        assert_eq!(cfg.algorithm.schedule, ScheduleSpec::StronglyConvex);
        assert_eq!(cfg.problem.data, DataSpec::Logistic { samples: 300, dim: 10, flip: 0.05 });
        assert_eq!(cfg.output, OutputSpec::default());
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml(&EXAMPLE.replace("seed = 4", "sead = 4")).is_err());
        assert!(ExperimentConfig::from_toml(&EXAMPLE.replace("m = 6", "m = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&EXAMPLE.replace("sonata-l", "gossip")).is_err());
    }
}
