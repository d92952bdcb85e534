//! TOML run configuration. Every section is optional; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ijforest::dataset::ColumnRef;
use ijforest::experiments::{default_experiment_forest, BiasGridSpec, EstimateChoice, ExperimentSpec, SourceSpec};
use ijforest::oracle::BaseLearnerSpec;
use ijforest::{ForestConfig, SyntheticKind, SyntheticSpec};
use serde::{Deserialize, Serialize};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "IJFOREST_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub threads: Option<usize>,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub simulate: SimulateConfig,
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub kind: SyntheticKind,
    pub d: usize,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { kind: SyntheticKind::Cosine, d: 2, n: 100, noise_sd: 1.0, seed: 0, out: None }
    }
}

impl GenConfig {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec::new(self.kind, self.d).with_noise(self.noise_sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: Option<PathBuf>,
    pub target: ColumnRef,
    pub features: Option<Vec<ColumnRef>>,
    pub forest: ForestConfig,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: None,
            target: ColumnRef::Name("y".into()),
            features: None,
            forest: ForestConfig::default(),
            out: None,
            summary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub level: f64,
    pub out: Option<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { model: None, query: None, level: 0.95, out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub source: SourceSpec,
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub forest: ForestConfig,
    pub estimate: EstimateChoice,
    pub alpha: f64,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub bias_grid: BiasGridSpec,
    pub out: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let base = ExperimentSpec::new(SourceSpec::Synthetic(SyntheticSpec::new(SyntheticKind::Cosine, 2)), 200);
        Self {
            source: base.source,
            n: base.n,
            k: base.k,
            r: base.r,
            forest: default_experiment_forest(),
            estimate: base.estimate,
            alpha: base.alpha,
            levels: base.levels,
            seed: base.seed,
            bias_grid: BiasGridSpec::default(),
            out: None,
        }
    }
}

impl SimulateConfig {
    pub fn experiment(&self) -> ExperimentSpec {
        ExperimentSpec {
            source: self.source.clone(),
            n: self.n,
            k: self.k,
            r: self.r,
            forest: self.forest,
            estimate: self.estimate,
            alpha: self.alpha,
            levels: self.levels.clone(),
            seed: self.seed,
        }
    }
}

/// One atom of a finite-support distribution; `x` defaults to `[y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    pub y: f64,
    pub p: f64,
}

impl Atom {
    /// Equally likely atoms at the given labels.
    pub fn uniform(labels: &[f64]) -> Vec<Atom> {
        let p = 1.0 / labels.len() as f64;
        labels.iter().map(|&y| Atom { x: None, y, p }).collect()
    }
}

fn default_mc_trees() -> usize {
    100_000
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleCase {
    /// Exact jackknife by enumeration vs. the bias-corrected Monte Carlo estimate.
    Vij {
        labels: Vec<f64>,
        s: usize,
        learner: BaseLearnerSpec,
        #[serde(default = "default_mc_trees")]
        monte_carlo_b: usize,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `E[(RF - R̊F)²] <= (s/n)² Var(T)`.
    Anova { atoms: Vec<Atom>, learner: BaseLearnerSpec, n: usize, s: usize },
    /// `Var(T̊) <= Var(T)`, with equality for linear learners.
    Hajek { atoms: Vec<Atom>, learner: BaseLearnerSpec, s: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub cases: Vec<OracleCase>,
    pub out: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        use BaseLearnerSpec::*;
        let binary = Atom::uniform(&[0.0, 1.0]);
        let ternary = Atom::uniform(&[0.0, 1.0, 2.0]);
        let skewed =
            vec![Atom { x: None, y: 0.0, p: 0.2 }, Atom { x: None, y: 1.0, p: 0.5 }, Atom { x: None, y: 3.0, p: 0.3 }];
        Self {
            cases: vec![
                OracleCase::Vij {
                    labels: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                    s: 2,
                    learner: SubsampleMean,
                    monte_carlo_b: default_mc_trees(),
                    tolerance: default_tolerance(),
                    seed: 0,
                },
                OracleCase::Anova { atoms: skewed.clone(), learner: LabelSum, n: 5, s: 3 },
                OracleCase::Anova { atoms: binary.clone(), learner: SubsampleMean, n: 4, s: 2 },
                OracleCase::Anova { atoms: ternary.clone(), learner: SubsampleMax, n: 5, s: 3 },
                OracleCase::Hajek { atoms: ternary, learner: SubsampleMax, s: 3 },
                OracleCase::Hajek { atoms: skewed, learner: LabelSum, s: 4 },
            ],
            out: None,
        }
    }
}
