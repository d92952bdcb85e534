//! The subsampled ensemble: `B` trees, each grown on its own
//! size-`s` subsample drawn without replacement, with predictions averaged.

use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::rng::{self, tag};
use crate::sampling::{self, counts_vector, ResampleRecord};
use crate::tree::{self, TreeConfig, TreeMode, TreeModel};

/// Subsample size: explicit, or `floor(n^exponent)` (at least 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsampleSize {
    Fixed(usize),
    Power(f64),
}

impl Default for SubsampleSize {
    fn default() -> Self {
        SubsampleSize::Power(0.7)
    }
}

impl SubsampleSize {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            SubsampleSize::Fixed(s) => s,
            SubsampleSize::Power(e) => sampling::default_subsample_size(n, e),
        }
    }
}

/// Number of trees: explicit, or a multiple of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeCount {
    Fixed(usize),
    PerExample(usize),
}

impl Default for TreeCount {
    fn default() -> Self {
        TreeCount::PerExample(5)
    }
}

impl TreeCount {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            TreeCount::Fixed(b) => b,
            TreeCount::PerExample(k) => k * n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ForestConfig {
    #[serde(default)]
    pub s: SubsampleSize,
    #[serde(default)]
    pub b: TreeCount,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(tree: TreeConfig) -> Self {
        Self { tree, ..Self::default() }
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = SubsampleSize::Fixed(s);
        self
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = TreeCount::Fixed(b);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn resolve(&self, n: usize) -> Result<ResolvedForestConfig> {
        self.tree.validate()?;
        let s = self.s.resolve(n);
        let b = self.b.resolve(n);
        let min_s = if self.tree.mode == TreeMode::HonestRegular { 2 } else { 1 };
        if s < min_s || s > n {
            return Err(Error::InvalidArgument(format!("subsample size s = {s} must satisfy {min_s} <= s <= n = {n}")));
        }
        if b == 0 {
            return Err(Error::InvalidArgument("the forest needs at least one tree".into()));
        }
        Ok(ResolvedForestConfig { s, b, tree: self.tree, seed: self.seed })
    }
}

/// A forest configuration with `s` and `B` fixed to numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedForestConfig {
    pub s: usize,
    pub b: usize,
    pub tree: TreeConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    n: usize,
    d: usize,
    config: ResolvedForestConfig,
    trees: Vec<TreeModel>,
    records: Vec<ResampleRecord>,
}

/// Per-tree predictions `T*_b` at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeOutputs(pub Vec<f64>);

impl TreeOutputs {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.0) / self.0.len() as f64
    }
}

/// Grows tree `b` of the forest. Its randomness comes only from the stream
/// addressed by `(seed, b)`.
pub fn train_tree(ts: &TrainingSet, cfg: &ResolvedForestConfig, b: usize) -> Result<TreeModel> {
    let mut r = rng::stream(cfg.seed, &[tag::TREE, b as u64]);
    let draw = sampling::draw_subsample(ts.n(), cfg.s, &mut r)?;
    match cfg.tree.mode {
        TreeMode::HonestRegular => {
            let part = sampling::honesty_partition(&draw, &mut r)?;
            tree::fit_honest(ts, &draw, &part, &cfg.tree, &mut r)
        }
        TreeMode::GreedyCart => tree::fit_greedy_cart(ts, &draw, &cfg.tree, &mut r),
    }
}

/// Trains the forest. Trees are grown in parallel when the `parallel`
/// feature is on; the result does not depend on the thread count.
pub fn train(ts: &TrainingSet, cfg: &ForestConfig) -> Result<ForestModel> {
    let resolved = cfg.resolve(ts.n())?;
    train_resolved(ts, &resolved)
}

pub fn train_resolved(ts: &TrainingSet, cfg: &ResolvedForestConfig) -> Result<ForestModel> {
    #[cfg(feature = "parallel")]
    let trees: Vec<TreeModel> = {
        use rayon::prelude::*;
        (0..cfg.b).into_par_iter().map(|b| train_tree(ts, cfg, b)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trees: Vec<TreeModel> = (0..cfg.b).map(|b| train_tree(ts, cfg, b)).collect::<Result<_>>()?;
    ForestModel::from_trees(ts.n(), ts.d(), *cfg, trees)
}

impl ForestModel {
    /// Assembles a forest from already-grown trees.
    pub fn from_trees(n: usize, d: usize, config: ResolvedForestConfig, trees: Vec<TreeModel>) -> Result<Self> {
        if trees.len() != config.b {
            return Err(Error::InvalidArgument(format!("expected {} trees, got {}", config.b, trees.len())));
        }
        for t in &trees {
            if t.d() != d || t.subsample().n() != n || t.subsample().s() != config.s {
                return Err(Error::InvalidArgument("tree does not match forest dimensions".into()));
            }
        }
        let records = trees.iter().map(|t| counts_vector(t.subsample())).collect();
        Ok(Self { n, d, config, trees, records })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.config.s
    }

    pub fn b(&self) -> usize {
        self.trees.len()
    }

    pub fn config(&self) -> &ResolvedForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn records(&self) -> &[ResampleRecord] {
        &self.records
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    pub fn predict_per_tree(&self, x: &[f64]) -> Result<TreeOutputs> {
        self.check_dim(x)?;
        Ok(TreeOutputs(self.trees.iter().map(|t| t.predict_unchecked(x)).collect()))
    }

    /// Mean of the per-tree predictions (pairwise summation in tree order).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_per_tree(x)?.mean())
    }
}
