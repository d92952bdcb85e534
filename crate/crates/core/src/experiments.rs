//! Simulation harness: replicate training sets, fit forests, and measure
//! how well the jackknife variance tracks the true sampling variance of
//! the forest prediction, plus normality, coverage, consistency, bias-grid
//! and regularity studies.
//!
//! Every study is a deterministic function of its spec and seed. Replicate
//! `r` draws its training set from stream `(seed, [REPLICATE, r])` and its
//! forest seed from `(seed, [REPLICATE, r, TREE])`; test points come from
//! `(seed, [TEST_POINTS])`.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, ColumnRef, SyntheticSpec, TrainingSet};
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ResolvedForestConfig, TreeCount};
use crate::jackknife::{self, interval_with_variance};
use crate::numeric::{mean, sample_variance};
use crate::rng::{self, tag, Stream};
use crate::stats::{ks_test_normal, KsOutcome};
use crate::tree::{validate_regularity, TreeConfig, TreeMode};

/// Where replicate training sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SourceSpec {
    Synthetic(SyntheticSpec),
    /// `X ~ U([0,1]^d)`, `Y ~ Bernoulli(p)` independent of `X`.
    Bernoulli {
        p: f64,
        #[serde(default = "two")]
        d: usize,
    },
    /// A CSV dataset. With `bootstrap`, labels are regenerated from a forest
    /// fitted to the file; without it, rows are resampled as they are.
    Csv {
        path: PathBuf,
        target: ColumnRef,
        #[serde(default)]
        features: Option<Vec<ColumnRef>>,
        #[serde(default = "yes")]
        bootstrap: bool,
    },
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

/// Parametric bootstrap law built from a real dataset: `X` resampled from
/// the training rows, `Y = fitted(X) + noise_sd · N(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBootstrap {
    pub features: TrainingSet,
    pub fitted: Vec<f64>,
    pub noise_sd: f64,
    /// Set when the residuals were all zero.
    pub warning: Option<String>,
}

/// Fits a forest to `ts` and returns the bootstrap law around it.
pub fn parametric_bootstrap_source(ts: &TrainingSet, cfg: &ForestConfig) -> Result<ParametricBootstrap> {
    let model = forest::train(ts, cfg)?;
    let fitted: Vec<f64> = ts.rows().map(|x| model.predict(x)).collect::<Result<_>>()?;
    let residuals: Vec<f64> = ts.labels().iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let noise_sd = if residuals.len() > 1 { sample_variance(&residuals).sqrt() } else { 0.0 };
    let warning = residuals
        .iter()
        .all(|r| *r == 0.0)
        .then(|| "training residuals are all zero; bootstrap noise sd is 0".to_string());
    Ok(ParametricBootstrap { features: ts.clone(), fitted, noise_sd, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Bernoulli { p: f64, d: usize },
    Bootstrap(ParametricBootstrap),
    Empirical(TrainingSet),
}

impl DataSource {
    /// Builds the source; CSV bootstrap sources fit `forest` to the file.
    pub fn from_spec(spec: &SourceSpec, forest: &ForestConfig) -> Result<Self> {
        match spec {
            SourceSpec::Synthetic(s) => {
                s.validate()?;
                Ok(DataSource::Synthetic(*s))
            }
            SourceSpec::Bernoulli { p, d } => {
                if !(0.0..=1.0).contains(p) || *d == 0 {
                    return Err(Error::InvalidSpec(format!(
                        "bernoulli source needs p in [0,1] and d >= 1, got p = {p}, d = {d}"
                    )));
                }
                Ok(DataSource::Bernoulli { p: *p, d: *d })
            }
            SourceSpec::Csv { path, target, features, bootstrap } => {
                let ts = dataset::load_csv(path, target, features.as_deref())?;
                if *bootstrap {
                    Ok(DataSource::Bootstrap(parametric_bootstrap_source(&ts, forest)?))
                } else {
                    Ok(DataSource::Empirical(ts))
                }
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            DataSource::Synthetic(s) => s.d,
            DataSource::Bernoulli { d, .. } => *d,
            DataSource::Bootstrap(b) => b.features.d(),
            DataSource::Empirical(ts) => ts.d(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DataSource::Synthetic(s) => s.kind.to_string(),
            DataSource::Bernoulli { .. } => "Bernoulli".into(),
            DataSource::Bootstrap(_) => "Bootstrap".into(),
            DataSource::Empirical(_) => "Empirical".into(),
        }
    }

    /// Draws one feature vector and, when known, its regression mean.
    fn draw_point(&self, r: &mut Stream) -> (Vec<f64>, Option<f64>) {
        match self {
            DataSource::Synthetic(s) => {
                let mut x = Vec::with_capacity(s.d);
                s.sample_features(r, &mut x);
                let mu = s.true_mean(&x).expect("validated spec");
                (x, Some(mu))
            }
            DataSource::Bernoulli { p, d } => ((0..*d).map(|_| r.random::<f64>()).collect(), Some(*p)),
            DataSource::Bootstrap(b) => {
                let i = r.random_range(0..b.features.n() as u64) as usize;
                (b.features.row(i).to_vec(), Some(b.fitted[i]))
            }
            DataSource::Empirical(ts) => {
                let i = r.random_range(0..ts.n() as u64) as usize;
                (ts.row(i).to_vec(), None)
            }
        }
    }

    /// `k` test points and their true means (when the source knows them).
    pub fn test_points(&self, k: usize, seed: u64) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
        let mut r = rng::stream(seed, &[tag::TEST_POINTS]);
        let (xs, mus): (Vec<_>, Vec<_>) = (0..k).map(|_| self.draw_point(&mut r)).unzip();
        let mus = mus.into_iter().collect::<Option<Vec<f64>>>();
        (xs, mus)
    }

    /// A training set of size `n` drawn from the source.
    pub fn generate(&self, n: usize, seed: u64) -> Result<TrainingSet> {
        match self {
            DataSource::Synthetic(s) => dataset::gen_synthetic(s, n, seed),
            DataSource::Bernoulli { p, d } => {
                let mut r = rng::stream(seed, &[tag::DATA]);
                let mut x = Vec::with_capacity(n * d);
                let mut y = Vec::with_capacity(n);
                for _ in 0..n {
                    x.extend((0..*d).map(|_| r.random::<f64>()));
                    y.push(if r.random::<f64>() < *p { 1.0 } else { 0.0 });
                }
                TrainingSet::from_parts(*d, x, y)
            }
            DataSource::Bootstrap(b) => {
                let mut r = rng::stream(seed, &[tag::DATA]);
                let d = b.features.d();
                let mut x = Vec::with_capacity(n * d);
                let mut y = Vec::with_capacity(n);
                for _ in 0..n {
                    let i = r.random_range(0..b.features.n() as u64) as usize;
                    x.extend_from_slice(b.features.row(i));
                    let eps: f64 = r.sample(StandardNormal);
                    y.push(b.fitted[i] + b.noise_sd * eps);
                }
                TrainingSet::from_parts(d, x, y)?
                    .with_names(b.features.feature_names().to_vec(), b.features.target_name().to_string())
            }
            DataSource::Empirical(ts) => {
                let mut r = rng::stream(seed, &[tag::DATA]);
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..ts.n() as u64) as usize).collect();
                ts.subset(&idx)
            }
        }
    }
}

/// Which jackknife quantity is scored against the true variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EstimateChoice {
    Plugin,
    #[default]
    Corrected,
    Truncated,
}

fn default_k() -> usize {
    25
}

fn default_r() -> usize {
    50
}

fn default_alpha() -> f64 {
    0.01
}

fn default_levels() -> Vec<f64> {
    vec![0.95]
}

/// Desk-scale forest defaults: `s = floor(n^0.7)` and `B = 1000`.
pub fn default_experiment_forest() -> ForestConfig {
    ForestConfig { b: TreeCount::Fixed(1000), ..ForestConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: SourceSpec,
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_experiment_forest")]
    pub forest: ForestConfig,
    #[serde(default)]
    pub estimate: EstimateChoice,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(source: SourceSpec, n: usize) -> Self {
        Self {
            source,
            n,
            k: default_k(),
            r: default_r(),
            forest: default_experiment_forest(),
            estimate: EstimateChoice::default(),
            alpha: default_alpha(),
            levels: default_levels(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidSpec("need at least one test point (k >= 1)".into()));
        }
        if self.r < 2 {
            return Err(Error::TooFewReplicates { needed: 2, got: self.r });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidSpec(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.forest.resolve(self.n).map(|_| ())
    }
}

/// One (test point, replicate) outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub prediction: f64,
    pub plugin: f64,
    pub corrected: f64,
    pub truncated: f64,
    /// Between-tree variance `v̂` of the per-tree predictions.
    pub v_hat: f64,
}

impl Cell {
    fn estimate(&self, choice: EstimateChoice) -> f64 {
        match choice {
            EstimateChoice::Plugin => self.plugin,
            EstimateChoice::Corrected => self.corrected,
            EstimateChoice::Truncated => self.truncated,
        }
    }
}

/// Raw output of a replicate study: `cells[k][r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub source: String,
    pub n: usize,
    pub forest: ResolvedForestConfig,
    pub test_points: Vec<Vec<f64>>,
    pub true_means: Option<Vec<f64>>,
    pub cells: Vec<Vec<Cell>>,
}

impl ReplicateTable {
    pub fn predictions(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(|c| c.prediction).collect()).collect()
    }

    pub fn estimates(&self, choice: EstimateChoice) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(|c| c.estimate(choice)).collect()).collect()
    }
}

fn map_replicates<T: Send>(r: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..r).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..r).map(f).collect()
    }
}

fn replicate_forest_seed(seed: u64, r: usize) -> u64 {
    rng::derive_seed(seed, &[tag::REPLICATE, r as u64, tag::TREE])
}

/// Trains `R` forests on fresh training sets and records, at each of the
/// `K` test points, the prediction and its jackknife variance.
pub fn run_replicates(spec: &ExperimentSpec, source: &DataSource) -> Result<ReplicateTable> {
    spec.validate()?;
    let resolved = spec.forest.resolve(spec.n)?;
    let (test_points, true_means) = source.test_points(spec.k, spec.seed);
    let per_rep = map_replicates(spec.r, |r| {
        let ts = source.generate(spec.n, rng::derive_seed(spec.seed, &[tag::REPLICATE, r as u64]))?;
        let cfg = ResolvedForestConfig { seed: replicate_forest_seed(spec.seed, r), ..resolved };
        let model = forest::train_resolved(&ts, &cfg)?;
        test_points
            .iter()
            .map(|x| {
                let (prediction, est) = jackknife::forest_estimate(&model, x)?;
                Ok(Cell {
                    prediction,
                    plugin: est.plugin,
                    corrected: est.corrected,
                    truncated: est.truncated,
                    v_hat: est.v_hat,
                })
            })
            .collect::<Result<Vec<Cell>>>()
    })?;
    let cells = (0..spec.k).map(|k| per_rep.iter().map(|row| row[k]).collect()).collect();
    Ok(ReplicateTable { source: source.name(), n: spec.n, forest: resolved, test_points, true_means, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    /// Variance of the prediction over replicates, the estimation target.
    pub sigma2: f64,
    pub mean_estimate: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

impl MetricTriple {
    fn scaled(&self, by: f64) -> Option<Self> {
        (by > 0.0).then(|| Self { bias2: self.bias2 / by, variance: self.variance / by, mse: self.mse / by })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_point: Vec<PointMetrics>,
    pub absolute: MetricTriple,
    /// Divided by the test-set average of `σ²(ŷ)²`.
    pub relative: Option<MetricTriple>,
    /// Divided by the square of the test-set average of `σ²(ŷ)`.
    pub relative_mean_squared: Option<MetricTriple>,
    pub normalizer: f64,
    pub normalizer_mean_squared: f64,
}

/// Scores variance estimates against the replicate variance of the
/// predictions. Both inputs are indexed `[k][r]`.
pub fn summarize_metrics(predictions: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<MetricsReport> {
    if predictions.is_empty() || predictions.len() != estimates.len() {
        return Err(Error::InvalidArgument("need matching non-empty prediction and estimate tables".into()));
    }
    let per_point = predictions
        .iter()
        .zip(estimates)
        .map(|(p, v)| {
            if p.len() < 2 || v.len() < 2 {
                return Err(Error::TooFewReplicates { needed: 2, got: p.len().min(v.len()) });
            }
            let sigma2 = sample_variance(p);
            let mean_estimate = mean(v);
            let bias2 = (mean_estimate - sigma2).powi(2);
            let variance = sample_variance(v);
            Ok(PointMetrics { sigma2, mean_estimate, bias2, variance, mse: bias2 + variance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(per_point))
}

fn aggregate(per_point: Vec<PointMetrics>) -> MetricsReport {
    let avg = |f: fn(&PointMetrics) -> f64| mean(&per_point.iter().map(f).collect::<Vec<_>>());
    let bias2 = avg(|p| p.bias2);
    let variance = avg(|p| p.variance);
    let absolute = MetricTriple { bias2, variance, mse: bias2 + variance };
    let normalizer = avg(|p| p.sigma2 * p.sigma2);
    let normalizer_mean_squared = avg(|p| p.sigma2).powi(2);
    MetricsReport {
        relative: absolute.scaled(normalizer),
        relative_mean_squared: absolute.scaled(normalizer_mean_squared),
        per_point,
        absolute,
        normalizer,
        normalizer_mean_squared,
    }
}

/// Scores a known per-point variance `truth[k]` as if it were the estimate
/// on every replicate. With the true variance this tends to zero as `R` grows.
pub fn metrics_with_known_variance(predictions: &[Vec<f64>], truth: &[f64]) -> Result<MetricsReport> {
    let est: Vec<Vec<f64>> = predictions.iter().zip(truth).map(|(p, t)| vec![*t; p.len()]).collect();
    summarize_metrics(predictions, &est)
}

pub fn run_metrics(spec: &ExperimentSpec, source: &DataSource) -> Result<(ReplicateTable, MetricsReport)> {
    let table = run_replicates(spec, source)?;
    let report = summarize_metrics(&table.predictions(), &table.estimates(spec.estimate))?;
    Ok((table, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointNormality {
    /// `None` when the replicate predictions have zero spread.
    pub ks: Option<KsOutcome>,
    pub degenerate: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub alpha: f64,
    pub per_point: Vec<PointNormality>,
    pub degenerate_points: usize,
    /// Share of non-degenerate points whose KS p-value is at least `alpha`.
    pub pass_fraction: Option<f64>,
}

/// KS test of each point's standardized replicate predictions against
/// `N(0,1)`. `samples` is indexed `[k][r]`.
pub fn normality_from_samples(samples: &[Vec<f64>], alpha: f64) -> Result<NormalityReport> {
    let per_point: Vec<PointNormality> = samples
        .iter()
        .map(|p| {
            if p.len() < 2 {
                return Err(Error::TooFewReplicates { needed: 2, got: p.len() });
            }
            let m = mean(p);
            let sd = sample_variance(p).sqrt();
            if !(sd > 0.0) {
                return Ok(PointNormality { ks: None, degenerate: true, passed: false });
            }
            let z: Vec<f64> = p.iter().map(|v| (v - m) / sd).collect();
            let ks = ks_test_normal(&z);
            Ok(PointNormality { ks: Some(ks), degenerate: false, passed: ks.p_value >= alpha })
        })
        .collect::<Result<_>>()?;
    let degenerate_points = per_point.iter().filter(|p| p.degenerate).count();
    let live = per_point.len() - degenerate_points;
    let pass_fraction = (live > 0).then(|| per_point.iter().filter(|p| p.passed).count() as f64 / live as f64);
    Ok(NormalityReport { alpha, per_point, degenerate_points, pass_fraction })
}

pub const MIN_REPLICATES_FOR_DISTRIBUTION: usize = 50;

pub fn run_normality(spec: &ExperimentSpec, source: &DataSource) -> Result<(ReplicateTable, NormalityReport)> {
    if spec.r < MIN_REPLICATES_FOR_DISTRIBUTION {
        return Err(Error::TooFewReplicates { needed: MIN_REPLICATES_FOR_DISTRIBUTION, got: spec.r });
    }
    let table = run_replicates(spec, source)?;
    let report = normality_from_samples(&table.predictions(), spec.alpha)?;
    Ok((table, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    pub level: f64,
    /// Fraction of intervals containing the replicate-mean prediction.
    pub coverage: f64,
    /// Fraction containing the true regression mean, when known.
    pub truth_coverage: Option<f64>,
    pub degenerate_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub levels: Vec<LevelCoverage>,
    pub pairs: usize,
}

/// Interval coverage from predictions and variances indexed `[k][r]`.
/// Intervals target `targets[k]`; `truth`, if given, is tallied separately.
/// A negative variance yields a zero-width degenerate interval.
pub fn coverage_from_parts(
    predictions: &[Vec<f64>],
    variances: &[Vec<f64>],
    targets: &[f64],
    truth: Option<&[f64]>,
    levels: &[f64],
) -> Result<CoverageReport> {
    if predictions.len() != variances.len() || predictions.len() != targets.len() {
        return Err(Error::InvalidArgument("coverage inputs must share the number of test points".into()));
    }
    let pairs: usize = predictions.iter().map(Vec::len).sum();
    if pairs == 0 {
        return Err(Error::InvalidArgument("no (point, replicate) pairs".into()));
    }
    let levels = levels
        .iter()
        .map(|&level| {
            let (mut hit, mut hit_truth, mut degenerate) = (0usize, 0usize, 0usize);
            for (k, (p, v)) in predictions.iter().zip(variances).enumerate() {
                for (&y, &var) in p.iter().zip(v) {
                    let mut iv = interval_with_variance(y, var.max(0.0), level)?;
                    iv.degenerate = var < 0.0;
                    degenerate += iv.degenerate as usize;
                    hit += iv.contains(targets[k]) as usize;
                    if let Some(t) = truth {
                        hit_truth += iv.contains(t[k]) as usize;
                    }
                }
            }
            let frac = |c: usize| c as f64 / pairs as f64;
            Ok(LevelCoverage {
                level,
                coverage: frac(hit),
                truth_coverage: truth.map(|_| frac(hit_truth)),
                degenerate_fraction: frac(degenerate),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CoverageReport { levels, pairs })
}

pub fn run_coverage(spec: &ExperimentSpec, source: &DataSource) -> Result<(ReplicateTable, CoverageReport)> {
    if spec.r < MIN_REPLICATES_FOR_DISTRIBUTION {
        return Err(Error::TooFewReplicates { needed: MIN_REPLICATES_FOR_DISTRIBUTION, got: spec.r });
    }
    for &level in &spec.levels {
        interval_with_variance(0.0, 0.0, level)?;
    }
    let table = run_replicates(spec, source)?;
    let preds = table.predictions();
    let targets: Vec<f64> = preds.iter().map(|p| mean(p)).collect();
    let report = coverage_from_parts(
        &preds,
        &table.estimates(EstimateChoice::Corrected),
        &targets,
        table.true_means.as_deref(),
        &spec.levels,
    )?;
    Ok((table, report))
}

/// Forest predictions on a regular grid when `Y` is pure Bernoulli noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGridSpec {
    #[serde(default = "default_grid_n")]
    pub n: usize,
    #[serde(default = "default_grid_s")]
    pub s: usize,
    #[serde(default = "default_grid_b")]
    pub b: usize,
    #[serde(default = "default_grid_mode")]
    pub mode: TreeMode,
    #[serde(default = "default_grid_resolution")]
    pub resolution: usize,
    #[serde(default = "default_grid_r")]
    pub r: usize,
    #[serde(default = "default_grid_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_n() -> usize {
    10_000
}
fn default_grid_s() -> usize {
    100
}
fn default_grid_b() -> usize {
    500
}
fn default_grid_mode() -> TreeMode {
    TreeMode::GreedyCart
}
fn default_grid_resolution() -> usize {
    11
}
fn default_grid_r() -> usize {
    20
}
fn default_grid_p() -> f64 {
    0.01
}

impl Default for BiasGridSpec {
    fn default() -> Self {
        Self {
            n: default_grid_n(),
            s: default_grid_s(),
            b: default_grid_b(),
            mode: default_grid_mode(),
            resolution: default_grid_resolution(),
            r: default_grid_r(),
            p: default_grid_p(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGrid {
    pub resolution: usize,
    pub mode: TreeMode,
    pub p: f64,
    pub replicates: usize,
    /// `cells[i][j]`: mean prediction at the center of the cell
    /// `[j/res, (j+1)/res] x [i/res, (i+1)/res]`.
    pub cells: Vec<Vec<f64>>,
}

impl BiasGrid {
    /// Average over the four corner cells.
    pub fn corner_mean(&self) -> f64 {
        let last = self.resolution - 1;
        (self.cells[0][0] + self.cells[0][last] + self.cells[last][0] + self.cells[last][last]) / 4.0
    }

    /// Mean prediction of the cell(s) at the center of the square.
    pub fn center_mean(&self) -> f64 {
        let r = self.resolution;
        let mids: Vec<usize> = if r % 2 == 1 { vec![r / 2] } else { vec![r / 2 - 1, r / 2] };
        let vals: Vec<f64> =
            mids.iter().flat_map(|&i| mids.iter().map(move |&j| (i, j))).map(|(i, j)| self.cells[i][j]).collect();
        mean(&vals)
    }

    pub fn max_abs_deviation(&self, target: f64) -> f64 {
        self.cells.iter().flatten().map(|v| (v - target).abs()).fold(0.0, f64::max)
    }

    /// Dense matrix CSV, one row of the grid per line, bottom row first.
    pub fn to_csv(&self) -> String {
        self.cells
            .iter()
            .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

pub fn run_bias_grid(spec: &BiasGridSpec) -> Result<BiasGrid> {
    if spec.resolution < 2 {
        return Err(Error::InvalidSpec(format!("grid resolution must be >= 2, got {}", spec.resolution)));
    }
    if spec.r == 0 {
        return Err(Error::TooFewReplicates { needed: 1, got: 0 });
    }
    let tree = match spec.mode {
        TreeMode::HonestRegular => TreeConfig::honest(),
        TreeMode::GreedyCart => TreeConfig::greedy_cart(),
    };
    let cfg = ForestConfig::new(tree).with_s(spec.s).with_b(spec.b).resolve(spec.n)?;
    let source = DataSource::Bernoulli { p: spec.p, d: 2 };
    let res = spec.resolution;
    let centers: Vec<f64> = (0..res).map(|i| (i as f64 + 0.5) / res as f64).collect();
    let per_rep = map_replicates(spec.r, |r| {
        let ts = source.generate(spec.n, rng::derive_seed(spec.seed, &[tag::REPLICATE, r as u64]))?;
        let model =
            forest::train_resolved(&ts, &ResolvedForestConfig { seed: replicate_forest_seed(spec.seed, r), ..cfg })?;
        centers
            .iter()
            .flat_map(|&yc| centers.iter().map(move |&xc| [xc, yc]))
            .map(|x| model.predict(&x))
            .collect::<Result<Vec<f64>>>()
    })?;
    let cells = (0..res)
        .map(|i| (0..res).map(|j| mean(&per_rep.iter().map(|v| v[i * res + j]).collect::<Vec<_>>())).collect())
        .collect();
    Ok(BiasGrid { resolution: res, mode: spec.mode, p: spec.p, replicates: spec.r, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub n: usize,
    pub s: usize,
    /// Mean of `(ŷ - μ(x))²` over test points and replicates.
    pub mse: f64,
}

/// Squared error against the true mean as `n` grows, with `s` and `B`
/// resolved from `spec.forest` at each `n`. Test points are shared across `n`.
pub fn run_consistency(spec: &ExperimentSpec, source: &DataSource, ns: &[usize]) -> Result<Vec<ConsistencyPoint>> {
    ns.iter()
        .map(|&n| {
            let sub = ExperimentSpec { n, ..spec.clone() };
            let table = run_replicates(&sub, source)?;
            let mus = table
                .true_means
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("consistency needs a source with a known mean".into()))?;
            let errs: Vec<f64> = table
                .cells
                .iter()
                .zip(mus)
                .flat_map(|(row, mu)| row.iter().map(move |c| (c.prediction - mu).powi(2)))
                .collect();
            Ok(ConsistencyPoint { n, s: table.forest.s, mse: mean(&errs) })
        })
        .collect()
}

/// Regularity of many honest trees grown on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityAudit {
    pub trees: usize,
    pub splits: usize,
    pub failing_splits: usize,
    pub leaves: usize,
    pub failing_leaves: usize,
    /// Randomized splits per axis divided by all splits.
    pub randomized_axis_frequency: Vec<f64>,
}

pub fn run_regularity_audit(ts: &TrainingSet, cfg: &ForestConfig) -> Result<RegularityAudit> {
    if cfg.tree.mode != TreeMode::HonestRegular {
        return Err(Error::NotHonest);
    }
    let model = forest::train(ts, cfg)?;
    let mut audit = RegularityAudit {
        trees: model.b(),
        splits: 0,
        failing_splits: 0,
        leaves: 0,
        failing_leaves: 0,
        randomized_axis_frequency: vec![0.0; ts.d()],
    };
    let mut randomized = vec![0usize; ts.d()];
    for t in model.trees() {
        let rep = validate_regularity(t, ts)?;
        audit.splits += rep.splits.len();
        audit.failing_splits += rep.failing_splits().count();
        audit.leaves += rep.leaves.len();
        audit.failing_leaves += rep.failing_leaves().count();
        for (axis, rnd) in t.splits() {
            randomized[axis] += rnd as usize;
        }
    }
    if audit.splits > 0 {
        audit.randomized_axis_frequency = randomized.iter().map(|&c| c as f64 / audit.splits as f64).collect();
    }
    Ok(audit)
}
