//! Exact reference computations on tiny instances.
//!
//! * [`exact_resampling`] enumerates every size-`s` subsample of a fixed
//!   training set and returns the exact infinitesimal jackknife
//!   `Σ_i Cov(T, N_i)²` under the uniform resampling measure.
//! * [`hajek_projection_stats`] enumerates every i.i.d. `s`-tuple from a
//!   finite-support distribution and returns `Var(T)` and the variance of
//!   the Hájek projection `T̊ = E[T] + Σ_i (E[T | Z_i] - E[T])`.
//! * [`anova_bound_check`] does the same for the infinite-`B` forest on
//!   `n`-tuples and compares `E[(RF - R̊F)²]` with `(s/n)² Var(T)`.
//! * [`incrementality_curve`] estimates `Var(T̊)/Var(T)` for honest trees
//!   on continuous distributions by nested Monte Carlo.
//!
//! No exact path uses randomness; learners with internal randomization
//! seed it from the subsample's canonical encoding.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledExample, SyntheticSpec, TrainingSet};
use crate::error::{Error, Result};
use crate::forest::TreeOutputs;
use crate::jackknife::{v_ij, VarianceEstimate};
use crate::numeric::{binomial, for_each_combination, for_each_tuple, CompensatedSum};
use crate::rng::{self, tag, Stream};
use crate::sampling::{counts_vector, draw_subsample, honesty_partition, SubsampleDraw};
use crate::tree::{fit_honest, TreeConfig};

/// Largest number of cases any exact enumeration may visit.
pub const ENUMERATION_CAP: u128 = 1_000_000;

fn check_cap(count: u128) -> Result<()> {
    if count > ENUMERATION_CAP {
        return Err(Error::CapExceeded { count, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// A deterministic map from an ordered subsample to a real output.
pub trait BaseLearner: Sync {
    /// `ids` is the canonical encoding of the subsample (row or atom
    /// indices, in order) and `examples` the corresponding data.
    fn eval(&self, ids: &[usize], examples: &[&LabeledExample]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseLearnerSpec {
    /// Mean of the subsample labels.
    SubsampleMean,
    /// Maximum of the subsample labels.
    SubsampleMax,
    /// Sum of the subsample labels (a linear statistic).
    LabelSum,
    Constant {
        value: f64,
    },
    /// Honest tree grown on the whole subsample and evaluated at `x`.
    HonestTree {
        config: TreeConfig,
        x: Vec<f64>,
        seed: u64,
    },
}

impl BaseLearner for BaseLearnerSpec {
    fn eval(&self, ids: &[usize], examples: &[&LabeledExample]) -> f64 {
        match self {
            BaseLearnerSpec::SubsampleMean => {
                examples.iter().map(|e| e.y).collect::<CompensatedSum>().value() / examples.len() as f64
            }
            BaseLearnerSpec::SubsampleMax => examples.iter().map(|e| e.y).fold(f64::NEG_INFINITY, f64::max),
            BaseLearnerSpec::LabelSum => examples.iter().map(|e| e.y).collect::<CompensatedSum>().value(),
            BaseLearnerSpec::Constant { value } => *value,
            BaseLearnerSpec::HonestTree { config, x, seed } => {
                let key: Vec<u64> = ids.iter().map(|&i| i as u64).collect();
                let mut r = rng::stream(*seed, &[tag::ORACLE, rng::derive_seed(0, &key)]);
                honest_tree_output(config, x, examples, &mut r)
            }
        }
    }
}

/// Output at `x` of an honest tree grown on `examples` with randomness from `rng`.
fn honest_tree_output(config: &TreeConfig, x: &[f64], examples: &[&LabeledExample], rng: &mut Stream) -> f64 {
    let owned: Vec<LabeledExample> = examples.iter().map(|e| (*e).clone()).collect();
    let ts = TrainingSet::from_examples(x.len(), &owned).expect("oracle examples are valid");
    let draw = SubsampleDraw::full(owned.len()).expect("non-empty subsample");
    let part = honesty_partition(&draw, rng).expect("honest trees need s >= 2");
    let tree = fit_honest(&ts, &draw, &part, config, rng).expect("valid honest fit");
    tree.predict_unchecked(x)
}

/// Exact moments of a learner under uniform subsampling of a fixed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResampling {
    /// `Σ_i Cov(T, N_i)²`.
    pub vij: f64,
    /// Average of `T` over all subsamples (the infinite-`B` forest).
    pub forest_value: f64,
    /// Variance of `T` over the resampling measure.
    pub resampling_variance: f64,
    pub subsamples: u128,
}

/// Enumerates all `C(n, s)` subsamples of `ts`.
pub fn exact_resampling(ts: &TrainingSet, learner: &dyn BaseLearner, s: usize) -> Result<ExactResampling> {
    let n = ts.n();
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("invalid subsample size s = {s} for n = {n}")));
    }
    let count = binomial(n, s);
    check_cap(count)?;
    let examples: Vec<LabeledExample> = (0..n).map(|i| ts.example(i)).collect();
    let mut outputs = Vec::with_capacity(count as usize);
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(count as usize);
    for_each_combination(n, s, |c| {
        let sub: Vec<&LabeledExample> = c.iter().map(|&i| &examples[i]).collect();
        outputs.push(learner.eval(c, &sub));
        members.push(c.to_vec());
    });
    let m = outputs.len() as f64;
    let mean = outputs.iter().copied().collect::<CompensatedSum>().value() / m;
    let dev: Vec<f64> = outputs.iter().map(|t| t - mean).collect();
    let dev_total = dev.iter().copied().collect::<CompensatedSum>().value();
    let mut per_i = vec![CompensatedSum::new(); n];
    for (d, c) in dev.iter().zip(&members) {
        for &i in c {
            per_i[i].add(*d);
        }
    }
    let p = s as f64 / n as f64;
    let vij = per_i
        .iter()
        .map(|acc| {
            let cov = (acc.value() - p * dev_total) / m;
            cov * cov
        })
        .collect::<CompensatedSum>()
        .value();
    let resampling_variance = dev.iter().map(|d| d * d).collect::<CompensatedSum>().value() / m;
    Ok(ExactResampling { vij, forest_value: mean, resampling_variance, subsamples: count })
}

/// Exact `Σ_i Cov(T, N_i)²` over all `C(n, s)` subsamples.
pub fn exact_vij(ts: &TrainingSet, learner: &dyn BaseLearner, s: usize) -> Result<f64> {
    Ok(exact_resampling(ts, learner, s)?.vij)
}

/// Jackknife estimate from `b` random size-`s` subsamples of `ts`, drawn
/// from stream `(seed, [ORACLE, b])`. The Monte Carlo counterpart of
/// [`exact_resampling`].
pub fn monte_carlo_vij(
    ts: &TrainingSet,
    learner: &dyn BaseLearner,
    s: usize,
    b: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    let n = ts.n();
    let examples: Vec<LabeledExample> = (0..n).map(|i| ts.example(i)).collect();
    let mut r = rng::stream(seed, &[tag::ORACLE, b as u64]);
    let mut outputs = Vec::with_capacity(b);
    let mut records = Vec::with_capacity(b);
    for _ in 0..b {
        let draw = draw_subsample(n, s, &mut r)?;
        let sub: Vec<&LabeledExample> = draw.indices().iter().map(|&i| &examples[i]).collect();
        outputs.push(learner.eval(draw.indices(), &sub));
        records.push(counts_vector(&draw));
    }
    v_ij(&TreeOutputs(outputs), &records, s, n)
}

/// A distribution of `Z = (X, Y)` with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSupportDistribution {
    atoms: Vec<(LabeledExample, f64)>,
}

impl FiniteSupportDistribution {
    pub fn new(atoms: Vec<(LabeledExample, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("a distribution needs at least one atom".into()));
        }
        if atoms.iter().any(|(_, p)| !(*p > 0.0)) {
            return Err(Error::InvalidArgument("atom probabilities must be positive".into()));
        }
        let d = atoms[0].0.x.len();
        if atoms.iter().any(|(z, _)| z.x.len() != d) {
            return Err(Error::InvalidArgument("atoms must share one dimension".into()));
        }
        let total = atoms.iter().map(|a| a.1).collect::<CompensatedSum>().value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Equally likely atoms with scalar features `x = y`.
    pub fn uniform_labels(labels: &[f64]) -> Result<Self> {
        let p = 1.0 / labels.len() as f64;
        Self::new(labels.iter().map(|&y| (LabeledExample::new(vec![y], y), p)).collect())
    }

    pub fn atoms(&self) -> &[(LabeledExample, f64)] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    fn tuple_count(&self, len: usize) -> u128 {
        (self.atoms.len() as u128).checked_pow(len as u32).unwrap_or(u128::MAX)
    }
}

/// Exact variance of a learner on i.i.d. tuples and of its Hájek projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HajekStats {
    pub s: usize,
    pub mean: f64,
    pub base_variance: f64,
    pub hajek_variance: f64,
    /// `hajek_variance / base_variance`; `None` when `Var(T) = 0`.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

struct TupleTable {
    probs: Vec<f64>,
    values: Vec<f64>,
    tuples: Vec<Vec<usize>>,
}

fn tabulate(
    dist: &FiniteSupportDistribution,
    len: usize,
    mut f: impl FnMut(&[usize], &[&LabeledExample]) -> f64,
) -> TupleTable {
    let mut table = TupleTable { probs: Vec::new(), values: Vec::new(), tuples: Vec::new() };
    for_each_tuple(dist.support_size(), len, |t| {
        let p: f64 = t.iter().map(|&a| dist.atoms[a].1).product();
        let ex: Vec<&LabeledExample> = t.iter().map(|&a| &dist.atoms[a].0).collect();
        table.values.push(f(t, &ex));
        table.probs.push(p);
        table.tuples.push(t.to_vec());
    });
    table
}

/// Mean, variance and first-order (Hájek) variance of a tabulated statistic.
fn projection_moments(
    dist: &FiniteSupportDistribution,
    table: &TupleTable,
    len: usize,
) -> (f64, f64, f64, Vec<Vec<f64>>) {
    let k = dist.support_size();
    let mean = table.probs.iter().zip(&table.values).map(|(p, v)| p * v).collect::<CompensatedSum>().value();
    let variance = table
        .probs
        .iter()
        .zip(&table.values)
        .map(|(p, v)| p * (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    // cond[i][z] = E[stat | Z_i = z]
    let mut acc = vec![vec![CompensatedSum::new(); k]; len];
    for ((p, v), t) in table.probs.iter().zip(&table.values).zip(&table.tuples) {
        for (i, &z) in t.iter().enumerate() {
            acc[i][z].add(p * (v - mean));
        }
    }
    let cond: Vec<Vec<f64>> = acc
        .iter()
        .map(|row| row.iter().enumerate().map(|(z, a)| mean + a.value() / dist.atoms[z].1).collect())
        .collect();
    let hajek = cond
        .iter()
        .flat_map(|row| row.iter().enumerate().map(|(z, c)| dist.atoms[z].1 * (c - mean) * (c - mean)))
        .collect::<CompensatedSum>()
        .value();
    (mean, variance, hajek, cond)
}

/// Exact `Var(T)` and `Var(T̊)` for `T` applied to `s` i.i.d. draws.
pub fn hajek_projection_stats(
    dist: &FiniteSupportDistribution,
    learner: &dyn BaseLearner,
    s: usize,
) -> Result<HajekStats> {
    if s == 0 {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    check_cap(dist.tuple_count(s))?;
    let table = tabulate(dist, s, |ids, ex| learner.eval(ids, ex));
    let (mean, base_variance, hajek_variance, _) = projection_moments(dist, &table, s);
    let degenerate = base_variance <= 0.0;
    let ratio = (!degenerate).then(|| hajek_variance / base_variance);
    Ok(HajekStats { s, mean, base_variance, hajek_variance, ratio, degenerate })
}

/// Exact check of `E[(RF - R̊F)²] <= (s/n)² Var(T)` for the infinite-`B`
/// subsampled forest on `n` i.i.d. draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReport {
    pub n: usize,
    pub s: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub forest_variance: f64,
    pub forest_hajek_variance: f64,
    pub base: HajekStats,
}

/// Relative slack allowed on exact comparisons.
pub const EXACT_RTOL: f64 = 1e-10;

pub fn anova_bound_check(
    dist: &FiniteSupportDistribution,
    learner: &dyn BaseLearner,
    n: usize,
    s: usize,
) -> Result<AnovaReport> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("invalid subsample size s = {s} for n = {n}")));
    }
    check_cap(dist.tuple_count(n))?;
    let base = hajek_projection_stats(dist, learner, s)?;
    let mut combos: Vec<Vec<usize>> = Vec::new();
    for_each_combination(n, s, |c| combos.push(c.to_vec()));
    let table = tabulate(dist, n, |ids, ex| {
        let mut sum = CompensatedSum::new();
        let mut sub_ids = Vec::with_capacity(s);
        let mut sub_ex = Vec::with_capacity(s);
        for c in &combos {
            sub_ids.clear();
            sub_ex.clear();
            sub_ids.extend(c.iter().map(|&i| ids[i]));
            sub_ex.extend(c.iter().map(|&i| ex[i]));
            sum.add(learner.eval(&sub_ids, &sub_ex));
        }
        sum.value() / combos.len() as f64
    });
    let (mean, forest_variance, forest_hajek_variance, cond) = projection_moments(dist, &table, n);
    let lhs = table
        .probs
        .iter()
        .zip(&table.values)
        .zip(&table.tuples)
        .map(|((p, v), t)| {
            let proj = mean + t.iter().enumerate().map(|(i, &z)| cond[i][z] - mean).sum::<f64>();
            p * (v - proj) * (v - proj)
        })
        .collect::<CompensatedSum>()
        .value();
    let ratio = s as f64 / n as f64;
    let rhs = ratio * ratio * base.base_variance;
    let holds = lhs <= rhs * (1.0 + EXACT_RTOL) + f64::MIN_POSITIVE;
    Ok(AnovaReport { n, s, lhs, rhs, holds, forest_variance, forest_hajek_variance, base })
}

/// Draws examples from a distribution.
pub trait ExampleSampler: Sync {
    fn d(&self) -> usize;
    fn sample(&self, rng: &mut Stream) -> LabeledExample;
}

impl ExampleSampler for SyntheticSpec {
    fn d(&self) -> usize {
        self.d
    }

    fn sample(&self, rng: &mut Stream) -> LabeledExample {
        let mut x = Vec::with_capacity(self.d);
        self.sample_features(rng, &mut x);
        let eps: f64 = rng.sample(StandardNormal);
        let y = self.true_mean(&x).expect("validated spec") + self.noise_sd * eps;
        LabeledExample::new(x, y)
    }
}

impl ExampleSampler for FiniteSupportDistribution {
    fn d(&self) -> usize {
        self.atoms[0].0.x.len()
    }

    fn sample(&self, rng: &mut Stream) -> LabeledExample {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (z, p) in &self.atoms {
            acc += p;
            if u < acc {
                return z.clone();
            }
        }
        self.atoms.last().unwrap().0.clone()
    }
}

/// `X ~ U([0,1]^d)` with `Y = μ + noise_sd · N(0,1)` independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformNoise {
    pub d: usize,
    pub mean: f64,
    pub noise_sd: f64,
}

impl ExampleSampler for UniformNoise {
    fn d(&self) -> usize {
        self.d
    }

    fn sample(&self, rng: &mut Stream) -> LabeledExample {
        let x: Vec<f64> = (0..self.d).map(|_| rng.random::<f64>()).collect();
        let eps: f64 = rng.sample(StandardNormal);
        LabeledExample::new(x, self.mean + self.noise_sd * eps)
    }
}

/// Lower-bound constant for uniform features: `2^(d+1) / (d-1)!`.
pub fn uniform_incrementality_constant(d: usize) -> f64 {
    let fact: f64 = (1..d).map(|k| k as f64).product();
    2f64.powi(d as i32 + 1) / fact
}

/// Asymptotic reference `C_f / log(s)^d` for uniform features.
pub fn incrementality_reference(s: usize, d: usize) -> f64 {
    uniform_incrementality_constant(d) / (s as f64).ln().powi(d as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementalityPoint {
    pub s: usize,
    /// Estimated `Var(T̊) / Var(T)`; NaN when degenerate.
    pub ratio: f64,
    pub ratio_se: f64,
    /// `C_f / log(s)^d`; an asymptotic reference, not a bound at finite `s`.
    pub reference: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloBudget {
    pub outer: usize,
    pub inner: usize,
}

impl Default for MonteCarloBudget {
    fn default() -> Self {
        Self { outer: 1000, inner: 1000 }
    }
}

/// Nested Monte Carlo estimate of the incrementality ratio of an honest
/// tree evaluated at `x`, for each subsample size in `s_values`.
///
/// The outer loop fixes `Z_1`; the inner loop redraws the other `s - 1`
/// examples and the tree's own randomness. The between-group variance is
/// debiased by the average within-group variance over `inner`.
pub fn incrementality_curve(
    config: &TreeConfig,
    sampler: &dyn ExampleSampler,
    x: &[f64],
    s_values: &[usize],
    budget: MonteCarloBudget,
    seed: u64,
) -> Result<Vec<IncrementalityPoint>> {
    if x.len() != sampler.d() {
        return Err(Error::DimensionMismatch { expected: sampler.d(), got: x.len() });
    }
    if budget.outer < 2 || budget.inner < 2 {
        return Err(Error::InvalidArgument("Monte Carlo budget needs at least 2 x 2 draws".into()));
    }
    let total = (budget.outer as u128) * (budget.inner as u128) * s_values.len() as u128;
    if total > 100 * ENUMERATION_CAP {
        return Err(Error::CapExceeded { count: total, cap: 100 * ENUMERATION_CAP });
    }
    config.validate()?;
    let d = sampler.d();
    s_values
        .iter()
        .map(|&s| {
            if s < 2 {
                return Err(Error::InvalidArgument("honest trees need s >= 2".into()));
            }
            let groups: Vec<(f64, f64)> = run_outer(config, sampler, x, s, budget, seed);
            let outer = groups.len() as f64;
            let grand = groups.iter().map(|g| g.0).sum::<f64>() / outer;
            let between = groups.iter().map(|g| (g.0 - grand).powi(2)).sum::<f64>() / (outer - 1.0);
            let within = groups.iter().map(|g| g.1).sum::<f64>() / outer;
            let var_t = between * (outer - 1.0) / outer + within * (budget.inner as f64 - 1.0) / budget.inner as f64;
            let var_cond = (between - within / budget.inner as f64).max(0.0);
            let reference = incrementality_reference(s, d);
            if var_t <= 0.0 {
                return Ok(IncrementalityPoint { s, ratio: f64::NAN, ratio_se: f64::NAN, reference, degenerate: true });
            }
            let ratio = s as f64 * var_cond / var_t;
            let ratio_se = s as f64 * between * (2.0 / (outer - 1.0)).sqrt() / var_t;
            Ok(IncrementalityPoint { s, ratio, ratio_se, reference, degenerate: false })
        })
        .collect()
}

/// Per outer draw: (mean, unbiased variance) of the inner tree outputs.
fn run_outer(
    config: &TreeConfig,
    sampler: &dyn ExampleSampler,
    x: &[f64],
    s: usize,
    budget: MonteCarloBudget,
    seed: u64,
) -> Vec<(f64, f64)> {
    let one = |o: usize| -> (f64, f64) {
        let mut r = rng::stream(seed, &[tag::ORACLE, s as u64, o as u64]);
        let z1 = sampler.sample(&mut r);
        let mut outs = Vec::with_capacity(budget.inner);
        let mut buf: Vec<LabeledExample> = Vec::with_capacity(s);
        for _ in 0..budget.inner {
            buf.clear();
            buf.push(z1.clone());
            for _ in 1..s {
                buf.push(sampler.sample(&mut r));
            }
            let refs: Vec<&LabeledExample> = buf.iter().collect();
            outs.push(honest_tree_output(config, x, &refs, &mut r));
        }
        let m = outs.iter().sum::<f64>() / outs.len() as f64;
        let v = outs.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (outs.len() as f64 - 1.0);
        (m, v)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..budget.outer).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..budget.outer).map(one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ys: &[f64]) -> TrainingSet {
        let ex: Vec<LabeledExample> = ys.iter().map(|&y| LabeledExample::new(vec![y], y)).collect();
        TrainingSet::from_examples(1, &ex).unwrap()
    }

    /// Second implementation: direct double loop over pairs, with
    /// `Cov = E[T N_i] - E[T] E[N_i]`.
    fn pairwise_vij(ys: &[f64]) -> f64 {
        let n = ys.len();
        let mut outs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                outs.push(((a, b), (ys[a] + ys[b]) / 2.0));
            }
        }
        let m = outs.len() as f64;
        let et: f64 = outs.iter().map(|o| o.1).sum::<f64>() / m;
        let en = 2.0 / n as f64;
        (0..n)
            .map(|i| {
                let etn: f64 = outs.iter().filter(|o| o.0 .0 == i || o.0 .1 == i).map(|o| o.1).sum::<f64>() / m;
                (etn - et * en).powi(2)
            })
            .sum()
    }

    #[test]
    fn monte_carlo_tracks_exact() {
        let ts = labels(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let exact = exact_vij(&ts, &BaseLearnerSpec::SubsampleMean, 3).unwrap();
        // Closed form for the mean learner: (p(1-p) n / (s(n-1)))² Σ (y_i - ȳ)² = (5/56)² · 42.
        assert!((exact - 1050.0 / 3136.0).abs() < 1e-14);
        let mc = monte_carlo_vij(&ts, &BaseLearnerSpec::SubsampleMean, 3, 20_000, 1).unwrap();
        assert!(((mc.corrected - exact) / exact).abs() < 0.05, "{} vs {exact}", mc.corrected);
        assert!(mc.plugin > mc.corrected);
    }

    #[test]
    fn constant_learner_has_zero_vij() {
        let ts = labels(&[1.0, 5.0, 2.0, 8.0]);
        assert_eq!(exact_vij(&ts, &BaseLearnerSpec::Constant { value: 3.0 }, 2).unwrap(), 0.0);
    }

    #[test]
    fn two_point_hand_enumeration() {
        // n=2, s=1, outputs 0 and 2: Cov(T, N_0) = -1/2, Cov(T, N_1) = 1/2,
        // so Σ Cov² = (t0 - t1)²/8 = 0.5.
        let ts = labels(&[0.0, 2.0]);
        let v = exact_vij(&ts, &BaseLearnerSpec::SubsampleMean, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_learner_agrees_with_double_loop() {
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ts = labels(&ys);
        let exact = exact_resampling(&ts, &BaseLearnerSpec::SubsampleMean, 2).unwrap();
        assert_eq!(exact.subsamples, 15);
        let other = pairwise_vij(&ys);
        assert!(((exact.vij - other) / other).abs() < 1e-10, "{} vs {other}", exact.vij);
        assert!((exact.forest_value - 3.5).abs() < 1e-14);
    }

    #[test]
    fn vij_is_permutation_invariant() {
        let ys = [0.3, -1.0, 2.5, 4.0, 0.0, 1.5, 7.0];
        let mut rev = ys;
        rev.reverse();
        for learner in [BaseLearnerSpec::SubsampleMax, BaseLearnerSpec::SubsampleMean] {
            let a = exact_vij(&labels(&ys), &learner, 3).unwrap();
            let b = exact_vij(&labels(&rev), &learner, 3).unwrap();
            assert!(((a - b) / a).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let ts = labels(&(0..40).map(f64::from).collect::<Vec<_>>());
        match exact_vij(&ts, &BaseLearnerSpec::SubsampleMean, 20) {
            Err(Error::CapExceeded { cap, .. }) => assert_eq!(cap, ENUMERATION_CAP),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_learner_is_its_own_projection() {
        let dist = FiniteSupportDistribution::new(vec![
            (LabeledExample::new(vec![0.0], 0.0), 0.2),
            (LabeledExample::new(vec![1.0], 1.0), 0.5),
            (LabeledExample::new(vec![2.0], 3.0), 0.3),
        ])
        .unwrap();
        let st = hajek_projection_stats(&dist, &BaseLearnerSpec::LabelSum, 4).unwrap();
        assert!((st.ratio.unwrap() - 1.0).abs() < 1e-10);
        let rep = anova_bound_check(&dist, &BaseLearnerSpec::LabelSum, 5, 3).unwrap();
        assert!(rep.lhs.abs() < 1e-10 * rep.rhs);
        assert!(rep.holds);
    }

    #[test]
    fn constant_learner_is_degenerate() {
        let dist = FiniteSupportDistribution::uniform_labels(&[0.0, 1.0]).unwrap();
        let st = hajek_projection_stats(&dist, &BaseLearnerSpec::Constant { value: 2.0 }, 3).unwrap();
        assert!(st.degenerate);
        assert_eq!(st.ratio, None);
        assert_eq!((st.base_variance, st.hajek_variance), (0.0, 0.0));
    }

    #[test]
    fn max_of_three_atoms() {
        // Brute force over the 27 tuples of {0,1,2}: P(max = 0) = 1/27,
        // P(max = 1) = 7/27, P(max = 2) = 19/27.
        let dist = FiniteSupportDistribution::uniform_labels(&[0.0, 1.0, 2.0]).unwrap();
        let st = hajek_projection_stats(&dist, &BaseLearnerSpec::SubsampleMax, 3).unwrap();
        let mean = (7.0 + 38.0) / 27.0;
        let second = (7.0 + 76.0) / 27.0;
        assert!((st.mean - mean).abs() < 1e-14);
        assert!((st.base_variance - (second - mean * mean)).abs() < 1e-14);
        // E[max | Z_1 = z]: z=0 -> (0·1 + 1·3 + 2·5)/9 = 13/9; z=1 -> (1·4 + 2·5)/9 = 14/9; z=2 -> 2.
        let cond = [13.0 / 9.0, 14.0 / 9.0, 2.0];
        let var_cond = cond.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((st.hajek_variance - 3.0 * var_cond).abs() < 1e-14);
        let ratio = st.ratio.unwrap();
        assert!(ratio > 0.0 && ratio < 1.0);
    }

    #[test]
    fn anova_bound_full_subsample_and_max() {
        let dist = FiniteSupportDistribution::uniform_labels(&[0.0, 1.0]).unwrap();
        let full = anova_bound_check(&dist, &BaseLearnerSpec::SubsampleMax, 4, 4).unwrap();
        assert!(full.holds);
        assert!((full.rhs - full.base.base_variance).abs() < 1e-15);
        let rep = anova_bound_check(&dist, &BaseLearnerSpec::SubsampleMax, 4, 2).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(rep.lhs > 0.0);
        assert!(rep.forest_hajek_variance <= rep.forest_variance);
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteSupportDistribution::new(vec![]).is_err());
        assert!(FiniteSupportDistribution::new(vec![(LabeledExample::new(vec![0.0], 0.0), 0.9)]).is_err());
        assert!(FiniteSupportDistribution::new(vec![(LabeledExample::new(vec![0.0], 0.0), 1.0)]).is_ok());
    }

    #[test]
    fn honest_tree_learner_is_deterministic() {
        let learner = BaseLearnerSpec::HonestTree { config: TreeConfig::honest(), x: vec![0.4], seed: 3 };
        let ts = labels(&[0.1, 0.9, 0.5, 0.3, 0.7]);
        let a = exact_resampling(&ts, &learner, 3).unwrap();
        let b = exact_resampling(&ts, &learner, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.vij > 0.0);
    }

    #[test]
    fn incrementality_small_budget() {
        let sampler = UniformNoise { d: 1, mean: 0.0, noise_sd: 1.0 };
        let budget = MonteCarloBudget { outer: 200, inner: 50 };
        let pts = incrementality_curve(&TreeConfig::honest(), &sampler, &[0.5], &[8], budget, 1).unwrap();
        assert_eq!(pts.len(), 1);
        let p = pts[0];
        assert!(!p.degenerate);
        assert!(p.ratio >= -3.0 * p.ratio_se && p.ratio <= 1.0 + 3.0 * p.ratio_se, "{p:?}");
        assert!((p.reference - 4.0 / 8f64.ln()).abs() < 1e-12);

        let constant = UniformNoise { d: 1, mean: 2.0, noise_sd: 0.0 };
        let pts = incrementality_curve(&TreeConfig::honest(), &constant, &[0.5], &[4], budget, 1).unwrap();
        assert!(pts[0].degenerate);
    }

    #[test]
    fn reference_constant() {
        assert_eq!(uniform_incrementality_constant(1), 4.0);
        assert_eq!(uniform_incrementality_constant(2), 8.0);
        assert_eq!(uniform_incrementality_constant(3), 8.0);
    }
}
