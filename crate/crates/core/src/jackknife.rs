//! Infinitesimal jackknife variance estimates for subsampled forests.
//!
//! For a forest of `B` trees with per-tree outputs `T*_b` at a query point
//! and inclusion counts `N*_bi`:
//!
//! ```text
//! C_i       = (1/B) Σ_b (N*_bi - s/n) (T*_b - T̄*)
//! v̂         = (1/B) Σ_b (T*_b - T̄*)²
//! plug-in   = Σ_i C_i²
//! corrected = plug-in - s(n - s)/n · v̂ / B
//! ```
//!
//! The second term removes the Monte Carlo bias that the plug-in picks up
//! from using finitely many trees. The estimate targets the sampling
//! variance of the forest prediction itself, so intervals built from it
//! cover `E[ŷ]`, not the regression function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestModel, TreeOutputs};
use crate::numeric::{pairwise_sum, CompensatedSum};
use crate::sampling::ResampleRecord;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// `Σ_i C_i²`.
    pub plugin: f64,
    /// `s(n - s)/n · v̂ / B`.
    pub correction: f64,
    /// `plugin - correction`; may be negative.
    pub corrected: f64,
    /// `max(corrected, 0)`.
    pub truncated: f64,
    pub v_hat: f64,
    #[serde(skip)]
    pub c: Vec<f64>,
}

fn check_inputs(outputs: &TreeOutputs, records: &[ResampleRecord], s: usize, n: usize) -> Result<()> {
    let b = outputs.len();
    if b < 2 {
        return Err(Error::TooFewTrees(b));
    }
    if records.len() != b {
        return Err(Error::InvalidArgument(format!("{} tree outputs but {} resample records", b, records.len())));
    }
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("invalid subsample size s = {s} for n = {n}")));
    }
    if let Some(r) = records.iter().find(|r| r.n() != n || r.total() != s) {
        return Err(Error::InvalidArgument(format!(
            "resample record over n = {} with {} members does not match n = {n}, s = {s}",
            r.n(),
            r.total()
        )));
    }
    if outputs.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("tree outputs must be finite".into()));
    }
    Ok(())
}

/// Per-tree deviations `T*_b - T̄*`.
fn deviations(outputs: &TreeOutputs) -> Vec<f64> {
    let mean = pairwise_sum(outputs.values()) / outputs.len() as f64;
    outputs.values().iter().map(|t| t - mean).collect()
}

fn c_from_deviations(dev: &[f64], records: &[ResampleRecord], s: usize, n: usize) -> Vec<f64> {
    // Σ_b (N*_bi - s/n) dev_b = Σ_{b: i ∈ S_b} dev_b - (s/n) Σ_b dev_b,
    // which costs O(B·s + n) instead of O(B·n).
    let b = dev.len() as f64;
    let centered = (s as f64 / n as f64) * dev.iter().copied().collect::<CompensatedSum>().value();
    let mut acc = vec![0.0; n];
    for (d, rec) in dev.iter().zip(records) {
        for &i in rec.members() {
            acc[i] += d;
        }
    }
    acc.into_iter().map(|a| (a - centered) / b).collect()
}

/// The length-`n` vector of Monte Carlo covariances `C_i`.
pub fn c_weights(outputs: &TreeOutputs, records: &[ResampleRecord], s: usize, n: usize) -> Result<Vec<f64>> {
    check_inputs(outputs, records, s, n)?;
    Ok(c_from_deviations(&deviations(outputs), records, s, n))
}

/// Plug-in and bias-corrected infinitesimal jackknife estimates.
pub fn v_ij(outputs: &TreeOutputs, records: &[ResampleRecord], s: usize, n: usize) -> Result<VarianceEstimate> {
    check_inputs(outputs, records, s, n)?;
    let dev = deviations(outputs);
    let c = c_from_deviations(&dev, records, s, n);
    let b = dev.len() as f64;
    let plugin = c.iter().map(|ci| ci * ci).collect::<CompensatedSum>().value();
    let v_hat = dev.iter().map(|d| d * d).collect::<CompensatedSum>().value() / b;
    let (sf, nf) = (s as f64, n as f64);
    let correction = sf * (nf - sf) / nf * v_hat / b;
    let corrected = plugin - correction;
    Ok(VarianceEstimate { plugin, correction, corrected, truncated: corrected.max(0.0), v_hat, c })
}

/// Prediction and variance estimate of a trained forest at `x`.
pub fn forest_estimate(forest: &ForestModel, x: &[f64]) -> Result<(f64, VarianceEstimate)> {
    let outputs = forest.predict_per_tree(x)?;
    let est = v_ij(&outputs, forest.records(), forest.s(), forest.n())?;
    Ok((outputs.mean(), est))
}

/// Normal-theory interval `center ± z · sqrt(variance)` for `E[ŷ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    /// Set when the bias-corrected variance was negative and truncated to 0.
    pub degenerate: bool,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    /// Closed-interval containment, so a zero-width interval covers only
    /// its own center.
    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Interval from an explicit non-negative variance.
pub fn interval_with_variance(center: f64, variance: f64, level: f64) -> Result<PredictionInterval> {
    check_level(level)?;
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(format!("variance must be >= 0, got {variance}")));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(PredictionInterval { center, half_width: z * variance.sqrt(), level, degenerate: false })
}

/// Interval from a jackknife estimate, using the truncated variance.
pub fn interval(y_hat: f64, estimate: &VarianceEstimate, level: f64) -> Result<PredictionInterval> {
    let mut iv = interval_with_variance(y_hat, estimate.truncated, level)?;
    iv.degenerate = estimate.corrected < 0.0;
    Ok(iv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{counts_vector, SubsampleDraw};

    fn rec(n: usize, idx: &[usize]) -> ResampleRecord {
        counts_vector(&SubsampleDraw::from_indices(n, idx.to_vec()).unwrap())
    }

    /// Dense textbook evaluation of C_i, used as an oracle.
    fn c_dense(outputs: &[f64], records: &[ResampleRecord], s: usize, n: usize) -> Vec<f64> {
        let b = outputs.len() as f64;
        let mean = outputs.iter().sum::<f64>() / b;
        (0..n)
            .map(|i| {
                outputs
                    .iter()
                    .zip(records)
                    .map(|(t, r)| (r.counts()[i] as f64 - s as f64 / n as f64) * (t - mean))
                    .sum::<f64>()
                    / b
            })
            .collect()
    }

    #[test]
    fn constant_outputs_give_zero() {
        let records = vec![rec(5, &[0, 1]), rec(5, &[2, 3]), rec(5, &[1, 4])];
        let out = TreeOutputs(vec![3.0; 3]);
        let c = c_weights(&out, &records, 2, 5).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        let est = v_ij(&out, &records, 2, 5).unwrap();
        assert_eq!((est.plugin, est.v_hat, est.corrected, est.truncated), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn two_replicate_hand_expansion() {
        // n=2, s=1, subsamples {0},{1}: C_0 = (t0 - t1)/4, C_1 = -(t0 - t1)/4.
        let records = vec![rec(2, &[0]), rec(2, &[1])];
        let (t0, t1) = (1.5, -0.5);
        let c = c_weights(&TreeOutputs(vec![t0, t1]), &records, 1, 2).unwrap();
        assert!((c[0] - (t0 - t1) / 4.0).abs() < 1e-15);
        assert!((c[1] + (t0 - t1) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn index_in_every_replicate_has_zero_weight() {
        let records = vec![rec(4, &[0, 1]), rec(4, &[0, 2]), rec(4, &[0, 3])];
        let c = c_weights(&TreeOutputs(vec![1.0, 4.0, -2.0]), &records, 2, 4).unwrap();
        assert!(c[0].abs() < 1e-15);
    }

    #[test]
    fn sparse_matches_dense_formula() {
        let mut r = crate::rng::stream(3, &[]);
        let records: Vec<_> =
            (0..30).map(|_| counts_vector(&crate::sampling::draw_subsample(12, 5, &mut r).unwrap())).collect();
        let outputs: Vec<f64> = (0..30).map(|b| ((b * 7919) % 13) as f64 * 0.37 - 1.0).collect();
        let sparse = c_weights(&TreeOutputs(outputs.clone()), &records, 5, 12).unwrap();
        let dense = c_dense(&outputs, &records, 5, 12);
        for (a, b) in sparse.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn correction_term_arithmetic() {
        // n=10, s=3, B=7, outputs 1..7: v̂ = 4, correction = 3·7/10 · 4/7 = 1.2.
        let records: Vec<_> = (0..7).map(|b| rec(10, &[b, b + 1, b + 2])).collect();
        let outputs = TreeOutputs((1..=7).map(f64::from).collect());
        let est = v_ij(&outputs, &records, 3, 10).unwrap();
        assert!((est.v_hat - 4.0).abs() < 1e-14);
        assert!((est.correction - 1.2).abs() < 1e-14);
        assert_eq!(est.corrected, est.plugin - est.correction);
        let c = c_dense(outputs.values(), &records, 3, 10);
        let plugin: f64 = c.iter().map(|v| v * v).sum();
        assert!((est.plugin - plugin).abs() < 1e-13);
        assert_eq!(est.truncated, est.corrected.max(0.0));
    }

    #[test]
    fn rejects_single_tree() {
        let records = vec![rec(3, &[0])];
        assert!(matches!(v_ij(&TreeOutputs(vec![1.0]), &records, 1, 3), Err(Error::TooFewTrees(1))));
        assert!(matches!(c_weights(&TreeOutputs(vec![1.0]), &records, 1, 3), Err(Error::TooFewTrees(1))));
    }

    #[test]
    fn intervals() {
        let zero =
            VarianceEstimate { plugin: 0.0, correction: 0.0, corrected: 0.0, truncated: 0.0, v_hat: 0.0, c: vec![] };
        let iv = interval(2.0, &zero, 0.95).unwrap();
        assert_eq!(iv.half_width, 0.0);
        assert!(iv.contains(2.0) && !iv.contains(2.0 + 1e-12));
        assert!(!iv.degenerate);

        let one = VarianceEstimate { truncated: 1.0, corrected: 1.0, plugin: 1.0, ..zero.clone() };
        assert!((interval(0.0, &one, 0.95).unwrap().half_width - 1.959964).abs() < 1e-6);

        let neg = VarianceEstimate { corrected: -0.3, plugin: 0.1, correction: 0.4, ..zero.clone() };
        let iv = interval(1.0, &neg, 0.9).unwrap();
        assert!(iv.degenerate);
        assert_eq!(iv.half_width, 0.0);

        assert!(interval(0.0, &zero, 1.0).is_err());
        assert!(interval(0.0, &zero, 0.0).is_err());
    }
}
