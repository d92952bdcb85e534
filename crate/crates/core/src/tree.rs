//! Regression trees used as base learners.
//!
//! Two growing modes are supported:
//!
//! * [`TreeMode::HonestRegular`]: the subsample is split into structure
//!   points, whose labels choose the splits, and prediction points, whose
//!   labels become leaf values. Every split keeps at least a `gamma`
//!   fraction of the node's points on each side, each axis is chosen with
//!   probability at least `delta / d`, and the tree is grown until every
//!   leaf holds exactly one prediction point.
//! * [`TreeMode::GreedyCart`]: a CART-style regression tree that uses all
//!   subsample labels for both splitting and leaf means, stopping once a
//!   node holds at most `max_leaf_size` points.
//!
//! Routing is `x[axis] <= threshold` goes left.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::sampling::{HonestyPartition, SubsampleDraw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeMode {
    #[serde(alias = "honest")]
    HonestRegular,
    #[serde(alias = "cart")]
    GreedyCart,
}

impl std::str::FromStr for TreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "honest" | "honest-regular" => Ok(TreeMode::HonestRegular),
            "cart" | "greedy-cart" => Ok(TreeMode::GreedyCart),
            other => Err(Error::InvalidArgument(format!("unknown tree mode '{other}' (expected honest or cart)"))),
        }
    }
}

impl std::fmt::Display for TreeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeMode::HonestRegular => "honest-regular",
            TreeMode::GreedyCart => "greedy-cart",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Minimum fraction of a node's points that each child must keep.
    pub gamma: f64,
    /// Probability that a node draws its split axis uniformly at random.
    /// Greedy trees use it too; set it to 0 there for plain CART.
    pub delta: f64,
    pub mode: TreeMode,
    /// Largest node that is not split further (greedy mode only).
    pub max_leaf_size: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { gamma: 0.10, delta: 0.5, mode: TreeMode::HonestRegular, max_leaf_size: 5 }
    }
}

impl TreeConfig {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn greedy_cart() -> Self {
        Self { mode: TreeMode::GreedyCart, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 0.5), got {}", self.gamma)));
        }
        // Greedy trees may set delta = 0 for a purely greedy axis choice;
        // honest trees need every axis to keep a positive split probability.
        let greedy = self.mode == TreeMode::GreedyCart;
        if !((self.delta > 0.0 || (greedy && self.delta == 0.0)) && self.delta <= 1.0) {
            let range = if greedy { "[0, 1]" } else { "(0, 1]" };
            return Err(Error::InvalidArgument(format!("delta must lie in {range}, got {}", self.delta)));
        }
        if self.max_leaf_size == 0 {
            return Err(Error::InvalidArgument("max_leaf_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        axis: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Whether the axis came from the uniformly random branch.
        randomized: bool,
    },
    Leaf {
        /// Training row whose label is the leaf value (honest mode).
        prediction_index: Option<usize>,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    d: usize,
    nodes: Vec<Node>,
    subsample: SubsampleDraw,
    partition: Option<HonestyPartition>,
    config: TreeConfig,
}

impl TreeModel {
    /// Assembles a tree from explicit nodes; `nodes[0]` is the root.
    pub fn from_parts(
        d: usize,
        nodes: Vec<Node>,
        subsample: SubsampleDraw,
        partition: Option<HonestyPartition>,
        config: TreeConfig,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("a tree needs at least one node".into()));
        }
        for node in &nodes {
            match *node {
                Node::Split { axis, threshold, left, right, .. } => {
                    if axis >= d || !threshold.is_finite() || left >= nodes.len() || right >= nodes.len() {
                        return Err(Error::InvalidArgument("malformed split node".into()));
                    }
                }
                Node::Leaf { value, .. } => {
                    if !value.is_finite() {
                        return Err(Error::InvalidArgument("non-finite leaf value".into()));
                    }
                }
            }
        }
        Ok(Self { d, nodes, subsample, partition, config })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn subsample(&self) -> &SubsampleDraw {
        &self.subsample
    }

    pub fn partition(&self) -> Option<&HonestyPartition> {
        self.partition.as_ref()
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Splits as `(axis, randomized)` pairs.
    pub fn splits(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { axis, randomized, .. } => Some((axis, randomized)),
            Node::Leaf { .. } => None,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// Index of the leaf containing `x`. Assumes `x.len() == d`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { axis, threshold, left, right, .. } => {
                    at = if x[axis] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Prediction without the dimension check.
    #[inline]
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    /// The training row `i*(x)` whose label an honest tree returns at `x`.
    pub fn selected_index(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        if self.config.mode != TreeMode::HonestRegular {
            return Err(Error::NotHonest);
        }
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { prediction_index: Some(i), .. } => Ok(i),
            _ => Err(Error::NotHonest),
        }
    }
}

/// Fits an honest regular tree on `draw` using `partition`.
pub fn fit_honest<R: Rng + ?Sized>(
    ts: &TrainingSet,
    draw: &SubsampleDraw,
    partition: &HonestyPartition,
    cfg: &TreeConfig,
    rng: &mut R,
) -> Result<TreeModel> {
    cfg.validate()?;
    if draw.n() != ts.n() {
        return Err(Error::InvalidArgument(format!(
            "draw is over {} rows but the training set has {}",
            draw.n(),
            ts.n()
        )));
    }
    partition.validate(draw)?;
    let cfg = TreeConfig { mode: TreeMode::HonestRegular, ..*cfg };
    let mut builder = HonestBuilder { ts, cfg, rng, nodes: Vec::new() };
    builder.grow(partition.structure.clone(), partition.prediction.clone());
    Ok(TreeModel {
        d: ts.d(),
        nodes: builder.nodes,
        subsample: draw.clone(),
        partition: Some(partition.clone()),
        config: cfg,
    })
}

/// Fits a greedy CART-style tree on all points of `draw`.
pub fn fit_greedy_cart<R: Rng + ?Sized>(
    ts: &TrainingSet,
    draw: &SubsampleDraw,
    cfg: &TreeConfig,
    rng: &mut R,
) -> Result<TreeModel> {
    cfg.validate()?;
    if draw.n() != ts.n() {
        return Err(Error::InvalidArgument(format!(
            "draw is over {} rows but the training set has {}",
            draw.n(),
            ts.n()
        )));
    }
    let cfg = TreeConfig { mode: TreeMode::GreedyCart, ..*cfg };
    let mut builder = CartBuilder { ts, cfg, rng, nodes: Vec::new() };
    builder.grow(draw.indices().to_vec());
    Ok(TreeModel { d: ts.d(), nodes: builder.nodes, subsample: draw.clone(), partition: None, config: cfg })
}

fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

/// Threshold strictly between two distinct sorted values.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}

/// Best variance-reduction threshold over midpoints of consecutive distinct
/// values of `points` (pairs of coordinate and label, any order). Ties go to
/// the lowest threshold. Returns `(threshold, reduction)`.
fn best_threshold(points: &mut [(f64, f64)], min_child: usize) -> Option<(f64, f64)> {
    let m = points.len();
    if m < 2 * min_child.max(1) {
        return None;
    }
    points.sort_by(|a, b| cmp_f64(&a.0, &b.0));
    let total: f64 = points.iter().map(|p| p.1).sum();
    let base = total * total / m as f64;
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 1..m {
        left += points[k - 1].1;
        if points[k - 1].0 == points[k].0 || k < min_child || m - k < min_child {
            continue;
        }
        let right = total - left;
        let gain = left * left / k as f64 + right * right / (m - k) as f64 - base;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((midpoint(points[k - 1].0, points[k].0), gain));
        }
    }
    best
}

/// Structure-label variance reduction of splitting at `threshold`.
fn reduction_at(points: &[(f64, f64)], threshold: f64) -> f64 {
    let m = points.len();
    let total: f64 = points.iter().map(|p| p.1).sum();
    let (mut left, mut k) = (0.0, 0usize);
    for &(v, y) in points {
        if v <= threshold {
            left += y;
            k += 1;
        }
    }
    if k == 0 || k == m {
        return 0.0;
    }
    let right = total - left;
    left * left / k as f64 + right * right / (m - k) as f64 - total * total / m as f64
}

/// Admissible split positions of a node along one axis.
struct AxisWindow {
    /// All node coordinates on this axis, sorted.
    values: Vec<f64>,
    /// Left-child sizes `k` that are admissible, ascending.
    positions: Vec<usize>,
}

impl AxisWindow {
    fn threshold(&self, k: usize) -> f64 {
        midpoint(self.values[k - 1], self.values[k])
    }

    /// Left-child size produced by `threshold`.
    fn left_size(&self, threshold: f64) -> usize {
        self.values.partition_point(|&v| v <= threshold)
    }

    /// Moves `threshold` into the admissible window.
    fn clamp(&self, threshold: f64) -> f64 {
        let k = self.left_size(threshold);
        if self.positions.binary_search(&k).is_ok() {
            return threshold;
        }
        let lo = self.positions[0];
        let hi = *self.positions.last().unwrap();
        if k < lo {
            self.threshold(lo)
        } else if k > hi {
            self.threshold(hi)
        } else {
            // Only reachable when a prediction point sits exactly on `threshold`;
            // take the nearest admissible position.
            let idx = self.positions.partition_point(|&p| p < k);
            self.threshold(self.positions[idx.min(self.positions.len() - 1)])
        }
    }
}

struct HonestBuilder<'a, R: ?Sized> {
    ts: &'a TrainingSet,
    cfg: TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng + ?Sized> HonestBuilder<'_, R> {
    fn push_leaf(&mut self, i: usize) -> usize {
        self.nodes.push(Node::Leaf { prediction_index: Some(i), value: self.ts.label(i) });
        self.nodes.len() - 1
    }

    /// Admissible positions on `axis`. With `strict`, each child keeps at
    /// least `gamma * m` points; otherwise only the prediction-point
    /// condition applies.
    fn window(&self, axis: usize, structure: &[usize], prediction: &[usize], strict: bool) -> AxisWindow {
        let mut tagged: Vec<(f64, bool)> = structure
            .iter()
            .map(|&i| (self.ts.row(i)[axis], false))
            .chain(prediction.iter().map(|&i| (self.ts.row(i)[axis], true)))
            .collect();
        tagged.sort_by(|a, b| cmp_f64(&a.0, &b.0).then(a.1.cmp(&b.1)));
        let m = tagged.len();
        let p = prediction.len();
        let min_side = self.cfg.gamma * m as f64;
        let mut positions = Vec::new();
        let mut pred_left = 0;
        for k in 1..m {
            pred_left += usize::from(tagged[k - 1].1);
            if tagged[k - 1].0 == tagged[k].0 || pred_left == 0 || pred_left == p {
                continue;
            }
            if strict && ((k as f64) < min_side || ((m - k) as f64) < min_side) {
                continue;
            }
            positions.push(k);
        }
        AxisWindow { values: tagged.into_iter().map(|t| t.0).collect(), positions }
    }

    fn structure_points(&self, axis: usize, structure: &[usize]) -> Vec<(f64, f64)> {
        structure.iter().map(|&i| (self.ts.row(i)[axis], self.ts.label(i))).collect()
    }

    /// Threshold on `axis`: the structure-optimal one clamped into the
    /// window, or a uniformly random admissible one when the structure
    /// points do not vary along `axis`.
    fn threshold_on(&mut self, axis: usize, window: &AxisWindow, structure: &[usize]) -> (f64, Option<f64>) {
        let mut pts = self.structure_points(axis, structure);
        match best_threshold(&mut pts, 1) {
            Some((t, _)) => {
                let t = window.clamp(t);
                (t, Some(reduction_at(&pts, t)))
            }
            None => {
                let k = window.positions[self.rng.random_range(0..window.positions.len() as u64) as usize];
                (window.threshold(k), None)
            }
        }
    }

    fn grow(&mut self, structure: Vec<usize>, prediction: Vec<usize>) -> usize {
        if prediction.len() == 1 {
            return self.push_leaf(prediction[0]);
        }
        let d = self.ts.d();
        let use_random_axis = self.rng.random::<f64>() < self.cfg.delta;

        let mut windows: Vec<AxisWindow> = (0..d).map(|a| self.window(a, &structure, &prediction, true)).collect();
        if windows.iter().all(|w| w.positions.is_empty()) {
            // The gamma constraint cannot be met on any axis; keep the tree
            // fully grown by relaxing it for this node.
            windows = (0..d).map(|a| self.window(a, &structure, &prediction, false)).collect();
            let Some((axis, k)) = most_balanced(&windows) else {
                // Prediction points coincide on every axis and cannot be
                // separated; keep one of them at random.
                let pick = prediction[self.rng.random_range(0..prediction.len() as u64) as usize];
                return self.push_leaf(pick);
            };
            let threshold = windows[axis].threshold(k);
            return self.split(axis, threshold, use_random_axis, structure, prediction);
        }
        let open: Vec<usize> = (0..d).filter(|&a| !windows[a].positions.is_empty()).collect();

        let (axis, threshold, randomized) = if use_random_axis {
            let first = self.rng.random_range(0..d as u64) as usize;
            let axis = if windows[first].positions.is_empty() {
                open[self.rng.random_range(0..open.len() as u64) as usize]
            } else {
                first
            };
            let (t, _) = self.threshold_on(axis, &windows[axis], &structure);
            (axis, t, true)
        } else {
            let mut best: Option<(usize, f64, f64)> = None;
            for &a in &open {
                let mut pts = self.structure_points(a, &structure);
                if let Some((t, _)) = best_threshold(&mut pts, 1) {
                    let t = windows[a].clamp(t);
                    let gain = reduction_at(&pts, t);
                    if best.is_none_or(|(_, _, g)| gain > g) {
                        best = Some((a, t, gain));
                    }
                }
            }
            match best {
                Some((a, t, _)) => (a, t, false),
                None => {
                    // No structure spread anywhere: split the prediction
                    // points at random.
                    let axis = open[self.rng.random_range(0..open.len() as u64) as usize];
                    let (t, _) = self.threshold_on(axis, &windows[axis], &structure);
                    (axis, t, true)
                }
            }
        };
        self.split(axis, threshold, randomized, structure, prediction)
    }

    fn split(
        &mut self,
        axis: usize,
        threshold: f64,
        randomized: bool,
        structure: Vec<usize>,
        prediction: Vec<usize>,
    ) -> usize {
        let goes_left = |i: &usize| self.ts.row(*i)[axis] <= threshold;
        let (sl, sr): (Vec<usize>, Vec<usize>) = structure.into_iter().partition(goes_left);
        let (pl, pr): (Vec<usize>, Vec<usize>) = prediction.into_iter().partition(goes_left);
        debug_assert!(!pl.is_empty() && !pr.is_empty());
        let id = self.nodes.len();
        self.nodes.push(Node::Split { axis, threshold, left: 0, right: 0, randomized });
        let left = self.grow(sl, pl);
        let right = self.grow(sr, pr);
        self.nodes[id] = Node::Split { axis, threshold, left, right, randomized };
        id
    }
}

/// Axis and left size whose smaller child is largest; ties go to the lowest
/// axis, then the lowest position.
fn most_balanced(windows: &[AxisWindow]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (a, w) in windows.iter().enumerate() {
        let m = w.values.len();
        for &k in &w.positions {
            let small = k.min(m - k);
            if best.is_none_or(|(_, _, b)| small > b) {
                best = Some((a, k, small));
            }
        }
    }
    best.map(|(a, k, _)| (a, k))
}

struct CartBuilder<'a, R: ?Sized> {
    ts: &'a TrainingSet,
    cfg: TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng + ?Sized> CartBuilder<'_, R> {
    fn leaf(&mut self, points: &[usize]) -> usize {
        let first = self.ts.label(points[0]);
        let value = if points.iter().all(|&i| self.ts.label(i) == first) {
            first
        } else {
            points.iter().map(|&i| self.ts.label(i)).sum::<f64>() / points.len() as f64
        };
        self.nodes.push(Node::Leaf { prediction_index: None, value });
        self.nodes.len() - 1
    }

    fn grow(&mut self, points: Vec<usize>) -> usize {
        let first = self.ts.label(points[0]);
        if points.len() <= self.cfg.max_leaf_size || points.iter().all(|&i| self.ts.label(i) == first) {
            return self.leaf(&points);
        }
        let d = self.ts.d();
        let column =
            |a: usize| -> Vec<(f64, f64)> { points.iter().map(|&i| (self.ts.row(i)[a], self.ts.label(i))).collect() };
        let use_random_axis = self.rng.random::<f64>() < self.cfg.delta;
        let choice = if use_random_axis {
            let spread: Vec<usize> = (0..d)
                .filter(|&a| {
                    let v0 = self.ts.row(points[0])[a];
                    points.iter().any(|&i| self.ts.row(i)[a] != v0)
                })
                .collect();
            if spread.is_empty() {
                None
            } else {
                let a = spread[self.rng.random_range(0..spread.len() as u64) as usize];
                best_threshold(&mut column(a), 1).map(|(t, g)| (a, t, g, true))
            }
        } else {
            let mut best: Option<(usize, f64, f64, bool)> = None;
            for a in 0..d {
                if let Some((t, g)) = best_threshold(&mut column(a), 1) {
                    if best.is_none_or(|(_, _, bg, _)| g > bg) {
                        best = Some((a, t, g, false));
                    }
                }
            }
            best
        };
        let Some((axis, threshold, gain, randomized)) = choice else {
            return self.leaf(&points);
        };
        if gain <= 0.0 {
            return self.leaf(&points);
        }
        let (left_pts, right_pts): (Vec<usize>, Vec<usize>) =
            points.into_iter().partition(|&i| self.ts.row(i)[axis] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split { axis, threshold, left: 0, right: 0, randomized });
        let left = self.grow(left_pts);
        let right = self.grow(right_pts);
        self.nodes[id] = Node::Split { axis, threshold, left, right, randomized };
        id
    }
}

/// Whether `X_i` is a potential nearest neighbor of `x` among `candidates`:
/// no other candidate lies in the closed axis-aligned box spanned by `x`
/// and `X_i`.
pub fn is_pnn(x: &[f64], i: usize, candidates: &[usize], ts: &TrainingSet) -> Result<bool> {
    if x.len() != ts.d() {
        return Err(Error::DimensionMismatch { expected: ts.d(), got: x.len() });
    }
    if !candidates.contains(&i) {
        return Err(Error::InvalidArgument(format!("index {i} is not among the candidates")));
    }
    let xi = ts.row(i);
    let inside = |j: usize| ts.row(j).iter().zip(x.iter().zip(xi)).all(|(&v, (&a, &b))| v >= a.min(b) && v <= a.max(b));
    Ok(!candidates.iter().any(|&j| j != i && inside(j)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub node: usize,
    pub axis: usize,
    pub left_count: usize,
    pub right_count: usize,
    pub left_fraction: f64,
    pub right_fraction: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafAudit {
    pub node: usize,
    pub prediction_points: usize,
    pub value_matches: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub gamma: f64,
    pub splits: Vec<SplitAudit>,
    pub leaves: Vec<LeafAudit>,
    pub passed: bool,
}

impl RegularityReport {
    pub fn failing_splits(&self) -> impl Iterator<Item = &SplitAudit> {
        self.splits.iter().filter(|s| !s.ok)
    }

    pub fn failing_leaves(&self) -> impl Iterator<Item = &LeafAudit> {
        self.leaves.iter().filter(|l| !l.ok)
    }
}

/// Audits an honest tree by routing its subsample back through it: every
/// split must keep at least `gamma` of the node's subsample points on each
/// side, and every leaf must hold exactly one prediction point whose label
/// is the leaf value.
pub fn validate_regularity(tree: &TreeModel, ts: &TrainingSet) -> Result<RegularityReport> {
    let partition = tree.partition.as_ref().ok_or(Error::NotHonest)?;
    if ts.d() != tree.d {
        return Err(Error::DimensionMismatch { expected: tree.d, got: ts.d() });
    }
    let n_nodes = tree.nodes.len();
    let mut reach = vec![0usize; n_nodes];
    let mut pred_reach = vec![0usize; n_nodes];
    let is_pred = |i: usize| partition.prediction.binary_search(&i).is_ok();
    for &i in tree.subsample.indices() {
        let x = ts.row(i);
        let pred = is_pred(i);
        let mut at = 0;
        loop {
            reach[at] += 1;
            if pred {
                pred_reach[at] += 1;
            }
            match tree.nodes[at] {
                Node::Split { axis, threshold, left, right, .. } => {
                    at = if x[axis] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => break,
            }
        }
    }

    let gamma = tree.config.gamma;
    let mut splits = Vec::new();
    let mut leaves = Vec::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        match *node {
            Node::Split { axis, left, right, .. } => {
                let total = reach[id].max(1) as f64;
                let lf = reach[left] as f64 / total;
                let rf = reach[right] as f64 / total;
                splits.push(SplitAudit {
                    node: id,
                    axis,
                    left_count: reach[left],
                    right_count: reach[right],
                    left_fraction: lf,
                    right_fraction: rf,
                    ok: lf >= gamma && rf >= gamma,
                });
            }
            Node::Leaf { prediction_index, value } => {
                let value_matches = match prediction_index {
                    Some(i) => is_pred(i) && ts.label(i) == value && tree.leaf_of(ts.row(i)) == id,
                    None => false,
                };
                leaves.push(LeafAudit {
                    node: id,
                    prediction_points: pred_reach[id],
                    value_matches,
                    ok: pred_reach[id] == 1 && value_matches,
                });
            }
        }
    }
    let passed = splits.iter().all(|s| s.ok) && leaves.iter().all(|l| l.ok);
    Ok(RegularityReport { gamma, splits, leaves, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, LabeledExample, SyntheticKind, SyntheticSpec};
    use crate::rng::stream;
    use crate::sampling::{draw_subsample, honesty_partition};

    fn line(points: &[(f64, f64)]) -> TrainingSet {
        let ex: Vec<LabeledExample> = points.iter().map(|&(x, y)| LabeledExample::new(vec![x], y)).collect();
        TrainingSet::from_examples(1, &ex).unwrap()
    }

    fn structure_of(tree: &TreeModel) -> Vec<(usize, u64)> {
        tree.nodes()
            .iter()
            .filter_map(|n| match *n {
                Node::Split { axis, threshold, .. } => Some((axis, threshold.to_bits())),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    #[test]
    fn two_points_make_a_single_leaf() {
        let ts = line(&[(0.2, 1.0), (0.8, 5.0)]);
        let draw = SubsampleDraw::full(2).unwrap();
        let part = HonestyPartition { structure: vec![0], prediction: vec![1] };
        let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut stream(0, &[])).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&[0.0]).unwrap(), 5.0);
        assert_eq!(tree.selected_index(&[0.99]).unwrap(), 1);
    }

    #[test]
    fn empty_prediction_set_is_rejected() {
        let ts = line(&[(0.2, 1.0), (0.8, 5.0)]);
        let draw = SubsampleDraw::full(2).unwrap();
        let part = HonestyPartition { structure: vec![0, 1], prediction: vec![] };
        assert!(fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut stream(0, &[])).is_err());
    }

    #[test]
    fn thresholds_separate_prediction_points() {
        // Structure at 0.2 and 0.8, prediction at 0.1 and 0.9. The only
        // admissible left sizes are 1..=3 of the 4 sorted points
        // (0.1 | 0.2 0.8 | 0.9), so every threshold lies in [0.1, 0.9).
        let ts = line(&[(0.2, 0.0), (0.8, 10.0), (0.1, 1.0), (0.9, 2.0)]);
        let draw = SubsampleDraw::full(4).unwrap();
        let part = HonestyPartition { structure: vec![0, 1], prediction: vec![2, 3] };
        for seed in 0..50 {
            let cfg = TreeConfig { gamma: 0.2, ..TreeConfig::honest() };
            let tree = fit_honest(&ts, &draw, &part, &cfg, &mut stream(seed, &[])).unwrap();
            assert_eq!(tree.num_leaves(), 2);
            match tree.nodes()[0] {
                Node::Split { threshold, .. } => assert!(threshold > 0.1 && threshold < 0.9),
                _ => panic!("expected a split"),
            }
            assert_eq!(tree.predict(&[0.1]).unwrap(), 1.0);
            assert_eq!(tree.predict(&[0.9]).unwrap(), 2.0);
            // The structure-optimal threshold 0.5 is admissible.
            if let Node::Split { threshold, .. } = tree.nodes()[0] {
                assert_eq!(threshold, 0.5);
            }
        }
    }

    #[test]
    fn honesty_prediction_labels_do_not_move_splits() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 3);
        let ts = gen_synthetic(&spec, 300, 1).unwrap();
        let draw = draw_subsample(300, 80, &mut stream(2, &[])).unwrap();
        let part = honesty_partition(&draw, &mut stream(3, &[])).unwrap();
        let cfg = TreeConfig::honest();
        let tree = fit_honest(&ts, &draw, &part, &cfg, &mut stream(4, &[])).unwrap();

        let mut y = ts.labels().to_vec();
        let mut shuffled: Vec<f64> = part.prediction.iter().map(|&i| y[i]).collect();
        shuffled.reverse();
        for (k, &i) in part.prediction.iter().enumerate() {
            y[i] = shuffled[k] * 7.0 - 1.0;
        }
        let ts2 = ts.with_labels(y).unwrap();
        let tree2 = fit_honest(&ts2, &draw, &part, &cfg, &mut stream(4, &[])).unwrap();
        assert_eq!(structure_of(&tree), structure_of(&tree2));
        assert_ne!(tree, tree2);
    }

    #[test]
    fn honest_trees_are_fully_grown_and_regular() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2);
        let ts = gen_synthetic(&spec, 500, 8).unwrap();
        for seed in 0..20 {
            let mut r = stream(seed, &[]);
            let draw = draw_subsample(500, 60, &mut r).unwrap();
            let part = honesty_partition(&draw, &mut r).unwrap();
            let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut r).unwrap();
            assert_eq!(tree.num_leaves(), part.prediction.len());
            let report = validate_regularity(&tree, &ts).unwrap();
            assert!(report.passed, "{:?}", report.failing_splits().collect::<Vec<_>>());
        }
    }

    #[test]
    fn prediction_at_a_prediction_point_returns_its_label() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2).with_noise(0.0);
        let ts = gen_synthetic(&spec, 200, 5).unwrap();
        let mut r = stream(6, &[]);
        let draw = draw_subsample(200, 40, &mut r).unwrap();
        let part = honesty_partition(&draw, &mut r).unwrap();
        let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut r).unwrap();
        for &i in &part.prediction {
            assert_eq!(tree.predict(ts.row(i)).unwrap(), ts.label(i));
            assert_eq!(tree.selected_index(ts.row(i)).unwrap(), i);
        }
    }

    #[test]
    fn honest_prediction_is_a_pnn() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2);
        let ts = gen_synthetic(&spec, 300, 12).unwrap();
        let mut r = stream(13, &[]);
        let draw = draw_subsample(300, 50, &mut r).unwrap();
        let part = honesty_partition(&draw, &mut r).unwrap();
        let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut r).unwrap();
        let mut q = stream(14, &[]);
        for _ in 0..200 {
            let x = [q.random::<f64>(), q.random::<f64>()];
            let i = tree.selected_index(&x).unwrap();
            assert!(is_pnn(&x, i, &part.prediction, &ts).unwrap());
        }
    }

    #[test]
    fn selected_index_is_shared_within_a_leaf() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2);
        let ts = gen_synthetic(&spec, 100, 1).unwrap();
        let mut r = stream(2, &[]);
        let draw = draw_subsample(100, 20, &mut r).unwrap();
        let part = honesty_partition(&draw, &mut r).unwrap();
        let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut r).unwrap();
        let x = [0.31, 0.62];
        let leaf = tree.leaf_of(&x);
        let y = [0.31 + 1e-9, 0.62 - 1e-9];
        if tree.leaf_of(&y) == leaf {
            assert_eq!(tree.selected_index(&x).unwrap(), tree.selected_index(&y).unwrap());
        }
        let one = SubsampleDraw::from_indices(100, vec![3, 9]).unwrap();
        let part = HonestyPartition { structure: vec![9], prediction: vec![3] };
        let t = fit_honest(&ts, &one, &part, &TreeConfig::honest(), &mut r).unwrap();
        for x in [[0.0, 0.0], [1.0, 0.5], [0.3, 0.9]] {
            assert_eq!(t.selected_index(&x).unwrap(), 3);
        }
    }

    #[test]
    fn coincident_prediction_points_still_terminate() {
        let ts = line(&[(0.5, 1.0), (0.5, 2.0), (0.5, 3.0), (0.5, 4.0)]);
        let draw = SubsampleDraw::full(4).unwrap();
        let part = HonestyPartition { structure: vec![0, 1], prediction: vec![2, 3] };
        let tree = fit_honest(&ts, &draw, &part, &TreeConfig::honest(), &mut stream(1, &[])).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        let v = tree.predict(&[0.5]).unwrap();
        assert!(v == 3.0 || v == 4.0);
        assert!(!validate_regularity(&tree, &ts).unwrap().passed);
    }

    #[test]
    fn cart_constant_labels() {
        let ts = TrainingSet::from_parts(1, (0..20).map(|i| i as f64 / 20.0).collect(), vec![0.1; 20]).unwrap();
        let draw = SubsampleDraw::full(20).unwrap();
        let tree = fit_greedy_cart(&ts, &draw, &TreeConfig::greedy_cart(), &mut stream(0, &[])).unwrap();
        for n in tree.nodes() {
            if let Node::Leaf { value, .. } = n {
                assert_eq!(*value, 0.1);
            }
        }
    }

    #[test]
    fn cart_single_point() {
        let ts = line(&[(0.3, 4.5)]);
        let draw = SubsampleDraw::full(1).unwrap();
        let tree = fit_greedy_cart(&ts, &draw, &TreeConfig::greedy_cart(), &mut stream(0, &[])).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&[0.9]).unwrap(), 4.5);
        assert!(matches!(tree.selected_index(&[0.9]), Err(Error::NotHonest)));
    }

    #[test]
    fn cart_separates_label_groups() {
        // Exhaustive search over the three candidate thresholds 0.15, 0.5,
        // 0.85: gains are 33.3, 100, 33.3, so 0.5 wins.
        let ts = line(&[(0.1, 0.0), (0.2, 0.0), (0.8, 10.0), (0.9, 10.0)]);
        let draw = SubsampleDraw::full(4).unwrap();
        let cfg = TreeConfig { max_leaf_size: 2, ..TreeConfig::greedy_cart() };
        for seed in 0..10 {
            let tree = fit_greedy_cart(&ts, &draw, &cfg, &mut stream(seed, &[])).unwrap();
            match tree.nodes()[0] {
                Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
                _ => panic!("expected split"),
            }
            assert_eq!(tree.predict(&[0.05]).unwrap(), 0.0);
            assert_eq!(tree.predict(&[0.3]).unwrap(), 0.0);
            assert_eq!(tree.predict(&[0.7]).unwrap(), 10.0);
        }
    }

    #[test]
    fn tie_at_threshold_routes_left() {
        let draw = SubsampleDraw::full(2).unwrap();
        let nodes = vec![
            Node::Split { axis: 0, threshold: 0.5, left: 1, right: 2, randomized: false },
            Node::Leaf { prediction_index: Some(0), value: -1.0 },
            Node::Leaf { prediction_index: Some(1), value: 1.0 },
        ];
        let tree = TreeModel::from_parts(2, nodes, draw, None, TreeConfig::honest()).unwrap();
        assert_eq!(tree.predict(&[0.5, 0.9]).unwrap(), -1.0);
        assert_eq!(tree.predict(&[0.5000001, 0.9]).unwrap(), 1.0);
        assert!(matches!(tree.predict(&[0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pnn_examples() {
        let ts = line(&[(0.4, 0.0), (0.6, 0.0), (0.9, 0.0)]);
        let cands = [0, 1, 2];
        assert!(!is_pnn(&[0.5], 2, &cands, &ts).unwrap());
        assert!(is_pnn(&[0.5], 1, &cands, &ts).unwrap());
        assert!(is_pnn(&[0.5], 0, &cands, &ts).unwrap());
        assert!(is_pnn(&[0.0], 2, &[2], &ts).unwrap());

        let ex = [LabeledExample::new(vec![0.5, 0.5], 0.0), LabeledExample::new(vec![0.2, 0.8], 0.0)];
        let ts2 = TrainingSet::from_examples(2, &ex).unwrap();
        assert!(is_pnn(&[0.0, 0.0], 0, &[0, 1], &ts2).unwrap());
        assert!(is_pnn(&[0.0], 0, &[0], &ts).is_ok());
        assert!(is_pnn(&[0.0, 0.0], 0, &[0], &ts).is_err());
    }

    #[test]
    fn validator_flags_empty_leaf_and_unbalanced_split() {
        // 100 points on a line; a split at 0.005 sends one point left.
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let ts = TrainingSet::from_parts(1, xs, (0..100).map(|i| i as f64).collect()).unwrap();
        let draw = SubsampleDraw::full(100).unwrap();
        let part = HonestyPartition { structure: (0..50).collect(), prediction: (50..100).collect() };
        let nodes = vec![
            Node::Split { axis: 0, threshold: 0.005, left: 1, right: 2, randomized: false },
            Node::Leaf { prediction_index: None, value: 0.0 },
            Node::Leaf { prediction_index: Some(50), value: 50.0 },
        ];
        let cfg = TreeConfig::honest();
        let tree = TreeModel::from_parts(1, nodes, draw, Some(part), cfg).unwrap();
        let report = validate_regularity(&tree, &ts).unwrap();
        assert!(!report.passed);
        let bad: Vec<_> = report.failing_splits().collect();
        assert_eq!(bad.len(), 1);
        assert!((bad[0].left_fraction - 0.01).abs() < 1e-12);
        let bad_leaves: Vec<_> = report.failing_leaves().map(|l| (l.node, l.prediction_points)).collect();
        assert_eq!(bad_leaves, vec![(1, 0), (2, 50)]);
    }

    #[test]
    fn predict_is_constant_on_cells() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2);
        let ts = gen_synthetic(&spec, 200, 21).unwrap();
        let draw = draw_subsample(200, 100, &mut stream(1, &[])).unwrap();
        let tree = fit_greedy_cart(&ts, &draw, &TreeConfig::greedy_cart(), &mut stream(2, &[])).unwrap();
        let mut q = stream(3, &[]);
        for _ in 0..500 {
            let x = [q.random::<f64>(), q.random::<f64>()];
            let y = [x[0] + 1e-12, x[1]];
            if tree.leaf_of(&x) == tree.leaf_of(&y) {
                assert_eq!(tree.predict(&x).unwrap(), tree.predict(&y).unwrap());
            }
        }
    }

    #[test]
    fn zero_delta_is_plain_greedy() {
        let plain = TreeConfig { delta: 0.0, ..TreeConfig::greedy_cart() };
        assert!(plain.validate().is_ok());
        assert!(TreeConfig { delta: 0.0, ..TreeConfig::honest() }.validate().is_err());
        let ts = gen_synthetic(&SyntheticSpec::new(SyntheticKind::Cosine, 2), 200, 4).unwrap();
        let draw = draw_subsample(200, 100, &mut stream(1, &[])).unwrap();
        let tree = fit_greedy_cart(&ts, &draw, &plain, &mut stream(2, &[])).unwrap();
        assert!(tree.splits().next().is_some());
        assert!(tree.splits().all(|(_, randomized)| !randomized));
    }
}
