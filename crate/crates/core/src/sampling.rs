//! Subsampling without replacement, inclusion counts, and the
//! structure/prediction split used by honest trees.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `s` distinct row indices out of `0..n`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    n: usize,
    indices: Vec<usize>,
}

impl SubsampleDraw {
    /// Validates and wraps an explicit index set.
    pub fn from_indices(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("a subsample needs at least one index".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("subsample indices must be distinct".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidArgument(format!("index {last} out of range for n = {n}")));
            }
        }
        Ok(Self { n, indices })
    }

    /// The draw that contains every row.
    pub fn full(n: usize) -> Result<Self> {
        Self::from_indices(n, (0..n).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Draws a uniformly random `s`-subset of `0..n`.
///
/// This is a partial Fisher–Yates shuffle of the virtual array `0..n`; only
/// displaced slots are materialized, so the cost is `O(s)`.
pub fn draw_subsample<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<SubsampleDraw> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("subsample size must satisfy 1 <= s <= n, got s = {s}, n = {n}")));
    }
    let mut moved: HashMap<usize, usize> = HashMap::with_capacity(2 * s);
    let mut picked = Vec::with_capacity(s);
    for i in 0..s {
        let j = rng.random_range(i as u64..n as u64) as usize;
        let at_j = moved.get(&j).copied().unwrap_or(j);
        let at_i = moved.get(&i).copied().unwrap_or(i);
        moved.insert(j, at_i);
        picked.push(at_j);
    }
    picked.sort_unstable();
    Ok(SubsampleDraw { n, indices: picked })
}

/// Inclusion counts `N*_i` of one replicate. Without replacement every count
/// is 0 or 1, so only the members are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleRecord {
    n: usize,
    members: Vec<usize>,
}

impl ResampleRecord {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `Σ_i N*_i`.
    pub fn total(&self) -> usize {
        self.members.len()
    }

    /// Indices with `N*_i = 1`, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn count(&self, i: usize) -> u32 {
        u32::from(self.members.binary_search(&i).is_ok())
    }

    /// The dense length-`n` count vector.
    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0; self.n];
        for &i in &self.members {
            c[i] = 1;
        }
        c
    }
}

pub fn counts_vector(draw: &SubsampleDraw) -> ResampleRecord {
    ResampleRecord { n: draw.n, members: draw.indices.clone() }
}

/// Disjoint split of a subsample into structure points (used to choose
/// splits) and prediction points (used for leaf values).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestyPartition {
    pub structure: Vec<usize>,
    pub prediction: Vec<usize>,
}

impl HonestyPartition {
    /// Checks that the partition covers `draw` exactly and that prediction
    /// points are at least half of it.
    pub fn validate(&self, draw: &SubsampleDraw) -> Result<()> {
        if self.prediction.is_empty() {
            return Err(Error::InvalidArgument("prediction set is empty".into()));
        }
        let mut all: Vec<usize> = self.structure.iter().chain(&self.prediction).copied().collect();
        all.sort_unstable();
        if all != draw.indices {
            return Err(Error::InvalidArgument("structure and prediction sets must partition the subsample".into()));
        }
        if 2 * self.prediction.len() < draw.s() {
            return Err(Error::InvalidArgument(format!(
                "prediction set of size {} is smaller than half of s = {}",
                self.prediction.len(),
                draw.s()
            )));
        }
        Ok(())
    }
}

/// Uniformly random split with `|prediction| = ceil(s/2)`.
pub fn honesty_partition<R: Rng + ?Sized>(draw: &SubsampleDraw, rng: &mut R) -> Result<HonestyPartition> {
    let s = draw.s();
    if s < 2 {
        return Err(Error::InvalidArgument(format!("cannot partition a subsample of size {s}")));
    }
    let mut shuffled = draw.indices.clone();
    // Fisher–Yates with 64-bit index draws, identical on 32- and 64-bit targets.
    for i in (1..s).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        shuffled.swap(i, j);
    }
    let n_pred = s.div_ceil(2);
    let mut prediction = shuffled[..n_pred].to_vec();
    let mut structure = shuffled[n_pred..].to_vec();
    prediction.sort_unstable();
    structure.sort_unstable();
    Ok(HonestyPartition { structure, prediction })
}

/// `max(2, floor(n^exponent))`, capped at `n`.
pub fn default_subsample_size(n: usize, exponent: f64) -> usize {
    let s = (n as f64).powf(exponent).floor() as usize;
    s.max(2).min(n.max(2))
}
