//! Interval-box abstraction of continuous actions.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRange {
    pub lower: f64,
    pub upper: f64,
    pub granularity: f64,
}

/// Uniform partition of each action dimension into `K_i = ceil((u_i - l_i) / g_i)`
/// intervals; the last one may be shorter than `g_i`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(into = "Vec<ActionRange>", try_from = "Vec<ActionRange>")]
pub struct ActionAbstraction {
    ranges: Vec<ActionRange>,
    counts: Vec<usize>,
    /// Diagnostic count of out-of-range components seen by `abstract_action`.
    clamped: AtomicU64,
}

impl From<ActionAbstraction> for Vec<ActionRange> {
    fn from(a: ActionAbstraction) -> Self {
        a.ranges
    }
}

impl TryFrom<Vec<ActionRange>> for ActionAbstraction {
    type Error = Error;

    fn try_from(ranges: Vec<ActionRange>) -> Result<Self> {
        Self::new(ranges)
    }
}

impl Clone for ActionAbstraction {
    fn clone(&self) -> Self {
        Self {
            ranges: self.ranges.clone(),
            counts: self.counts.clone(),
            clamped: AtomicU64::new(self.clamp_count()),
        }
    }
}

impl PartialEq for ActionAbstraction {
    fn eq(&self, other: &Self) -> bool {
        self.ranges == other.ranges
    }
}

/// Tuple of per-dimension interval indices.
pub type ActionIndex = Vec<usize>;

impl ActionAbstraction {
    pub fn new(ranges: Vec<ActionRange>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::invalid("action abstraction needs at least one dimension"));
        }
        let mut counts = Vec::with_capacity(ranges.len());
        for (i, r) in ranges.iter().enumerate() {
            if !(r.lower.is_finite() && r.upper.is_finite() && r.lower < r.upper) {
                return Err(Error::invalid(format!("action dim {i}: lower < upper required")));
            }
            if !(r.granularity > 0.0 && r.granularity.is_finite()) {
                return Err(Error::invalid(format!("action dim {i}: granularity must be > 0")));
            }
            let k = ((r.upper - r.lower) / r.granularity).ceil() as usize;
            counts.push(k.max(1));
        }
        Ok(Self {
            ranges,
            counts,
            clamped: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[ActionRange] {
        &self.ranges
    }

    /// `K_i` per dimension.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Total number of abstract actions `Π K_i`.
    pub fn num_actions(&self) -> usize {
        self.counts.iter().product()
    }

    /// How many components were clamped by [`abstract_action`](Self::abstract_action) so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// `k_i = floor((a_i - l_i) / g_i)` clamped into `[0, K_i - 1]`.
    pub fn abstract_action(&self, a: &[f64]) -> Result<ActionIndex> {
        self.check_dim(a.len())?;
        Ok(a.iter()
            .zip(&self.ranges)
            .zip(&self.counts)
            .map(|((&x, r), &k)| {
                let raw = ((x - r.lower) / r.granularity).floor();
                if raw < 0.0 || raw > (k - 1) as f64 || raw.is_nan() {
                    if x < r.lower || x > r.upper || raw.is_nan() {
                        self.clamped.fetch_add(1, Ordering::Relaxed);
                    }
                    if raw.is_nan() || raw < 0.0 {
                        0
                    } else {
                        k - 1
                    }
                } else {
                    raw as usize
                }
            })
            .collect())
    }

    /// Interval midpoints `l_i + (k_i + 0.5) g_i`, capped at `u_i`.
    pub fn representative_action(&self, idx: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(idx.len())?;
        idx.iter()
            .zip(&self.ranges)
            .zip(&self.counts)
            .enumerate()
            .map(|(dim, ((&k, r), &size))| {
                if k >= size {
                    return Err(Error::IndexOutOfRange { dim, index: k, size });
                }
                Ok((r.lower + (k as f64 + 0.5) * r.granularity).min(r.upper))
            })
            .collect()
    }

    /// Row-major flat id of an index tuple.
    pub fn flatten(&self, idx: &[usize]) -> Result<u32> {
        self.check_dim(idx.len())?;
        let mut id = 0usize;
        for (dim, (&k, &size)) in idx.iter().zip(&self.counts).enumerate() {
            if k >= size {
                return Err(Error::IndexOutOfRange { dim, index: k, size });
            }
            id = id * size + k;
        }
        Ok(id as u32)
    }

    pub fn unflatten(&self, id: u32) -> Result<ActionIndex> {
        let mut rest = id as usize;
        if rest >= self.num_actions() {
            return Err(Error::IndexOutOfRange {
                dim: 0,
                index: rest,
                size: self.num_actions(),
            });
        }
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = rest % self.counts[d];
            rest /= self.counts[d];
        }
        Ok(idx)
    }

    /// Flat id of the box containing `a`.
    pub fn action_id(&self, a: &[f64]) -> Result<u32> {
        let idx = self.abstract_action(a)?;
        self.flatten(&idx)
    }

    /// Clamps each component into its range.
    pub fn clamp(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(a.len())?;
        Ok(a.iter().zip(&self.ranges).map(|(&x, r)| x.clamp(r.lower, r.upper)).collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}
