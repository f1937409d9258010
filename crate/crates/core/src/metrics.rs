//! Per-cell empirical MDP statistics and the state distances used for
//! clustering: Euclidean, multi-step, and spatio-temporal value metric.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::ActionAbstraction;
use crate::error::{Error, Result};
use crate::ingest::TrajectoryDataset;
use crate::interval::CellSpace;
use crate::model::MetricWeights;

/// Successor id standing for "episode ended".
pub const END: u32 = u32::MAX;

/// Finite distribution stored as `(outcome, probability)` pairs sorted by outcome.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseDist(pub Vec<(u32, f64)>);

impl SparseDist {
    /// Normalizes outcome counts into probabilities.
    pub fn from_counts(counts: &BTreeMap<u32, u64>) -> Self {
        let total: u64 = counts.values().sum();
        SparseDist(
            counts
                .iter()
                .map(|(&k, &c)| (k, c as f64 / total as f64))
                .collect(),
        )
    }

    /// Builds from arbitrary pairs; duplicate outcomes are summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut m: BTreeMap<u32, f64> = BTreeMap::new();
        for (k, p) in pairs {
            *m.entry(k).or_default() += p;
        }
        SparseDist(m.into_iter().collect())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|&(_, p)| p).sum()
    }

    pub fn get(&self, k: u32) -> f64 {
        self.0
            .binary_search_by_key(&k, |&(o, _)| o)
            .map_or(0.0, |i| self.0[i].1)
    }

    /// Equal-weight mixture of the given distributions.
    pub fn mixture(parts: &[&SparseDist]) -> Self {
        let w = 1.0 / parts.len() as f64;
        Self::from_pairs(parts.iter().flat_map(|d| d.0.iter().map(move |&(k, p)| (k, p * w))))
    }
}

/// Total-variation distance `½ Σ |p(x) − q(x)|` over the union of supports.
pub fn d_tv(p: &SparseDist, q: &SparseDist) -> Result<f64> {
    for d in [p, q] {
        let s = d.total();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Unnormalized(s));
        }
    }
    Ok(tv(p, q))
}

fn tv(p: &SparseDist, q: &SparseDist) -> f64 {
    let (a, b) = (&p.0, &q.0);
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                acc += a[i].1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                acc += b[j].1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                acc += (a[i].1 - b[j].1).abs();
                i += 1;
                j += 1;
            }
        }
    }
    acc += a[i..].iter().map(|x| x.1).sum::<f64>();
    acc += b[j..].iter().map(|x| x.1).sum::<f64>();
    (0.5 * acc).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    /// Flat abstract action id.
    pub action: u32,
    pub count: u64,
    pub reward: f64,
    /// Successor cells (or [`END`]).
    pub next: SparseDist,
}

/// Aggregated statistics of one interval cell, or a virtual cluster centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Index tuple of the source cell; empty for virtual centroids.
    pub index: Vec<u32>,
    /// Available actions, sorted by id; an action is available iff it was observed.
    pub actions: Vec<ActionStats>,
    /// Mean normalized semantic vector.
    pub theta: Vec<f64>,
    /// Mean step index of the members.
    pub t_mean: f64,
    pub v_hat_mean: f64,
    pub occupancy: usize,
}

impl CellStats {
    pub fn availability(&self) -> impl Iterator<Item = u32> + '_ {
        self.actions.iter().map(|a| a.action)
    }

    pub fn action(&self, id: u32) -> Option<&ActionStats> {
        self.actions
            .binary_search_by_key(&id, |a| a.action)
            .ok()
            .map(|i| &self.actions[i])
    }

    /// Virtual centroid: component-wise means, equal-weight mixtures of
    /// transition distributions, and availability by majority (ties included).
    pub fn centroid(members: &[&CellStats]) -> CellStats {
        assert!(!members.is_empty(), "centroid of an empty cluster");
        let m = members.len();
        let j = members[0].theta.len();
        let mut theta = vec![0.0; j];
        for c in members {
            for (a, b) in theta.iter_mut().zip(&c.theta) {
                *a += b;
            }
        }
        theta.iter_mut().for_each(|x| *x /= m as f64);
        let mut by_action: BTreeMap<u32, Vec<&ActionStats>> = BTreeMap::new();
        for c in members {
            for a in &c.actions {
                by_action.entry(a.action).or_default().push(a);
            }
        }
        let actions = by_action
            .into_iter()
            .filter(|(_, v)| 2 * v.len() >= m)
            .map(|(action, v)| {
                let dists: Vec<&SparseDist> = v.iter().map(|a| &a.next).collect();
                ActionStats {
                    action,
                    count: v.iter().map(|a| a.count).sum(),
                    reward: v.iter().map(|a| a.reward).sum::<f64>() / v.len() as f64,
                    next: SparseDist::mixture(&dists),
                }
            })
            .collect();
        CellStats {
            index: Vec::new(),
            actions,
            theta,
            t_mean: members.iter().map(|c| c.t_mean).sum::<f64>() / m as f64,
            v_hat_mean: members.iter().map(|c| c.v_hat_mean).sum::<f64>() / m as f64,
            occupancy: members.iter().map(|c| c.occupancy).sum(),
        }
    }
}

/// Exact frequency statistics of every cell: visit counts, mean rewards and
/// successor distributions per abstract action, plus mean θ, step and return.
///
/// `theta` holds the normalized semantic vector of every state of `ds`, in the
/// order used to build `cs`.
pub fn cell_statistics(
    cs: &CellSpace,
    theta: &[Vec<f64>],
    ds: &TrajectoryDataset,
    abs: &ActionAbstraction,
) -> Result<Vec<CellStats>> {
    if cs.assignment.len() != ds.len() || theta.len() != ds.len() {
        return Err(Error::invalid("cell assignment does not match the dataset"));
    }
    let v_hat = ds.returns()?;
    struct Acc {
        count: u64,
        reward: f64,
        next: BTreeMap<u32, u64>,
    }
    let mut per_cell: Vec<BTreeMap<u32, Acc>> = (0..cs.len()).map(|_| BTreeMap::new()).collect();
    for (i, s) in ds.states.iter().enumerate() {
        let cell = cs.assignment[i];
        let a = abs.action_id(&s.action)?;
        let next = match ds.successor(i) {
            Some(n) => cs.assignment[n] as u32,
            None => END,
        };
        let acc = per_cell[cell].entry(a).or_insert_with(|| Acc {
            count: 0,
            reward: 0.0,
            next: BTreeMap::new(),
        });
        acc.count += 1;
        acc.reward += s.reward;
        *acc.next.entry(next).or_default() += 1;
    }
    let j = cs.arity();
    Ok(cs
        .cells
        .iter()
        .zip(per_cell)
        .map(|(cell, accs)| {
            let k = cell.members.len() as f64;
            let mut th = vec![0.0; j];
            let mut t_sum = 0.0;
            let mut v_sum = 0.0;
            for &s in &cell.members {
                for (a, b) in th.iter_mut().zip(&theta[s]) {
                    *a += b;
                }
                t_sum += ds.states[s].t as f64;
                v_sum += v_hat[s];
            }
            th.iter_mut().for_each(|x| *x /= k);
            CellStats {
                index: cell.index.clone(),
                actions: accs
                    .into_iter()
                    .map(|(action, a)| ActionStats {
                        action,
                        count: a.count,
                        reward: a.reward / a.count as f64,
                        next: SparseDist::from_counts(&a.next),
                    })
                    .collect(),
                theta: th,
                t_mean: t_sum / k,
                v_hat_mean: v_sum / k,
                occupancy: cell.members.len(),
            }
        })
        .collect())
}

/// Straight-line distance between two semantic vectors.
pub fn d_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(euclid(a, b))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt()
}

/// `max_{â shared} {c_R |ΔR̂| + c_P d_TV(P̂1, P̂2)} + c_D 𝔻[Â1 ≠ Â2]`.
pub fn d_multistep(c1: &CellStats, c2: &CellStats, w: &MetricWeights) -> f64 {
    let (a, b) = (&c1.actions, &c2.actions);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    let mut same = a.len() == b.len();
    while i < a.len() && j < b.len() {
        match a[i].action.cmp(&b[j].action) {
            std::cmp::Ordering::Less => {
                same = false;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                same = false;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let term = w.c_r * (a[i].reward - b[j].reward).abs() + w.c_p * tv(&a[i].next, &b[j].next);
                best = best.max(term);
                i += 1;
                j += 1;
            }
        }
    }
    if i < a.len() || j < b.len() {
        same = false;
    }
    best + if same { 0.0 } else { w.c_d }
}

/// Temporal indicator: 1 when the mean step indices differ by more than the window.
pub fn temporal_indicator(c1: &CellStats, c2: &CellStats, w: &MetricWeights) -> f64 {
    if (c1.t_mean - c2.t_mean).abs() <= w.temporal_window as f64 {
        0.0
    } else {
        1.0
    }
}

/// Multi-step distance plus `c_T` times the temporal indicator.
pub fn d_spatiotemporal(c1: &CellStats, c2: &CellStats, w: &MetricWeights) -> f64 {
    let base = d_multistep(c1, c2, w);
    if w.c_t == 0.0 {
        base
    } else {
        base + w.c_t * temporal_indicator(c1, c2, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Multistep,
    #[default]
    Spatiotemporal,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Euclidean, MetricKind::Multistep, MetricKind::Spatiotemporal];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Multistep => "multistep",
            MetricKind::Spatiotemporal => "spatiotemporal",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

/// A metric choice bound to its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub kind: MetricKind,
    pub weights: MetricWeights,
}

impl Metric {
    pub fn new(kind: MetricKind, weights: MetricWeights) -> Self {
        Self { kind, weights }
    }

    pub fn distance(&self, a: &CellStats, b: &CellStats) -> f64 {
        match self.kind {
            MetricKind::Euclidean => euclid(&a.theta, &b.theta),
            MetricKind::Multistep => d_multistep(a, b, &self.weights),
            MetricKind::Spatiotemporal => d_spatiotemporal(a, b, &self.weights),
        }
    }
}
