//! Abstract MDP assembled from an abstraction of concrete states.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::ActionAbstraction;
use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::ingest::TrajectoryDataset;
use crate::interval::CellSpace;
use crate::metrics::SparseDist;

/// `sqrt(ln(2/δ) / (2n))`: half-width of a two-sided Hoeffding interval on an
/// empirical frequency from `n` samples.
pub fn hoeffding_bound(n: u64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("Hoeffding bound needs at least one sample"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("δ must be in (0,1)"));
    }
    Ok(((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// One retained (state, action) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub action: u32,
    /// Support count n(ŝ, â).
    pub count: u64,
    pub reward: f64,
    /// Successor abstract states.
    pub next: SparseDist,
    /// Hoeffding half-width for this support count (0 for synthetic rows).
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    pub id: usize,
    pub choices: Vec<Choice>,
    /// No observed action survived pruning; kept as a zero-reward self loop.
    pub degenerate: bool,
    /// The absorbing state standing for "episode ended".
    pub sink: bool,
    /// Concrete states mapped here.
    pub occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedPair {
    pub state: usize,
    pub action: u32,
    pub count: u64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractMdp {
    pub states: Vec<MdpState>,
    /// Number of abstract actions `Π K_i`.
    pub num_actions: usize,
    pub gamma: f64,
    pub delta: f64,
    pub p_tol: Option<f64>,
    /// Empirical distribution of episode start states.
    pub initial: SparseDist,
    pub label_names: Vec<String>,
    /// `labels[s][l]`: state `s` carries label `label_names[l]`.
    pub labels: Vec<Vec<bool>>,
    pub pruned: Vec<PrunedPair>,
}

impl AbstractMdp {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.label_names
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn has_label(&self, s: usize, label: usize) -> bool {
        self.labels.get(s).and_then(|l| l.get(label)).copied().unwrap_or(false)
    }

    pub fn sink(&self) -> Option<usize> {
        self.states.iter().position(|s| s.sink)
    }

    pub fn degenerate_states(&self) -> Vec<usize> {
        self.states.iter().filter(|s| s.degenerate).map(|s| s.id).collect()
    }

    /// Checks row-stochasticity, finiteness and the initial distribution.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let close = |x: f64| (x - 1.0).abs() <= 1e-9;
        for s in &self.states {
            if s.choices.is_empty() {
                return Err(Error::invalid(format!("state {} has no action", s.id)));
            }
            for c in &s.choices {
                if !close(c.next.total()) {
                    return Err(Error::invalid(format!(
                        "row ({}, a{}) sums to {}",
                        s.id,
                        c.action,
                        c.next.total()
                    )));
                }
                if !c.reward.is_finite() {
                    return Err(Error::invalid(format!("row ({}, a{}) has a non-finite reward", s.id, c.action)));
                }
                if c.next.0.iter().any(|&(t, p)| t as usize >= n || p < 0.0) {
                    return Err(Error::invalid(format!("row ({}, a{}) leaves the state space", s.id, c.action)));
                }
            }
        }
        if !close(self.initial.total()) {
            return Err(Error::invalid("initial distribution does not sum to 1"));
        }
        Ok(())
    }
}

/// Concrete state index → abstract state id, through cells and clusters.
pub fn state_assignment(cs: &CellSpace, clustering: &Clustering) -> Vec<usize> {
    cs.assignment.iter().map(|&c| clustering.assignment[c]).collect()
}

/// Pools all member transitions of every abstract state (frequency weights),
/// drops (ŝ, â) pairs whose Hoeffding half-width exceeds `p_tol`, and appends
/// an absorbing end-of-episode state. Labels are attached existentially.
///
/// `assignment[i]` is the abstract id of `ds.states[i]`; ids must cover
/// `0..n_abstract`.
pub fn build_abstract_mdp(
    assignment: &[usize],
    n_abstract: usize,
    ds: &TrajectoryDataset,
    abs: &ActionAbstraction,
    gamma: f64,
    delta: f64,
    p_tol: Option<f64>,
) -> Result<AbstractMdp> {
    if assignment.len() != ds.len() {
        return Err(Error::invalid("state assignment does not match the dataset"));
    }
    if let Some(&bad) = assignment.iter().find(|&&a| a >= n_abstract) {
        return Err(Error::invalid(format!("abstract id {bad} out of range {n_abstract}")));
    }
    let sink = n_abstract;
    struct Acc {
        count: u64,
        reward: f64,
        next: BTreeMap<u32, u64>,
    }
    let mut acc: Vec<BTreeMap<u32, Acc>> = (0..n_abstract).map(|_| BTreeMap::new()).collect();
    let mut occupancy = vec![0usize; n_abstract];
    for (i, s) in ds.states.iter().enumerate() {
        let from = assignment[i];
        occupancy[from] += 1;
        let a = abs.action_id(&s.action)?;
        let to = ds.successor(i).map_or(sink, |j| assignment[j]) as u32;
        let e = acc[from].entry(a).or_insert_with(|| Acc {
            count: 0,
            reward: 0.0,
            next: BTreeMap::new(),
        });
        e.count += 1;
        e.reward += s.reward;
        *e.next.entry(to).or_default() += 1;
    }
    let mut states = Vec::with_capacity(n_abstract + 1);
    let mut pruned = Vec::new();
    for (id, pairs) in acc.into_iter().enumerate() {
        let mut choices = Vec::new();
        for (action, a) in pairs {
            let bound = hoeffding_bound(a.count, delta)?;
            if p_tol.is_some_and(|tol| bound > tol) {
                pruned.push(PrunedPair {
                    state: id,
                    action,
                    count: a.count,
                    bound,
                });
                continue;
            }
            choices.push(Choice {
                action,
                count: a.count,
                reward: a.reward / a.count as f64,
                next: SparseDist::from_counts(&a.next),
                bound,
            });
        }
        let degenerate = choices.is_empty();
        if degenerate {
            choices.push(self_loop(id));
        }
        states.push(MdpState {
            id,
            choices,
            degenerate,
            sink: false,
            occupancy: occupancy[id],
        });
    }
    states.push(MdpState {
        id: sink,
        choices: vec![self_loop(sink)],
        degenerate: false,
        sink: true,
        occupancy: 0,
    });
    let mut starts: BTreeMap<u32, u64> = BTreeMap::new();
    for ep in &ds.episodes {
        *starts.entry(assignment[ep.start] as u32).or_default() += 1;
    }
    let mdp = AbstractMdp {
        states,
        num_actions: abs.num_actions(),
        gamma,
        delta,
        p_tol,
        initial: SparseDist::from_counts(&starts),
        label_names: Vec::new(),
        labels: Vec::new(),
        pruned,
    };
    attach_labels(mdp, ds, assignment)
}

fn self_loop(id: usize) -> Choice {
    Choice {
        action: 0,
        count: 0,
        reward: 0.0,
        next: SparseDist(vec![(id as u32, 1.0)]),
        bound: 0.0,
    }
}

/// An abstract state carries a label iff some member concrete state does.
pub fn attach_labels(mut mdp: AbstractMdp, ds: &TrajectoryDataset, assignment: &[usize]) -> Result<AbstractMdp> {
    if assignment.len() != ds.len() {
        return Err(Error::invalid("state assignment does not match the dataset"));
    }
    let names = ds.schema.labels.clone();
    let mut labels = vec![vec![false; names.len()]; mdp.states.len()];
    for (s, &a) in ds.states.iter().zip(assignment) {
        if a >= labels.len() {
            return Err(Error::invalid(format!("abstract id {a} out of range")));
        }
        for (slot, &on) in labels[a].iter_mut().zip(&s.labels) {
            *slot |= on;
        }
    }
    mdp.label_names = names;
    mdp.labels = labels;
    Ok(mdp)
}
