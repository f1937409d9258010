//! Metric k-means over interval cells, k selection, and the (ε, d) check.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ActionStats, CellStats, Metric, MetricKind};
use crate::model::KMethod;

pub const DEFAULT_MAX_ITERS: usize = 100;
/// Reference samples drawn by the gap statistic.
pub const GAP_REFERENCES: usize = 10;

/// One cluster of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractState {
    pub id: usize,
    /// Positions of the member cells in the input slice, ascending.
    pub members: Vec<usize>,
    pub centroid: CellStats,
    /// Concrete states covered by the member cells.
    pub occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub states: Vec<AbstractState>,
    /// Cell position → abstract state id.
    pub assignment: Vec<usize>,
    /// Σ d(cell, centroid) after every assignment step.
    pub objective_log: Vec<f64>,
    pub converged: bool,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.states.len()
    }

    /// Final Σ d(cell, centroid).
    pub fn objective(&self, cells: &[CellStats], metric: &Metric) -> f64 {
        cells
            .iter()
            .zip(&self.assignment)
            .map(|(c, &a)| metric.distance(c, &self.states[a].centroid))
            .sum()
    }
}

/// Whether bound-based pruning of the assignment step is sound, which needs the
/// triangle inequality to hold on cells and centroids alike.
fn triangle_safe(cells: &[CellStats], metric: &Metric) -> bool {
    let w = &metric.weights;
    match metric.kind {
        MetricKind::Euclidean => true,
        MetricKind::Spatiotemporal if w.c_t != 0.0 => false,
        _ => {
            let (lo, hi) = cells
                .iter()
                .flat_map(|c| c.actions.iter().map(|a| a.reward))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
            let spread = if lo.is_finite() { hi - lo } else { 0.0 };
            w.c_d >= w.c_r * spread + w.c_p
        }
    }
}

/// Input positions sorted by cell index tuple, so that the result does not
/// depend on the order cells are passed in.
fn canonical_order(cells: &[CellStats]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].index.cmp(&cells[b].index));
    order
}

fn kmeans_pp(cells: &[&CellStats], k: usize, metric: &Metric, rng: &mut ChaCha8Rng) -> Vec<CellStats> {
    let n = cells.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centers = vec![cells[first].clone()];
    let mut dmin: Vec<f64> = cells.iter().map(|c| metric.distance(c, cells[first])).collect();
    while centers.len() < k {
        let total: f64 = dmin.iter().map(|d| d * d).sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, d) in dmin.iter().enumerate() {
                let w = d * d;
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k ≤ n")
        };
        chosen[pick] = true;
        centers.push(cells[pick].clone());
        for (i, c) in cells.iter().enumerate() {
            let d = metric.distance(c, cells[pick]);
            if d < dmin[i] {
                dmin[i] = d;
            }
        }
    }
    centers
}

/// Nearest, second-nearest distance and nearest id (ties → lowest id).
fn scan(cell: &CellStats, centers: &[CellStats], metric: &Metric) -> (usize, f64, f64) {
    let mut best = (0, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = metric.distance(cell, c);
        if d < best.1 {
            second = best.1;
            best = (j, d);
        } else if d < second {
            second = d;
        }
    }
    (best.0, best.1, second)
}

fn slack_less(u: f64, l: f64) -> bool {
    u * (1.0 + 1e-12) + 1e-12 < l
}

/// k-means-style alternation under `metric`. A recomputed centroid replaces
/// the old one only when it does not increase its cluster's total distance.
pub fn cluster_cells(cells: &[CellStats], k: usize, metric: &Metric, seed: u64, max_iters: usize) -> Result<Clustering> {
    let n = cells.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the number of cells {n}")));
    }
    let order = canonical_order(cells);
    let xs: Vec<&CellStats> = order.iter().map(|&i| &cells[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(&xs, k, metric, &mut rng);
    let bounded = triangle_safe(cells, metric);

    let mut assign = vec![0usize; n];
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    for (i, x) in xs.iter().enumerate() {
        let (a, u, l) = scan(x, &centers, metric);
        assign[i] = a;
        upper[i] = u;
        lower[i] = l;
    }
    let mut log = Vec::new();
    let mut converged = false;
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..max_iters.max(1) {
        if reseed_empty(&xs, &mut centers, &mut assign, metric) {
            // a center jumped; lower bounds no longer hold
            lower.iter_mut().for_each(|l| *l = f64::NEG_INFINITY);
        }
        let exact: Vec<f64> = xs.iter().zip(&assign).map(|(x, &a)| metric.distance(x, &centers[a])).collect();
        log.push(exact.iter().sum());
        if prev.as_ref() == Some(&assign) {
            converged = true;
            break;
        }
        prev = Some(assign.clone());

        // centroid update
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &a) in assign.iter().enumerate() {
            members[a].push(i);
        }
        let mut moved = vec![0.0; k];
        for (j, m) in members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let refs: Vec<&CellStats> = m.iter().map(|&i| xs[i]).collect();
            let cand = CellStats::centroid(&refs);
            let old_cost: f64 = m.iter().map(|&i| exact[i]).sum();
            let new_cost: f64 = m.iter().map(|&i| metric.distance(xs[i], &cand)).sum();
            if new_cost <= old_cost && cand != centers[j] {
                moved[j] = metric.distance(&centers[j], &cand);
                centers[j] = cand;
            }
        }

        // assignment
        let (top, top_id, runner) = top_two(&moved);
        for i in 0..n {
            let a = assign[i];
            if bounded {
                upper[i] = exact[i] + moved[a];
                lower[i] -= if a == top_id { runner } else { top };
                if slack_less(upper[i], lower[i]) {
                    continue;
                }
                upper[i] = metric.distance(xs[i], &centers[a]);
                if slack_less(upper[i], lower[i]) {
                    continue;
                }
            }
            let (b, u, l) = scan(xs[i], &centers, metric);
            assign[i] = b;
            upper[i] = u;
            lower[i] = l;
        }
    }
    if !converged {
        reseed_empty(&xs, &mut centers, &mut assign, metric);
    }
    Ok(finish(cells, &order, centers, assign, log, converged))
}

fn top_two(v: &[f64]) -> (f64, usize, f64) {
    let mut top = (0.0, usize::MAX);
    let mut runner = 0.0;
    for (j, &x) in v.iter().enumerate() {
        if x > top.0 {
            runner = top.0;
            top = (x, j);
        } else if x > runner {
            runner = x;
        }
    }
    (top.0, top.1, runner)
}

/// Moves the cell farthest from its centroid into each empty cluster.
/// Returns whether anything moved.
fn reseed_empty(xs: &[&CellStats], centers: &mut [CellStats], assign: &mut [usize], metric: &Metric) -> bool {
    let k = centers.len();
    let mut any = false;
    loop {
        let mut size = vec![0usize; k];
        for &a in assign.iter() {
            size[a] += 1;
        }
        let Some(empty) = size.iter().position(|&s| s == 0) else {
            return any;
        };
        any = true;
        let far = (0..xs.len())
            .filter(|&i| size[assign[i]] >= 2)
            .map(|i| (i, metric.distance(xs[i], &centers[assign[i]])))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .expect("some cluster has two members while another is empty")
            .0;
        centers[empty] = xs[far].clone();
        assign[far] = empty;
    }
}

fn finish(
    cells: &[CellStats],
    order: &[usize],
    centers: Vec<CellStats>,
    assign: Vec<usize>,
    log: Vec<f64>,
    converged: bool,
) -> Clustering {
    // relabel clusters by first appearance in canonical order
    let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
    for &a in &assign {
        let next = relabel.len();
        relabel.entry(a).or_insert(next);
    }
    let k = relabel.len();
    let mut states: Vec<Option<AbstractState>> = vec![None; k];
    for (&old, &new) in &relabel {
        states[new] = Some(AbstractState {
            id: new,
            members: Vec::new(),
            centroid: centers[old].clone(),
            occupancy: 0,
        });
    }
    let mut states: Vec<AbstractState> = states.into_iter().map(|s| s.expect("every label used")).collect();
    let mut assignment = vec![0; cells.len()];
    for (pos, &a) in assign.iter().enumerate() {
        let id = relabel[&a];
        let orig = order[pos];
        assignment[orig] = id;
        states[id].members.push(orig);
        states[id].occupancy += cells[orig].occupancy;
    }
    for s in &mut states {
        s.members.sort_unstable();
    }
    Clustering {
        states,
        assignment,
        objective_log: log,
        converged,
    }
}

/// Default candidate k values: `steps` evenly spaced values in
/// `[lo·n, hi·n]`, restricted to `[2, n − 1]`.
pub fn default_k_range(n: usize, fraction: [f64; 2], steps: usize) -> Vec<usize> {
    if n < 3 {
        return if n == 2 { vec![2] } else { Vec::new() };
    }
    let lo = ((fraction[0] * n as f64).ceil() as usize).clamp(2, n - 1);
    let hi = ((fraction[1] * n as f64).floor() as usize).clamp(lo, n - 1);
    let steps = steps.max(1);
    let mut ks: Vec<usize> = (0..steps)
        .map(|i| {
            if steps == 1 {
                lo
            } else {
                lo + ((hi - lo) as f64 * i as f64 / (steps - 1) as f64).round() as usize
            }
        })
        .collect();
    ks.dedup();
    ks
}

/// Condensed symmetric matrix of pairwise cell distances.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    n: usize,
    data: Vec<f64>,
}

impl PairwiseDistances {
    pub fn compute(cells: &[CellStats], metric: &Metric) -> Self {
        let n = cells.len();
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                data.push(metric.distance(&cells[i], &cells[j]));
            }
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.data[a * (2 * self.n - a - 1) / 2 + (b - a - 1)]
    }

    pub fn median(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut v = self.data.clone();
        let mid = v.len() / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }
}

/// Mean silhouette of an assignment; singleton clusters score 0.
pub fn mean_silhouette(pd: &PairwiseDistances, assignment: &[usize], k: usize) -> f64 {
    let n = assignment.len();
    let mut size = vec![0usize; k];
    for &a in assignment {
        size[a] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignment[j]] += pd.get(i, j);
            }
        }
        let own = assignment[i];
        if size[own] <= 1 {
            continue;
        }
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

/// Outcome of [`select_k`] with the per-candidate scores it was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub method: KMethod,
    pub k: usize,
    /// `(k, score)`: W(k) for elbow, mean silhouette, Gap(k), or the canopy count.
    pub scores: Vec<(usize, f64)>,
}

/// Clusterings of one cell set under one metric and seed, keyed by k.
pub type ClusterCache = BTreeMap<usize, Clustering>;

/// Picks k from `k_range` with the given method.
pub fn select_k(cells: &[CellStats], method: KMethod, k_range: &[usize], metric: &Metric, seed: u64) -> Result<usize> {
    select_k_cached(cells, method, k_range, metric, seed, DEFAULT_MAX_ITERS, &mut ClusterCache::new()).map(|s| s.k)
}

/// [`select_k`] that reuses and fills `cache`, which must only hold
/// clusterings of the same cells, metric, seed and `max_iters`.
pub fn select_k_cached(
    cells: &[CellStats],
    method: KMethod,
    k_range: &[usize],
    metric: &Metric,
    seed: u64,
    max_iters: usize,
    cache: &mut ClusterCache,
) -> Result<KSelection> {
    let mut ks: Vec<usize> = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::invalid("k range is empty"));
    }
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > cells.len()) {
        return Err(Error::invalid(format!("candidate k = {bad} outside [1, {}]", cells.len())));
    }
    let mut run = |k: usize| -> Result<Clustering> {
        if let Some(c) = cache.get(&k) {
            return Ok(c.clone());
        }
        let c = cluster_cells(cells, k, metric, seed, max_iters)?;
        cache.insert(k, c.clone());
        Ok(c)
    };
    let (k, scores) = match method {
        KMethod::Elbow => {
            let mut w = Vec::new();
            for &k in &ks {
                w.push((k, run(k)?.objective(cells, metric)));
            }
            let k = if w.len() < 3 {
                ks[0]
            } else {
                let mut best = (ks[1], f64::NEG_INFINITY);
                for i in 1..w.len() - 1 {
                    let d2 = w[i - 1].1 - 2.0 * w[i].1 + w[i + 1].1;
                    if d2 > best.1 {
                        best = (w[i].0, d2);
                    }
                }
                best.0
            };
            (k, w)
        }
        KMethod::Silhouette => {
            let pd = PairwiseDistances::compute(cells, metric);
            let mut s = Vec::new();
            for &k in &ks {
                let c = run(k)?;
                s.push((k, mean_silhouette(&pd, &c.assignment, c.k())));
            }
            let k = s
                .iter()
                .fold((ks[0], f64::NEG_INFINITY), |best, &(k, v)| if v > best.1 { (k, v) } else { best })
                .0;
            (k, s)
        }
        KMethod::Gap => {
            let mut gaps = Vec::new();
            let mut sds = Vec::new();
            for &k in &ks {
                let w = run(k)?.objective(cells, metric).max(1e-12).ln();
                let mut refs = Vec::with_capacity(GAP_REFERENCES);
                for b in 0..GAP_REFERENCES {
                    let rseed = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(b as u64 + 1));
                    let sample = reference_sample(cells, rseed);
                    let c = cluster_cells(&sample, k, metric, rseed, max_iters)?;
                    refs.push(c.objective(&sample, metric).max(1e-12).ln());
                }
                let mean = refs.iter().sum::<f64>() / refs.len() as f64;
                let var = refs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / refs.len() as f64;
                gaps.push((k, mean - w));
                sds.push(var.sqrt() * (1.0 + 1.0 / GAP_REFERENCES as f64).sqrt());
            }
            let k = (0..ks.len() - 1)
                .find(|&i| gaps[i].1 >= gaps[i + 1].1 - sds[i + 1])
                .map_or(ks[ks.len() - 1], |i| ks[i]);
            (k, gaps)
        }
        KMethod::Canopy => {
            let pd = PairwiseDistances::compute(cells, metric);
            let count = canopy_count(&pd, seed);
            let k = count.clamp(ks[0], ks[ks.len() - 1]);
            (k, vec![(k, count as f64)])
        }
    };
    Ok(KSelection { method, k, scores })
}

/// Canopy clustering with T2 = median pairwise distance and T1 = 2·T2;
/// returns the number of canopies. T1 only widens membership, so the count
/// depends on T2 alone.
pub fn canopy_count(pd: &PairwiseDistances, seed: u64) -> usize {
    let t2 = pd.median();
    let mut order: Vec<usize> = (0..pd.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut removed = vec![false; pd.n];
    let mut count = 0;
    for &c in &order {
        if removed[c] {
            continue;
        }
        count += 1;
        removed[c] = true;
        for j in 0..pd.n {
            if pd.get(c, j) <= t2 {
                removed[j] = true;
            }
        }
    }
    count
}

/// Reference data for the gap statistic: θ, t̄, v̂ and rewards drawn uniformly
/// over their observed ranges; action sets and transitions copied from a
/// uniformly drawn cell.
pub fn reference_sample(cells: &[CellStats], seed: u64) -> Vec<CellStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = cells.first().map_or(0, |c| c.theta.len());
    let range = |f: &dyn Fn(&CellStats) -> Vec<f64>| -> (f64, f64) {
        cells.iter().flat_map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let theta: Vec<(f64, f64)> = (0..j).map(|d| range(&|c: &CellStats| vec![c.theta[d]])).collect();
    let t = range(&|c: &CellStats| vec![c.t_mean]);
    let v = range(&|c: &CellStats| vec![c.v_hat_mean]);
    let r = range(&|c: &CellStats| c.actions.iter().map(|a| a.reward).collect());
    let draw = |(lo, hi): (f64, f64), rng: &mut ChaCha8Rng| {
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else if lo.is_finite() {
            lo
        } else {
            0.0
        }
    };
    (0..cells.len())
        .map(|i| {
            let src = &cells[rng.gen_range(0..cells.len())];
            CellStats {
                index: vec![i as u32],
                actions: src
                    .actions
                    .iter()
                    .map(|a| ActionStats {
                        reward: draw(r, &mut rng),
                        ..a.clone()
                    })
                    .collect(),
                theta: theta.iter().map(|&b| draw(b, &mut rng)).collect(),
                t_mean: draw(t, &mut rng),
                v_hat_mean: draw(v, &mut rng),
                occupancy: src.occupancy,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    /// Cluster that was bisected (keeps its id).
    pub cluster: usize,
    /// Id of the new second half.
    pub new_cluster: usize,
    pub diameter_before: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    /// Max pairwise member distance per abstract state.
    pub diameters: Vec<f64>,
    pub splits: Vec<SplitRecord>,
    /// Clusters still wider than ε.
    pub violations: Vec<usize>,
}

impl EpsilonReport {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }
}

fn diameter(cells: &[CellStats], members: &[usize], metric: &Metric) -> f64 {
    let mut d = 0.0f64;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            d = d.max(metric.distance(&cells[i], &cells[j]));
        }
    }
    d
}

/// Checks `d(s1, s2) ≤ ε` inside every abstract state. With a positive
/// `split_budget`, offending clusters are bisected by 2-means and rechecked
/// until they comply or the budget is spent.
pub fn validate_epsilon(
    cells: &[CellStats],
    clustering: &mut Clustering,
    metric: &Metric,
    epsilon: f64,
    split_budget: usize,
    seed: u64,
) -> Result<EpsilonReport> {
    let mut diameters: Vec<f64> = clustering
        .states
        .iter()
        .map(|s| diameter(cells, &s.members, metric))
        .collect();
    let mut splits = Vec::new();
    let mut budget = split_budget;
    let mut queue: Vec<usize> = (0..diameters.len()).filter(|&i| diameters[i] > epsilon).collect();
    while budget > 0 {
        let Some(c) = queue.first().copied() else { break };
        queue.remove(0);
        let members = clustering.states[c].members.clone();
        if members.len() < 2 {
            continue;
        }
        let sub: Vec<CellStats> = members.iter().map(|&i| cells[i].clone()).collect();
        let halves = cluster_cells(&sub, 2, metric, seed.wrapping_add(c as u64), DEFAULT_MAX_ITERS)?;
        if halves.k() < 2 {
            continue;
        }
        budget -= 1;
        let new_id = clustering.states.len();
        let mut parts = [Vec::new(), Vec::new()];
        for (p, &a) in halves.assignment.iter().enumerate() {
            parts[a].push(members[p]);
        }
        let before = diameters[c];
        for (slot, part) in parts.into_iter().enumerate() {
            let id = if slot == 0 { c } else { new_id };
            let refs: Vec<&CellStats> = part.iter().map(|&i| &cells[i]).collect();
            let state = AbstractState {
                id,
                centroid: CellStats::centroid(&refs),
                occupancy: refs.iter().map(|c| c.occupancy).sum(),
                members: part,
            };
            for &m in &state.members {
                clustering.assignment[m] = id;
            }
            let d = diameter(cells, &state.members, metric);
            if id == new_id {
                clustering.states.push(state);
                diameters.push(d);
            } else {
                clustering.states[c] = state;
                diameters[c] = d;
            }
            if d > epsilon {
                queue.push(id);
            }
        }
        splits.push(SplitRecord {
            cluster: c,
            new_cluster: new_id,
            diameter_before: before,
        });
    }
    let violations = (0..diameters.len()).filter(|&i| diameters[i] > epsilon).collect();
    Ok(EpsilonReport {
        epsilon,
        diameters,
        splits,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SparseDist;
    use crate::model::MetricWeights;

    fn point(i: u32, theta: &[f64]) -> CellStats {
        CellStats {
            index: vec![i],
            actions: vec![ActionStats {
                action: 0,
                count: 1,
                reward: 0.0,
                next: SparseDist(vec![(0, 1.0)]),
            }],
            theta: theta.to_vec(),
            t_mean: 0.0,
            v_hat_mean: 0.0,
            occupancy: 1,
        }
    }

    fn euclid() -> Metric {
        Metric::new(MetricKind::Euclidean, MetricWeights::default())
    }

    fn blobs() -> Vec<CellStats> {
        let centers = [[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut out = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for i in 0..12 {
                let th = [c[0] + rng.gen_range(-0.03..0.03), c[1] + rng.gen_range(-0.03..0.03)];
                out.push(point((b * 12 + i) as u32, &th));
            }
        }
        out
    }

    #[test]
    fn elbow_and_silhouette_find_three_blobs() {
        let cells = blobs();
        let ks = [2, 3, 4, 5, 6];
        assert_eq!(select_k(&cells, KMethod::Elbow, &ks, &euclid(), 1).unwrap(), 3);
        assert_eq!(select_k(&cells, KMethod::Silhouette, &ks, &euclid(), 1).unwrap(), 3);
    }

    #[test]
    fn forced_and_empty_ranges() {
        let cells = vec![point(0, &[0.0]), point(1, &[1.0])];
        for m in KMethod::ALL {
            assert_eq!(select_k(&cells, m, &[2], &euclid(), 0).unwrap(), 2);
        }
        assert!(select_k(&cells, KMethod::Elbow, &[], &euclid(), 0).is_err());
    }

    #[test]
    fn saturated_k_gives_zero_objective() {
        let cells = blobs();
        let c = cluster_cells(&cells, cells.len(), &euclid(), 5, 100).unwrap();
        assert_eq!(c.k(), cells.len());
        assert_eq!(c.objective(&cells, &euclid()), 0.0);
        assert!(cluster_cells(&cells, cells.len() + 1, &euclid(), 5, 100).is_err());
    }

    #[test]
    fn duplicated_groups_separate() {
        let mut cells = Vec::new();
        for i in 0..5 {
            cells.push(point(i, &[0.2, 0.2]));
            cells.push(point(10 + i, &[0.7, 0.4]));
        }
        let c = cluster_cells(&cells, 2, &euclid(), 3, 100).unwrap();
        for (i, &a) in c.assignment.iter().enumerate() {
            assert_eq!(a, c.assignment[i % 2]);
        }
        assert_ne!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.objective(&cells, &euclid()), 0.0);
    }

    #[test]
    fn objective_never_increases() {
        let cells = blobs();
        for seed in 0..5 {
            let c = cluster_cells(&cells, 7, &euclid(), seed, 100).unwrap();
            for w in c.objective_log.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", c.objective_log);
            }
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let cells = blobs();
        let a = cluster_cells(&cells, 4, &euclid(), 9, 100).unwrap();
        let mut rev = cells.clone();
        rev.reverse();
        let b = cluster_cells(&rev, 4, &euclid(), 9, 100).unwrap();
        let n = cells.len();
        for i in 0..n {
            for j in 0..n {
                let same_a = a.assignment[i] == a.assignment[j];
                let same_b = b.assignment[n - 1 - i] == b.assignment[n - 1 - j];
                assert_eq!(same_a, same_b);
            }
        }
    }

    #[test]
    fn epsilon_split_of_wide_cluster() {
        let cells = vec![
            point(0, &[0.0]),
            point(1, &[0.05]),
            point(2, &[0.85]),
            point(3, &[0.9]),
        ];
        let mut c = cluster_cells(&cells, 1, &euclid(), 0, 100).unwrap();
        let report = validate_epsilon(&cells, &mut c, &euclid(), 0.5, 0, 0).unwrap();
        assert!((report.diameters[0] - 0.9).abs() < 1e-12);
        assert!(!report.satisfied());
        let report = validate_epsilon(&cells, &mut c, &euclid(), 0.5, 4, 0).unwrap();
        assert_eq!(report.splits.len(), 1);
        assert_eq!(c.k(), 2);
        assert!(report.diameters.iter().all(|&d| d <= 0.9 && d <= 0.5));
        assert!(report.satisfied());
    }

    #[test]
    fn singleton_and_infinite_epsilon() {
        let cells = blobs();
        let mut c = cluster_cells(&cells, cells.len(), &euclid(), 0, 100).unwrap();
        let r = validate_epsilon(&cells, &mut c, &euclid(), 0.0, 0, 0).unwrap();
        assert!(r.diameters.iter().all(|&d| d == 0.0));
        let mut c = cluster_cells(&cells, 2, &euclid(), 0, 100).unwrap();
        let before = c.clone();
        let r = validate_epsilon(&cells, &mut c, &euclid(), f64::INFINITY, 10, 0).unwrap();
        assert!(r.satisfied() && r.splits.is_empty());
        assert_eq!(c, before);
    }

    #[test]
    fn pairwise_indexing() {
        let cells = blobs();
        let pd = PairwiseDistances::compute(&cells, &euclid());
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                assert_eq!(pd.get(i, j), euclid().distance(&cells[i], &cells[j]));
            }
        }
    }

    #[test]
    fn default_range_is_within_bounds() {
        assert_eq!(default_k_range(100, [0.4, 0.8], 5), [40, 50, 60, 70, 80]);
        assert_eq!(default_k_range(2, [0.4, 0.8], 5), [2]);
        assert!(default_k_range(5, [0.0, 1.0], 3).iter().all(|&k| (2..=4).contains(&k)));
    }
}
