//! Semantic interval abstraction: per-dimension partitioning, mapping of states
//! onto Cartesian cells, and the refinement loop that tunes interval lengths
//! until the error and compression targets hold.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AbstractionConfig;

const LEN_TOL: f64 = 1e-12;

/// One interval `[lower, upper)` of a semantic dimension (`[lower, upper]` when
/// it is the last one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// Number of partitioned values falling inside.
    pub count: usize,
    /// Occupancy below the minimum even at maximal length.
    pub underfull: bool,
    /// Could not be widened to the minimum length inside `[0, 1]`.
    pub short: bool,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn flagged(&self) -> bool {
        self.underfull || self.short
    }
}

/// Greedy left-to-right partition of sorted values in `[0, 1]`.
///
/// Each interval starts at the smallest uncovered value and spans `d_max`,
/// except the final one, which ends at the largest value (but is at least
/// `d_min` long). Intervals with fewer than `n_min_count` values are kept and
/// flagged `underfull`.
pub fn partition_dimension(values: &[f64], d_min: f64, d_max: f64, n_min_count: usize) -> Result<Vec<Interval>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot partition an empty dimension"));
    }
    if !(d_min > 0.0 && d_min <= d_max) {
        return Err(Error::invalid("partition needs 0 < d_min ≤ d_max"));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("partition input must be sorted"));
    }
    let n = values.len();
    let last = values[n - 1];
    let mut out: Vec<Interval> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut lower = values[i];
        let prev_upper = out.last().map_or(0.0, |iv| iv.upper);
        if last - lower <= d_max {
            let mut upper = last.max(lower + d_min);
            if upper > 1.0 {
                upper = 1.0;
                lower = lower.min((1.0 - d_min).max(prev_upper));
            }
            let count = n - i;
            out.push(Interval {
                lower,
                upper,
                count,
                underfull: count < n_min_count,
                short: upper - lower < d_min - LEN_TOL,
            });
            break;
        }
        let upper = lower + d_max;
        let end = i + values[i..].partition_point(|&v| v < upper);
        let count = end - i;
        out.push(Interval {
            lower,
            upper,
            count,
            underfull: count < n_min_count,
            short: false,
        });
        i = end;
    }
    Ok(out)
}

/// Position of the interval containing `x`, using `[l, u)` for all but the
/// last interval, which is closed.
fn locate_interval(intervals: &[Interval], x: f64) -> Option<usize> {
    let k = intervals.partition_point(|iv| iv.lower <= x);
    if k == 0 {
        return None;
    }
    let iv = &intervals[k - 1];
    let is_last = k == intervals.len();
    if x < iv.upper || (is_last && x <= iv.upper) {
        Some(k - 1)
    } else {
        None
    }
}

fn nearest_interval(intervals: &[Interval], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, iv) in intervals.iter().enumerate() {
        let d = if x < iv.lower {
            iv.lower - x
        } else if x > iv.upper {
            x - iv.upper
        } else {
            0.0
        };
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Hyper-rectangle of semantic space with at least one member state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCell {
    /// Per-dimension interval position; cells are ordered by this tuple.
    pub index: Vec<u32>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub occupancy: usize,
    /// Some interval of this cell is underfull or short.
    pub flagged: bool,
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Result of mapping an arbitrary semantic vector onto the cell space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellLookup {
    pub cell: usize,
    /// `false` when the vector fell outside every occupied cell and the nearest
    /// one was used.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpace {
    pub partitions: Vec<Vec<Interval>>,
    pub cells: Vec<IntervalCell>,
    /// Cell of every modeling state.
    pub assignment: Vec<usize>,
    #[serde(skip)]
    lookup: HashMap<Vec<u32>, usize>,
}

impl CellSpace {
    /// Rebuilds member lists and the index lookup after deserialization.
    pub fn reindex(&mut self) {
        for c in &mut self.cells {
            c.members.clear();
        }
        for (s, &c) in self.assignment.iter().enumerate() {
            self.cells[c].members.push(s);
        }
        self.lookup = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.index.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.partitions.len()
    }

    /// Maps a normalized semantic vector to its cell, falling back to the cell
    /// whose box is nearest (ties to the lowest cell id).
    pub fn locate(&self, theta: &[f64]) -> CellLookup {
        let mut index = Vec::with_capacity(theta.len());
        let mut inside = true;
        for (parts, &x) in self.partitions.iter().zip(theta) {
            match locate_interval(parts, x) {
                Some(k) => index.push(k as u32),
                None => {
                    inside = false;
                    index.push(nearest_interval(parts, x) as u32);
                }
            }
        }
        if let Some(&cell) = self.lookup.get(&index) {
            return CellLookup { cell, exact: inside };
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.cells.iter().enumerate() {
            let d: f64 = theta
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let gap = if x < c.lower[j] {
                        c.lower[j] - x
                    } else if x > c.upper[j] {
                        x - c.upper[j]
                    } else {
                        0.0
                    };
                    gap * gap
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        CellLookup { cell: best, exact: false }
    }
}

/// Assigns every state to the Cartesian cell containing its semantic vector;
/// empty cells are omitted and cells are numbered in index-tuple order.
pub fn build_cells(theta: &[Vec<f64>], partitions: Vec<Vec<Interval>>) -> Result<CellSpace> {
    let j = partitions.len();
    let mut by_index: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (s, th) in theta.iter().enumerate() {
        if th.len() != j {
            return Err(Error::DimensionMismatch {
                expected: j,
                got: th.len(),
            });
        }
        let index = th
            .iter()
            .zip(&partitions)
            .map(|(&x, parts)| locate_interval(parts, x).unwrap_or_else(|| nearest_interval(parts, x)) as u32)
            .collect();
        by_index.entry(index).or_default().push(s);
    }
    let mut assignment = vec![0; theta.len()];
    let mut cells = Vec::with_capacity(by_index.len());
    for (id, (index, members)) in by_index.into_iter().enumerate() {
        for &s in &members {
            assignment[s] = id;
        }
        let ivs: Vec<&Interval> = index
            .iter()
            .zip(&partitions)
            .map(|(&k, parts)| &parts[k as usize])
            .collect();
        cells.push(IntervalCell {
            lower: ivs.iter().map(|iv| iv.lower).collect(),
            upper: ivs.iter().map(|iv| iv.upper).collect(),
            flagged: ivs.iter().any(|iv| iv.flagged()),
            occupancy: members.len(),
            index,
            members,
        });
    }
    let mut cs = CellSpace {
        partitions,
        cells,
        assignment,
        lookup: HashMap::new(),
    };
    cs.reindex();
    Ok(cs)
}

/// Dataset-wide mean and maximum of `|θ_s^j − mean_cell(θ^j)|` over all states
/// and dimensions.
pub fn compute_errors(cs: &CellSpace, theta: &[Vec<f64>]) -> Result<(f64, f64)> {
    if cs.is_empty() {
        return Err(Error::invalid("no cells"));
    }
    let j = cs.arity();
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut n = 0usize;
    for cell in &cs.cells {
        let mut mean = vec![0.0; j];
        for &s in &cell.members {
            for (m, x) in mean.iter_mut().zip(&theta[s]) {
                *m += x;
            }
        }
        let k = cell.members.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        for &s in &cell.members {
            for (m, x) in mean.iter().zip(&theta[s]) {
                let dev = (x - m).abs();
                sum += dev;
                max = max.max(dev);
                n += 1;
            }
        }
    }
    Ok((sum / n as f64, max))
}

/// `|cells| / |states|`.
pub fn reduction_level(cs: &CellSpace, n_states: usize) -> f64 {
    cs.len() as f64 / n_states as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub d_max: Vec<f64>,
    pub n_min: f64,
    pub cells: usize,
    pub e_mean: f64,
    pub e_max: f64,
    pub reduction: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub cells: CellSpace,
    pub log: Vec<IterationRecord>,
    /// Iteration whose cell space was returned.
    pub selected: usize,
    /// Empty when every constraint held at the selected iteration.
    pub not_converged: Vec<String>,
    /// Partition parameters of the selected iteration.
    pub d_max: Vec<f64>,
    pub n_min: f64,
}

impl Refinement {
    pub fn converged(&self) -> bool {
        self.not_converged.is_empty()
    }
}

const SHRINK: f64 = 0.8;
const GROW: f64 = 1.25;

/// Iterates partition → map → error → reduction until the error thresholds and
/// the reduction band hold, or `max_iters` is reached.
///
/// Error violations and a reduction below the band shrink `d_max`; a
/// reduction above the band grows `d_max` and `n_min`. `d_max` never drops
/// below `d_min`. The best iteration by (violation count, e_mean) is returned.
pub fn refine(theta: &[Vec<f64>], config: &AbstractionConfig) -> Result<Refinement> {
    let violations = crate::model::validate_config(config);
    if !violations.is_empty() {
        return Err(Error::Config(violations.iter().map(ToString::to_string).collect()));
    }
    if theta.is_empty() {
        return Err(Error::invalid("no states to abstract"));
    }
    let j = config.arity();
    let n = theta.len();
    let sorted: Vec<Vec<f64>> = (0..j)
        .map(|d| {
            let mut v: Vec<f64> = theta
                .iter()
                .map(|th| th.get(d).copied().unwrap_or(f64::NAN))
                .collect();
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::DimensionMismatch { expected: j, got: 0 });
            }
            v.sort_by(f64::total_cmp);
            Ok(v)
        })
        .collect::<Result<_>>()?;

    let [lo, hi] = config.reduction_band;
    let mut d_max = config.d_max.clone();
    let mut n_min = config.n_min;
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, CellSpace, Vec<String>, Vec<f64>, f64)> = None;

    for iteration in 0..config.max_iters {
        let n_min_count = (n_min * n as f64).ceil() as usize;
        let partitions = (0..j)
            .map(|d| partition_dimension(&sorted[d], config.d_min[d], d_max[d], n_min_count))
            .collect::<Result<Vec<_>>>()?;
        let cs = build_cells(theta, partitions)?;
        let (e_mean, e_max) = compute_errors(&cs, theta)?;
        let reduction = reduction_level(&cs, n);

        let mut unmet = Vec::new();
        let error_violation = e_mean > config.e_mean || e_max > config.e_max;
        if e_mean > config.e_mean {
            unmet.push(format!("e_mean {e_mean:.6} > {}", config.e_mean));
        }
        if e_max > config.e_max {
            unmet.push(format!("e_max {e_max:.6} > {}", config.e_max));
        }
        if reduction > hi {
            unmet.push(format!("reduction {reduction:.4} > {hi}"));
        }
        if reduction < lo {
            unmet.push(format!("reduction {reduction:.4} < {lo}"));
        }
        log.push(IterationRecord {
            iteration,
            d_max: d_max.clone(),
            n_min,
            cells: cs.len(),
            e_mean,
            e_max,
            reduction,
            violations: unmet.clone(),
        });

        let better = match &best {
            None => true,
            Some((_, be, _, bu, _, _)) => (unmet.len(), e_mean) < (bu.len(), *be),
        };
        let done = unmet.is_empty();
        if better {
            best = Some((iteration, e_mean, cs, unmet, d_max.clone(), n_min));
        }
        if done {
            break;
        }

        let prev = (d_max.clone(), n_min);
        if error_violation || reduction < lo {
            for (dm, &dmin) in d_max.iter_mut().zip(&config.d_min) {
                *dm = (*dm * SHRINK).max(dmin);
            }
        } else {
            for dm in d_max.iter_mut() {
                *dm *= GROW;
            }
            n_min = (n_min * GROW).min(0.999);
        }
        if (d_max.clone(), n_min) == prev {
            break;
        }
    }

    let (selected, _, cells, not_converged, d_max, n_min) = best.expect("at least one iteration runs");
    Ok(Refinement {
        cells,
        log,
        selected,
        not_converged,
        d_max,
        n_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn uniform_values_fill_quarters() {
        let ivs = partition_dimension(&linspace(100), 0.01, 0.25, 1).unwrap();
        assert_eq!(ivs.len(), 4);
        for iv in &ivs {
            assert!((iv.length() - 0.25).abs() < 1e-12, "{iv:?}");
            assert!(!iv.flagged());
        }
        assert_eq!(ivs.iter().map(|iv| iv.count).sum::<usize>(), 101);
    }

    #[test]
    fn single_value_gets_minimum_length() {
        let ivs = partition_dimension(&[0.4; 7], 0.01, 0.05, 1).unwrap();
        assert_eq!(ivs.len(), 1);
        assert_eq!((ivs[0].lower, ivs[0].upper), (0.4, 0.4 + 0.01));
        // near the top of the range the interval slides down to stay in [0, 1]
        let ivs = partition_dimension(&[0.999], 0.01, 0.05, 1).unwrap();
        assert_eq!((ivs[0].lower, ivs[0].upper), (0.99, 1.0));
        assert!(!ivs[0].short);
    }

    #[test]
    fn bimodal_values_leave_a_gap() {
        // 10 points around 0.1 and 10 around 0.9
        let mut v: Vec<f64> = (0..10).map(|i| 0.08 + 0.004 * i as f64).collect();
        v.extend((0..10).map(|i| 0.88 + 0.004 * i as f64));
        let ivs = partition_dimension(&v, 0.01, 0.25, 1).unwrap();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[0].lower, 0.08);
        assert!((ivs[0].upper - 0.33).abs() < 1e-12);
        assert_eq!(ivs[1].lower, 0.88);
        assert!(ivs[0].upper < 0.5 && ivs[1].lower > 0.5);
        assert_eq!((ivs[0].count, ivs[1].count), (10, 10));
    }

    #[test]
    fn underfull_intervals_are_flagged_not_fatal() {
        let v = [0.0, 0.01, 0.02, 0.5];
        let ivs = partition_dimension(&v, 0.01, 0.1, 2).unwrap();
        assert_eq!(ivs.len(), 2);
        assert!(!ivs[0].underfull);
        assert!(ivs[1].underfull);
    }

    #[test]
    fn cells_are_cartesian_and_omit_empty() {
        let p1 = partition_dimension(&[0.0, 1.0], 0.1, 0.5, 1).unwrap();
        assert_eq!(p1.len(), 2);
        let theta = vec![vec![0.1], vec![0.2]];
        let cs = build_cells(&theta, vec![p1]).unwrap();
        assert_eq!(cs.len(), 1);

        // dense 3 x 4 grid
        let xs = [0.0, 0.4, 0.8];
        let ys = [0.0, 0.3, 0.6, 0.9];
        let mut theta = Vec::new();
        for &x in &xs {
            for &y in &ys {
                theta.push(vec![x, y]);
            }
        }
        let px = partition_dimension(&xs, 0.1, 0.3, 1).unwrap();
        let py = partition_dimension(&ys, 0.1, 0.25, 1).unwrap();
        assert_eq!((px.len(), py.len()), (3, 4));
        let cs = build_cells(&theta, vec![px, py]).unwrap();
        assert_eq!(cs.len(), 12);
        assert_eq!(cs.cells.iter().map(|c| c.occupancy).sum::<usize>(), 12);
    }

    #[test]
    fn boundary_values_follow_half_open_rule() {
        let parts = vec![
            Interval { lower: 0.0, upper: 0.5, count: 1, underfull: false, short: false },
            Interval { lower: 0.5, upper: 1.0, count: 1, underfull: false, short: false },
        ];
        assert_eq!(locate_interval(&parts, 0.5), Some(1));
        assert_eq!(locate_interval(&parts, 0.4999), Some(0));
        assert_eq!(locate_interval(&parts, 1.0), Some(1));
        assert_eq!(locate_interval(&parts, 1.1), None);
    }

    #[test]
    fn errors_of_singletons_and_pairs() {
        let theta = vec![vec![0.1], vec![0.9]];
        let parts = partition_dimension(&[0.1, 0.9], 0.01, 0.05, 1).unwrap();
        let cs = build_cells(&theta, vec![parts]).unwrap();
        assert_eq!(compute_errors(&cs, &theta).unwrap(), (0.0, 0.0));

        let theta = vec![vec![0.1], vec![0.3]];
        let parts = partition_dimension(&[0.1, 0.3], 0.01, 0.5, 1).unwrap();
        let cs = build_cells(&theta, vec![parts]).unwrap();
        let (m, x) = compute_errors(&cs, &theta).unwrap();
        assert!((m - 0.1).abs() < 1e-12 && (x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reduction_extremes() {
        let theta: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let sorted: Vec<f64> = theta.iter().map(|t| t[0]).collect();
        let cs = build_cells(&theta, vec![partition_dimension(&sorted, 0.01, 0.05, 1).unwrap()]).unwrap();
        assert_eq!(reduction_level(&cs, 10), 1.0);
        let cs = build_cells(&theta, vec![partition_dimension(&sorted, 0.01, 1.0, 1).unwrap()]).unwrap();
        assert_eq!(reduction_level(&cs, 10), 0.1);
        assert!((1200.0f64 / 11858.0 - 0.1012).abs() < 5e-5);
    }

    #[test]
    fn locate_falls_back_to_nearest_cell() {
        let theta = vec![vec![0.1, 0.1], vec![0.9, 0.9]];
        let px = partition_dimension(&[0.1, 0.9], 0.01, 0.05, 1).unwrap();
        let py = px.clone();
        let cs = build_cells(&theta, vec![px, py]).unwrap();
        assert_eq!(cs.len(), 2);
        let hit = cs.locate(&[0.1, 0.1]);
        assert!(hit.exact);
        let miss = cs.locate(&[0.5, 0.85]);
        assert!(!miss.exact);
        assert_eq!(miss.cell, 1);
    }

    fn config_1d(e_mean: f64, e_max: f64, band: [f64; 2]) -> AbstractionConfig {
        let mut c = AbstractionConfig::with_dimensions(1);
        c.d_min = vec![0.001];
        c.d_max = vec![0.2];
        c.n_min = 0.001;
        c.e_mean = e_mean;
        c.e_max = e_max;
        c.reduction_band = band;
        c
    }

    #[test]
    fn loose_thresholds_converge_immediately() {
        let theta: Vec<Vec<f64>> = linspace(999).into_iter().map(|x| vec![x]).collect();
        let r = refine(&theta, &config_1d(0.5, 0.9, [0.001, 0.9])).unwrap();
        assert!(r.converged());
        assert_eq!(r.log.len(), 1);
        assert_eq!(r.selected, 0);
    }

    #[test]
    fn tight_error_shrinks_d_max_monotonically() {
        let theta: Vec<Vec<f64>> = linspace(999).into_iter().map(|x| vec![x]).collect();
        let r = refine(&theta, &config_1d(0.001, 0.004, [0.001, 0.9])).unwrap();
        assert!(r.log.len() > 2);
        for w in r.log.windows(2) {
            assert!(w[1].d_max[0] < w[0].d_max[0]);
        }
        assert!(r.converged(), "{:?}", r.not_converged);
        let (_, e_max) = compute_errors(&r.cells, &theta).unwrap();
        assert!(e_max <= 0.004);
    }

    #[test]
    fn unreachable_targets_report_not_converged() {
        let theta: Vec<Vec<f64>> = linspace(99).into_iter().map(|x| vec![x]).collect();
        // 100 states can never compress below one cell per hundred
        let mut c = config_1d(0.5, 0.9, [0.001, 0.002]);
        c.max_iters = 5;
        let r = refine(&theta, &c).unwrap();
        assert!(!r.converged());
        assert_eq!(r.log.len(), 5);
        assert!(r.not_converged[0].starts_with("reduction"));
    }

    #[test]
    fn refine_is_deterministic() {
        let theta: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()])
            .collect();
        let mut c = AbstractionConfig::with_dimensions(2);
        c.reduction_band = [0.05, 0.6];
        let a = refine(&theta, &c).unwrap();
        let b = refine(&theta, &c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.cells.cells.iter().map(|c| c.occupancy).sum::<usize>(), 500);
    }
}
