//! Compression ratio, mean absolute error and metric comparison tables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::{select_k_cached, ClusterCache, Clustering};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::interval::CellSpace;
use crate::metrics::{CellStats, Metric, MetricKind};
use crate::model::{Bounds, KMethod};
use crate::pipeline::{candidate_ks, Prepared};

/// `|Ŝ| / |S|`.
pub fn compression_ratio(n_abstract: usize, n_concrete: usize) -> Result<f64> {
    if n_concrete == 0 {
        return Err(Error::invalid("compression ratio of an empty concrete state set"));
    }
    if n_abstract == 0 || n_abstract > n_concrete {
        return Err(Error::invalid(format!(
            "need 1 ≤ abstract states ≤ concrete states, got {n_abstract} and {n_concrete}"
        )));
    }
    Ok(n_abstract as f64 / n_concrete as f64)
}

/// Mean over states of the mean per-dimension distance, in raw units, between a
/// state's semantic vector and the centroid of the abstract state it maps to.
///
/// `raw` are unnormalized semantic vectors; each is placed in the nearest cell
/// after clamped normalization.
pub fn mean_absolute_error(cells: &CellSpace, clustering: &Clustering, bounds: &Bounds, raw: &[Vec<f64>]) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::invalid("MAE needs at least one validation state"));
    }
    if clustering.assignment.len() != cells.len() {
        return Err(Error::invalid("clustering does not match the cell space"));
    }
    let predictions: Vec<Vec<f64>> = clustering
        .states
        .iter()
        .map(|s| bounds.denormalize(&s.centroid.theta))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for y_ref in raw {
        let cell = cells.locate(&bounds.normalize(y_ref)?).cell;
        let y = &predictions[clustering.assignment[cell]];
        total += y.iter().zip(y_ref).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    }
    Ok(total / raw.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub metric: MetricKind,
    pub k_method: KMethod,
    /// Interval cells after the first abstraction stage.
    pub cells: usize,
    /// Abstract states after clustering.
    pub k: usize,
    pub compression_ratio: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub dataset_sha256: String,
    pub modeling_states: usize,
    pub validation_states: usize,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, metric: MetricKind, method: KMethod) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.metric == metric && r.k_method == method)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<15} {:<11} {:>7} {:>7} {:>9} {:>12}",
            "metric", "k-method", "cells", "states", "CR", "MAE"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<15} {:<11} {:>7} {:>7} {:>8.2}% {:>12.6}",
                r.metric.as_str(),
                r.k_method.as_str(),
                r.cells,
                r.k,
                100.0 * r.compression_ratio,
                r.mae
            )?;
        }
        Ok(())
    }
}

/// Clusters the cells once per (metric, k method) pair and scores each result.
///
/// With `shared_k`, k is chosen under the first listed metric and reused for
/// the rest. Clusterings are cached per metric, so repeated k values cost one run.
pub fn compare_metrics(
    prep: &Prepared,
    cells: &CellSpace,
    stats: &[CellStats],
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let metrics = &config.eval.metrics;
    let methods = &config.eval.k_methods;
    if metrics.is_empty() || methods.is_empty() {
        return Err(Error::invalid("comparison needs at least one metric and one k method"));
    }
    let seed = config.abstraction.seed;
    let max_iters = config.clustering.max_iters;
    let ks = candidate_ks(stats.len(), &config.clustering)?;
    let metric_of = |kind: MetricKind| Metric::new(kind, config.metric.weights.clone());
    let mut caches: BTreeMap<MetricKind, ClusterCache> = BTreeMap::new();
    let mut shared: BTreeMap<KMethod, usize> = BTreeMap::new();
    if config.eval.shared_k {
        let m = metric_of(metrics[0]);
        let cache = caches.entry(metrics[0]).or_default();
        for &method in methods {
            let sel = select_k_cached(stats, method, &ks, &m, seed, max_iters, cache)?;
            shared.insert(method, sel.k);
        }
    }
    let n_concrete = prep.modeling.len();
    let mut rows = Vec::with_capacity(metrics.len() * methods.len());
    for &kind in metrics {
        let m = metric_of(kind);
        let cache = caches.entry(kind).or_default();
        for &method in methods {
            let k = match shared.get(&method) {
                Some(&k) => k,
                None => select_k_cached(stats, method, &ks, &m, seed, max_iters, cache)?.k,
            };
            let clustering = match cache.get(&k) {
                Some(c) => c.clone(),
                None => {
                    let c = crate::cluster::cluster_cells(stats, k, &m, seed, max_iters)?;
                    cache.insert(k, c.clone());
                    c
                }
            };
            rows.push(EvalRow {
                metric: kind,
                k_method: method,
                cells: cells.len(),
                k: clustering.k(),
                compression_ratio: compression_ratio(clustering.k(), n_concrete)?,
                mae: mean_absolute_error(cells, &clustering, &prep.bounds, &prep.validation_raw)?,
            });
        }
    }
    Ok(EvalReport {
        dataset: prep.modeling.provenance.source.clone(),
        dataset_sha256: prep.dataset_sha256.clone(),
        modeling_states: n_concrete,
        validation_states: prep.validation.len(),
        rows,
    })
}
