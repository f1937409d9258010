mod common;

use common::acc_config;
use mdpabs::cluster::cluster_cells;
use mdpabs::config::PipelineConfig;
use mdpabs::eval::{compare_metrics, compression_ratio, mean_absolute_error};
use mdpabs::ingest::load_trajectories;
use mdpabs::metrics::{Metric, MetricKind};
use mdpabs::model::KMethod;
use mdpabs::pipeline::{abstract_cells, Prepared};

/// The first 40 episodes of the fixture with a short k grid.
fn small() -> (PipelineConfig, Prepared) {
    let mut config = acc_config();
    config.clustering.k_range = Some(vec![20, 40, 60, 80]);
    let ds = load_trajectories(&config.data_path(), &config.schema).unwrap();
    let ds = ds.select_episodes(&(0..40).collect::<Vec<_>>(), "head");
    let prep = Prepared::from_dataset(&ds, &config).unwrap();
    (config, prep)
}

#[test]
fn every_row_matches_a_fresh_clustering() {
    let (config, prep) = small();
    let (r, stats) = abstract_cells(&prep, &config).unwrap();
    let report = compare_metrics(&prep, &r.cells, &stats, &config).unwrap();
    assert_eq!(report.rows.len(), MetricKind::ALL.len() * KMethod::ALL.len());
    assert_eq!(report.modeling_states, prep.modeling.len());
    for method in KMethod::ALL {
        let ks: Vec<usize> = MetricKind::ALL.iter().map(|&m| report.row(m, method).unwrap().k).collect();
        assert!(ks.iter().all(|&k| k == ks[0]), "{method}: shared k differs {ks:?}");
    }
    for row in &report.rows {
        assert_eq!(row.cells, r.cells.len());
        let metric = Metric::new(row.metric, config.metric.weights.clone());
        let c = cluster_cells(&stats, row.k, &metric, config.abstraction.seed, config.clustering.max_iters).unwrap();
        let mae = mean_absolute_error(&r.cells, &c, &prep.bounds, &prep.validation_raw).unwrap();
        assert_eq!(row.mae.to_bits(), mae.to_bits(), "{} / {}", row.metric, row.k_method);
        assert_eq!(row.compression_ratio, compression_ratio(row.k, prep.modeling.len()).unwrap());
    }
}

#[test]
fn comparison_is_deterministic() {
    let (config, prep) = small();
    let (r, stats) = abstract_cells(&prep, &config).unwrap();
    let a = compare_metrics(&prep, &r.cells, &stats, &config).unwrap();
    let b = compare_metrics(&prep, &r.cells, &stats, &config).unwrap();
    assert_eq!(a, b);
    assert!(!a.to_string().is_empty());
}

#[test]
fn independent_k_selection_per_metric() {
    let (mut config, prep) = small();
    config.eval.shared_k = false;
    config.eval.k_methods = vec![KMethod::Elbow];
    let (r, stats) = abstract_cells(&prep, &config).unwrap();
    let report = compare_metrics(&prep, &r.cells, &stats, &config).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|row| [20, 40, 60, 80].contains(&row.k)));
}
