//! Pseudometric axioms of the cell distances on random cell statistics.

use std::collections::BTreeMap;

use mdpabs::metrics::{ActionStats, CellStats, Metric, MetricKind, SparseDist, END};
use mdpabs::model::MetricWeights;
use proptest::prelude::*;

fn dist_strategy() -> impl Strategy<Value = SparseDist> {
    prop::collection::btree_map(prop::sample::select(vec![0u32, 1, 2, 3, END]), 1u32..10, 1..5).prop_map(|w| {
        let total: u32 = w.values().sum();
        SparseDist::from_pairs(w.into_iter().map(|(k, v)| (k, v as f64 / total as f64)))
    })
}

fn cell_strategy() -> impl Strategy<Value = CellStats> {
    (
        prop::collection::btree_map(0u32..4, (-1.0f64..1.0, dist_strategy(), 1u64..20), 1..4),
        prop::collection::vec(0.0f64..1.0, 2),
        0.0f64..50.0,
    )
        .prop_map(|(actions, theta, t_mean)| CellStats {
            index: vec![],
            actions: actions
                .into_iter()
                .map(|(action, (reward, next, count))| ActionStats {
                    action,
                    count,
                    reward,
                    next,
                })
                .collect(),
            theta,
            t_mean,
            v_hat_mean: 0.0,
            occupancy: 1,
        })
}

/// ½ Σ |p − q| over the union of supports.
fn tv_oracle(p: &SparseDist, q: &SparseDist) -> f64 {
    let mut all: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &(k, v) in &p.0 {
        all.entry(k).or_default().0 += v;
    }
    for &(k, v) in &q.0 {
        all.entry(k).or_default().1 += v;
    }
    0.5 * all.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn multistep_oracle(a: &CellStats, b: &CellStats, w: &MetricWeights) -> f64 {
    let ma: BTreeMap<u32, &ActionStats> = a.actions.iter().map(|x| (x.action, x)).collect();
    let mb: BTreeMap<u32, &ActionStats> = b.actions.iter().map(|x| (x.action, x)).collect();
    let mut best = 0.0f64;
    for (k, x) in &ma {
        if let Some(y) = mb.get(k) {
            best = best.max(w.c_r * (x.reward - y.reward).abs() + w.c_p * tv_oracle(&x.next, &y.next));
        }
    }
    let same = ma.keys().eq(mb.keys());
    best + if same { 0.0 } else { w.c_d }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn all_metrics_are_pseudometrics(x in cell_strategy(), y in cell_strategy(), z in cell_strategy()) {
        let w = MetricWeights::default();
        prop_assert_eq!(w.c_t, 0.0);
        for kind in MetricKind::ALL {
            let m = Metric::new(kind, w.clone());
            let (dxy, dyz, dxz) = (m.distance(&x, &y), m.distance(&y, &z), m.distance(&x, &z));
            prop_assert!(dxy >= 0.0 && dyz >= 0.0 && dxz >= 0.0);
            prop_assert!(m.distance(&x, &x).abs() <= 1e-9);
            prop_assert!((dxy - m.distance(&y, &x)).abs() <= 1e-9);
            prop_assert!(dxz <= dxy + dyz + 1e-9, "{kind}: {dxz} > {dxy} + {dyz}");
        }
    }

    #[test]
    fn spatiotemporal_without_time_weight_is_multistep(x in cell_strategy(), y in cell_strategy()) {
        let w = MetricWeights { c_t: 0.0, ..MetricWeights::default() };
        let st = Metric::new(MetricKind::Spatiotemporal, w.clone()).distance(&x, &y);
        let ms = Metric::new(MetricKind::Multistep, w.clone()).distance(&x, &y);
        prop_assert_eq!(st, ms);
        prop_assert!((ms - multistep_oracle(&x, &y, &w)).abs() <= 1e-12);
    }

    #[test]
    fn total_variation_matches_dense_formula(p in dist_strategy(), q in dist_strategy()) {
        let d = mdpabs::metrics::d_tv(&p, &q).unwrap();
        prop_assert!((d - tv_oracle(&p, &q)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
    }

    #[test]
    fn time_weight_adds_only_the_indicator(x in cell_strategy(), y in cell_strategy(), c_t in 0.1f64..10.0) {
        let w = MetricWeights { c_t, ..MetricWeights::default() };
        let st = Metric::new(MetricKind::Spatiotemporal, w.clone()).distance(&x, &y);
        let ms = Metric::new(MetricKind::Multistep, w.clone()).distance(&x, &y);
        let far = (x.t_mean - y.t_mean).abs() > w.temporal_window as f64;
        let extra = if far { c_t } else { 0.0 };
        prop_assert!((st - ms - extra).abs() <= 1e-9);
    }
}
