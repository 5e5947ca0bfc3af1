use std::collections::BTreeMap;

use inferbench_core::dataset::{ingest, parse_raw_records, OpenMLPerfRecord};
use inferbench_core::predictor::{
    rank, CostBook, FitError, MemoryBook, Method, PredictionQuery, Predictor,
    DEFAULT_OVERHEAD_FACTOR,
};
use inferbench_core::ScenarioKind;
use proptest::prelude::*;
use serde_json::json;

const SAMPLE: &str = include_str!("fixtures/sample_record.json");

fn record(
    accel: &str,
    params_b: f64,
    dtype: &str,
    per_accel: f64,
    scenario: &str,
) -> OpenMLPerfRecord {
    ingest(&json!({
        "metrics.result": per_accel,
        "metrics.units": "Tokens/s",
        "model.number_of_parameters": params_b,
        "model.weight_data_types": dtype,
        "submission.scenario": scenario,
        "system.accelerator.name": accel,
        "system.accelerator.total_count": 1,
    }))
    .unwrap()
}

/// Zero-noise records following throughput = 1000 / params_b.
fn inverse_law(accel: &str) -> Vec<OpenMLPerfRecord> {
    [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 70.0]
        .iter()
        .map(|&p| record(accel, p, "bf16", 1000.0 / p, "Offline"))
        .collect()
}

#[test]
fn recovers_inverse_law() {
    let p = Predictor::fit(&inverse_law("A")).unwrap();
    let g = p.group("A", ScenarioKind::Offline).unwrap();
    assert_eq!(g.method(), Method::Regression);
    let law = g.regression.unwrap();
    assert!((law.log_params_coef + 1.0).abs() < 0.01, "{law:?}");
    for pt in &g.points {
        let est = g.estimate(pt.params_b, pt.bytes_per_param);
        assert!((est - pt.throughput).abs() / pt.throughput < 1e-3);
    }
    assert!((g.estimate(5.0, 2.0) - 200.0).abs() / 200.0 < 0.01);
}

#[test]
fn single_record_group_uses_nearest_neighbour() {
    let raw = parse_raw_records(SAMPLE).unwrap();
    let p = Predictor::fit(&[ingest(&raw[0]).unwrap()]).unwrap();
    let q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Server);
    let est = p.predict(&q).unwrap();
    assert_eq!(est.len(), 1);
    let (key, e) = &est[0];
    assert_eq!(key, "NVIDIA H100 80GB HBM3");
    let e = e.as_ref().unwrap();
    assert_eq!(e.support, 1);
    assert_eq!(e.method, Method::NearestNeighbor);
    assert_eq!(e.per_accel_throughput, 2631.93);
    assert!(!e.extrapolated);

    // Other sizes are flagged as extrapolation, scenario mismatch has no data.
    let far = p
        .predict(&PredictionQuery::new(70.0, "bf16", ScenarioKind::Server))
        .unwrap();
    assert!(far[0].1.as_ref().unwrap().extrapolated);
    assert!(p
        .predict(&PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline))
        .unwrap()
        .is_empty());
}

#[test]
fn fit_needs_usable_records() {
    assert_eq!(Predictor::fit(&[]).unwrap_err(), FitError::NoUsableData);
    let qps = ingest(&json!({
        "metrics.result": 10.0,
        "metrics.units": "Queries/s",
        "system.accelerator.total_count": 1,
    }))
    .unwrap();
    assert_eq!(Predictor::fit(&[qps]).unwrap_err(), FitError::NoUsableData);
}

fn book(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn cost_ratio_orders_equal_throughput() {
    let records = vec![
        record("A", 8.0, "bf16", 1000.0, "Offline"),
        record("B", 8.0, "bf16", 1000.0, "Offline"),
    ];
    let p = Predictor::fit(&records).unwrap();
    let q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline);
    let costs = CostBook::new(book(&[("A", 2.0), ("B", 4.0)])).unwrap();
    let r = rank(
        &p,
        &q,
        &costs,
        &MemoryBook::default(),
        DEFAULT_OVERHEAD_FACTOR,
    )
    .unwrap();
    let keys: Vec<&str> = r
        .ranked
        .iter()
        .map(|c| c.accelerator_key.as_str())
        .collect();
    assert_eq!(keys, ["A", "B"]);
    assert!((r.ranked[0].tokens_per_dollar / r.ranked[1].tokens_per_dollar - 2.0).abs() < 1e-12);
    assert_eq!(r.ranked[0].tokens_per_dollar, 1000.0 * 3600.0 / 2.0);
}

#[test]
fn memory_sets_accelerator_count() {
    let p = Predictor::fit(&inverse_law("H100")).unwrap();
    let mut q = PredictionQuery::new(70.0, "fp16", ScenarioKind::Offline);
    q.constraints.must_fit_memory = true;
    let costs = CostBook::new(book(&[("H100", 3.0)])).unwrap();
    let memory = MemoryBook::new(book(&[("H100", 80.0)])).unwrap();
    let r = rank(&p, &q, &costs, &memory, 1.2).unwrap();
    // 70 * 2 * 1.2 = 168 GB over 80 GB cards.
    assert_eq!(r.ranked[0].accelerators_needed, 3);
    assert!(r.ranked[0].feasible);

    let r = rank(&p, &q, &costs, &MemoryBook::default(), 1.2).unwrap();
    assert_eq!(r.ranked[0].violations, ["memory_unknown"]);
}

#[test]
fn unmet_throughput_makes_everything_infeasible() {
    let mut records = inverse_law("A");
    records.extend(inverse_law("B"));
    let p = Predictor::fit(&records).unwrap();
    let mut q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline);
    q.constraints.min_throughput = Some(1e9);
    let costs = CostBook::new(book(&[("A", 1.0), ("B", 2.0)])).unwrap();
    let r = rank(&p, &q, &costs, &MemoryBook::default(), 1.2).unwrap();
    assert_eq!(r.ranked.len(), 2);
    assert!(r
        .ranked
        .iter()
        .all(|c| !c.feasible && c.violations == ["min_throughput"]));
    assert_eq!(r.ranked[0].accelerator_key, "A");
}

#[test]
fn candidates_without_cost_or_data_are_unranked() {
    let p = Predictor::fit(&inverse_law("A")).unwrap();
    let mut q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline);
    q.accelerators = Some(vec!["A".into(), "Z".into()]);
    let r = rank(&p, &q, &CostBook::default(), &MemoryBook::default(), 1.2).unwrap();
    assert!(r.ranked.is_empty());
    let reasons: Vec<(&str, &str)> = r
        .unranked
        .iter()
        .map(|u| (u.accelerator_key.as_str(), u.reason.as_str()))
        .collect();
    assert_eq!(reasons, [("A", "no-cost"), ("Z", "no-data")]);
}

fn ranked_keys(p: &Predictor, q: &PredictionQuery, costs: &CostBook) -> Vec<String> {
    rank(p, q, costs, &MemoryBook::default(), 1.2)
        .unwrap()
        .ranked
        .into_iter()
        .map(|c| c.accelerator_key)
        .collect()
}

proptest! {
    #[test]
    fn uniform_cost_scaling_keeps_order(
        costs in proptest::collection::vec(0.1f64..50.0, 5),
        speeds in proptest::collection::vec(10.0f64..5000.0, 5),
        factor in 0.01f64..100.0,
    ) {
        let names = ["A", "B", "C", "D", "E"];
        let records: Vec<_> = names
            .iter()
            .zip(&speeds)
            .map(|(n, s)| record(n, 8.0, "bf16", *s, "Offline"))
            .collect();
        let p = Predictor::fit(&records).unwrap();
        let q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline);
        let book_a = CostBook::new(names.iter().map(|n| n.to_string()).zip(costs.iter().copied()).collect()).unwrap();
        prop_assert_eq!(ranked_keys(&p, &q, &book_a), ranked_keys(&p, &q, &book_a.scaled(factor)));
    }

    #[test]
    fn cheaper_never_ranks_lower(cost in 0.5f64..20.0, cut in 0.1f64..0.99) {
        let records = vec![
            record("A", 8.0, "bf16", 1000.0, "Offline"),
            record("B", 8.0, "bf16", 1000.0, "Offline"),
        ];
        let p = Predictor::fit(&records).unwrap();
        let q = PredictionQuery::new(8.0, "bf16", ScenarioKind::Offline);
        let before = CostBook::new(book(&[("A", cost), ("B", cost * 1.5)])).unwrap();
        let after = CostBook::new(book(&[("A", cost * cut), ("B", cost * 1.5)])).unwrap();
        let pos = |c: &CostBook| ranked_keys(&p, &q, c).iter().position(|k| k == "A").unwrap();
        prop_assert!(pos(&after) <= pos(&before));
    }
}
