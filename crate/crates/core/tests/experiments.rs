use lclab::distributions::{FamilyKind, FamilySpec};
use lclab::error::Error;
use lclab::experiments::*;
use serde_json::json;

fn spec(kind: FamilyKind, d: usize) -> FamilySpec {
    FamilySpec::new(kind, d)
}

#[test]
fn gaussian_sweep_is_refused() {
    let cfg = RateSweepConfig { family: spec(FamilyKind::Gaussian, 5), n_values: vec![10, 20, 40, 80], reps: 20_000, bootstrap: 0, grid_points: 201 };
    for p in rate_sweep_points(&cfg, 1).unwrap() {
        assert!(p.distance.value <= 3.0 * p.distance.standard_error * 3.0);
    }
    assert!(matches!(rate_sweep(&cfg, 1), Err(Error::Degenerate(_))));
}

#[test]
fn sweep_needs_four_n_values() {
    let cfg = RateSweepConfig { family: spec(FamilyKind::ProductExponential, 5), n_values: vec![10, 20, 40], reps: 100, bootstrap: 0, grid_points: 201 };
    assert!(matches!(rate_sweep(&cfg, 1), Err(Error::InvalidParameter(_))));
}

#[test]
fn refit_of_stored_points_is_exact() {
    let cfg = RateSweepConfig { family: spec(FamilyKind::ProductExponential, 10), n_values: vec![10, 20, 40, 80], reps: 20_000, bootstrap: 20, grid_points: 101 };
    let out = rate_sweep(&cfg, 2).unwrap();
    let ns: Vec<f64> = out.fit.points.iter().map(|p| p[0].exp()).collect();
    let errs: Vec<f64> = out.fit.points.iter().map(|p| p[1].exp()).collect();
    assert!((fit_rate(&ns, &errs).unwrap().slope - out.fit.slope).abs() < 1e-12);
    let ci = out.fit.slope_ci.unwrap();
    assert!(ci[0] <= out.fit.slope && out.fit.slope <= ci[1]);
}

#[test]
fn gaussian_md_ratio_is_one() {
    let mut s = spec(FamilyKind::Gaussian, 10);
    s.poincare_bound = Some(1.0);
    let cfg = MdRatioConfig { family: s, n_values: vec![200, 2000], x_values: vec![0.5, 1.5, 2.4], reps: 200_000, min_tail_hits: 30 };
    let out = md_ratio_experiment(&cfg, 3).unwrap();
    assert_eq!(out.rows.len(), 6);
    assert_eq!(out.worst.len(), 2);
    for r in &out.rows {
        assert!((r.ratio - 1.0).abs() <= 3.0 * r.ratio_se, "{r:?}");
    }
}

#[test]
fn md_window_and_tail_mass_errors() {
    let cfg = MdRatioConfig { family: spec(FamilyKind::ProductExponential, 20), n_values: vec![500], x_values: vec![1.0], reps: 1000, min_tail_hits: 30 };
    let err = md_ratio_experiment(&cfg, 4).unwrap_err();
    assert!(matches!(err, Error::OutsideWindow { n: 500, .. }));
    assert!(err.to_string().contains("[0, "));

    let mut s = spec(FamilyKind::ProductExponential, 2);
    s.poincare_bound = Some(1.0);
    let cfg = MdRatioConfig { family: s, n_values: vec![8000], x_values: vec![4.0], reps: 2000, min_tail_hits: 30 };
    match md_ratio_experiment(&cfg, 5) {
        Err(Error::InsufficientTail { suggested_reps, .. }) => assert!(suggested_reps > 2000),
        other => panic!("expected insufficient tail mass, got {other:?}"),
    }
}

#[test]
fn record_hash_ignores_key_order_and_comparable_drops_time() {
    let a = json!({"n": 5, "family": {"kind": "gaussian", "d": 2}});
    let b: serde_json::Value = serde_json::from_str(r#"{"family": {"d": 2, "kind": "gaussian"}, "n": 5}"#).unwrap();
    assert_eq!(config_sha256(&a), config_sha256(&b));
    let r1 = ExperimentRecord::new("sample", a.clone(), 1, "2026-01-01T00:00:00Z".into(), json!({"x": 1}));
    let r2 = ExperimentRecord::new("sample", b, 1, "2026-06-01T00:00:00Z".into(), json!({"x": 1}));
    assert_ne!(r1.to_jsonl(), r2.to_jsonl());
    assert_eq!(r1.comparable(), r2.comparable());
    assert_eq!(r1.schema_version, SCHEMA_VERSION);
}

#[test]
fn run_dispatch() {
    assert!(run("nope", &json!({}), 0).unwrap_err().is_config());
    assert!(run("sample", &json!({"family": {"kind": "gaussian", "d": 2}}), 0).unwrap_err().is_config());
    let art = run("ineq-suite", &serde_json::Value::Null, 0).unwrap();
    assert_eq!(art.rows.len(), 5);
    let art = run("sample", &json!({"family": {"kind": "product_exponential", "d": 2}, "n": 10}), 0).unwrap();
    assert_eq!(art.csv[0].1.lines().count(), 11);
    for sub in SUBCOMMANDS {
        assert!(run(sub, &json!({"bogus": 1}), 0).is_err(), "{sub}");
    }
}
