use std::fs;

use corrq::harness::{run_experiment, write_outputs, ExperimentKind, ExperimentPlan};

fn small(kind: ExperimentKind, beta: f64) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(kind, vec![16, 64], beta, 1.0, 77);
    p.estimator.samples = 200;
    p.estimator.burn_in_factor = 5.0;
    p
}

#[test]
fn stationary_outputs_are_deterministic() {
    let plan = small(ExperimentKind::LofFixedPoint, -1.0);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let f1 = write_outputs(&run_experiment(&plan).unwrap(), d1.path()).unwrap();
    let f2 = write_outputs(&run_experiment(&plan).unwrap(), d2.path()).unwrap();
    let names: Vec<_> = f1
        .iter()
        .map(|p| p.file_name().unwrap().to_owned())
        .collect();
    assert!(names
        .iter()
        .any(|n| n == "lof_fixed_point_seed77_summary.json"));
    assert!(names
        .iter()
        .any(|n| n == "lof_fixed_point_seed77_n64_Q.csv"));
    assert_eq!(f1.len(), 1 + 2 * 3);
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{a:?}");
    }
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(d1.path().join("lof_fixed_point_seed77_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["params"]["seed"], 77);
    assert_eq!(summary["per_n"].as_array().unwrap().len(), 2);
}

#[test]
fn transient_curve_written() {
    let mut plan = small(ExperimentKind::LofTransient, -1.0);
    plan.x0 = Some(1.0);
    plan.horizon = Some(1.0);
    plan.grid_step = Some(0.25);
    plan.replications = 2;
    let out = run_experiment(&plan).unwrap();
    assert!(out.data.is_none());
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let curve = fs::read_to_string(dir.path().join("lof_transient_seed77_n64_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("t,mean,std_error,closed_form"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn each_kind_runs_on_a_small_plan() {
    for (kind, beta) in [
        (ExperimentKind::DiffusionStationary, 1.0),
        (ExperimentKind::DiffusionDivergence, -1.0),
        (ExperimentKind::WorkloadScaling, -1.0),
    ] {
        let mut plan = small(kind, beta);
        plan.threshold = Some(2.0);
        let out = run_experiment(&plan).unwrap();
        assert_eq!(out.report.per_n.len(), 2, "{kind:?}");
        assert!(out.report.verdict("event_conservation").unwrap().passed);
        assert!(out.report.verdict("scaled_queue_identity").unwrap().passed);
    }
}

#[test]
fn invalid_plans_rejected() {
    let mut p = small(ExperimentKind::LofFixedPoint, 0.5);
    assert!(run_experiment(&p).is_err());
    p.beta = -1.0;
    p.n_values = vec![64, 16];
    assert!(run_experiment(&p).is_err());
    let p = small(ExperimentKind::LofTransient, -1.0);
    assert!(run_experiment(&p).is_err(), "x0 is required");
    let p = small(ExperimentKind::DiffusionDivergence, -1.0);
    assert!(run_experiment(&p).is_err(), "threshold is required");
}

#[test]
fn plan_rejects_unknown_fields() {
    let json =
        r#"{"kind":"lof_fixed_point","n_values":[16],"beta":-1,"theta":1,"seed":1,"bogus":2}"#;
    assert!(serde_json::from_str::<ExperimentPlan>(json).is_err());
    let json = r#"{"kind":"lof_fixed_point","n_values":[16],"beta":-1,"theta":1,"seed":1}"#;
    let p: ExperimentPlan = serde_json::from_str(json).unwrap();
    assert_eq!(p.replications, 1);
}
