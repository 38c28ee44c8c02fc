use corrq::coupling::{compare_pc_erlang_a_stationary, couple_pc_infserver, couple_pc_pc};
use corrq::des::EstimatorConfig;
use corrq::{make_params, CorrelationMode, ModelParams, SeedSpec, StreamKey};
use proptest::prelude::*;

fn pc(n: usize, lambda: f64, theta: f64) -> ModelParams {
    ModelParams::with_arrival_rate(n, lambda, theta, CorrelationMode::Perfect).unwrap()
}

#[test]
fn single_server_sojourns_ordered() {
    let r = couple_pc_pc(
        &pc(1, 0.8, 0.4),
        &pc(1, 0.8, 0.7),
        1e4,
        &SeedSpec::new(7),
        &StreamKey::new("pcpc", 1, 0, ""),
    )
    .unwrap();
    assert_eq!(r.violations, 0, "{:?}", r.first_violation);
    assert!(r.customers_checked > 7000);
}

#[test]
fn erlang_c_system_one() {
    let c = ModelParams::with_arrival_rate(4, 3.5, 0.0, CorrelationMode::None).unwrap();
    for theta2 in [0.05, 1.0, 20.0] {
        let r = couple_pc_pc(
            &c,
            &pc(4, 3.0, theta2),
            3000.0,
            &SeedSpec::new(8),
            &StreamKey::new("pcpc", 4, 0, ""),
        )
        .unwrap();
        assert_eq!(
            r.violations, 0,
            "theta2 = {theta2}: {:?}",
            r.first_violation
        );
    }
}

#[test]
fn infinite_server_twin_dominates() {
    let p = make_params(4, -1.0, 1.0, CorrelationMode::Perfect).unwrap();
    for rep in 0..3 {
        let r = couple_pc_infserver(
            &p,
            1e3,
            &SeedSpec::new(9),
            &StreamKey::new("inf", 4, rep, ""),
        )
        .unwrap();
        assert_eq!(r.violations, 0, "{:?}", r.first_violation);
        assert!(r.epochs_checked > 1000);
    }
}

#[test]
fn very_impatient_customers_make_both_laws_close() {
    let p = make_params(16, 0.5, 1e3, CorrelationMode::Perfect).unwrap();
    let cfg = EstimatorConfig::scaled(16, 1500, 20.0, 1.0);
    let r = compare_pc_erlang_a_stationary(
        &p,
        &cfg,
        &SeedSpec::new(10),
        &StreamKey::new("ea", 16, 0, ""),
        0.01,
    )
    .unwrap();
    assert_eq!(r.violations, 0, "{:?}", r.first_violation);
    assert!(r.cdf_gap.unwrap() <= r.ci_slack.unwrap());
}

#[test]
fn too_few_samples_rejected() {
    let p = make_params(16, 0.5, 1.0, CorrelationMode::Perfect).unwrap();
    let cfg = EstimatorConfig::scaled(16, 5, 1.0, 1.0);
    assert!(compare_pc_erlang_a_stationary(
        &p,
        &cfg,
        &SeedSpec::new(1),
        &StreamKey::new("ea", 16, 0, ""),
        0.01
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn admissible_pc_pairs_never_reorder(
        seed in any::<u64>(),
        n in 1usize..10,
        load1 in 0.5f64..1.4,
        thin in 0.0f64..1.0,
        theta1 in 0.0f64..0.9,
        extra in 0.0f64..3.0,
    ) {
        let lambda1 = load1 * n as f64;
        let lambda2 = lambda1 * thin.max(0.05);
        let theta2 = theta1 / (1.0 - theta1) + extra;
        let p1 = if theta1 < 0.02 {
            ModelParams::with_arrival_rate(n, lambda1.min(0.95 * n as f64), 0.0, CorrelationMode::None).unwrap()
        } else {
            pc(n, lambda1, theta1)
        };
        let p2 = pc(n, lambda2.min(p1.lambda_n), theta2.max(0.01));
        let r = couple_pc_pc(&p1, &p2, 200.0, &SeedSpec::new(seed), &StreamKey::new("prop", n as u64, 0, "")).unwrap();
        prop_assert_eq!(r.violations, 0, "{:?}", r.first_violation);
    }

    #[test]
    fn pc_never_exceeds_infinite_server(
        seed in any::<u64>(),
        n in 1usize..10,
        frac in -1.5f64..0.9,
        theta in 0.05f64..4.0,
    ) {
        let p = make_params(n, frac * (n as f64).sqrt(), theta, CorrelationMode::Perfect).unwrap();
        let r = couple_pc_infserver(&p, 200.0, &SeedSpec::new(seed), &StreamKey::new("prop", n as u64, 0, "")).unwrap();
        prop_assert_eq!(r.violations, 0, "{:?}", r.first_violation);
    }
}
