use corrq::des::{
    replay_offered_wait, simulate, simulate_with, InServiceInit, InitSpec, RecordGrid,
    ScriptedArrivals, Simulator, Trace, TraceRecord,
};
use corrq::model::Customer;
use corrq::{make_params, CorrelationMode, ModelParams, SeedSpec, StreamKey};
use proptest::prelude::*;

fn one_server() -> ModelParams {
    make_params(1, 0.0, 1.0, CorrelationMode::Perfect).unwrap()
}

fn scripted(
    params: &ModelParams,
    arrivals: &[(f64, f64)],
    horizon: f64,
    grid: RecordGrid,
) -> Trace {
    let mut src = ScriptedArrivals::new(params, arrivals);
    simulate_with(
        params,
        &InitSpec::Empty,
        horizon,
        &SeedSpec::new(0),
        &StreamKey::new("hand", 1, 0, ""),
        &grid,
        true,
        &mut src,
    )
    .unwrap()
}

fn at(trace: &Trace, t: f64) -> TraceRecord {
    *trace.records.iter().find(|r| r.time == t).unwrap()
}

#[test]
fn undelayed_customer_has_no_phase_one() {
    let p = one_server();
    let tr = scripted(&p, &[(0.0, 2.0)], 10.0, RecordGrid::Events);
    assert!(tr.records.iter().all(|r| r.z1 == 0));
    let dep = tr
        .records
        .iter()
        .find(|r| r.x == 0 && r.time > 0.0)
        .unwrap();
    assert_eq!(dep.time, 2.0);
    assert_eq!(tr.counters.departures, 1);
    assert_eq!(tr.audit.unwrap().total_violations(), 0);
}

#[test]
fn short_patience_customer_abandons_at_deadline() {
    // A: t=0, S=2. B: t=0.5, S=0.4 -> T=0.4, deadline 0.9 < 2.
    let p = one_server();
    let tr = scripted(&p, &[(0.0, 2.0), (0.5, 0.4)], 10.0, RecordGrid::Events);
    let drop = tr
        .records
        .iter()
        .find(|r| r.time > 0.5 && r.q == 0)
        .unwrap();
    assert!((drop.time - 0.9).abs() < 1e-15);
    assert_eq!(drop.x, 1);
    assert_eq!(tr.counters.abandonments, 1);
    assert_eq!(tr.counters.departures, 1);

    let tr = scripted(
        &p,
        &[(0.0, 2.0), (0.5, 0.4)],
        10.0,
        RecordGrid::Times(vec![0.7, 0.95]),
    );
    assert_eq!((at(&tr, 0.7).x, at(&tr, 0.7).q), (2, 1));
    assert_eq!((at(&tr, 0.95).x, at(&tr, 0.95).q), (1, 0));
}

#[test]
fn delayed_customer_runs_two_phases() {
    // B: t=0.5, S=3 -> deadline 3.5 > 2; enters at 2 with w=1.5, phase 1 on
    // [2, 3.5), phase 2 on [3.5, 5), departs at 5.
    let p = one_server();
    let grid = RecordGrid::Times(vec![1.0, 2.5, 3.4, 3.6, 4.9, 5.1]);
    let tr = scripted(&p, &[(0.0, 2.0), (0.5, 3.0)], 6.0, grid);
    let r = at(&tr, 1.0);
    assert_eq!((r.x, r.q, r.z1, r.z2), (2, 1, 0, 1));
    assert!((r.w - 0.5).abs() < 1e-15);
    // offered wait at 1.0: server frees at 2, B (deadline 3.5) takes it until 5
    assert!((r.w_v - 4.0).abs() < 1e-12);
    let r = at(&tr, 2.5);
    assert_eq!((r.x, r.q, r.z1, r.z2), (1, 0, 1, 0));
    assert!(
        (r.l - 1.0).abs() < 1e-12,
        "remaining phase 1 at 2.5 is 1.0, got {}",
        r.l
    );
    assert_eq!(at(&tr, 3.4).z1, 1);
    let r = at(&tr, 3.6);
    assert_eq!((r.z1, r.z2), (0, 1));
    assert_eq!(r.l, 0.0);
    assert_eq!(at(&tr, 4.9).x, 1);
    assert_eq!(at(&tr, 5.1).x, 0);
    assert_eq!(tr.counters.service_starts, 2);
}

#[test]
fn deadline_at_offer_instant_abandons() {
    // B's deadline equals A's departure time: strict S > theta*w fails.
    let p = one_server();
    let tr = scripted(&p, &[(0.0, 2.0), (1.0, 1.0)], 5.0, RecordGrid::Events);
    assert_eq!(tr.counters.abandonments, 1);
    assert_eq!(tr.counters.service_starts, 1);
    assert_eq!(tr.audit.unwrap().total_violations(), 0);
}

#[test]
fn workload_of_general_initial_state() {
    let p = one_server();
    let init = InitSpec::General {
        initial_total: 3,
        in_service: vec![InServiceInit {
            remaining_phase1: 0.7,
            phase2: true,
        }],
        queued_waits: vec![0.3, 0.2],
    };
    assert!((init.initial_workload() - 1.2).abs() < 1e-15);
    let mut rng = SeedSpec::new(1).stream(&StreamKey::new("w", 1, 0, "init"));
    let sim = Simulator::new(p, &init, &mut rng).unwrap();
    assert!((sim.workload() - 1.2).abs() < 1e-12);
    assert!((sim.head_of_line_wait() - 0.3).abs() < 1e-15);
    assert_eq!(sim.counts().z1, 1);
}

#[test]
fn workload_of_empty_and_fresh_states() {
    let p = make_params(8, 0.0, 1.0, CorrelationMode::Perfect).unwrap();
    let mut rng = SeedSpec::new(1).stream(&StreamKey::new("w", 8, 0, "init"));
    let sim = Simulator::new(p, &InitSpec::Empty, &mut rng).unwrap();
    assert_eq!(sim.workload(), 0.0);
    let sim = Simulator::new(p, &InitSpec::Fresh { initial_total: 12 }, &mut rng).unwrap();
    assert_eq!(sim.workload(), 0.0);
    let c = sim.counts();
    assert_eq!((c.x, c.q, c.z, c.z1, c.z2), (12, 4, 8, 0, 8));
}

#[test]
fn inconsistent_general_init_rejected() {
    let p = make_params(2, 0.0, 1.0, CorrelationMode::Perfect).unwrap();
    let mut rng = SeedSpec::new(1).stream(&StreamKey::new("w", 2, 0, "init"));
    let bad = [
        InitSpec::General {
            initial_total: 3,
            in_service: vec![],
            queued_waits: vec![],
        },
        InitSpec::General {
            initial_total: 1,
            in_service: vec![],
            queued_waits: vec![0.1],
        },
        InitSpec::General {
            initial_total: 1,
            in_service: vec![InServiceInit {
                remaining_phase1: -1.0,
                phase2: true,
            }],
            queued_waits: vec![],
        },
    ];
    for init in &bad {
        assert!(Simulator::new(p, init, &mut rng).is_err(), "{init:?}");
    }
}

#[test]
fn offered_wait_examples() {
    // idle agent
    let p = make_params(2, 0.0, 1.0, CorrelationMode::Perfect).unwrap();
    let tr = scripted(&p, &[(0.0, 1.0)], 0.5, RecordGrid::Times(vec![0.25]));
    assert_eq!(tr.records[0].w_v, 0.0);

    // server frees at clock + 1, nobody waiting
    assert_eq!(replay_offered_wait(3.0, &[4.0], &[]), 1.0);
    // queued customer abandons (deadline clock + 0.5) before the server frees
    let queued = Customer::new(0, 3.0, 0.5, 0.5);
    assert_eq!(replay_offered_wait(3.0, &[4.0], &[queued]), 1.0);

    let p = one_server();
    let tr = scripted(
        &p,
        &[(0.0, 1.0), (0.0, 0.5)],
        0.5,
        RecordGrid::Times(vec![0.0]),
    );
    assert_eq!((tr.records[0].x, tr.records[0].w_v), (2, 1.0));
}

#[test]
fn trace_is_deterministic() {
    let p = make_params(16, 0.5, 0.7, CorrelationMode::Perfect).unwrap();
    let key = StreamKey::new("det", 16, 0, "");
    let run = || {
        simulate(
            &p,
            &InitSpec::Fresh { initial_total: 20 },
            50.0,
            &SeedSpec::new(99),
            &key,
            &RecordGrid::Every(0.5),
            true,
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn rejects_nonpositive_horizon() {
    let p = one_server();
    let key = StreamKey::new("h", 1, 0, "");
    for h in [0.0, -1.0, f64::NAN] {
        assert!(simulate(
            &p,
            &InitSpec::Empty,
            h,
            &SeedSpec::new(1),
            &key,
            &RecordGrid::Every(1.0),
            false
        )
        .is_err());
    }
}

fn mode_strategy() -> impl Strategy<Value = CorrelationMode> {
    prop_oneof![
        Just(CorrelationMode::Perfect),
        Just(CorrelationMode::Independent),
        Just(CorrelationMode::None),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn invariants_hold_along_random_paths(
        seed in any::<u64>(),
        n in 1usize..12,
        frac in -1.5f64..0.9,
        theta in 0.05f64..4.0,
        x0 in 0usize..30,
        mode in mode_strategy(),
    ) {
        let beta = frac * (n as f64).sqrt();
        let p = make_params(n, beta, theta, mode).unwrap();
        let tr = simulate(
            &p,
            &InitSpec::Fresh { initial_total: x0 },
            30.0,
            &SeedSpec::new(seed),
            &StreamKey::new("prop", n as u64, 0, ""),
            &RecordGrid::Events,
            true,
        ).unwrap();
        let audit = tr.audit.clone().unwrap();
        prop_assert_eq!(audit.total_violations(), 0, "{:?}", audit.first_violation);
        prop_assert!(tr.is_conserved());
        for r in &tr.records {
            let z = r.z1 + r.z2;
            prop_assert_eq!(r.q, r.x.saturating_sub(n));
            prop_assert_eq!(z, r.x.min(n));
            prop_assert!(z == n || r.q == 0);
            prop_assert!(r.l >= 0.0 && r.w >= 0.0 && r.w_v >= 0.0);
            if r.q == 0 && r.z1 == 0 {
                prop_assert_eq!(r.l, 0.0);
            }
            if mode != CorrelationMode::Perfect {
                prop_assert_eq!(r.z1, 0);
            }
        }
    }

    #[test]
    fn general_init_workload_matches_definition(
        seed in any::<u64>(),
        r in proptest::collection::vec(0.0f64..3.0, 3),
        mut waits in proptest::collection::vec(0.0f64..2.0, 0..5),
    ) {
        waits.sort_by(|a, b| b.total_cmp(a));
        let p = make_params(3, 0.0, 0.8, CorrelationMode::Perfect).unwrap();
        let init = InitSpec::General {
            initial_total: 3 + waits.len(),
            in_service: r.iter().map(|&x| InServiceInit { remaining_phase1: x, phase2: true }).collect(),
            queued_waits: waits.clone(),
        };
        let mut rng = SeedSpec::new(seed).stream(&StreamKey::new("g", 3, 0, "init"));
        let sim = Simulator::new(p, &init, &mut rng).unwrap();
        prop_assert!((sim.workload() - init.initial_workload()).abs() < 1e-12);
        // every queued customer is still within its patience at time 0
        for c in sim.queued_customers() {
            prop_assert!(c.abandon_deadline > 0.0);
            prop_assert_eq!(c.patience, c.service_req / 0.8);
        }
    }
}
