//! Sample-path couplings and stochastic-order checks.
//!
//! The exact couplings drive two systems from one event loop, feeding both
//! the same customers (same id, arrival time and `S`), and check the
//! ordering after every distinct epoch. The Erlang-A comparison is
//! statistical: both stationary laws are sampled and compared through a
//! one-sided DKW band.

use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::des::{
    stationary_sample, with_purpose, EstimatorConfig, ExitKind, InitSpec, MinTime, Observable,
    Observer, Simulator,
};
use crate::error::{invalid, Error, Result};
use crate::model::{CorrelationMode, Customer, ModelParams};
use crate::rng::{exp_draw, SeedSpec, SimRng, StreamKey};
use crate::stats::{dkw_epsilon, max_cdf_excess};

/// Ids at or above this value belong to the arrivals that only system 1 sees.
pub const EXTRA_ID_BASE: u64 = 1 << 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    PcPc,
    PcInfserver,
    #[serde(rename = "pc_erlangA_stat", alias = "pc_erlang_a_stat")]
    PcErlangAStat,
}

impl CouplingKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PcPc => "pc_pc",
            Self::PcInfserver => "pc_infserver",
            Self::PcErlangAStat => "pc_erlangA_stat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub kind: CouplingKind,
    pub params: Vec<ModelParams>,
    pub master_seed: u64,
    pub horizon: Option<f64>,
    pub customers_checked: u64,
    pub epochs_checked: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
    /// Largest amount by which an ordering failed (0 when none did). For
    /// the statistical kind: CDF gap minus slack, which is negative when
    /// dominance holds with room to spare.
    pub max_violation_margin: f64,
    pub ci_alpha: Option<f64>,
    /// `sup_x (F_pc(x) - F_A(x))` and where it is attained.
    pub cdf_gap: Option<f64>,
    pub cdf_gap_at: Option<f64>,
    pub ci_slack: Option<f64>,
    pub samples_per_system: Option<usize>,
}

impl CouplingReport {
    fn new(
        kind: CouplingKind,
        params: Vec<ModelParams>,
        seed: &SeedSpec,
        horizon: Option<f64>,
    ) -> Self {
        Self {
            kind,
            params,
            master_seed: seed.master_seed,
            horizon,
            customers_checked: 0,
            epochs_checked: 0,
            violations: 0,
            first_violation: None,
            max_violation_margin: 0.0,
            ci_alpha: None,
            cdf_gap: None,
            cdf_gap_at: None,
            ci_slack: None,
            samples_per_system: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report is plain data");
        v["kind"] = self.kind.name().into();
        serde_json::to_string_pretty(&v).expect("report is plain data")
    }

    fn violate(&mut self, margin: f64, msg: impl FnOnce() -> String) {
        self.violations += 1;
        self.max_violation_margin = self.max_violation_margin.max(margin);
        if self.first_violation.is_none() {
            self.first_violation = Some(msg());
        }
    }
}

/// Exit epochs keyed by customer id, one map per system.
#[derive(Default)]
struct ExitLog {
    side: usize,
    exits: [HashMap<u64, f64>; 2],
    /// Exits in system 0 that break `exit <= deadline + S` (infinite-server
    /// comparison only).
    late: Vec<(u64, f64, f64)>,
    check_twin: bool,
}

impl Observer for ExitLog {
    fn on_exit(&mut self, c: &Customer, _kind: ExitKind, time: f64) {
        if self.check_twin {
            let twin = c.abandon_deadline + c.service_req;
            if time > twin {
                self.late.push((c.id, time, twin));
            }
            return;
        }
        if c.id < EXTRA_ID_BASE {
            self.exits[self.side].insert(c.id, time);
        }
    }
}

/// Shared-plus-extra Poisson arrivals: the shared stream (rate `shared`)
/// reaches both systems, the extra stream (rate `extra`) only system 1.
struct SplitArrivals {
    streams: [(f64, SimRng, f64, u64); 2],
}

impl SplitArrivals {
    fn new(shared: f64, extra: f64, seed: &SeedSpec, key: &StreamKey) -> Self {
        let mk = |rate: f64, purpose: &str, first_id: u64| {
            let mut rng = seed.stream(&with_purpose(key, purpose));
            let first = if rate > 0.0 {
                exp_draw(&mut rng, rate)
            } else {
                f64::INFINITY
            };
            (rate, rng, first, first_id)
        };
        Self {
            streams: [mk(shared, "shared", 0), mk(extra, "extra", EXTRA_ID_BASE)],
        }
    }

    fn peek(&self) -> f64 {
        self.streams[0].2.min(self.streams[1].2)
    }

    /// Pops the earliest arrival as `(id, time, S)`.
    fn pop(&mut self) -> (u64, f64, f64) {
        let i = if self.streams[0].2 <= self.streams[1].2 {
            0
        } else {
            1
        };
        let (rate, rng, next, id) = &mut self.streams[i];
        let t = *next;
        let s = exp_draw(rng, 1.0);
        let out = (*id, t, s);
        *id += 1;
        *next = t + exp_draw(rng, *rate);
        out
    }
}

fn patience(params: &ModelParams, s: f64) -> f64 {
    match params.mode {
        CorrelationMode::Perfect => s / params.theta,
        CorrelationMode::None => f64::INFINITY,
        CorrelationMode::Independent => unreachable!("checked by the caller"),
    }
}

/// Effective patience rate: `theta` in perfect mode, 0 for Erlang-C.
fn pc_theta(p: &ModelParams) -> Result<f64> {
    match p.mode {
        CorrelationMode::Perfect => Ok(p.theta),
        CorrelationMode::None => Ok(0.0),
        CorrelationMode::Independent => Err(Error::Precondition(
            "the pc/pc coupling needs perfectly correlated (or infinite) patience".into(),
        )),
    }
}

fn check_pc_pc(p1: &ModelParams, p2: &ModelParams) -> Result<()> {
    let (th1, th2) = (pc_theta(p1)?, pc_theta(p2)?);
    if p1 == p2 {
        // identical systems: the ordering holds with equality
        return Ok(());
    }
    if p1.n != p2.n {
        return Err(Error::Precondition(format!(
            "server counts differ: {} vs {}",
            p1.n, p2.n
        )));
    }
    if p1.lambda_n < p2.lambda_n {
        return Err(Error::Precondition(format!(
            "need lambda1 >= lambda2, got {} < {}",
            p1.lambda_n, p2.lambda_n
        )));
    }
    if !(0.0..1.0).contains(&th1) {
        return Err(Error::Precondition(format!(
            "need 0 <= theta1 < 1, got {th1}"
        )));
    }
    if p2.mode != CorrelationMode::Perfect {
        return Err(Error::Precondition(
            "system 2 must have perfectly correlated patience".into(),
        ));
    }
    if th2 < th1 / (1.0 - th1) {
        return Err(Error::Precondition(format!(
            "need theta2 >= theta1 / (1 - theta1) = {}, got {th2}",
            th1 / (1.0 - th1)
        )));
    }
    if th1 == 0.0 && !p1.is_ergodic() {
        return Err(Error::Precondition(format!(
            "an Erlang-C system 1 needs lambda1 < n, got {} >= {}",
            p1.lambda_n, p1.n
        )));
    }
    Ok(())
}

/// Couples two pc systems with a common server count. System 1 sees the
/// shared stream (rate `lambda2`) plus an extra stream (rate
/// `lambda1 - lambda2`); shared customers carry the same `S` in both, with
/// patience `S / theta_i` (infinite for an Erlang-C system 1). Checks, for
/// every shared customer, that it leaves system 1 no earlier than system 2,
/// and `X1 >= X2` after every epoch. Both systems start empty.
pub fn couple_pc_pc(
    p1: &ModelParams,
    p2: &ModelParams,
    horizon: f64,
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<CouplingReport> {
    check_pc_pc(p1, p2)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    let mut rng = seed.stream(&with_purpose(key, "init"));
    let mut sims = [
        Simulator::new(*p1, &InitSpec::Empty, &mut rng)?,
        Simulator::new(*p2, &InitSpec::Empty, &mut rng)?,
    ];
    let mut src = SplitArrivals::new(p2.lambda_n, p1.lambda_n - p2.lambda_n, seed, key);
    let mut log = ExitLog::default();
    let mut report = CouplingReport::new(CouplingKind::PcPc, vec![*p1, *p2], seed, Some(horizon));
    loop {
        let ta = src.peek();
        let t = sims
            .iter()
            .filter_map(Simulator::next_event_time)
            .fold(ta, f64::min);
        if t > horizon {
            break;
        }
        for (side, sim) in sims.iter_mut().enumerate() {
            log.side = side;
            sim.advance_to(t, &mut log);
        }
        if ta == t {
            let (id, at, s) = src.pop();
            log.side = 0;
            sims[0].arrive(Customer::new(id, at, s, patience(p1, s)), &mut log);
            if id < EXTRA_ID_BASE {
                log.side = 1;
                sims[1].arrive(Customer::new(id, at, s, patience(p2, s)), &mut log);
            }
        }
        reconcile(&mut log, &mut report);
        report.epochs_checked += 1;
        let (x1, x2) = (sims[0].x(), sims[1].x());
        if x1 < x2 {
            report.violate((x2 - x1) as f64, || {
                format!("t = {t}: X1 = {x1} < X2 = {x2}")
            });
        }
    }
    // Left system 1 by the horizon but still in system 2: exit2 > exit1.
    let mut stranded: Vec<(u64, f64)> = log.exits[0].drain().collect();
    stranded.sort_by_key(|e| e.0);
    for (id, e1) in stranded {
        report.customers_checked += 1;
        report.violate(horizon - e1, || {
            format!("customer {id} left system 1 at {e1} but is still in system 2 at {horizon}")
        });
    }
    // Still in system 1 but gone from system 2: ordered.
    report.customers_checked += log.exits[1].len() as u64;
    Ok(report)
}

fn reconcile(log: &mut ExitLog, report: &mut CouplingReport) {
    if log.exits[0].is_empty() || log.exits[1].is_empty() {
        return;
    }
    let mut matched: Vec<(u64, f64, f64)> = log.exits[0]
        .iter()
        .filter_map(|(&id, &e1)| log.exits[1].get(&id).map(|&e2| (id, e1, e2)))
        .collect();
    matched.sort_by_key(|m| m.0);
    for (id, e1, e2) in matched {
        log.exits[0].remove(&id);
        log.exits[1].remove(&id);
        report.customers_checked += 1;
        if e1 < e2 {
            report.violate(e2 - e1, || {
                format!("customer {id}: sojourn ends at {e1} in system 1, {e2} in system 2")
            });
        }
    }
}

/// Couples a pc system with an infinite-server twin that holds every
/// customer for `T + S`. Both see the same arrivals and primitives and start
/// empty. Checks `X_pc <= X_inf` after every epoch and that each customer
/// leaves the pc system no later than its twin.
pub fn couple_pc_infserver(
    params: &ModelParams,
    horizon: f64,
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<CouplingReport> {
    if params.mode != CorrelationMode::Perfect {
        return Err(Error::Precondition(
            "the infinite-server coupling needs perfect correlation".into(),
        ));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    let mut rng = seed.stream(&with_purpose(key, "init"));
    let mut sim = Simulator::new(*params, &InitSpec::Empty, &mut rng)?;
    let mut src = SplitArrivals::new(params.lambda_n, 0.0, seed, key);
    let mut twin: BinaryHeap<MinTime> = BinaryHeap::new();
    let mut log = ExitLog {
        check_twin: true,
        ..Default::default()
    };
    let mut report = CouplingReport::new(
        CouplingKind::PcInfserver,
        vec![*params],
        seed,
        Some(horizon),
    );
    loop {
        let ta = src.peek();
        let t = [sim.next_event_time(), twin.peek().map(|m| m.0)]
            .into_iter()
            .flatten()
            .fold(ta, f64::min);
        if t > horizon {
            break;
        }
        sim.advance_to(t, &mut log);
        while twin.peek().is_some_and(|m| m.0 <= t) {
            twin.pop();
            report.customers_checked += 1;
        }
        if ta == t {
            let (id, at, s) = src.pop();
            let c = Customer::new(id, at, s, s / params.theta);
            // the twin leaves at deadline + S, the same sum the check uses
            twin.push(MinTime(c.abandon_deadline + c.service_req));
            sim.arrive(c, &mut log);
        }
        for (id, exit, bound) in log.late.drain(..) {
            report.violate(exit - bound, || {
                format!("customer {id} left at {exit}, after its twin at {bound}")
            });
        }
        report.epochs_checked += 1;
        let (x, x_inf) = (sim.x(), twin.len());
        if x > x_inf {
            report.violate((x - x_inf) as f64, || {
                format!("t = {t}: X = {x} > X_inf = {x_inf}")
            });
        }
    }
    Ok(report)
}

/// Statistical check of `X_A(inf) <=_st X_pc(inf)`: samples the stationary
/// number in system of the pc system and of its Erlang-A twin (same `n`,
/// `lambda`, `theta`, independent patience), then tests the one-sided
/// inequality `F_A(x) >= F_pc(x) - slack` for all `x`. The slack is the sum
/// of two DKW half-widths at level `alpha / 2` each, so the check has level
/// `alpha` when the samples are independent draws.
pub fn compare_pc_erlang_a_stationary(
    params: &ModelParams,
    config: &EstimatorConfig,
    seed: &SeedSpec,
    key: &StreamKey,
    alpha: f64,
) -> Result<CouplingReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    config.validate()?;
    let slack = 2.0 * dkw_epsilon(config.samples, alpha / 2.0);
    if slack >= 1.0 {
        return Err(Error::InsufficientData(format!(
            "{} samples per system give a DKW slack of {slack:.3} at alpha = {alpha}",
            config.samples
        )));
    }
    let pc = ModelParams {
        mode: CorrelationMode::Perfect,
        ..*params
    };
    let ea = ModelParams {
        mode: CorrelationMode::Independent,
        ..*params
    };
    let xs_pc = stationary_sample(&pc, config, Observable::X, seed, &with_purpose(key, "pc"))?;
    let xs_a = stationary_sample(
        &ea,
        config,
        Observable::X,
        seed,
        &with_purpose(key, "erlang_a"),
    )?;
    let (gap, at) = max_cdf_excess(&xs_pc.samples, &xs_a.samples)?;
    let mut report = CouplingReport::new(CouplingKind::PcErlangAStat, vec![pc, ea], seed, None);
    report.customers_checked = 0;
    report.epochs_checked = 2 * config.samples as u64;
    report.ci_alpha = Some(alpha);
    report.cdf_gap = Some(gap);
    report.cdf_gap_at = Some(at);
    report.ci_slack = Some(slack);
    report.samples_per_system = Some(config.samples);
    report.max_violation_margin = gap - slack;
    if gap > slack {
        report.violations = 1;
        report.first_violation = Some(format!(
            "F_pc - F_A = {gap:.4} at x = {at} exceeds slack {slack:.4}"
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_params;

    #[test]
    fn identical_systems_agree_exactly() {
        let p = make_params(3, 0.2, 0.5, CorrelationMode::Perfect).unwrap();
        let r = couple_pc_pc(
            &p,
            &p,
            500.0,
            &SeedSpec::new(1),
            &StreamKey::new("c", 3, 0, ""),
        )
        .unwrap();
        assert_eq!(r.violations, 0, "{:?}", r.first_violation);
        assert!(r.customers_checked > 1000);
    }

    #[test]
    fn preconditions_enforced() {
        let seed = SeedSpec::new(0);
        let key = StreamKey::new("c", 1, 0, "");
        let p = |lam: f64, th: f64| {
            ModelParams::with_arrival_rate(1, lam, th, CorrelationMode::Perfect).unwrap()
        };
        // theta1 >= 1
        assert!(couple_pc_pc(&p(0.8, 1.0), &p(0.8, 5.0), 10.0, &seed, &key).is_err());
        // theta2 below theta1 / (1 - theta1)
        assert!(couple_pc_pc(&p(0.8, 0.5), &p(0.8, 0.9), 10.0, &seed, &key).is_err());
        // lambda1 < lambda2
        assert!(couple_pc_pc(&p(0.7, 0.4), &p(0.8, 0.7), 10.0, &seed, &key).is_err());
        // Erlang-C system 1 overloaded
        let c = ModelParams::with_arrival_rate(1, 1.2, 0.0, CorrelationMode::None).unwrap();
        assert!(couple_pc_pc(&c, &p(0.8, 0.7), 10.0, &seed, &key).is_err());
        let a = ModelParams::with_arrival_rate(1, 0.8, 0.5, CorrelationMode::Independent).unwrap();
        assert!(couple_pc_infserver(&a, 10.0, &seed, &key).is_err());
    }

    #[test]
    fn horizon_before_first_arrival_is_trivially_ordered() {
        let p = make_params(4, -1.0, 1.0, CorrelationMode::Perfect).unwrap();
        let r = couple_pc_infserver(&p, 1e-9, &SeedSpec::new(2), &StreamKey::new("c", 4, 0, ""))
            .unwrap();
        assert_eq!((r.violations, r.customers_checked), (0, 0));
    }

    #[test]
    fn report_json_fields() {
        let p = make_params(2, 0.0, 1.0, CorrelationMode::Perfect).unwrap();
        let r = couple_pc_infserver(&p, 50.0, &SeedSpec::new(3), &StreamKey::new("c", 2, 0, ""))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["kind"], "pc_infserver");
        for f in [
            "params",
            "epochs_checked",
            "violations",
            "max_violation_margin",
            "ci_alpha",
        ] {
            assert!(v.get(f).is_some(), "missing {f}");
        }
    }
}
