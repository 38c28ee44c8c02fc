use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::des::engine::{AuditReport, Counters, EpochKind, Observer, Simulator};
use crate::des::init::InitSpec;
use crate::error::{invalid, Result};
use crate::model::{patience_for, sample_customer, Customer, ModelParams};
use crate::rng::{exp_draw, SeedSpec, SimRng, StreamKey};

/// Source of external arrivals, in nondecreasing time order.
pub trait ArrivalSource {
    fn next_arrival(&mut self) -> Option<Customer>;
}

/// Poisson arrivals at rate `lambda_n`; each arrival draws its inter-arrival
/// gap, then `S`, then (independent mode) `T` from one stream.
pub struct PoissonArrivals {
    params: ModelParams,
    rate: f64,
    rng: SimRng,
    clock: f64,
    next_id: u64,
}

impl PoissonArrivals {
    pub fn new(params: ModelParams, rng: SimRng) -> Self {
        Self::with_rate(params, params.lambda_n, rng, 0)
    }

    /// A stream with its own rate and id range, for couplings that split
    /// arrivals into superposed streams.
    pub fn with_rate(params: ModelParams, rate: f64, rng: SimRng, first_id: u64) -> Self {
        Self {
            params,
            rate,
            rng,
            clock: 0.0,
            next_id: first_id,
        }
    }
}

impl ArrivalSource for PoissonArrivals {
    fn next_arrival(&mut self) -> Option<Customer> {
        if self.rate <= 0.0 {
            return None;
        }
        self.clock += exp_draw(&mut self.rng, self.rate);
        let c = sample_customer(&mut self.rng, &self.params, self.next_id, self.clock);
        self.next_id += 1;
        Some(c)
    }
}

/// Fixed list of `(arrival time, S)` pairs; patience follows the mode.
pub struct ScriptedArrivals {
    pending: VecDeque<Customer>,
}

impl ScriptedArrivals {
    pub fn new(params: &ModelParams, arrivals: &[(f64, f64)]) -> Self {
        // Scripted patience only needs randomness in independent mode.
        let mut rng =
            SeedSpec::new(0).stream(&StreamKey::new("scripted", params.n as u64, 0, "patience"));
        let pending = arrivals
            .iter()
            .enumerate()
            .map(|(i, &(t, s))| Customer::new(i as u64, t, s, patience_for(&mut rng, params, s)))
            .collect();
        Self { pending }
    }

    pub fn from_customers(customers: Vec<Customer>) -> Self {
        Self {
            pending: customers.into(),
        }
    }
}

impl ArrivalSource for ScriptedArrivals {
    fn next_arrival(&mut self) -> Option<Customer> {
        self.pending.pop_front()
    }
}

/// One row of the exported trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub x: usize,
    pub q: usize,
    pub z1: usize,
    pub z2: usize,
    /// Workload: remaining phase-1 time plus elapsed queue waits.
    pub l: f64,
    /// Head-of-line elapsed wait.
    pub w: f64,
    /// Offered wait.
    pub w_v: f64,
}

impl TraceRecord {
    pub fn capture(sim: &Simulator) -> Self {
        let c = sim.counts();
        Self {
            time: sim.clock(),
            x: c.x,
            q: c.q,
            z1: c.z1,
            z2: c.z2,
            l: sim.workload(),
            w: sim.head_of_line_wait(),
            w_v: sim.offered_wait(),
        }
    }
}

/// When to snapshot the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordGrid {
    /// At `0, dt, 2dt, ...` up to the horizon (inclusive).
    Every(f64),
    /// At the given times (sorted on use; times past the horizon dropped).
    Times(Vec<f64>),
    /// After every state-changing epoch, plus time 0 and the horizon.
    Events,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub counters: Counters,
    /// Customers in system at the horizon.
    pub final_x: usize,
    pub audit: Option<AuditReport>,
}

impl Trace {
    /// `initial + arrivals == departures + abandonments + in-system`.
    pub fn is_conserved(&self) -> bool {
        let c = &self.counters;
        c.initial + c.arrivals == c.departures + c.abandonments + self.final_x as u64
    }
}

pub const TRACE_HEADER: &str = "t,X,Q,Z1,Z2,L,w,w_v";

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.16e}", x)
}

pub fn write_trace_csv<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.time),
            r.x,
            r.q,
            r.z1,
            r.z2,
            fmt17(r.l),
            fmt17(r.w),
            fmt17(r.w_v)
        )?;
    }
    Ok(())
}

struct EventRecorder<'a, O> {
    records: &'a mut Vec<TraceRecord>,
    inner: &'a mut O,
}

impl<O: Observer> Observer for EventRecorder<'_, O> {
    fn on_exit(&mut self, c: &Customer, kind: crate::des::engine::ExitKind, time: f64) {
        self.inner.on_exit(c, kind, time);
    }
    fn on_service_start(&mut self, c: &Customer, time: f64) {
        self.inner.on_service_start(c, time);
    }
    fn on_epoch(&mut self, sim: &Simulator, kind: EpochKind) {
        if kind != EpochKind::Stale {
            self.records.push(TraceRecord::capture(sim));
        }
        self.inner.on_epoch(sim, kind);
    }
}

/// Feeds arrivals from a source into a simulator in time order.
pub struct Feeder<'a, S: ArrivalSource> {
    source: &'a mut S,
    pending: Option<Customer>,
}

impl<'a, S: ArrivalSource> Feeder<'a, S> {
    pub fn new(source: &'a mut S) -> Self {
        let pending = source.next_arrival();
        Self { source, pending }
    }

    /// Processes every internal event and arrival with time `<= t`.
    pub fn run_until<O: Observer>(&mut self, sim: &mut Simulator, t: f64, obs: &mut O) {
        while let Some(c) = self.pending {
            if c.arrival_time > t {
                break;
            }
            sim.advance_to(c.arrival_time, obs);
            sim.arrive(c, obs);
            self.pending = self.source.next_arrival();
        }
        sim.advance_to(t, obs);
    }
}

/// Drives `sim` with `source` until `horizon`, snapshotting on `grid`.
pub fn run_with<S: ArrivalSource, O: Observer>(
    sim: &mut Simulator,
    source: &mut S,
    horizon: f64,
    grid: &RecordGrid,
    obs: &mut O,
) -> Vec<TraceRecord> {
    let mut records = Vec::new();
    let mut feeder = Feeder::new(source);
    match grid {
        RecordGrid::Events => {
            records.push(TraceRecord::capture(sim));
            let mut rec = EventRecorder {
                records: &mut records,
                inner: obs,
            };
            feeder.run_until(sim, horizon, &mut rec);
            records.push(TraceRecord::capture(sim));
        }
        RecordGrid::Every(_) | RecordGrid::Times(_) => {
            for t in grid_times(grid, horizon) {
                feeder.run_until(sim, t, obs);
                records.push(TraceRecord::capture(sim));
            }
            feeder.run_until(sim, horizon, obs);
        }
    }
    records
}

fn grid_times(grid: &RecordGrid, horizon: f64) -> Vec<f64> {
    match grid {
        RecordGrid::Every(dt) => {
            let k = (horizon / dt + 1e-9).floor() as usize;
            (0..=k).map(|i| (i as f64 * dt).min(horizon)).collect()
        }
        RecordGrid::Times(ts) => {
            let mut v: Vec<f64> = ts
                .iter()
                .copied()
                .filter(|&t| t >= 0.0 && t <= horizon)
                .collect();
            v.sort_by(f64::total_cmp);
            v
        }
        RecordGrid::Events => Vec::new(),
    }
}

/// Simulates one trace from `init` over `[0, horizon]` with Poisson arrivals.
///
/// Streams are keyed by `key` with purposes `"init"` and `"arrivals"`.
pub fn simulate(
    params: &ModelParams,
    init: &InitSpec,
    horizon: f64,
    seed: &SeedSpec,
    key: &StreamKey,
    grid: &RecordGrid,
    audit: bool,
) -> Result<Trace> {
    let mut arrivals = PoissonArrivals::new(*params, seed.stream(&with_purpose(key, "arrivals")));
    simulate_with(params, init, horizon, seed, key, grid, audit, &mut arrivals)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_with<S: ArrivalSource>(
    params: &ModelParams,
    init: &InitSpec,
    horizon: f64,
    seed: &SeedSpec,
    key: &StreamKey,
    grid: &RecordGrid,
    audit: bool,
    arrivals: &mut S,
) -> Result<Trace> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    if let RecordGrid::Every(dt) = grid {
        if !(dt.is_finite() && *dt > 0.0) {
            return Err(invalid(
                "record_step",
                format!("must be positive, got {dt}"),
            ));
        }
    }
    let mut init_rng = seed.stream(&with_purpose(key, "init"));
    let mut sim = Simulator::new(*params, init, &mut init_rng)?.with_audit(audit);
    let records = run_with(&mut sim, arrivals, horizon, grid, &mut ());
    if audit {
        sim.audit_scan();
    }
    Ok(Trace {
        records,
        counters: sim.counters(),
        final_x: sim.x(),
        audit: sim.take_audit(),
    })
}

pub(crate) fn with_purpose(key: &StreamKey, purpose: &str) -> StreamKey {
    StreamKey {
        purpose: if key.purpose.is_empty() {
            purpose.to_string()
        } else {
            format!("{}/{}", key.purpose, purpose)
        },
        ..key.clone()
    }
}
