//! Event-exact simulator for the n-server queue with FIFO service and
//! abandonment.
//!
//! Internal events (phase-1 ends, departures, abandonment deadlines) live in
//! a binary heap ordered by `(time, class, sequence)`. Arrivals are pushed in
//! from outside via [`Simulator::arrive`] after [`Simulator::advance_to`] has
//! consumed every internal event up to the arrival instant, so at equal
//! timestamps the order is departure < abandonment < arrival.
//!
//! Abandonment events are never removed from the heap. When a queued
//! customer enters service its deadline event turns into a tombstone that is
//! recognized (slot freed or reused under another id) and ignored at pop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::des::init::InitSpec;
use crate::error::Result;
use crate::model::{patience_for, CorrelationMode, Customer, ModelParams};
use crate::rng::exp_draw;

/// Id offset for customers present at time 0.
pub const INITIAL_ID_BASE: u64 = 1 << 62;

/// How often (in epochs) the audit recounts `Z1` and the queue by full scan.
const AUDIT_SCAN_PERIOD: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventClass {
    Phase1End = 0,
    Departure = 1,
    Abandonment = 2,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    class: EventClass,
    seq: u64,
    slot: u32,
    id: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.class.cmp(&self.class))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Waiting,
    InService {
        start: f64,
        phase1_end: f64,
        end: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    customer: Customer,
    status: Status,
    live: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Departure,
    Abandonment,
}

/// What one call to [`Simulator::step`] or [`Simulator::arrive`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochKind {
    Arrival,
    Phase1End,
    Departure,
    Abandonment,
    /// A tombstoned deadline; state unchanged.
    Stale,
}

/// Callbacks invoked while the simulator advances.
pub trait Observer {
    /// A customer left the system (departure or abandonment) at `time`.
    fn on_exit(&mut self, _customer: &Customer, _kind: ExitKind, _time: f64) {}
    /// A customer entered service at `time` after waiting `time - arrival`.
    fn on_service_start(&mut self, _customer: &Customer, _time: f64) {}
    /// Called after every processed epoch with the post-event state.
    fn on_epoch(&mut self, _sim: &Simulator, _kind: EpochKind) {}
}

impl Observer for () {}

/// Event counts used for conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub initial: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub abandonments: u64,
    pub service_starts: u64,
}

/// Runtime invariant audit results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epochs: u64,
    pub full_scans: u64,
    /// Violations of `Q = (X-n)^+`, `Z = X ∧ n`, `Z = Z1 + Z2`,
    /// `Z < n ⇒ Q = 0` and the scanned `Z1`/`Q` recounts.
    pub state_violations: u64,
    /// Customers served at or after their deadline, abandoning off their
    /// deadline, or still waiting past it.
    pub deadline_violations: u64,
    /// Departures that do not occur exactly `S` after service start.
    pub service_violations: u64,
    pub first_violation: Option<String>,
}

impl AuditReport {
    pub fn total_violations(&self) -> u64 {
        self.state_violations + self.deadline_violations + self.service_violations
    }

    pub fn merge(&mut self, other: &AuditReport) {
        self.epochs += other.epochs;
        self.full_scans += other.full_scans;
        self.state_violations += other.state_violations;
        self.deadline_violations += other.deadline_violations;
        self.service_violations += other.service_violations;
        if self.first_violation.is_none() {
            self.first_violation.clone_from(&other.first_violation);
        }
    }

    fn record(&mut self, counter: fn(&mut AuditReport) -> &mut u64, msg: impl FnOnce() -> String) {
        *counter(self) += 1;
        if self.first_violation.is_none() {
            let m = msg();
            log::error!("invariant violation: {m}");
            self.first_violation = Some(m);
        }
    }
}

/// Snapshot of the queue observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCounts {
    pub x: usize,
    pub q: usize,
    pub z: usize,
    pub z1: usize,
    pub z2: usize,
}

pub struct Simulator {
    params: ModelParams,
    clock: f64,
    slots: Vec<Slot>,
    free: Vec<u32>,
    queue: VecDeque<(u32, u64)>,
    events: BinaryHeap<Event>,
    seq: u64,
    x: usize,
    q: usize,
    z: usize,
    z1: usize,
    counters: Counters,
    audit: Option<AuditReport>,
}

impl Simulator {
    /// Builds the time-0 state. `rng` supplies the initial customers'
    /// residual service times.
    pub fn new<R: Rng + ?Sized>(params: ModelParams, init: &InitSpec, rng: &mut R) -> Result<Self> {
        init.validate(params.n)?;
        let mut sim = Simulator {
            params,
            clock: 0.0,
            slots: Vec::with_capacity(params.n + 16),
            free: Vec::new(),
            queue: VecDeque::new(),
            events: BinaryHeap::with_capacity(2 * params.n + 16),
            seq: 0,
            x: 0,
            q: 0,
            z: 0,
            z1: 0,
            counters: Counters::default(),
            audit: None,
        };
        let mut next_id = INITIAL_ID_BASE;
        let mut fresh_id = || {
            let id = next_id;
            next_id += 1;
            id
        };
        match init {
            InitSpec::Empty => {}
            InitSpec::Fresh { initial_total } => {
                let served = (*initial_total).min(params.n);
                for _ in 0..served {
                    let s = exp_draw(rng, params.mu);
                    let t = patience_for(rng, &params, s);
                    let c = Customer::new(fresh_id(), 0.0, s, t);
                    sim.place_in_service(c, 0.0, 0.0, s);
                }
                for _ in served..*initial_total {
                    let s = exp_draw(rng, params.mu);
                    let t = patience_for(rng, &params, s);
                    sim.place_in_queue(Customer::new(fresh_id(), 0.0, s, t));
                }
            }
            InitSpec::General {
                in_service,
                queued_waits,
                ..
            } => {
                for spec in in_service {
                    let r = spec.remaining_phase1;
                    let rest = if spec.phase2 {
                        exp_draw(rng, params.mu)
                    } else {
                        0.0
                    };
                    let s = r + rest;
                    let t = patience_for(rng, &params, s);
                    let c = Customer::new(fresh_id(), 0.0, s, t);
                    sim.place_in_service(c, 0.0, r, s);
                }
                for &waited in queued_waits {
                    // Condition on still waiting after `waited` units.
                    let (s, t) = match params.mode {
                        CorrelationMode::Perfect => {
                            let s = params.theta * waited + exp_draw(rng, params.mu);
                            (s, s / params.theta)
                        }
                        CorrelationMode::Independent => {
                            let s = exp_draw(rng, params.mu);
                            (s, waited + exp_draw(rng, params.theta))
                        }
                        CorrelationMode::None => (exp_draw(rng, params.mu), f64::INFINITY),
                    };
                    sim.place_in_queue(Customer::new(fresh_id(), -waited, s, t));
                }
            }
        }
        sim.counters.initial = sim.x as u64;
        Ok(sim)
    }

    /// Turns on runtime invariant checking (counted, never panicking).
    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on.then(AuditReport::default);
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn audit(&self) -> Option<&AuditReport> {
        self.audit.as_ref()
    }

    pub fn take_audit(&mut self) -> Option<AuditReport> {
        self.audit.take()
    }

    pub fn counts(&self) -> StateCounts {
        StateCounts {
            x: self.x,
            q: self.q,
            z: self.z,
            z1: self.z1,
            z2: self.z - self.z1,
        }
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Time of the next pending internal event, tombstones included.
    pub fn next_event_time(&self) -> Option<f64> {
        self.events.peek().map(|e| e.time)
    }

    /// Processes every internal event with time `<= t`, then moves the clock
    /// to `t`.
    pub fn advance_to<O: Observer>(&mut self, t: f64, obs: &mut O) {
        while let Some(ev) = self.events.peek() {
            if ev.time > t {
                break;
            }
            self.step(obs);
        }
        if t > self.clock {
            self.clock = t;
        }
    }

    /// Pops and processes the next internal event.
    pub fn step<O: Observer>(&mut self, obs: &mut O) -> Option<EpochKind> {
        let ev = self.events.pop()?;
        debug_assert!(ev.time >= self.clock);
        self.clock = ev.time;
        let kind = match ev.class {
            EventClass::Phase1End => self.on_phase1_end(ev),
            EventClass::Departure => self.on_departure(ev, obs),
            EventClass::Abandonment => self.on_deadline(ev, obs),
        };
        self.after_epoch(obs, kind);
        Some(kind)
    }

    /// Admits an arrival at the current clock. The caller must have advanced
    /// the simulator to `customer.arrival_time` first.
    pub fn arrive<O: Observer>(&mut self, customer: Customer, obs: &mut O) {
        debug_assert!(customer.arrival_time >= self.clock || self.clock == 0.0);
        self.clock = self.clock.max(customer.arrival_time);
        self.counters.arrivals += 1;
        if self.z < self.params.n {
            debug_assert_eq!(self.q, 0);
            obs.on_service_start(&customer, self.clock);
            let t = self.clock;
            self.place_in_service(customer, t, t, t + customer.service_req);
            self.counters.service_starts += 1;
        } else {
            self.place_in_queue(customer);
        }
        self.after_epoch(obs, EpochKind::Arrival);
    }

    fn alloc(&mut self, customer: Customer, status: Status) -> u32 {
        let slot = Slot {
            customer,
            status,
            live: true,
        };
        match self.free.pop() {
            Some(i) => {
                self.slots[i as usize] = slot;
                i
            }
            None => {
                self.slots.push(slot);
                (self.slots.len() - 1) as u32
            }
        }
    }

    fn push(&mut self, time: f64, class: EventClass, slot: u32, id: u64) {
        self.seq += 1;
        self.events.push(Event {
            time,
            class,
            seq: self.seq,
            slot,
            id,
        });
    }

    fn place_in_service(&mut self, mut c: Customer, start: f64, phase1_end: f64, end: f64) {
        // phase1_end <= end can fail by one rounding when S is barely above theta*w
        let phase1_end = phase1_end.min(end);
        c.service_start = Some(start);
        c.service_end = Some(end);
        let id = c.id;
        let slot = self.alloc(
            c,
            Status::InService {
                start,
                phase1_end,
                end,
            },
        );
        if phase1_end > self.clock {
            self.z1 += 1;
            self.push(phase1_end, EventClass::Phase1End, slot, id);
        }
        self.push(end, EventClass::Departure, slot, id);
        self.x += 1;
        self.z += 1;
    }

    fn place_in_queue(&mut self, c: Customer) {
        let id = c.id;
        let deadline = c.abandon_deadline;
        let slot = self.alloc(c, Status::Waiting);
        self.queue.push_back((slot, id));
        if deadline.is_finite() {
            self.push(deadline, EventClass::Abandonment, slot, id);
        }
        self.x += 1;
        self.q += 1;
    }

    fn is_current(&self, slot: u32, id: u64) -> bool {
        let s = &self.slots[slot as usize];
        s.live && s.customer.id == id
    }

    fn release(&mut self, slot: u32) {
        self.slots[slot as usize].live = false;
        self.free.push(slot);
    }

    fn on_phase1_end(&mut self, ev: Event) -> EpochKind {
        if !self.is_current(ev.slot, ev.id) {
            return EpochKind::Stale;
        }
        self.z1 -= 1;
        EpochKind::Phase1End
    }

    fn on_departure<O: Observer>(&mut self, ev: Event, obs: &mut O) -> EpochKind {
        if !self.is_current(ev.slot, ev.id) {
            return EpochKind::Stale;
        }
        let slot = self.slots[ev.slot as usize];
        if let Some(audit) = self.audit.as_mut() {
            if let Status::InService { start, end, .. } = slot.status {
                let c = slot.customer;
                if ev.time != end || end != start + c.service_req {
                    audit.record(
                        |a| &mut a.service_violations,
                        || {
                            format!(
                                "customer {} departs at {} after start {start} with S={}",
                                c.id, ev.time, c.service_req
                            )
                        },
                    );
                }
            } else {
                audit.record(
                    |a| &mut a.service_violations,
                    || format!("departure of waiting customer {}", ev.id),
                );
            }
        }
        self.release(ev.slot);
        self.x -= 1;
        self.z -= 1;
        self.counters.departures += 1;
        obs.on_exit(&slot.customer, ExitKind::Departure, self.clock);
        self.fill_servers(obs);
        EpochKind::Departure
    }

    fn on_deadline<O: Observer>(&mut self, ev: Event, obs: &mut O) -> EpochKind {
        if !self.is_current(ev.slot, ev.id) {
            return EpochKind::Stale;
        }
        let slot = self.slots[ev.slot as usize];
        if slot.status != Status::Waiting {
            return EpochKind::Stale;
        }
        self.abandon(ev.slot, obs);
        while let Some(&(s, id)) = self.queue.front() {
            if self.is_current(s, id) {
                break;
            }
            self.queue.pop_front();
        }
        EpochKind::Abandonment
    }

    fn abandon<O: Observer>(&mut self, slot: u32, obs: &mut O) {
        let c = self.slots[slot as usize].customer;
        if let Some(audit) = self.audit.as_mut() {
            if self.clock != c.abandon_deadline {
                audit.record(
                    |a| &mut a.deadline_violations,
                    || {
                        format!(
                            "customer {} abandons at {} but deadline is {}",
                            c.id, self.clock, c.abandon_deadline
                        )
                    },
                );
            }
        }
        self.release(slot);
        self.x -= 1;
        self.q -= 1;
        self.counters.abandonments += 1;
        obs.on_exit(&c, ExitKind::Abandonment, self.clock);
    }

    /// Moves head-of-line customers into free servers. A customer whose
    /// deadline is not strictly after the offer instant abandons instead.
    fn fill_servers<O: Observer>(&mut self, obs: &mut O) {
        while self.z < self.params.n {
            let Some((slot, id)) = self.queue.pop_front() else {
                break;
            };
            if !self.is_current(slot, id) {
                continue;
            }
            let c = self.slots[slot as usize].customer;
            if c.abandon_deadline <= self.clock {
                self.abandon(slot, obs);
                continue;
            }
            let now = self.clock;
            let waited = now - c.arrival_time;
            let phase1 = match self.params.mode {
                CorrelationMode::Perfect => self.params.theta * waited,
                _ => 0.0,
            };
            let end = now + c.service_req;
            let phase1_end = (now + phase1).min(end);
            let mut served = c;
            served.service_start = Some(now);
            served.service_end = Some(end);
            self.slots[slot as usize].customer = served;
            self.slots[slot as usize].status = Status::InService {
                start: now,
                phase1_end,
                end,
            };
            if phase1_end > now {
                self.z1 += 1;
                self.push(phase1_end, EventClass::Phase1End, slot, id);
            }
            self.push(end, EventClass::Departure, slot, id);
            self.q -= 1;
            self.z += 1;
            self.counters.service_starts += 1;
            obs.on_service_start(&served, now);
        }
    }

    fn after_epoch<O: Observer>(&mut self, obs: &mut O, kind: EpochKind) {
        let n = self.params.n;
        debug_assert_eq!(self.x, self.z + self.q);
        debug_assert!(self.z <= n && self.z1 <= self.z);
        debug_assert!(self.z == n || self.q == 0);
        if self.audit.is_some() {
            self.audit_epoch();
        }
        obs.on_epoch(self, kind);
    }

    fn audit_epoch(&mut self) {
        let n = self.params.n;
        let (x, q, z, z1) = (self.x, self.q, self.z, self.z1);
        let clock = self.clock;
        let scan = {
            let a = self.audit.as_mut().unwrap();
            a.epochs += 1;
            let ok = x == z + q
                && q == x.saturating_sub(n)
                && z == x.min(n)
                && z1 <= z
                && (z == n || q == 0);
            if !ok {
                a.record(
                    |a| &mut a.state_violations,
                    || format!("t={clock}: X={x} Q={q} Z={z} Z1={z1} n={n}"),
                );
            }
            a.epochs.is_multiple_of(AUDIT_SCAN_PERIOD)
        };
        if scan {
            self.audit_scan();
        }
    }

    /// Full recount of `Z1` and the queue, plus an overdue-deadline sweep.
    pub fn audit_scan(&mut self) {
        let clock = self.clock;
        let mut z1 = 0usize;
        let mut in_service = 0usize;
        let mut waiting = 0usize;
        let mut overdue = 0usize;
        for s in self.slots.iter().filter(|s| s.live) {
            match s.status {
                Status::InService { phase1_end, .. } => {
                    in_service += 1;
                    if clock < phase1_end {
                        z1 += 1;
                    }
                }
                Status::Waiting => {
                    waiting += 1;
                    if s.customer.abandon_deadline < clock {
                        overdue += 1;
                    }
                }
            }
        }
        let queued_live = self
            .queue
            .iter()
            .filter(|&&(s, id)| self.is_current(s, id))
            .count();
        let (sz1, sz, sq) = (self.z1, self.z, self.q);
        let Some(a) = self.audit.as_mut() else {
            return;
        };
        a.full_scans += 1;
        if z1 != sz1 || in_service != sz || waiting != sq || queued_live != sq {
            a.record(
                |a| &mut a.state_violations,
                || format!("t={clock}: scanned Z1={z1} Z={in_service} Q={waiting}/{queued_live} vs counters {sz1}/{sz}/{sq}"),
            );
        }
        if overdue > 0 {
            a.record(
                |a| &mut a.deadline_violations,
                || format!("t={clock}: {overdue} waiting customers are past their deadline"),
            );
        }
    }

    /// `L = Σ remaining phase-1 time + Σ elapsed queue wait`.
    pub fn workload(&self) -> f64 {
        let clock = self.clock;
        let mut l = 0.0;
        for s in self.slots.iter().filter(|s| s.live) {
            match s.status {
                Status::InService { phase1_end, .. } if phase1_end > clock => {
                    l += phase1_end - clock
                }
                Status::Waiting => l += clock - s.customer.arrival_time,
                _ => {}
            }
        }
        l
    }

    /// Elapsed wait of the head-of-line customer, 0 with an empty queue.
    pub fn head_of_line_wait(&self) -> f64 {
        self.queue
            .iter()
            .find(|&&(s, id)| self.is_current(s, id))
            .map_or(0.0, |&(s, _)| {
                self.clock - self.slots[s as usize].customer.arrival_time
            })
    }

    /// Time an infinitely patient customer arriving now would wait: replay
    /// the known service ends and the queue with arrivals switched off.
    pub fn offered_wait(&self) -> f64 {
        if self.z < self.params.n {
            return 0.0;
        }
        let ends: Vec<f64> = self
            .slots
            .iter()
            .filter(|s| s.live)
            .filter_map(|s| match s.status {
                Status::InService { end, .. } => Some(end),
                Status::Waiting => None,
            })
            .collect();
        let queued: Vec<Customer> = self
            .queue
            .iter()
            .filter(|&&(s, id)| self.is_current(s, id))
            .map(|&(s, _)| self.slots[s as usize].customer)
            .collect();
        replay_offered_wait(self.clock, &ends, &queued)
    }

    /// Customers currently waiting, head first.
    pub fn queued_customers(&self) -> Vec<Customer> {
        self.queue
            .iter()
            .filter(|&&(s, id)| self.is_current(s, id))
            .map(|&(s, _)| self.slots[s as usize].customer)
            .collect()
    }

    /// Customers currently in service with their phase-1 end times.
    pub fn in_service(&self) -> Vec<(Customer, f64)> {
        self.slots
            .iter()
            .filter(|s| s.live)
            .filter_map(|s| match s.status {
                Status::InService { phase1_end, .. } => Some((s.customer, phase1_end)),
                Status::Waiting => None,
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) struct MinTime(pub(crate) f64);

impl Eq for MinTime {}

impl PartialOrd for MinTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MinTime {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Offered wait from `clock` given the busy servers' end times and the
/// queue (head first). Requires `ends.len() == n` (all servers busy).
pub fn replay_offered_wait(clock: f64, ends: &[f64], queued: &[Customer]) -> f64 {
    let mut free: BinaryHeap<MinTime> = ends.iter().map(|&e| MinTime(e)).collect();
    if free.is_empty() {
        return 0.0;
    }
    for c in queued {
        let MinTime(t) = *free.peek().unwrap();
        if c.abandon_deadline > t {
            free.pop();
            free.push(MinTime(t + c.service_req));
        }
    }
    (free.peek().unwrap().0 - clock).max(0.0)
}
