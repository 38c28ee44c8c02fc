//! Steady-state sampling: one long run from an empty system, a burn-in, then
//! equally spaced snapshots. Batch means supply the standard error.

use serde::{Deserialize, Serialize};

use crate::des::engine::{AuditReport, EpochKind, Observer, Simulator};
use crate::des::init::InitSpec;
use crate::des::trace::{with_purpose, Feeder, PoissonArrivals};
use crate::error::{invalid, Error, Result};
use crate::model::{quarter_root, ModelParams};
use crate::rng::{SeedSpec, StreamKey};
use crate::stats::batch_means;

/// Default burn-in multiplier `c` in `c * n^{1/4}`.
pub const DEFAULT_BURN_IN_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    X,
    Q,
    L,
    Wv,
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::X => "X",
            Observable::Q => "Q",
            Observable::L => "L",
            Observable::Wv => "w_v",
        }
    }

    fn read(&self, sim: &Simulator) -> f64 {
        match self {
            Observable::X => sim.x() as f64,
            Observable::Q => sim.q() as f64,
            Observable::L => sim.workload(),
            Observable::Wv => sim.offered_wait(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Real time discarded before the first snapshot.
    pub burn_in: f64,
    /// Real time between snapshots.
    pub spacing: f64,
    pub samples: usize,
    /// Number of batches for the batch-means standard error.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Count runtime invariant violations.
    #[serde(default)]
    pub audit: bool,
}

fn default_batches() -> usize {
    20
}

impl EstimatorConfig {
    /// Burn-in `c * n^{1/4}` and spacing `n^{1/4}` (one LOF time unit).
    pub fn lof_defaults(n: usize, samples: usize) -> Self {
        Self::scaled(n, samples, DEFAULT_BURN_IN_FACTOR, 1.0)
    }

    pub fn scaled(n: usize, samples: usize, burn_in_factor: f64, spacing_factor: f64) -> Self {
        let q = quarter_root(n);
        Self {
            burn_in: burn_in_factor * q,
            spacing: spacing_factor * q,
            samples,
            batches: default_batches(),
            audit: cfg!(debug_assertions),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples", "at least one sample is required"));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(invalid(
                "spacing",
                format!("must be positive, got {}", self.spacing),
            ));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(invalid(
                "burn_in",
                format!("must be nonnegative, got {}", self.burn_in),
            ));
        }
        if self.batches == 0 {
            return Err(invalid("batches", "at least one batch is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySample {
    pub observable: Observable,
    pub samples: Vec<f64>,
    pub burn_in: f64,
    pub spacing: f64,
    pub n: usize,
    pub params: ModelParams,
    pub mean: f64,
    /// Batch-means standard error of `mean`.
    pub std_error: f64,
}

impl StationarySample {
    fn from_values(
        observable: Observable,
        samples: Vec<f64>,
        params: &ModelParams,
        cfg: &EstimatorConfig,
    ) -> Self {
        let (mean, std_error) = batch_means(&samples, cfg.batches);
        Self {
            observable,
            samples,
            burn_in: cfg.burn_in,
            spacing: cfg.spacing,
            n: params.n,
            params: *params,
            mean,
            std_error,
        }
    }

    /// Mean and batch-means standard error of `f(sample)`.
    pub fn mean_of(&self, batches: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let v: Vec<f64> = self.samples.iter().map(|&x| f(x)).collect();
        batch_means(&v, batches)
    }
}

/// Several observables recorded at the same snapshots of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRun {
    pub samples: Vec<StationarySample>,
    pub audit: Option<AuditReport>,
    pub conserved: bool,
}

impl StationaryRun {
    pub fn get(&self, obs: Observable) -> Option<&StationarySample> {
        self.samples.iter().find(|s| s.observable == obs)
    }
}

/// Samples a single observable; see [`stationary_run`].
pub fn stationary_sample(
    params: &ModelParams,
    config: &EstimatorConfig,
    observable: Observable,
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<StationarySample> {
    let mut run = stationary_run(params, config, &[observable], seed, key)?;
    Ok(run.samples.remove(0))
}

/// Runs from an empty system, discards `burn_in`, then snapshots every
/// `spacing` time units until `samples` snapshots are taken.
pub fn stationary_run(
    params: &ModelParams,
    config: &EstimatorConfig,
    observables: &[Observable],
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<StationaryRun> {
    config.validate()?;
    if observables.is_empty() {
        return Err(invalid("observables", "nothing to record"));
    }
    if !params.is_ergodic() {
        return Err(Error::NotErgodic(format!(
            "Erlang-C with lambda = {} >= n = {}",
            params.lambda_n, params.n
        )));
    }
    let mut rng = seed.stream(&with_purpose(key, "init"));
    let mut sim = Simulator::new(*params, &InitSpec::Empty, &mut rng)?.with_audit(config.audit);
    let mut arrivals = PoissonArrivals::new(*params, seed.stream(&with_purpose(key, "arrivals")));
    let mut feeder = Feeder::new(&mut arrivals);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(config.samples); observables.len()];
    for k in 0..config.samples {
        let t = config.burn_in + k as f64 * config.spacing;
        feeder.run_until(&mut sim, t, &mut ());
        for (v, o) in values.iter_mut().zip(observables) {
            v.push(o.read(&sim));
        }
    }
    if config.audit {
        sim.audit_scan();
    }
    let c = sim.counters();
    let conserved = c.initial + c.arrivals == c.departures + c.abandonments + sim.x() as u64;
    Ok(StationaryRun {
        samples: observables
            .iter()
            .zip(values)
            .map(|(&o, v)| StationarySample::from_values(o, v, params, config))
            .collect(),
        audit: sim.take_audit(),
        conserved,
    })
}

/// Ratio estimate of a time average over regeneration cycles at the empty
/// state. Practical only when emptying is frequent (small n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegenerativeEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub cycles: usize,
}

struct CycleObserver {
    observable: Observable,
    last_time: f64,
    last_value: f64,
    area: f64,
    cycle_start: f64,
    cycles: Vec<(f64, f64)>,
}

impl Observer for CycleObserver {
    fn on_epoch(&mut self, sim: &Simulator, kind: EpochKind) {
        if kind == EpochKind::Stale {
            return;
        }
        let now = sim.clock();
        self.area += self.last_value * (now - self.last_time);
        self.last_time = now;
        self.last_value = match self.observable {
            Observable::Q => sim.q() as f64,
            _ => sim.x() as f64,
        };
        if sim.x() == 0 {
            self.cycles.push((self.area, now - self.cycle_start));
            self.area = 0.0;
            self.cycle_start = now;
        }
    }
}

/// Time-average of `X` or `Q` estimated from `cycles` regeneration cycles.
pub fn regenerative_estimate(
    params: &ModelParams,
    observable: Observable,
    cycles: usize,
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<RegenerativeEstimate> {
    if !matches!(observable, Observable::X | Observable::Q) {
        return Err(invalid(
            "observable",
            "regenerative estimation supports X and Q",
        ));
    }
    if cycles < 2 {
        return Err(invalid("cycles", "at least two cycles are required"));
    }
    if !params.is_ergodic() {
        return Err(Error::NotErgodic("Erlang-C with lambda >= n".into()));
    }
    let mut rng = seed.stream(&with_purpose(key, "init"));
    let mut sim = Simulator::new(*params, &InitSpec::Empty, &mut rng)?;
    let mut arrivals = PoissonArrivals::new(*params, seed.stream(&with_purpose(key, "arrivals")));
    let mut obs = CycleObserver {
        observable,
        last_time: 0.0,
        last_value: 0.0,
        area: 0.0,
        cycle_start: 0.0,
        cycles: Vec::with_capacity(cycles),
    };
    let mut feeder = Feeder::new(&mut arrivals);
    // advance in chunks of ~64 mean interarrival times
    let chunk = 64.0 / params.lambda_n;
    let mut t = 0.0;
    while obs.cycles.len() < cycles {
        t += chunk;
        feeder.run_until(&mut sim, t, &mut obs);
    }
    obs.cycles.truncate(cycles);
    let k = cycles as f64;
    let sum_y: f64 = obs.cycles.iter().map(|c| c.0).sum();
    let sum_tau: f64 = obs.cycles.iter().map(|c| c.1).sum();
    let r = sum_y / sum_tau;
    let mean_tau = sum_tau / k;
    let var = obs
        .cycles
        .iter()
        .map(|&(y, tau)| (y - r * tau).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    Ok(RegenerativeEstimate {
        mean: r,
        std_error: var.sqrt() / (mean_tau * k.sqrt()),
        cycles,
    })
}
