//! n-sweeps that compare simulation estimates with the limit models.
//!
//! Stationary experiments are split in two steps: [`collect_stationary`]
//! simulates every `(n, replication)` pair once, recording `X`, `Q` and `L`
//! at the same snapshots, and the `analyze_*` functions turn the collected
//! samples into a [`FitReport`]. Several analyses can therefore share one
//! set of runs. The `run_*` functions do both steps for a single plan.
//!
//! Replications run on the current rayon pool; each owns a stream keyed by
//! `(n, replication)` and results are gathered in index order, so output does
//! not depend on the thread count.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::des::{
    fmt17, simulate, stationary_run, write_samples_csv, AuditReport, EstimatorConfig, InitSpec,
    Observable, RecordGrid, StationaryRun,
};
use crate::error::{invalid, Error, Result};
use crate::limits::{hw_stationary, lof_closed, x_star, OdeSpec};
use crate::model::{diffusion_value, lof_value, quarter_root, CorrelationMode, ModelParams};
use crate::rng::{SeedSpec, StreamKey};
use crate::stats::{batch_means, ks_critical, ks_statistic, loglog_slope, SlopeFit};

/// Two-sided normal quantile for the 95% intervals reported everywhere.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DiffusionStationary,
    LofFixedPoint,
    LofTransient,
    DiffusionDivergence,
    WorkloadScaling,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DiffusionStationary => "diffusion_stationary",
            Self::LofFixedPoint => "lof_fixed_point",
            Self::LofTransient => "lof_transient",
            Self::DiffusionDivergence => "diffusion_divergence",
            Self::WorkloadScaling => "workload_scaling",
        }
    }
}

/// Steady-state sampling settings in units of `n^{1/4}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorPlan {
    pub burn_in_factor: f64,
    pub spacing_factor: f64,
    /// Snapshots per `n`, split evenly over the replications.
    pub samples: usize,
    pub batches: usize,
    /// Count invariant violations; defaults to on in debug builds.
    pub audit: Option<bool>,
}

impl Default for EstimatorPlan {
    fn default() -> Self {
        Self {
            burn_in_factor: crate::des::DEFAULT_BURN_IN_FACTOR,
            spacing_factor: 1.0,
            samples: 2000,
            batches: 20,
            audit: None,
        }
    }
}

impl EstimatorPlan {
    fn config(&self, n: usize, replications: usize) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::scaled(
            n,
            self.samples.div_ceil(replications),
            self.burn_in_factor,
            self.spacing_factor,
        );
        cfg.batches = self.batches;
        if let Some(a) = self.audit {
            cfg.audit = a;
        }
        cfg
    }
}

fn default_mode() -> CorrelationMode {
    CorrelationMode::Perfect
}

fn default_replications() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub n_values: Vec<usize>,
    pub beta: f64,
    pub theta: f64,
    #[serde(default = "default_mode")]
    pub mode: CorrelationMode,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub estimator: EstimatorPlan,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Scaled initial excess for `lof_transient`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Scaled horizon for `lof_transient` (default 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Scaled grid step for `lof_transient` (default 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Level `M` for `diffusion_divergence`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Verdict tolerance: relative error for `lof_fixed_point` (default
    /// 0.10), sup-gap for `lof_transient` (default 0.15).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ExperimentPlan {
    /// A plan with defaults for every optional field.
    pub fn new(
        kind: ExperimentKind,
        n_values: Vec<usize>,
        beta: f64,
        theta: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            n_values,
            beta,
            theta,
            mode: default_mode(),
            replications: 1,
            estimator: EstimatorPlan::default(),
            seed,
            output: None,
            x0: None,
            horizon: None,
            grid_step: None,
            threshold: None,
            tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(invalid("n_values", "at least one system size is required"));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("n_values", "must be strictly increasing"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        for &n in &self.n_values {
            ModelParams::new(n, self.beta, self.theta, self.mode)?;
        }
        let lof = matches!(
            self.kind,
            ExperimentKind::LofFixedPoint | ExperimentKind::LofTransient
        );
        if lof && self.beta > 0.0 {
            return Err(invalid(
                "beta",
                format!("{} needs beta <= 0, got {}", self.kind.name(), self.beta),
            ));
        }
        match self.kind {
            ExperimentKind::DiffusionStationary if self.beta <= 0.0 => Err(invalid(
                "beta",
                format!("diffusion_stationary needs beta > 0, got {}", self.beta),
            )),
            ExperimentKind::DiffusionDivergence => {
                divergence_precondition(self.beta, self.theta)?;
                threshold(self).map(|_| ())
            }
            ExperimentKind::LofTransient => {
                let x0 = self
                    .x0
                    .ok_or_else(|| invalid("x0", "lof_transient needs x0"))?;
                OdeSpec::new(self.beta, self.theta, x0)?;
                let (h, dt) = (self.transient_horizon(), self.transient_step());
                if !(h > 0.0 && dt > 0.0 && dt <= h) {
                    return Err(invalid("horizon", "need 0 < grid_step <= horizon"));
                }
                Ok(())
            }
            _ => {
                let cfg = self.estimator.config(self.n_values[0], self.replications);
                cfg.validate()
            }
        }
    }

    fn transient_horizon(&self) -> f64 {
        self.horizon.unwrap_or(3.0)
    }

    fn transient_step(&self) -> f64 {
        self.grid_step.unwrap_or(0.05)
    }

    fn ensure_kind(&self, kind: ExperimentKind) -> Result<()> {
        if self.kind != kind {
            return Err(invalid(
                "kind",
                format!(
                    "plan is `{}` but `{}` was requested",
                    self.kind.name(),
                    kind.name()
                ),
            ));
        }
        Ok(())
    }
}

fn divergence_precondition(beta: f64, theta: f64) -> Result<()> {
    if beta < 0.0 || (beta == 0.0 && theta < 1.0) {
        Ok(())
    } else {
        Err(invalid(
            "beta",
            format!("divergence needs beta < 0, or beta = 0 with theta < 1; got beta = {beta}, theta = {theta}"),
        ))
    }
}

fn threshold(plan: &ExperimentPlan) -> Result<f64> {
    match plan.threshold {
        Some(m) if m.is_finite() && m > 0.0 => Ok(m),
        Some(m) => Err(invalid("threshold", format!("must be positive, got {m}"))),
        None => Err(invalid(
            "threshold",
            "diffusion_divergence needs a threshold M",
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub reference: f64,
}

/// One system size's row of a [`FitReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub samples: usize,
    /// What `estimate` measures, e.g. `E[Q]/n^(3/4)`.
    pub quantity: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unscaled_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_critical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
}

impl PerN {
    fn new(n: usize, samples: usize, quantity: &str, (estimate, std_error): (f64, f64)) -> Self {
        Self {
            n,
            samples,
            quantity: quantity.to_string(),
            estimate,
            std_error,
            ci_low: estimate - Z95 * std_error,
            ci_high: estimate + Z95 * std_error,
            unscaled_mean: None,
            reference: None,
            ks: None,
            ks_critical: None,
            sup_gap: None,
            curve: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: ExperimentKind,
    pub params: ExperimentPlan,
    pub ci_method: String,
    pub per_n: Vec<PerN>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<SlopeFit>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
}

impl FitReport {
    fn new(kind: ExperimentKind, plan: &ExperimentPlan, ci_method: String) -> Self {
        Self {
            kind,
            params: plan.clone(),
            ci_method,
            per_n: Vec::new(),
            fit: None,
            verdicts: Vec::new(),
            audit: None,
        }
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn row(&self, n: usize) -> Option<&PerN> {
        self.per_n.iter().find(|r| r.n == n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Stationary samples of one system size, replications concatenated in
/// index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeData {
    pub n: usize,
    pub params: ModelParams,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub audit: Option<AuditReport>,
    pub conserved: bool,
}

impl SizeData {
    fn merge(n: usize, params: ModelParams, runs: Vec<StationaryRun>) -> Self {
        let mut out = Self {
            n,
            params,
            x: Vec::new(),
            q: Vec::new(),
            l: Vec::new(),
            audit: None,
            conserved: true,
        };
        for run in runs {
            for s in run.samples {
                match s.observable {
                    Observable::X => out.x.extend(s.samples),
                    Observable::Q => out.q.extend(s.samples),
                    Observable::L => out.l.extend(s.samples),
                    Observable::Wv => {}
                }
            }
            out.conserved &= run.conserved;
            if let Some(a) = run.audit {
                out.audit.get_or_insert_with(AuditReport::default).merge(&a);
            }
        }
        out
    }

    /// `Q = (X - n)^+` snapshot by snapshot.
    pub fn queue_identity_holds(&self) -> bool {
        let n = self.n as f64;
        self.x
            .iter()
            .zip(&self.q)
            .all(|(&x, &q)| q == (x - n).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryData {
    pub plan: ExperimentPlan,
    pub sizes: Vec<SizeData>,
}

impl StationaryData {
    pub fn size(&self, n: usize) -> Option<&SizeData> {
        self.sizes.iter().find(|s| s.n == n)
    }

    pub fn audit(&self) -> Option<AuditReport> {
        let mut total: Option<AuditReport> = None;
        for a in self.sizes.iter().filter_map(|s| s.audit.as_ref()) {
            total.get_or_insert_with(AuditReport::default).merge(a);
        }
        total
    }

    fn batches(&self) -> usize {
        self.plan.estimator.batches
    }

    fn ci_method(&self) -> String {
        format!(
            "batch means over {} contiguous batches of the pooled snapshots, normal 95%",
            self.batches()
        )
    }
}

/// Simulates every `(n, replication)` pair of `plan` from an empty system
/// and records `X`, `Q` and `L` at the same snapshots.
pub fn collect_stationary(plan: &ExperimentPlan) -> Result<StationaryData> {
    plan.validate()?;
    let seed = SeedSpec::new(plan.seed);
    let jobs: Vec<(usize, usize)> = plan
        .n_values
        .iter()
        .flat_map(|&n| (0..plan.replications).map(move |r| (n, r)))
        .collect();
    let runs: Vec<StationaryRun> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let params = ModelParams::new(n, plan.beta, plan.theta, plan.mode)?;
            let cfg = plan.estimator.config(n, plan.replications);
            let key = StreamKey::new("stationary", n as u64, rep as u64, "");
            log::debug!(
                "stationary n = {n}, replication {rep}: {} snapshots",
                cfg.samples
            );
            stationary_run(
                &params,
                &cfg,
                &[Observable::X, Observable::Q, Observable::L],
                &seed,
                &key,
            )
        })
        .collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    let sizes = plan
        .n_values
        .iter()
        .map(|&n| {
            let params = ModelParams::new(n, plan.beta, plan.theta, plan.mode).expect("validated");
            SizeData::merge(n, params, runs.by_ref().take(plan.replications).collect())
        })
        .collect();
    Ok(StationaryData {
        plan: plan.clone(),
        sizes,
    })
}

fn invariant_verdicts(report: &mut FitReport, data: &StationaryData) {
    let conserved = data.sizes.iter().all(|s| s.conserved);
    report.verdicts.push(Verdict::new(
        "event_conservation",
        conserved,
        "arrivals = exits + in system".into(),
    ));
    let identity = data.sizes.iter().all(SizeData::queue_identity_holds);
    report.verdicts.push(Verdict::new(
        "scaled_queue_identity",
        identity,
        "Q = (X - n)^+ at every snapshot".into(),
    ));
    if let Some(a) = data.audit() {
        report.verdicts.push(Verdict::new(
            "no_invariant_violations",
            a.total_violations() == 0,
            format!(
                "{} violations over {} epochs",
                a.total_violations(),
                a.epochs
            ),
        ));
        report.audit = Some(a);
    }
    let split: Vec<(usize, f64)> = data
        .sizes
        .iter()
        .map(|s| {
            (
                s.n,
                split_half_z(&s.x, data.plan.replications, data.batches()),
            )
        })
        .collect();
    report.verdicts.push(Verdict::new(
        "burn_in_split_half",
        split.iter().all(|&(_, z)| z.abs() <= SPLIT_HALF_Z),
        split
            .iter()
            .map(|(n, z)| format!("n={n}: z={z:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
            + &format!(" (first vs second half of each replication, |z| <= {SPLIT_HALF_Z})"),
    ));
}

/// Drift left over from the burn-in shows up as disagreement between the
/// early and late halves of each replication.
const SPLIT_HALF_Z: f64 = 4.0;

fn split_half_z(x: &[f64], replications: usize, batches: usize) -> f64 {
    let per = x.len() / replications.max(1);
    if per < 4 {
        return 0.0;
    }
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for rep in x.chunks(per) {
        let (a, b) = rep.split_at(rep.len() / 2);
        early.extend_from_slice(a);
        late.extend_from_slice(b);
    }
    let k = (batches / 2).clamp(2, early.len().min(late.len()));
    let (m1, s1) = batch_means(&early, k);
    let (m2, s2) = batch_means(&late, k);
    let se = s1.hypot(s2);
    if se > 0.0 {
        (m2 - m1) / se
    } else if m1 == m2 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn need(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {what} samples were collected"
        )));
    }
    Ok(())
}

/// KS distance of `(X - n)/sqrt(n)` to the stationary law of the Erlang-C
/// diffusion, per `n`. The trend verdict allows the 95% one-sample KS
/// critical value of the larger `n` as slack.
pub fn analyze_diffusion_stationary(data: &StationaryData) -> Result<FitReport> {
    let plan = &data.plan;
    let law = hw_stationary(plan.beta)?;
    let mut report = FitReport::new(ExperimentKind::DiffusionStationary, plan, data.ci_method());
    for s in &data.sizes {
        need(&s.x, "X")?;
        let scaled: Vec<f64> = s.x.iter().map(|&x| diffusion_value(x, s.n)).collect();
        let mut row = PerN::new(
            s.n,
            scaled.len(),
            "E[(X-n)/sqrt(n)]",
            batch_means(&scaled, data.batches()),
        );
        row.reference = Some(law.mean());
        row.ks = Some(ks_statistic(&scaled, |x| law.cdf(x))?);
        row.ks_critical = Some(ks_critical(scaled.len(), 0.05));
        report.per_n.push(row);
    }
    let trend = report
        .per_n
        .windows(2)
        .all(|w| w[1].ks.unwrap() <= w[0].ks.unwrap() + w[1].ks_critical.unwrap());
    let ks: Vec<String> = report
        .per_n
        .iter()
        .map(|r| format!("{:.4}", r.ks.unwrap()))
        .collect();
    report.verdicts.push(Verdict::new(
        "ks_nonincreasing",
        trend,
        format!(
            "KS by n: [{}], slack = 95% KS critical value",
            ks.join(", ")
        ),
    ));
    invariant_verdicts(&mut report, data);
    Ok(report)
}

/// `E[Q]/n^{3/4}` per `n` against `x*`, and the log-log slope of `E[Q]`.
pub fn analyze_lof_fixed_point(data: &StationaryData) -> Result<FitReport> {
    let plan = &data.plan;
    let xs = x_star(plan.beta, plan.theta)?;
    let tol = plan.tolerance.unwrap_or(0.10);
    let mut report = FitReport::new(ExperimentKind::LofFixedPoint, plan, data.ci_method());
    for s in &data.sizes {
        need(&s.q, "Q")?;
        let scale = s.n as f64 / quarter_root(s.n);
        let scaled: Vec<f64> = s.q.iter().map(|&q| q / scale).collect();
        let mut row = PerN::new(
            s.n,
            scaled.len(),
            "E[Q]/n^(3/4)",
            batch_means(&scaled, data.batches()),
        );
        row.unscaled_mean = Some(row.estimate * scale);
        row.reference = Some(xs);
        report.per_n.push(row);
    }
    let last = report.per_n.last().unwrap();
    if xs > 0.0 {
        let rel = (last.estimate - xs).abs() / xs;
        let band = (xs * (1.0 - tol), xs * (1.0 + tol));
        let ci_ok = (last.ci_low <= xs && xs <= last.ci_high)
            || (last.ci_low >= band.0 && last.ci_high <= band.1);
        report.verdicts.push(Verdict::new(
            "fixed_point_within_tolerance",
            rel <= tol && ci_ok,
            format!(
                "n = {}: estimate {:.4} [{:.4}, {:.4}] vs x* = {xs:.4}, relative error {rel:.4}",
                last.n, last.estimate, last.ci_low, last.ci_high
            ),
        ));
    } else {
        let decreasing = report
            .per_n
            .windows(2)
            .all(|w| w[1].estimate <= w[0].estimate);
        report.verdicts.push(Verdict::new(
            "vanishing_toward_zero",
            decreasing,
            "x* = 0: scaled mean queue should shrink with n".into(),
        ));
    }
    if report.per_n.len() >= 2 && report.per_n.iter().all(|r| r.unscaled_mean.unwrap() > 0.0) {
        let pts: Vec<(f64, f64)> = report
            .per_n
            .iter()
            .map(|r| (r.n as f64, r.unscaled_mean.unwrap()))
            .collect();
        let fit = loglog_slope(&pts)?;
        if xs > 0.0 {
            report.verdicts.push(Verdict::new(
                "slope_near_three_quarters",
                (0.70..=0.80).contains(&fit.slope),
                format!(
                    "log E[Q] vs log n slope {:.4} ± {:.4}",
                    fit.slope, fit.slope_se
                ),
            ));
        }
        report.fit = Some(fit);
    }
    invariant_verdicts(&mut report, data);
    Ok(report)
}

/// `P((X - n)/sqrt(n) > M)` per `n`.
pub fn analyze_divergence(data: &StationaryData) -> Result<FitReport> {
    let plan = &data.plan;
    divergence_precondition(plan.beta, plan.theta)?;
    let m = threshold(plan)?;
    let mut report = FitReport::new(ExperimentKind::DiffusionDivergence, plan, data.ci_method());
    for s in &data.sizes {
        need(&s.x, "X")?;
        let ind: Vec<f64> =
            s.x.iter()
                .map(|&x| {
                    if diffusion_value(x, s.n) > m {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
        report.per_n.push(PerN::new(
            s.n,
            ind.len(),
            "P((X-n)/sqrt(n) > M)",
            batch_means(&ind, data.batches()),
        ));
    }
    let inc = report
        .per_n
        .windows(2)
        .all(|w| w[1].estimate > w[0].estimate);
    let ps: Vec<String> = report
        .per_n
        .iter()
        .map(|r| format!("{:.4}", r.estimate))
        .collect();
    report.verdicts.push(Verdict::new(
        "increasing_in_n",
        inc,
        format!("M = {m}: [{}]", ps.join(", ")),
    ));
    invariant_verdicts(&mut report, data);
    Ok(report)
}

/// `E[L]` per `n`. For `beta <= 0` the estimate is `E[L]/sqrt(n)` and the
/// verdict asks consecutive ratios to stay in `[0.5, 2]`; for `beta > 0` it
/// is `E[L]` itself and the verdict asks that no step up exceeds the 95%
/// interval of the difference.
pub fn analyze_workload(data: &StationaryData) -> Result<FitReport> {
    let plan = &data.plan;
    let mut report = FitReport::new(ExperimentKind::WorkloadScaling, plan, data.ci_method());
    let sqrt_scaled = plan.beta <= 0.0;
    for s in &data.sizes {
        need(&s.l, "L")?;
        let (m, se) = batch_means(&s.l, data.batches());
        let row = if sqrt_scaled {
            let r = (s.n as f64).sqrt();
            let mut row = PerN::new(s.n, s.l.len(), "E[L]/sqrt(n)", (m / r, se / r));
            row.unscaled_mean = Some(m);
            row
        } else {
            PerN::new(s.n, s.l.len(), "E[L]", (m, se))
        };
        report.per_n.push(row);
    }
    if sqrt_scaled {
        let ratios: Vec<f64> = report
            .per_n
            .windows(2)
            .map(|w| w[1].estimate / w[0].estimate)
            .collect();
        report.verdicts.push(Verdict::new(
            "sqrt_n_ratios_bounded",
            ratios.iter().all(|r| (0.5..=2.0).contains(r)),
            format!("consecutive ratios {ratios:.4?}"),
        ));
    } else {
        let steps: Vec<(f64, f64)> = report
            .per_n
            .windows(2)
            .map(|w| {
                let d = w[1].estimate - w[0].estimate;
                (d, Z95 * w[0].std_error.hypot(w[1].std_error))
            })
            .collect();
        report.verdicts.push(Verdict::new(
            "no_increasing_trend",
            steps.iter().all(|(d, ci)| d <= ci),
            format!("(step, 95% half-width) {steps:.4?}"),
        ));
    }
    invariant_verdicts(&mut report, data);
    Ok(report)
}

pub fn run_diffusion_stationary(plan: &ExperimentPlan) -> Result<(FitReport, StationaryData)> {
    plan.ensure_kind(ExperimentKind::DiffusionStationary)?;
    let data = collect_stationary(plan)?;
    Ok((analyze_diffusion_stationary(&data)?, data))
}

pub fn run_lof_fixed_point(plan: &ExperimentPlan) -> Result<(FitReport, StationaryData)> {
    plan.ensure_kind(ExperimentKind::LofFixedPoint)?;
    let data = collect_stationary(plan)?;
    Ok((analyze_lof_fixed_point(&data)?, data))
}

pub fn run_diffusion_divergence(plan: &ExperimentPlan) -> Result<(FitReport, StationaryData)> {
    plan.ensure_kind(ExperimentKind::DiffusionDivergence)?;
    let data = collect_stationary(plan)?;
    Ok((analyze_divergence(&data)?, data))
}

pub fn run_workload_scaling(plan: &ExperimentPlan) -> Result<(FitReport, StationaryData)> {
    plan.ensure_kind(ExperimentKind::WorkloadScaling)?;
    let data = collect_stationary(plan)?;
    Ok((analyze_workload(&data)?, data))
}

/// Averages `replications` LOF-scaled paths started from a fresh state with
/// `X(0) = n + round(x0 n^{3/4})` and compares the mean with the closed-form
/// fluid path on the grid `0, dt, ..., T` (scaled time).
pub fn run_lof_transient(plan: &ExperimentPlan) -> Result<FitReport> {
    plan.ensure_kind(ExperimentKind::LofTransient)?;
    plan.validate()?;
    let x0 = plan.x0.expect("validated");
    let spec = OdeSpec::new(plan.beta, plan.theta, x0)?;
    let (horizon, dt) = (plan.transient_horizon(), plan.transient_step());
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| (i as f64 * dt).min(horizon)).collect();
    let audit = plan.estimator.audit.unwrap_or(cfg!(debug_assertions));
    let seed = SeedSpec::new(plan.seed);
    let r = plan.replications;
    let mut report = FitReport::new(
        ExperimentKind::LofTransient,
        plan,
        format!("mean over {r} independent replications, normal 95% from the replication spread"),
    );
    let mut total_audit: Option<AuditReport> = None;
    let mut conserved = true;
    for &n in &plan.n_values {
        let params = ModelParams::new(n, plan.beta, plan.theta, plan.mode)?;
        let q = quarter_root(n);
        let initial_total = n + (x0 * q * q * q).round() as usize;
        let times: Vec<f64> = grid.iter().map(|t| t * q).collect();
        let real_horizon = horizon * q;
        let paths: Vec<(Vec<f64>, Option<AuditReport>, bool)> = (0..r)
            .into_par_iter()
            .map(|rep| {
                let key = StreamKey::new("lof_transient", n as u64, rep as u64, "");
                let tr = simulate(
                    &params,
                    &InitSpec::Fresh { initial_total },
                    real_horizon,
                    &seed,
                    &key,
                    &RecordGrid::Times(times.clone()),
                    audit,
                )?;
                if tr.records.len() != grid.len() {
                    return Err(Error::HorizonTooShort {
                        available: real_horizon,
                        required: times.last().copied().unwrap_or(0.0),
                    });
                }
                let conserved = tr.is_conserved();
                let v = tr
                    .records
                    .iter()
                    .map(|rec| lof_value(rec.x as f64, n))
                    .collect();
                Ok((v, tr.audit, conserved))
            })
            .collect::<Result<_>>()?;
        let mut curve = Vec::with_capacity(grid.len());
        for (k, &t) in grid.iter().enumerate() {
            let vals: Vec<f64> = paths.iter().map(|p| p.0[k]).collect();
            let mean = crate::stats::mean(&vals);
            let se = if r > 1 {
                (crate::stats::variance(&vals) / r as f64).sqrt()
            } else {
                f64::INFINITY
            };
            curve.push(CurvePoint {
                t,
                mean,
                std_error: se,
                reference: lof_closed(t, &spec),
            });
        }
        for (_, a, c) in &paths {
            conserved &= c;
            if let Some(a) = a {
                total_audit
                    .get_or_insert_with(AuditReport::default)
                    .merge(a);
            }
        }
        let (gap, at) = curve
            .iter()
            .map(|c| ((c.mean - c.reference).abs(), c.t))
            .fold((0.0, 0.0), |best, g| if g.0 > best.0 { g } else { best });
        let worst = curve.iter().find(|c| c.t == at).unwrap();
        let mut row = PerN::new(n, r, "sup_t |mean scaled X - x(t)|", (gap, worst.std_error));
        row.sup_gap = Some(gap);
        row.reference = Some(0.0);
        row.curve = curve;
        report.per_n.push(row);
    }
    let tol = plan.tolerance.unwrap_or(0.15);
    let last = report.per_n.last().unwrap();
    report.verdicts.push(Verdict::new(
        "sup_gap_within_tolerance",
        last.sup_gap.unwrap() <= tol,
        format!(
            "n = {}: sup gap {:.4} vs tolerance {tol}",
            last.n,
            last.sup_gap.unwrap()
        ),
    ));
    report.verdicts.push(Verdict::new(
        "event_conservation",
        conserved,
        "arrivals = exits + in system".into(),
    ));
    if let Some(a) = total_audit {
        report.verdicts.push(Verdict::new(
            "no_invariant_violations",
            a.total_violations() == 0,
            format!(
                "{} violations over {} epochs",
                a.total_violations(),
                a.epochs
            ),
        ));
        report.audit = Some(a);
    }
    Ok(report)
}

/// Report plus raw material of one experiment.
pub struct ExperimentOutput {
    pub report: FitReport,
    pub data: Option<StationaryData>,
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    let (report, data) = match plan.kind {
        ExperimentKind::DiffusionStationary => {
            run_diffusion_stationary(plan).map(|(r, d)| (r, Some(d)))?
        }
        ExperimentKind::LofFixedPoint => run_lof_fixed_point(plan).map(|(r, d)| (r, Some(d)))?,
        ExperimentKind::DiffusionDivergence => {
            run_diffusion_divergence(plan).map(|(r, d)| (r, Some(d)))?
        }
        ExperimentKind::WorkloadScaling => run_workload_scaling(plan).map(|(r, d)| (r, Some(d)))?,
        ExperimentKind::LofTransient => (run_lof_transient(plan)?, None),
    };
    Ok(ExperimentOutput { report, data })
}

/// Writes `<kind>_summary.json` plus raw CSVs into `dir` (created if
/// absent). File names carry the seed. Returns the paths written.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let plan = &out.report.params;
    let stem = format!("{}_seed{}", plan.kind.name(), plan.seed);
    let mut written = Vec::new();
    let summary = dir.join(format!("{stem}_summary.json"));
    fs::write(&summary, out.report.to_json() + "\n")?;
    written.push(summary);
    if let Some(data) = &out.data {
        for s in &data.sizes {
            for (name, v) in [("X", &s.x), ("Q", &s.q), ("L", &s.l)] {
                let path = dir.join(format!("{stem}_n{}_{name}.csv", s.n));
                write_samples_csv(BufWriter::new(fs::File::create(&path)?), v)?;
                written.push(path);
            }
        }
    }
    for row in out.report.per_n.iter().filter(|r| !r.curve.is_empty()) {
        let path = dir.join(format!("{stem}_n{}_curve.csv", row.n));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "t,mean,std_error,closed_form")?;
        for c in &row.curve {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(c.t),
                fmt17(c.mean),
                fmt17(c.std_error),
                fmt17(c.reference)
            )?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_half_flags_drift_only() {
        // deterministic, well-mixed sequence with no trend
        let flat: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64).collect();
        assert!(split_half_z(&flat, 4, 20).abs() < 3.0);
        let drift: Vec<f64> = (0..4000).map(|i| (i % 1000) as f64).collect();
        assert!(split_half_z(&drift, 4, 20) > 10.0);
        assert_eq!(split_half_z(&[1.0; 8], 1, 20), 0.0);
    }

    #[test]
    fn plan_validation() {
        let mut p = ExperimentPlan::new(ExperimentKind::LofFixedPoint, vec![16, 64], -1.0, 1.0, 1);
        assert!(p.validate().is_ok());
        p.n_values = vec![64, 16];
        assert!(p.validate().is_err());
        p.n_values = vec![16, 64];
        p.beta = 0.5;
        assert!(p.validate().is_err());
        let mut d = ExperimentPlan::new(ExperimentKind::DiffusionDivergence, vec![16], 1.0, 1.0, 1);
        d.threshold = Some(3.0);
        assert!(d.validate().is_err(), "beta = 1 cannot diverge");
        d.beta = 0.0;
        assert!(d.validate().is_err(), "beta = 0 needs theta < 1");
        d.theta = 0.5;
        assert!(d.validate().is_ok());
        d.threshold = Some(0.0);
        assert!(d.validate().is_err());
        let t = ExperimentPlan::new(ExperimentKind::LofTransient, vec![16], -1.0, 1.0, 1);
        assert!(t.validate().is_err(), "x0 missing");
    }

    #[test]
    fn kind_mismatch_rejected() {
        let p = ExperimentPlan::new(ExperimentKind::LofFixedPoint, vec![16], -1.0, 1.0, 1);
        assert!(run_diffusion_stationary(&p).is_err());
        assert!(run_lof_transient(&p).is_err());
    }

    #[test]
    fn plan_round_trips_through_json() {
        let mut p = ExperimentPlan::new(ExperimentKind::LofTransient, vec![16, 64], -1.0, 1.0, 9);
        p.x0 = Some(3.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentPlan>(&s).unwrap(), p);
    }
}
