//! Model parameters, correlated primitive sampling and the two scalings
//! (diffusion and lower-order fluid) that connect raw paths to limit models.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::exp_draw;

/// How a customer's patience relates to its service requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// `T = S / theta`.
    Perfect,
    /// `T ~ Exp(theta)` independent of `S` (Erlang-A).
    Independent,
    /// Infinite patience (Erlang-C).
    None,
}

impl fmt::Display for CorrelationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Perfect => "perfect",
            Self::Independent => "independent",
            Self::None => "none",
        })
    }
}

impl FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" | "pc" => Ok(Self::Perfect),
            "independent" | "erlang_a" => Ok(Self::Independent),
            "none" | "erlang_c" => Ok(Self::None),
            other => Err(invalid(
                "mode",
                format!("unknown correlation mode `{other}`"),
            )),
        }
    }
}

/// Primitive configuration of system `n`.
///
/// Time is measured in mean-service-time units, so the service rate is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub beta: f64,
    pub theta: f64,
    pub lambda_n: f64,
    pub mu: f64,
    pub mode: CorrelationMode,
}

/// Builds the square-root-staffed system `lambda_n = n - beta * sqrt(n)`.
pub fn make_params(n: usize, beta: f64, theta: f64, mode: CorrelationMode) -> Result<ModelParams> {
    ModelParams::new(n, beta, theta, mode)
}

impl ModelParams {
    pub fn new(n: usize, beta: f64, theta: f64, mode: CorrelationMode) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "at least one agent is required"));
        }
        if !beta.is_finite() {
            return Err(invalid("beta", "must be finite"));
        }
        // Erlang-C ignores theta, so theta = 0 is the natural encoding there.
        let theta_ok = match mode {
            CorrelationMode::None => theta.is_finite() && theta >= 0.0,
            _ => theta.is_finite() && theta > 0.0,
        };
        if !theta_ok {
            return Err(invalid("theta", format!("must be positive, got {theta}")));
        }
        let sqrt_n = (n as f64).sqrt();
        let lambda_n = n as f64 - beta * sqrt_n;
        if beta >= sqrt_n || lambda_n <= 0.0 {
            return Err(Error::StaffingInfeasible { beta, sqrt_n });
        }
        Ok(Self {
            n,
            beta,
            theta,
            lambda_n,
            mu: 1.0,
            mode,
        })
    }

    /// Builds parameters from an arrival rate instead of the slack.
    pub fn with_arrival_rate(
        n: usize,
        lambda: f64,
        theta: f64,
        mode: CorrelationMode,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let beta = (n as f64 - lambda) / (n as f64).sqrt();
        Self::new(n, beta, theta, mode)
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `n^{1/4}`, the LOF time scale.
    pub fn quarter_n(&self) -> f64 {
        quarter_root(self.n)
    }

    /// Whether the number-in-system process has a stationary law.
    pub fn is_ergodic(&self) -> bool {
        match self.mode {
            CorrelationMode::None => self.lambda_n < self.n as f64,
            _ => true,
        }
    }
}

pub(crate) fn quarter_root(n: usize) -> f64 {
    (n as f64).sqrt().sqrt()
}

/// One arrival's primitives and lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: u64,
    pub arrival_time: f64,
    pub service_req: f64,
    pub patience: f64,
    pub abandon_deadline: f64,
    pub service_start: Option<f64>,
    pub service_end: Option<f64>,
}

impl Customer {
    pub fn new(id: u64, arrival_time: f64, service_req: f64, patience: f64) -> Self {
        Self {
            id,
            arrival_time,
            service_req,
            patience,
            abandon_deadline: arrival_time + patience,
            service_start: None,
            service_end: None,
        }
    }
}

/// Patience implied by `mode` for a given service requirement.
///
/// Perfect mode evaluates `service_req / theta`; that expression is the
/// reference every bit-exactness check compares against.
pub fn patience_for<R: Rng + ?Sized>(rng: &mut R, params: &ModelParams, service_req: f64) -> f64 {
    match params.mode {
        CorrelationMode::Perfect => service_req / params.theta,
        CorrelationMode::Independent => exp_draw(rng, params.theta),
        CorrelationMode::None => f64::INFINITY,
    }
}

/// Draws `(S, T)` for an arrival at `arrival_time`. `S` is drawn first, then
/// (in independent mode only) `T`.
pub fn sample_customer<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ModelParams,
    id: u64,
    arrival_time: f64,
) -> Customer {
    debug_assert!(arrival_time >= 0.0);
    let s = exp_draw(rng, params.mu);
    let t = patience_for(rng, params, s);
    Customer::new(id, arrival_time, s, t)
}

/// A right-continuous piecewise-constant path of the number in system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPath {
    /// Jump epochs, nondecreasing, starting at 0.
    pub times: Vec<f64>,
    pub values: Vec<i64>,
    /// End of the observation window.
    pub horizon: f64,
}

impl RawPath {
    pub fn new(times: Vec<f64>, values: Vec<i64>, horizon: f64) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(invalid(
                "path",
                "times and values must be nonempty and equally long",
            ));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("path", "times must be nondecreasing"));
        }
        if horizon < *times.last().unwrap() {
            return Err(invalid("path", "horizon precedes the last jump"));
        }
        Ok(Self {
            times,
            values,
            horizon,
        })
    }

    pub fn constant(value: i64, horizon: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
            horizon,
        }
    }

    /// Value at `t`, taking the last jump at or before `t`.
    pub fn value_at(&self, t: f64) -> i64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.values[idx.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Diffusion,
    Lof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub scaling: Scaling,
    pub n: usize,
}

/// `(x - n) / sqrt(n)`.
pub fn diffusion_value(x: f64, n: usize) -> f64 {
    (x - n as f64) / (n as f64).sqrt()
}

/// `(x - n) / n^{3/4}`.
pub fn lof_value(x: f64, n: usize) -> f64 {
    let q = quarter_root(n);
    (x - n as f64) / (q * q * q)
}

/// Diffusion scaling on the raw path's own time axis.
pub fn diffusion_scale(raw: &RawPath, n: usize) -> ScaledPath {
    ScaledPath {
        times: raw.times.clone(),
        values: raw
            .values
            .iter()
            .map(|&x| diffusion_value(x as f64, n))
            .collect(),
        scaling: Scaling::Diffusion,
        n,
    }
}

/// LOF scaling evaluated at the scaled times in `grid`: the value at scaled
/// time `t` reads the raw path at real time `n^{1/4} t`.
pub fn lof_scale(raw: &RawPath, n: usize, grid: &[f64]) -> Result<ScaledPath> {
    let q = quarter_root(n);
    let needed = grid.iter().copied().fold(0.0_f64, f64::max) * q;
    if needed > raw.horizon {
        return Err(Error::HorizonTooShort {
            available: raw.horizon,
            required: needed,
        });
    }
    Ok(ScaledPath {
        times: grid.to_vec(),
        values: grid
            .iter()
            .map(|&t| lof_value(raw.value_at(q * t) as f64, n))
            .collect(),
        scaling: Scaling::Lof,
        n,
    })
}
