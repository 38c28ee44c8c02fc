use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One customer already in service at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InServiceInit {
    /// Remaining phase-1 (deterministic) service time, `r_j(0)`.
    pub remaining_phase1: f64,
    /// Whether an Exp(1) phase-2 remainder follows phase 1. Customers that
    /// entered service before time 0 always have one; `false` models a
    /// customer whose whole remaining requirement is the phase-1 part.
    #[serde(default = "default_true")]
    pub phase2: bool,
}

fn default_true() -> bool {
    true
}

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum InitSpec {
    Empty,
    /// `min(X0, n)` customers in phase 2 and `(X0 - n)^+` customers queued
    /// with zero elapsed wait, so `Z1(0) = 0` and `L(0) = 0`.
    Fresh {
        initial_total: usize,
    },
    /// Arbitrary in-service phase-1 residuals and queued elapsed waits
    /// (queue listed head first).
    General {
        initial_total: usize,
        in_service: Vec<InServiceInit>,
        queued_waits: Vec<f64>,
    },
}

impl InitSpec {
    pub fn initial_total(&self) -> usize {
        match self {
            InitSpec::Empty => 0,
            InitSpec::Fresh { initial_total } | InitSpec::General { initial_total, .. } => {
                *initial_total
            }
        }
    }

    /// `L(0)`: total remaining phase-1 time plus total elapsed queue wait.
    pub fn initial_workload(&self) -> f64 {
        match self {
            InitSpec::General {
                in_service,
                queued_waits,
                ..
            } => {
                in_service.iter().map(|s| s.remaining_phase1).sum::<f64>()
                    + queued_waits.iter().sum::<f64>()
            }
            _ => 0.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let InitSpec::General {
            initial_total,
            in_service,
            queued_waits,
        } = self
        else {
            return Ok(());
        };
        let bad = |msg: String| Err(Error::InconsistentInit(msg));
        if in_service.len() + queued_waits.len() != *initial_total {
            return bad(format!(
                "X(0) = {initial_total} but {} in service + {} queued were given",
                in_service.len(),
                queued_waits.len()
            ));
        }
        if in_service.len() > n {
            return bad(format!(
                "{} customers in service exceed n = {n}",
                in_service.len()
            ));
        }
        if !queued_waits.is_empty() && in_service.len() < n {
            return bad("customers are queued while an agent is idle".into());
        }
        if in_service
            .iter()
            .any(|s| !(s.remaining_phase1.is_finite() && s.remaining_phase1 >= 0.0))
        {
            return bad("remaining phase-1 times must be finite and nonnegative".into());
        }
        if in_service
            .iter()
            .any(|s| !s.phase2 && s.remaining_phase1 == 0.0)
        {
            return bad("an in-service customer needs a positive remaining requirement".into());
        }
        if queued_waits.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("elapsed waits must be finite and nonnegative".into());
        }
        if queued_waits.windows(2).any(|w| w[1] > w[0]) {
            return bad("queued elapsed waits must be nonincreasing from the head (FIFO)".into());
        }
        Ok(())
    }
}
