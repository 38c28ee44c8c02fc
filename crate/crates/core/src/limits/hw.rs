use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{invalid, Result};
use crate::rng::{exp_draw, open01};

/// Stationary law of the Erlang-C diffusion for `beta > 0`: exponential with
/// rate `beta` above zero, a normal `N(-beta, 1)` body truncated to the
/// negative half-line below zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwStationary {
    pub beta: f64,
    /// `P(X >= 0)`.
    pub p_nonneg: f64,
}

pub fn hw_stationary(beta: f64) -> Result<HwStationary> {
    HwStationary::new(beta)
}

impl HwStationary {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid(
                "beta",
                format!("the diffusion has no stationary law for beta = {beta} <= 0"),
            ));
        }
        // 1 / (1 + sqrt(2 pi) beta Phi(beta) e^{beta^2/2}), in logs so large
        // beta cannot overflow
        let log_ratio = (2.0 * std::f64::consts::PI).sqrt().ln()
            + beta.ln()
            + normal::cdf(beta).ln()
            + 0.5 * beta * beta;
        let p_nonneg = 1.0 / (1.0 + log_ratio.exp());
        Ok(Self { beta, p_nonneg })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.p_nonneg * self.beta * (-self.beta * x).exp()
        } else {
            (1.0 - self.p_nonneg) * normal::pdf(self.beta + x) / normal::cdf(self.beta)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0 - self.p_nonneg * (-self.beta * x).exp()
        } else {
            (1.0 - self.p_nonneg) * normal::cdf(self.beta + x) / normal::cdf(self.beta)
        }
    }

    /// Exact draw: pick the branch, then invert the exponential tail or
    /// reject from `N(-beta, 1)` until the draw lands below zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if open01(rng) < self.p_nonneg {
            return exp_draw(rng, self.beta);
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let y = z - self.beta;
            if y < 0.0 {
                return y;
            }
        }
    }

    pub fn mean(&self) -> f64 {
        // E[X; X>=0] = p / beta; E[X; X<0] = (1-p) * E[N(-beta,1) | < 0]
        let b = self.beta;
        let neg = -b - normal::pdf(b) / normal::cdf(b);
        self.p_nonneg / b + (1.0 - self.p_nonneg) * neg
    }
}
