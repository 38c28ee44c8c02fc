use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{SeedSpec, StreamKey};

/// Erlang-C diffusion drift (service rate 1): `-beta` above zero,
/// `-(beta + x)` below.
pub fn drift_mc(x: f64, beta: f64) -> f64 {
    if x >= 0.0 {
        -beta
    } else {
        -(beta + x)
    }
}

/// Erlang-A diffusion drift: `-(beta + theta x)` above zero, `-(beta + x)`
/// below.
pub fn drift_ma(x: f64, beta: f64, theta: f64) -> f64 {
    if x >= 0.0 {
        -(beta + theta * x)
    } else {
        -(beta + x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    ErlangC,
    ErlangA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub beta: f64,
    /// Only read by the Erlang-A drift.
    pub theta: f64,
    pub drift_kind: DriftKind,
    /// `sqrt(2)` for unit service rate. Zero gives the deterministic Euler
    /// scheme, useful for debugging.
    pub noise_coeff: f64,
}

impl DiffusionSpec {
    pub fn erlang_c(beta: f64) -> Self {
        Self {
            beta,
            theta: 0.0,
            drift_kind: DriftKind::ErlangC,
            noise_coeff: std::f64::consts::SQRT_2,
        }
    }

    pub fn erlang_a(beta: f64, theta: f64) -> Self {
        Self {
            beta,
            theta,
            drift_kind: DriftKind::ErlangA,
            noise_coeff: std::f64::consts::SQRT_2,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_coeff = 0.0;
        self
    }

    pub fn drift(&self, x: f64) -> f64 {
        match self.drift_kind {
            DriftKind::ErlangC => drift_mc(x, self.beta),
            DriftKind::ErlangA => drift_ma(x, self.beta, self.theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub dt: f64,
    /// `values[k]` is the state at time `k * dt`.
    pub values: Vec<f64>,
}

impl SdePath {
    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Euler–Maruyama: `x_{k+1} = x_k + m(x_k) dt + c sqrt(dt) N(0,1)`.
pub fn sde_path(
    spec: &DiffusionSpec,
    x0: f64,
    dt: f64,
    horizon: f64,
    seed: &SeedSpec,
    key: &StreamKey,
) -> Result<SdePath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(invalid(
            "horizon",
            format!("must be at least dt = {dt}, got {horizon}"),
        ));
    }
    let steps = (horizon / dt).round() as usize;
    let mut rng = seed.stream(key);
    let scale = spec.noise_coeff * dt.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = x0;
    values.push(x);
    for _ in 0..steps {
        let noise = if scale == 0.0 {
            0.0
        } else {
            scale * rng.sample::<f64, _>(StandardNormal)
        };
        x += spec.drift(x) * dt + noise;
        values.push(x);
    }
    Ok(SdePath { dt, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erlang_c_drift_examples() {
        assert_eq!(drift_mc(1.0, 0.5), -0.5);
        assert_eq!(drift_mc(-1.0, 0.5), 0.5);
        assert_eq!(drift_mc(0.0, 0.7), -0.7);
    }

    #[test]
    fn erlang_a_drift_examples() {
        assert_eq!(drift_ma(2.0, 1.0, 0.5), -2.0);
        for theta in [0.1, 1.0, 9.0] {
            assert_eq!(drift_ma(-1.0, 1.0, theta), 0.0);
        }
        assert_eq!(drift_ma(0.0, 0.3, 7.0), -0.3);
    }

    #[test]
    fn drifts_continuous_at_zero() {
        for beta in [-2.0, -0.5, 0.0, 0.3, 4.0] {
            let eps = 1e-12;
            assert!((drift_mc(-eps, beta) - drift_mc(0.0, beta)).abs() < 1e-11);
            assert!((drift_ma(-eps, beta, 3.0) - drift_ma(0.0, beta, 3.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn noiseless_single_step() {
        let spec = DiffusionSpec::erlang_c(1.0).noiseless();
        let key = StreamKey::new("sde", 0, 0, "noise");
        let p = sde_path(&spec, 0.0, 0.1, 0.1, &SeedSpec::new(0), &key).unwrap();
        assert_eq!(p.values.len(), 2);
        assert!((p.values[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn noiseless_erlang_a_equilibrium() {
        let spec = DiffusionSpec::erlang_a(1.0, 2.0).noiseless();
        let key = StreamKey::new("sde", 0, 0, "noise");
        let p = sde_path(&spec, -1.0, 0.01, 5.0, &SeedSpec::new(0), &key).unwrap();
        assert!(p.values.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn rejects_bad_steps() {
        let spec = DiffusionSpec::erlang_c(1.0);
        let key = StreamKey::new("sde", 0, 0, "noise");
        assert!(sde_path(&spec, 0.0, 0.0, 1.0, &SeedSpec::new(0), &key).is_err());
        assert!(sde_path(&spec, 0.0, 0.1, 0.05, &SeedSpec::new(0), &key).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = DiffusionSpec::erlang_c(1.0);
        let key = StreamKey::new("sde", 0, 3, "noise");
        let a = sde_path(&spec, 0.0, 1e-2, 10.0, &SeedSpec::new(4), &key).unwrap();
        let b = sde_path(&spec, 0.0, 1e-2, 10.0, &SeedSpec::new(4), &key).unwrap();
        assert_eq!(a, b);
    }
}
