use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Initial-value problem `x' = -beta - (theta^2 / 2) x^2`, `x(0) = x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSpec {
    pub beta: f64,
    pub theta: f64,
    pub x0: f64,
}

impl OdeSpec {
    pub fn new(beta: f64, theta: f64, x0: f64) -> Result<Self> {
        if !(beta.is_finite() && beta <= 0.0) {
            return Err(invalid(
                "beta",
                format!("the fluid limit needs beta <= 0, got {beta}"),
            ));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(invalid("theta", format!("must be positive, got {theta}")));
        }
        if !(x0.is_finite() && x0 >= 0.0) {
            return Err(invalid("x0", format!("must be nonnegative, got {x0}")));
        }
        Ok(Self { beta, theta, x0 })
    }

    pub fn rhs(&self, x: f64) -> f64 {
        -self.beta - 0.5 * self.theta * self.theta * x * x
    }
}

/// Stable fixed point `sqrt(-2 beta) / theta`.
pub fn x_star(beta: f64, theta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta <= 0.0) {
        return Err(invalid(
            "beta",
            format!("no fluid fixed point for beta = {beta} > 0"),
        ));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    Ok((-2.0 * beta).sqrt() / theta)
}

/// Closed-form solution of the IVP at time `t >= 0`.
pub fn lof_closed(t: f64, spec: &OdeSpec) -> f64 {
    let OdeSpec { beta, theta, x0 } = *spec;
    if beta == 0.0 {
        return 2.0 * x0 / (2.0 + theta * theta * x0 * t);
    }
    let a = (-2.0 * beta).sqrt();
    let decay = (-a * theta * t).exp();
    let grown = -(-a * theta * t).exp_m1();
    let num = (a + theta * x0) * grown + 2.0 * theta * x0 * decay;
    let den = (a + theta * x0) * grown + 2.0 * a * decay;
    a / theta * num / den
}

/// Classical fourth-order Runge–Kutta on `grid` (increasing, starting at 0).
/// Each grid interval is split into equal substeps no longer than
/// `1e-3 * span`.
pub fn lof_ode_solve(spec: &OdeSpec, grid: &[f64]) -> Result<Vec<f64>> {
    let span = grid.last().copied().unwrap_or(0.0) - grid.first().copied().unwrap_or(0.0);
    lof_ode_solve_with(spec, grid, 1e-3 * span.max(f64::MIN_POSITIVE))
}

pub fn lof_ode_solve_with(spec: &OdeSpec, grid: &[f64], max_step: f64) -> Result<Vec<f64>> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(invalid("grid", "must start at 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    if max_step.is_nan() || max_step <= 0.0 {
        return Err(invalid("max_step", "must be positive"));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut x = spec.x0;
    out.push(x);
    for w in grid.windows(2) {
        let len = w[1] - w[0];
        let k = (len / max_step).ceil().max(1.0) as usize;
        let h = len / k as f64;
        for _ in 0..k {
            let k1 = spec.rhs(x);
            let k2 = spec.rhs(x + 0.5 * h * k1);
            let k3 = spec.rhs(x + 0.5 * h * k2);
            let k4 = spec.rhs(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_examples() {
        assert_eq!(x_star(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(x_star(-2.0, 1.0).unwrap(), 2.0);
        assert!((x_star(-1.0, 0.5).unwrap() - 2.828_427_124_746_19).abs() < 1e-12);
        assert!(x_star(0.5, 1.0).is_err());
        assert!(x_star(-1.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        for spec in [
            OdeSpec::new(-1.0, 1.0, 3.0).unwrap(),
            OdeSpec::new(0.0, 2.0, 0.7).unwrap(),
            OdeSpec::new(-0.3, 0.4, 0.0).unwrap(),
        ] {
            assert!((lof_closed(0.0, &spec) - spec.x0).abs() < 1e-15);
        }
        let s = OdeSpec::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(lof_closed(2.0, &s), 0.5);
        let s = OdeSpec::new(-1.0, 1.0, 0.0).unwrap();
        assert!((lof_closed(100.0, &s) - std::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn spec_rejects_positive_beta() {
        assert!(OdeSpec::new(0.1, 1.0, 1.0).is_err());
        assert!(OdeSpec::new(-1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn rk4_stationary_cases() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let zero = lof_ode_solve(&OdeSpec::new(0.0, 1.0, 0.0).unwrap(), &grid).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let two = lof_ode_solve(&OdeSpec::new(-2.0, 1.0, 2.0).unwrap(), &grid).unwrap();
        assert!(two.iter().all(|&x| (x - 2.0).abs() < 1e-14));
    }

    #[test]
    fn closed_form_monotone_toward_fixed_point() {
        for (beta, theta, x0) in [
            (-1.0, 1.0, 3.0),
            (-1.0, 1.0, 0.0),
            (0.0, 1.0, 1.0),
            (-0.5, 2.0, 0.2),
        ] {
            let s = OdeSpec::new(beta, theta, x0).unwrap();
            let xs = x_star(beta, theta).unwrap();
            let mut prev = lof_closed(0.0, &s);
            for i in 1..=2000 {
                let x = lof_closed(i as f64 * 0.005, &s);
                assert!((x - xs).abs() <= (prev - xs).abs() + 1e-15);
                assert!((x - xs) * (x0 - xs) >= 0.0, "crossed the fixed point");
                prev = x;
            }
        }
    }

    const CROSS_CHECK: [(f64, f64, f64); 4] = [
        (-1.0, 1.0, 3.0),
        (-1.0, 1.0, 0.0),
        (0.0, 1.0, 1.0),
        (-2.0, 1.0, 2.0),
    ];

    fn sup_gap(spec: &OdeSpec, max_step: Option<f64>) -> f64 {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let num = match max_step {
            Some(h) => lof_ode_solve_with(spec, &grid, h).unwrap(),
            None => lof_ode_solve(spec, &grid).unwrap(),
        };
        grid.iter()
            .zip(&num)
            .map(|(&t, &x)| (x - lof_closed(t, spec)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rk4_matches_closed_form() {
        for (b, th, x0) in CROSS_CHECK {
            let spec = OdeSpec::new(b, th, x0).unwrap();
            let gap = sup_gap(&spec, None);
            assert!(gap <= 1e-8, "{spec:?}: {gap}");
            let fine = sup_gap(&spec, Some(1e-4));
            assert!(fine <= gap.max(1e-13), "{spec:?}: refining did not help");
        }
    }

    #[test]
    fn closed_form_solves_the_ode() {
        let h = 1e-4;
        for (b, th, x0) in CROSS_CHECK
            .into_iter()
            .chain([(-0.5, 0.5, 2.0), (0.0, 0.3, 4.0)])
        {
            let spec = OdeSpec::new(b, th, x0).unwrap();
            for i in 1..=1000 {
                let t = i as f64 * 0.01;
                let d = (lof_closed(t + h, &spec) - lof_closed(t - h, &spec)) / (2.0 * h);
                let r = d - spec.rhs(lof_closed(t, &spec));
                assert!(r.abs() <= 1e-6, "{spec:?} t={t}: residual {r}");
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let spec = OdeSpec::new(-1.0, 1.0, 1.0).unwrap();
        assert!(lof_ode_solve(&spec, &[]).is_err());
        assert!(lof_ode_solve(&spec, &[0.5, 1.0]).is_err());
        assert!(lof_ode_solve(&spec, &[0.0, 1.0, 1.0]).is_err());
    }
}
