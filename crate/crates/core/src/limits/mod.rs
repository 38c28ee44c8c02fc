//! Analytic limit objects: diffusion drifts, the stationary law of the
//! Erlang-C diffusion, Euler–Maruyama paths, and the lower-order fluid ODE.

mod diffusion;
mod hw;
mod lof;
pub mod normal;

pub use diffusion::{drift_ma, drift_mc, sde_path, DiffusionSpec, DriftKind, SdePath};
pub use hw::{hw_stationary, HwStationary};
pub use lof::{lof_closed, lof_ode_solve, lof_ode_solve_with, x_star, OdeSpec};

/// Writes a path as CSV `t,x`.
pub fn write_path_csv<W: std::io::Write>(
    mut w: W,
    times: &[f64],
    values: &[f64],
) -> std::io::Result<()> {
    writeln!(w, "t,x")?;
    for (t, x) in times.iter().zip(values) {
        writeln!(w, "{},{}", crate::des::fmt17(*t), crate::des::fmt17(*x))?;
    }
    Ok(())
}
