//! Discrete-event simulation of the many-server queue with perfectly
//! correlated (or independent, or infinite) patience.

mod engine;
mod init;
mod stationary;
mod trace;

pub(crate) use engine::MinTime;
pub use engine::{
    replay_offered_wait, AuditReport, Counters, EpochKind, ExitKind, Observer, Simulator,
    StateCounts, INITIAL_ID_BASE,
};
pub use init::{InServiceInit, InitSpec};
pub use stationary::{
    regenerative_estimate, stationary_run, stationary_sample, EstimatorConfig, Observable,
    RegenerativeEstimate, StationaryRun, StationarySample, DEFAULT_BURN_IN_FACTOR,
};
pub(crate) use trace::with_purpose;
pub use trace::{
    fmt17, run_with, simulate, simulate_with, write_trace_csv, ArrivalSource, Feeder,
    PoissonArrivals, RecordGrid, ScriptedArrivals, Trace, TraceRecord, TRACE_HEADER,
};

/// Writes stationary samples as `sample_index,value`.
pub fn write_samples_csv<W: std::io::Write>(mut w: W, samples: &[f64]) -> std::io::Result<()> {
    writeln!(w, "sample_index,value")?;
    for (i, v) in samples.iter().enumerate() {
        writeln!(w, "{i},{}", fmt17(*v))?;
    }
    Ok(())
}
