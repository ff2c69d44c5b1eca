//! Energy measurement of software workloads from power traces and energy
//! counters, with idle-baseline subtraction, sampling-overhead statistics and
//! analytical cost models.

pub mod backend;
pub mod clock;
pub mod model;
pub mod orchestrator;
pub mod report;
pub mod stats;
pub mod trace;

pub use backend::{BackendError, BackendSelector};
pub use orchestrator::{measure_idle, run_experiment, ExperimentError, ExperimentPlan, ExperimentResult};
pub use report::{emit_report, parse_report, Report, ReportError, ReportFormat};
pub use trace::{
    integrate_power_trace, net_energy, per_run_energy, summarize_trace, trace_diagnostics, EnergyEstimate,
    EnergyMethod, PowerSample, PowerTrace, SummaryStats, TraceDiagnostics, TraceError,
};
