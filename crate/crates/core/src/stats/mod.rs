//! Sample sizing, two-sample tests and sampling-overhead comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::ExperimentResult;
use crate::trace::{PowerTrace, TraceDiagnostics};

pub mod cliffs;
pub mod mann_whitney;
pub mod sample_size;

pub use cliffs::{cliffs_delta, Magnitude};
pub use mann_whitney::{mann_whitney_u, MannWhitneyResult, PValueMethod};
pub use sample_size::{required_sample_size, SampleSizeRequest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
}

pub(crate) fn check_sample(name: &str, xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::InvalidArgument(format!("sample {name} is empty")));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(StatsError::InvalidArgument(format!("sample {name} contains NaN")));
    }
    Ok(())
}

/// Two-sided Mann-Whitney test plus Cliff's delta of `a` over `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub u_statistic: f64,
    pub p_value: f64,
    pub p_value_method: PValueMethod,
    pub p_underflow: bool,
    pub cliffs_delta: f64,
    pub magnitude: Magnitude,
    pub n_a: usize,
    pub n_b: usize,
}

pub fn compare_samples(a: &[f64], b: &[f64]) -> Result<ComparisonReport, StatsError> {
    let mw = mann_whitney_u(a, b)?;
    let (delta, magnitude) = cliffs_delta(a, b)?;
    Ok(ComparisonReport {
        u_statistic: mw.u_statistic,
        p_value: mw.p_value,
        p_value_method: mw.method,
        p_underflow: mw.p_underflow,
        cliffs_delta: delta,
        magnitude,
        n_a: a.len(),
        n_b: b.len(),
    })
}

pub fn compare_traces(a: &PowerTrace, b: &PowerTrace) -> Result<ComparisonReport, StatsError> {
    let pa: Vec<f64> = a.powers_mw().collect();
    let pb: Vec<f64> = b.powers_mw().collect();
    compare_samples(&pa, &pb)
}

/// How much more (or less) net energy a run at a higher sampling rate used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub low_rate_hz: f64,
    pub high_rate_hz: f64,
    pub low_net_energy_j: f64,
    pub high_net_energy_j: f64,
    /// `(high - low) / low`.
    pub relative_difference: f64,
    /// Power samples of the low-rate run (a) against the high-rate run (b).
    pub comparison: ComparisonReport,
    pub low_diagnostics: TraceDiagnostics,
    pub high_diagnostics: TraceDiagnostics,
}

impl OverheadReport {
    pub fn relative_difference_percent(&self) -> f64 {
        self.relative_difference * 100.0
    }
}

/// Both results must describe the same experiment apart from the sampling
/// rate and the data source: same workload, runs and warm-up discard.
pub fn overhead_report(low: &ExperimentResult, high: &ExperimentResult) -> Result<OverheadReport, StatsError> {
    let (pl, ph) = (&low.plan, &high.plan);
    let mismatch = |what: &str| StatsError::InvalidComparison(format!("plans differ in {what}"));
    if pl.workload != ph.workload {
        return Err(mismatch("workload"));
    }
    if pl.runs != ph.runs {
        return Err(mismatch("runs"));
    }
    if pl.warmup_discard_runs != ph.warmup_discard_runs {
        return Err(mismatch("warmup_discard_runs"));
    }
    let e_low = low.net_energy.joules;
    let e_high = high.net_energy.joules;
    if e_low.is_nan() || e_low <= 0.0 {
        return Err(StatsError::InvalidComparison(format!(
            "low-rate net energy must be positive, got {e_low} J"
        )));
    }
    Ok(OverheadReport {
        low_rate_hz: pl.sampling_rate_hz,
        high_rate_hz: ph.sampling_rate_hz,
        low_net_energy_j: e_low,
        high_net_energy_j: e_high,
        relative_difference: (e_high - e_low) / e_low,
        comparison: compare_traces(&low.workload_trace, &high.workload_trace)?,
        low_diagnostics: low.diagnostics,
        high_diagnostics: high.diagnostics,
    })
}
