//! Analytical estimation: operation counts times per-operation costs, the
//! FLOPS-time proxy for accelerator workloads, and clock alignment for
//! traces recorded by external meters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{integrate_power_trace, EnergyEstimate, EnergyMethod, PowerTrace, TraceError};

pub mod align;
pub mod files;

pub use align::{align_clocks, ClockAlignment};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no cost for operation {0:?}")]
    MissingCost(String),
    #[error("need at least 2 matched timestamp pairs, got {0}")]
    InsufficientPoints(usize),
    #[error("cannot fit clocks: all reference timestamps are equal")]
    SingularFit,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How often a workload performs each operation. Operation names are opaque.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperationProfile {
    pub label: String,
    pub counts: BTreeMap<String, f64>,
    /// Free-text remarks (path dependence, threading) carried along unchanged.
    #[serde(default)]
    pub annotations: Vec<String>,
}

/// Energy per operation on one platform, in millijoules.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperationCostModel {
    pub platform: String,
    pub costs_mj: BTreeMap<String, f64>,
    pub calibration_note: String,
}

fn check_non_negative(kind: &str, map: &BTreeMap<String, f64>) -> Result<(), ModelError> {
    match map.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        Some((k, v)) => Err(ModelError::InvalidArgument(format!(
            "{kind} for {k:?} must be non-negative, got {v}"
        ))),
        None => Ok(()),
    }
}

impl OperationProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("count", &self.counts)
    }
}

impl OperationCostModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("cost", &self.costs_mj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Any operation without a cost is an error.
    Strict,
    /// Operations without a cost contribute nothing and are listed.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate {
    pub energy: EnergyEstimate,
    pub uncovered: Vec<String>,
}

/// Sum of count times cost over the profile's operations.
pub fn estimate_from_models(
    profile: &OperationProfile,
    costs: &OperationCostModel,
    coverage: Coverage,
) -> Result<ModelEstimate, ModelError> {
    profile.validate()?;
    costs.validate()?;
    let mut millijoules = 0.0;
    let mut uncovered = Vec::new();
    for (op, &count) in &profile.counts {
        match costs.costs_mj.get(op) {
            Some(cost) => millijoules += count * cost,
            None if count == 0.0 => {}
            None => match coverage {
                Coverage::Strict => return Err(ModelError::MissingCost(op.clone())),
                Coverage::Lenient => uncovered.push(op.clone()),
            },
        }
    }
    Ok(ModelEstimate {
        energy: EnergyEstimate::new(millijoules * 1e-3, 0.0, EnergyMethod::Analytical),
        uncovered,
    })
}

/// A microbenchmark trace of one operation executed `repetitions` times.
#[derive(Debug, Clone)]
pub struct Microbenchmark {
    pub trace: PowerTrace,
    pub repetitions: u64,
}

/// Cost per operation = integrated energy of its microbenchmark divided by
/// the repetitions it performed.
pub fn calibrate_costs(
    platform: &str,
    benchmarks: &BTreeMap<String, Microbenchmark>,
) -> Result<OperationCostModel, ModelError> {
    let mut costs_mj = BTreeMap::new();
    let mut sources = Vec::new();
    for (op, bench) in benchmarks {
        if bench.repetitions == 0 {
            return Err(ModelError::InvalidArgument(format!(
                "repetitions for {op:?} must be positive"
            )));
        }
        let energy = integrate_power_trace(&bench.trace)?;
        costs_mj.insert(op.clone(), energy.joules * 1e3 / bench.repetitions as f64);
        sources.push(format!("{op}: {} x{}", bench.trace.source(), bench.repetitions));
    }
    Ok(OperationCostModel {
        platform: platform.to_owned(),
        costs_mj,
        calibration_note: if sources.is_empty() {
            String::new()
        } else {
            format!("calibrated from {}", sources.join("; "))
        },
    })
}

/// Duration times peak FLOP rate: a quantity for comparing runs in an
/// unchanged environment, not an energy in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsProxyEstimate {
    pub flop_count: f64,
    pub duration_s: f64,
    pub flops_rate: f64,
}

pub fn flops_proxy(duration_s: f64, flops_rate: f64) -> Result<FlopsProxyEstimate, ModelError> {
    if !(flops_rate.is_finite() && flops_rate > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "FLOP rate must be positive, got {flops_rate}"
        )));
    }
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "duration must be >= 0, got {duration_s} s"
        )));
    }
    Ok(FlopsProxyEstimate {
        flop_count: duration_s * flops_rate,
        duration_s,
        flops_rate,
    })
}
