//! Report documents and plot data.
//!
//! A report is a JSON object with a `schema_version`. Energies (J) and powers
//! (mW) are rendered with exactly three decimals so that identical results
//! serialize to identical bytes; other reals use the shortest round-tripping
//! form. Every numeric key ends in its unit (`_j`, `_mw`, `_s`, `_us`, `_hz`,
//! `_ms`, `_w`) or in `_count` / `_ratio` for dimensionless quantities.
//! Statistical fields (`u_statistic`, `p_value`, `cliffs_delta`) keep their
//! conventional names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{ser, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backend::log::power_csv_string;
use crate::backend::BackendSelector;
use crate::model::{ClockAlignment, FlopsProxyEstimate, ModelEstimate, OperationCostModel, OperationProfile};
use crate::orchestrator::{BaselineResult, ComponentHint, ExperimentPlan, ExperimentResult, MarkerStream, RunBoundary};
use crate::stats::{ComparisonReport, Magnitude, OverheadReport, PValueMethod};
use crate::trace::{EnergyEstimate, EnergyMethod, PowerSample, PowerTrace, SummaryStats, TraceDiagnostics, TraceError};

pub const SCHEMA_VERSION: u32 = 1;
/// Description of the hypothesis test, written into every comparison block.
pub const TEST_DESCRIPTION: &str = "two-sided Mann-Whitney U";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("unsupported report schema version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Report,
    Plotdata,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "report" => Ok(ReportFormat::Report),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(ReportError::Unsupported(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Baseline,
    Experiment,
    Overhead,
    ModelEstimate,
    FlopsProxy,
    ClockAlignment,
}

mod fixed3 {
    use super::*;

    pub fn render(x: f64) -> Option<String> {
        if !x.is_finite() {
            return None;
        }
        let text = format!("{x:.3}");
        Some(if text == "-0.000" { "0.000".to_owned() } else { text })
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        let text = render(*x).ok_or_else(|| ser::Error::custom(format!("cannot render {x}")))?;
        let n: serde_json::Number = text.parse().map_err(ser::Error::custom)?;
        n.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

fn finite<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return Err(ser::Error::custom(format!("cannot render {x}")));
    }
    s.serialize_f64(*x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEcho {
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_backend: Option<String>,
    pub workload: Vec<String>,
    #[serde(serialize_with = "finite")]
    pub sampling_rate_hz: f64,
    pub baseline_samples_count: usize,
    pub runs_count: u32,
    pub warmup_discard_runs_count: u32,
    pub cooldown_ms: u64,
    pub marker_stream: MarkerStream,
    pub component_hint: ComponentHint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdp_w: Option<f64>,
}

impl From<&ExperimentPlan> for PlanEcho {
    fn from(p: &ExperimentPlan) -> Self {
        Self {
            backend: p.backend.to_string(),
            idle_backend: p.idle_backend.as_ref().map(ToString::to_string),
            workload: p.workload.clone(),
            sampling_rate_hz: p.sampling_rate_hz,
            baseline_samples_count: p.baseline_samples,
            runs_count: p.runs,
            warmup_discard_runs_count: p.warmup_discard_runs,
            cooldown_ms: p.cooldown_ms,
            marker_stream: p.marker_stream,
            component_hint: p.component_hint,
            tdp_w: p.tdp_watts,
        }
    }
}

impl PlanEcho {
    fn to_plan(&self, environment: &BTreeMap<String, String>) -> Result<ExperimentPlan, ReportError> {
        let selector = |s: &str| BackendSelector::from_str(s).map_err(|e| ReportError::Malformed(e.to_string()));
        Ok(ExperimentPlan {
            sampling_rate_hz: self.sampling_rate_hz,
            baseline_samples: self.baseline_samples_count,
            runs: self.runs_count,
            warmup_discard_runs: self.warmup_discard_runs_count,
            cooldown_ms: self.cooldown_ms,
            backend: selector(&self.backend)?,
            idle_backend: self.idle_backend.as_deref().map(selector).transpose()?,
            workload: self.workload.clone(),
            marker_stream: self.marker_stream,
            component_hint: self.component_hint,
            tdp_watts: self.tdp_w,
            environment: environment.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEcho {
    pub timestamp_us: u64,
    #[serde(with = "fixed3")]
    pub power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEcho {
    pub source: String,
    #[serde(serialize_with = "finite")]
    pub nominal_rate_hz: f64,
    pub samples: Vec<SampleEcho>,
}

impl From<&PowerTrace> for TraceEcho {
    fn from(t: &PowerTrace) -> Self {
        Self {
            source: t.source().to_owned(),
            nominal_rate_hz: t.nominal_rate_hz(),
            samples: t
                .samples()
                .iter()
                .map(|s| SampleEcho {
                    timestamp_us: s.timestamp_us,
                    power_mw: s.power_mw,
                })
                .collect(),
        }
    }
}

impl TraceEcho {
    fn to_trace(&self) -> Result<PowerTrace, ReportError> {
        let samples = self
            .samples
            .iter()
            .map(|s| PowerSample::new(s.timestamp_us, s.power_mw))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PowerTrace::new(samples, self.nominal_rate_hz, self.source.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEcho {
    #[serde(with = "fixed3")]
    pub mean_mw: f64,
    #[serde(with = "fixed3")]
    pub median_mw: f64,
    #[serde(with = "fixed3")]
    pub std_dev_mw: f64,
    pub samples_count: usize,
    pub trace: TraceEcho,
}

impl From<&BaselineResult> for BaselineEcho {
    fn from(b: &BaselineResult) -> Self {
        Self {
            mean_mw: b.stats.mean_mw,
            median_mw: b.stats.median_mw,
            std_dev_mw: b.stats.std_dev_mw,
            samples_count: b.stats.count,
            trace: (&b.trace).into(),
        }
    }
}

impl BaselineEcho {
    fn to_baseline(&self) -> Result<BaselineResult, ReportError> {
        Ok(BaselineResult {
            stats: SummaryStats {
                mean_mw: self.mean_mw,
                median_mw: self.median_mw,
                std_dev_mw: self.std_dev_mw,
                count: self.samples_count,
            },
            trace: self.trace.to_trace()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyEcho {
    #[serde(with = "fixed3")]
    pub energy_j: f64,
    #[serde(serialize_with = "finite")]
    pub duration_s: f64,
    pub method: EnergyMethod,
    pub clamped: bool,
}

impl From<&EnergyEstimate> for EnergyEcho {
    fn from(e: &EnergyEstimate) -> Self {
        Self {
            energy_j: e.joules,
            duration_s: e.duration_s,
            method: e.method,
            clamped: e.clamped,
        }
    }
}

impl From<&EnergyEcho> for EnergyEstimate {
    fn from(e: &EnergyEcho) -> Self {
        EnergyEstimate {
            joules: e.energy_j,
            duration_s: e.duration_s,
            method: e.method,
            clamped: e.clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub total: EnergyEcho,
    pub net: EnergyEcho,
    pub per_run: EnergyEcho,
    pub measured_runs_count: u32,
    #[serde(serialize_with = "finite")]
    pub wall_duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsEcho {
    pub expected_samples_count: u64,
    pub actual_samples_count: u64,
    #[serde(serialize_with = "finite")]
    pub loss_ratio: f64,
    #[serde(serialize_with = "finite")]
    pub mean_interval_us: f64,
    pub max_gap_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_skew_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_skew_us: Option<u64>,
}

impl DiagnosticsEcho {
    fn new(d: &TraceDiagnostics, start_skew_us: Option<u64>, end_skew_us: Option<u64>) -> Self {
        Self {
            expected_samples_count: d.expected_samples,
            actual_samples_count: d.actual_samples,
            loss_ratio: d.loss_ratio,
            mean_interval_us: d.mean_interval_us,
            max_gap_us: d.max_gap_us,
            start_skew_us,
            end_skew_us,
        }
    }

    fn to_diagnostics(self) -> TraceDiagnostics {
        TraceDiagnostics {
            expected_samples: self.expected_samples_count,
            actual_samples: self.actual_samples_count,
            loss_ratio: self.loss_ratio,
            mean_interval_us: self.mean_interval_us,
            max_gap_us: self.max_gap_us,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonEcho {
    pub test: String,
    #[serde(serialize_with = "finite")]
    pub u_statistic: f64,
    #[serde(serialize_with = "finite")]
    pub p_value: f64,
    pub p_value_method: PValueMethod,
    pub p_underflow: bool,
    #[serde(with = "fixed3")]
    pub cliffs_delta: f64,
    pub magnitude: Magnitude,
    pub a_samples_count: usize,
    pub b_samples_count: usize,
}

impl From<&ComparisonReport> for ComparisonEcho {
    fn from(c: &ComparisonReport) -> Self {
        Self {
            test: TEST_DESCRIPTION.to_owned(),
            u_statistic: c.u_statistic,
            p_value: c.p_value,
            p_value_method: c.p_value_method,
            p_underflow: c.p_underflow,
            cliffs_delta: c.cliffs_delta,
            magnitude: c.magnitude,
            a_samples_count: c.n_a,
            b_samples_count: c.n_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadEcho {
    #[serde(serialize_with = "finite")]
    pub low_rate_hz: f64,
    #[serde(serialize_with = "finite")]
    pub high_rate_hz: f64,
    #[serde(with = "fixed3")]
    pub low_net_energy_j: f64,
    #[serde(with = "fixed3")]
    pub high_net_energy_j: f64,
    #[serde(serialize_with = "finite")]
    pub relative_difference_ratio: f64,
    pub low_diagnostics: DiagnosticsEcho,
    pub high_diagnostics: DiagnosticsEcho,
}

/// The serialized document. Sections absent for a given kind are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub environment: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead: Option<OverheadEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_boundaries: Option<Vec<RunBoundary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload_trace: Option<TraceEcho>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    fn empty(kind: ReportKind, environment: BTreeMap<String, String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            environment,
            plan: None,
            baseline: None,
            energy: None,
            diagnostics: None,
            overhead: None,
            comparison: None,
            run_boundaries: None,
            workload_trace: None,
            warnings: Vec::new(),
        }
    }

    pub fn from_experiment(r: &ExperimentResult) -> Self {
        Self {
            plan: Some((&r.plan).into()),
            baseline: Some((&r.baseline).into()),
            energy: Some(EnergySection {
                total: (&r.total_energy).into(),
                net: (&r.net_energy).into(),
                per_run: (&r.per_run).into(),
                measured_runs_count: r.measured_runs,
                wall_duration_s: r.wall_duration_s,
                cpu_time_s: r.cpu_time_s,
            }),
            diagnostics: Some(DiagnosticsEcho::new(&r.diagnostics, r.start_skew_us, r.end_skew_us)),
            run_boundaries: r.run_boundaries.clone(),
            workload_trace: Some((&r.workload_trace).into()),
            warnings: r.warnings.clone(),
            ..Self::empty(ReportKind::Experiment, r.plan.environment.clone())
        }
    }

    pub fn from_baseline(plan: &ExperimentPlan, b: &BaselineResult) -> Self {
        Self {
            plan: Some(plan.into()),
            baseline: Some(b.into()),
            ..Self::empty(ReportKind::Baseline, plan.environment.clone())
        }
    }

    pub fn from_overhead(o: &OverheadReport, environment: BTreeMap<String, String>) -> Self {
        Self {
            overhead: Some(OverheadEcho {
                low_rate_hz: o.low_rate_hz,
                high_rate_hz: o.high_rate_hz,
                low_net_energy_j: o.low_net_energy_j,
                high_net_energy_j: o.high_net_energy_j,
                relative_difference_ratio: o.relative_difference,
                low_diagnostics: DiagnosticsEcho::new(&o.low_diagnostics, None, None),
                high_diagnostics: DiagnosticsEcho::new(&o.high_diagnostics, None, None),
            }),
            comparison: Some((&o.comparison).into()),
            ..Self::empty(ReportKind::Overhead, environment)
        }
    }

    /// Rebuilds the experiment result an experiment report was made from,
    /// at reporting precision.
    pub fn to_experiment_result(&self) -> Result<ExperimentResult, ReportError> {
        let missing = |what: &str| ReportError::Malformed(format!("experiment report lacks `{what}`"));
        if self.kind != ReportKind::Experiment {
            return Err(ReportError::Unsupported(format!(
                "expected an experiment report, found {:?}",
                self.kind
            )));
        }
        let plan = self.plan.as_ref().ok_or_else(|| missing("plan"))?;
        let energy = self.energy.as_ref().ok_or_else(|| missing("energy"))?;
        let diagnostics = self.diagnostics.ok_or_else(|| missing("diagnostics"))?;
        Ok(ExperimentResult {
            plan: plan.to_plan(&self.environment)?,
            baseline: self
                .baseline
                .as_ref()
                .ok_or_else(|| missing("baseline"))?
                .to_baseline()?,
            workload_trace: self
                .workload_trace
                .as_ref()
                .ok_or_else(|| missing("workload_trace"))?
                .to_trace()?,
            wall_duration_s: energy.wall_duration_s,
            total_energy: (&energy.total).into(),
            net_energy: (&energy.net).into(),
            per_run: (&energy.per_run).into(),
            measured_runs: energy.measured_runs_count,
            diagnostics: diagnostics.to_diagnostics(),
            run_boundaries: self.run_boundaries.clone(),
            start_skew_us: diagnostics.start_skew_us,
            end_skew_us: diagnostics.end_skew_us,
            cpu_time_s: energy.cpu_time_s,
            warnings: self.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>, ReportError> {
        to_json(self)
    }
}

/// Plot data is the workload trace as generic power CSV.
pub fn emit_report(result: &ExperimentResult, format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Report => Report::from_experiment(result).to_json(),
        ReportFormat::Plotdata => Ok(power_csv_string(&result.workload_trace).into_bytes()),
    }
}

pub fn emit_baseline(
    plan: &ExperimentPlan,
    baseline: &BaselineResult,
    format: ReportFormat,
) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Report => Report::from_baseline(plan, baseline).to_json(),
        ReportFormat::Plotdata => Ok(power_csv_string(&baseline.trace).into_bytes()),
    }
}

pub fn emit_overhead(
    overhead: &OverheadReport,
    environment: BTreeMap<String, String>,
    format: ReportFormat,
) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Report => Report::from_overhead(overhead, environment).to_json(),
        ReportFormat::Plotdata => Err(ReportError::Unsupported(
            "plot data is only available for experiment and baseline reports".into(),
        )),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, ReportError> {
    let mut out =
        serde_json::to_vec_pretty(value).map_err(|e| ReportError::Malformed(format!("cannot serialize: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn emit_model_estimate(
    profile: &OperationProfile,
    costs: &OperationCostModel,
    estimate: &ModelEstimate,
) -> Result<Vec<u8>, ReportError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u32,
        kind: ReportKind,
        profile: &'a str,
        platform: &'a str,
        #[serde(with = "fixed3")]
        energy_j: f64,
        method: EnergyMethod,
        uncovered_operations: &'a [String],
        annotations: &'a [String],
    }
    to_json(&Doc {
        schema_version: SCHEMA_VERSION,
        kind: ReportKind::ModelEstimate,
        profile: &profile.label,
        platform: &costs.platform,
        energy_j: estimate.energy.joules,
        method: estimate.energy.method,
        uncovered_operations: &estimate.uncovered,
        annotations: &profile.annotations,
    })
}

pub fn emit_flops_proxy(estimate: &FlopsProxyEstimate) -> Result<Vec<u8>, ReportError> {
    #[derive(Serialize)]
    struct Doc {
        schema_version: u32,
        kind: ReportKind,
        note: &'static str,
        #[serde(serialize_with = "finite")]
        flop_count: f64,
        #[serde(serialize_with = "finite")]
        duration_s: f64,
        #[serde(serialize_with = "finite")]
        flops_rate_per_s: f64,
    }
    to_json(&Doc {
        schema_version: SCHEMA_VERSION,
        kind: ReportKind::FlopsProxy,
        note: "comparison proxy, not an energy",
        flop_count: estimate.flop_count,
        duration_s: estimate.duration_s,
        flops_rate_per_s: estimate.flops_rate,
    })
}

pub fn emit_alignment(alignment: &ClockAlignment) -> Result<Vec<u8>, ReportError> {
    #[derive(Serialize)]
    struct Doc {
        schema_version: u32,
        kind: ReportKind,
        #[serde(serialize_with = "finite")]
        offset_us: f64,
        #[serde(serialize_with = "finite")]
        drift_ratio: f64,
        #[serde(serialize_with = "finite")]
        residual_rms_us: f64,
        points_count: usize,
    }
    to_json(&Doc {
        schema_version: SCHEMA_VERSION,
        kind: ReportKind::ClockAlignment,
        offset_us: alignment.offset_us,
        drift_ratio: alignment.drift,
        residual_rms_us: alignment.residual_rms_us,
        points_count: alignment.n_points,
    })
}

pub fn parse_report(bytes: &[u8]) -> Result<Report, ReportError> {
    #[derive(Deserialize)]
    struct Version {
        schema_version: u32,
    }
    let version: Version = serde_json::from_slice(bytes).map_err(|e| ReportError::Malformed(e.to_string()))?;
    if version.schema_version != SCHEMA_VERSION {
        return Err(ReportError::UnsupportedVersion(version.schema_version));
    }
    serde_json::from_slice(bytes).map_err(|e| ReportError::Malformed(e.to_string()))
}

pub fn read_report(path: &Path) -> Result<Report, ReportError> {
    let bytes = std::fs::read(path).map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_report(&bytes).map_err(|e| match e {
        ReportError::Malformed(m) => ReportError::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    std::fs::write(path, bytes).map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
