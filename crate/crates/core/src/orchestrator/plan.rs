use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::advisory::ComponentHint;
use super::ExperimentError;
use crate::backend::BackendSelector;

pub const DEFAULT_BASELINE_SAMPLES: usize = 385;
pub const DEFAULT_RUNS: u32 = 10;

/// Which output stream of the workload carries `##RUN` markers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerStream {
    #[default]
    Stdout,
    Stderr,
}

/// A measurement campaign. Loaded from TOML; unknown keys are rejected.
///
/// The workload command is launched once and is expected to perform `runs`
/// iterations itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub sampling_rate_hz: f64,
    #[serde(default = "default_baseline_samples")]
    pub baseline_samples: usize,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub warmup_discard_runs: u32,
    #[serde(default)]
    pub cooldown_ms: u64,
    pub backend: BackendSelector,
    /// Source for the idle phase; defaults to `backend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_backend: Option<BackendSelector>,
    #[serde(default)]
    pub workload: Vec<String>,
    #[serde(default)]
    pub marker_stream: MarkerStream,
    #[serde(default)]
    pub component_hint: ComponentHint,
    /// Platform TDP, used to check the polling interval against counter wraparound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdp_watts: Option<f64>,
    /// Free-form disclosure of the test environment, copied verbatim into reports.
    #[serde(default)]
    pub environment: BTreeMap<String, String>,
}

fn default_baseline_samples() -> usize {
    DEFAULT_BASELINE_SAMPLES
}

fn default_runs() -> u32 {
    DEFAULT_RUNS
}

impl ExperimentPlan {
    pub fn new(backend: BackendSelector, workload: Vec<String>, sampling_rate_hz: f64) -> Self {
        Self {
            sampling_rate_hz,
            baseline_samples: DEFAULT_BASELINE_SAMPLES,
            runs: DEFAULT_RUNS,
            warmup_discard_runs: 0,
            cooldown_ms: 0,
            backend,
            idle_backend: None,
            workload,
            marker_stream: MarkerStream::default(),
            component_hint: ComponentHint::default(),
            tdp_watts: None,
            environment: BTreeMap::new(),
        }
    }

    /// Checks everything the idle phase needs; the workload may be empty.
    pub fn validate_idle(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::InvalidPlan(m));
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return fail(format!(
                "sampling_rate_hz must be positive, got {}",
                self.sampling_rate_hz
            ));
        }
        if self.baseline_samples < 2 {
            return fail(format!(
                "baseline_samples must be at least 2, got {}",
                self.baseline_samples
            ));
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.warmup_discard_runs >= self.runs {
            return fail(format!(
                "warmup_discard_runs ({}) must be less than runs ({})",
                self.warmup_discard_runs, self.runs
            ));
        }
        if let Some(tdp) = self.tdp_watts {
            if !(tdp.is_finite() && tdp > 0.0) {
                return fail(format!("tdp_watts must be positive, got {tdp}"));
            }
        }
        Ok(())
    }

    /// Full check, including that a workload command is present.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.validate_idle()?;
        if self.workload.is_empty() || self.workload[0].is_empty() {
            return Err(ExperimentError::InvalidPlan("workload command is empty".into()));
        }
        Ok(())
    }

    pub fn idle_source(&self) -> &BackendSelector {
        self.idle_backend.as_ref().unwrap_or(&self.backend)
    }

    /// Time the idle phase takes at the nominal rate.
    pub fn expected_baseline_duration_s(&self) -> f64 {
        self.baseline_samples as f64 / self.sampling_rate_hz
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| ExperimentError::InvalidPlan(e.to_string()))?;
        plan.validate_idle()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}
