//! Power samples, traces, and the arithmetic that turns them into energy.
//!
//! Internally powers are milliwatts and timestamps are integer microseconds;
//! energies leave this module in joules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("trace has {0} samples, at least {1} required")]
    Empty(usize, usize),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One power observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_us: u64,
    pub power_mw: f64,
}

impl PowerSample {
    pub fn new(timestamp_us: u64, power_mw: f64) -> Result<Self, TraceError> {
        if !power_mw.is_finite() || power_mw < 0.0 {
            return Err(TraceError::Malformed(format!(
                "power must be a non-negative number, got {power_mw} mW at {timestamp_us} us"
            )));
        }
        Ok(Self { timestamp_us, power_mw })
    }
}

/// An ordered sequence of samples from one source.
///
/// Timestamps are strictly increasing; this is checked on construction and
/// the sample vector cannot be mutated afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace", into = "RawTrace")]
pub struct PowerTrace {
    samples: Vec<PowerSample>,
    nominal_rate_hz: f64,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct RawTrace {
    samples: Vec<PowerSample>,
    nominal_rate_hz: f64,
    source: String,
}

impl TryFrom<RawTrace> for PowerTrace {
    type Error = TraceError;

    fn try_from(raw: RawTrace) -> Result<Self, Self::Error> {
        PowerTrace::new(raw.samples, raw.nominal_rate_hz, raw.source)
    }
}

impl From<PowerTrace> for RawTrace {
    fn from(t: PowerTrace) -> Self {
        RawTrace {
            samples: t.samples,
            nominal_rate_hz: t.nominal_rate_hz,
            source: t.source,
        }
    }
}

impl PowerTrace {
    pub fn new(samples: Vec<PowerSample>, nominal_rate_hz: f64, source: impl Into<String>) -> Result<Self, TraceError> {
        if !(nominal_rate_hz.is_finite() && nominal_rate_hz > 0.0) {
            return Err(TraceError::InvalidArgument(format!(
                "nominal rate must be positive, got {nominal_rate_hz} Hz"
            )));
        }
        for s in &samples {
            PowerSample::new(s.timestamp_us, s.power_mw)?;
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].timestamp_us <= w[0].timestamp_us) {
            return Err(TraceError::Malformed(format!(
                "timestamp {} us at index {} does not follow {} us",
                samples[i + 1].timestamp_us,
                i + 1,
                samples[i].timestamp_us
            )));
        }
        Ok(Self {
            samples,
            nominal_rate_hz,
            source: source.into(),
        })
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn powers_mw(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.power_mw)
    }

    pub fn with_nominal_rate(self, nominal_rate_hz: f64) -> Result<Self, TraceError> {
        Self::new(self.samples, nominal_rate_hz, self.source)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Samples whose timestamps fall in `[start_us, end_us]`.
    pub fn window(&self, start_us: u64, end_us: u64) -> PowerTrace {
        let samples = self
            .samples
            .iter()
            .filter(|s| s.timestamp_us >= start_us && s.timestamp_us <= end_us)
            .copied()
            .collect();
        PowerTrace {
            samples,
            nominal_rate_hz: self.nominal_rate_hz,
            source: self.source.clone(),
        }
    }

    /// Splits into `[0, index)` and `[index, len)`.
    pub fn split_at(&self, index: usize) -> (PowerTrace, PowerTrace) {
        let (a, b) = self.samples.split_at(index);
        let part = |s: &[PowerSample]| PowerTrace {
            samples: s.to_vec(),
            nominal_rate_hz: self.nominal_rate_hz,
            source: self.source.clone(),
        };
        (part(a), part(b))
    }

    /// Mean spacing between consecutive samples, in microseconds.
    pub fn mean_interval_us(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(first), Some(last)) if self.samples.len() > 1 => {
                (last.timestamp_us - first.timestamp_us) as f64 / (self.samples.len() - 1) as f64
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMethod {
    TraceIntegration,
    NetOfIdle,
    PerRun,
    Analytical,
    FlopsProxy,
}

impl EnergyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyMethod::TraceIntegration => "trace-integration",
            EnergyMethod::NetOfIdle => "net-of-idle",
            EnergyMethod::PerRun => "per-run",
            EnergyMethod::Analytical => "analytical",
            EnergyMethod::FlopsProxy => "flops-proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub joules: f64,
    pub duration_s: f64,
    pub method: EnergyMethod,
    /// Set when a negative net energy was clamped to zero.
    pub clamped: bool,
}

impl EnergyEstimate {
    pub fn new(joules: f64, duration_s: f64, method: EnergyMethod) -> Self {
        Self {
            joules,
            duration_s,
            method,
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean_mw: f64,
    pub median_mw: f64,
    pub std_dev_mw: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub expected_samples: u64,
    pub actual_samples: u64,
    pub loss_ratio: f64,
    pub mean_interval_us: f64,
    pub max_gap_us: u64,
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Zero-order-hold integral of a trace.
///
/// Each sample's power is held until the next timestamp; the final sample is
/// held for the trace's mean inter-sample interval.
pub fn integrate_power_trace(trace: &PowerTrace) -> Result<EnergyEstimate, TraceError> {
    let samples = trace.samples();
    if samples.len() < 2 {
        return Err(TraceError::Empty(samples.len(), 2));
    }
    let mean_dt = trace.mean_interval_us();
    let mut acc = CompensatedSum::default();
    for w in samples.windows(2) {
        acc.add(w[0].power_mw * (w[1].timestamp_us - w[0].timestamp_us) as f64);
    }
    acc.add(samples[samples.len() - 1].power_mw * mean_dt);

    let span = (samples[samples.len() - 1].timestamp_us - samples[0].timestamp_us) as f64;
    // mW * us = 1e-9 J
    Ok(EnergyEstimate::new(
        acc.value() * 1e-9,
        (span + mean_dt) * 1e-6,
        EnergyMethod::TraceIntegration,
    ))
}

/// Energy between two instants under the same zero-order hold. Before the
/// first sample its power is assumed; the last sample is held indefinitely.
pub fn integrate_between(trace: &PowerTrace, start_us: u64, end_us: u64) -> Result<EnergyEstimate, TraceError> {
    let samples = trace.samples();
    if samples.is_empty() {
        return Err(TraceError::Empty(0, 1));
    }
    if end_us <= start_us {
        return Err(TraceError::InvalidArgument(format!(
            "empty integration window [{start_us}, {end_us}] us"
        )));
    }
    let mut acc = CompensatedSum::default();
    for (i, s) in samples.iter().enumerate() {
        let from = if i == 0 { 0 } else { s.timestamp_us }.max(start_us);
        let to = samples.get(i + 1).map_or(u64::MAX, |n| n.timestamp_us).min(end_us);
        if to > from {
            acc.add(s.power_mw * (to - from) as f64);
        }
    }
    Ok(EnergyEstimate::new(
        acc.value() * 1e-9,
        (end_us - start_us) as f64 * 1e-6,
        EnergyMethod::TraceIntegration,
    ))
}

pub fn summarize_trace(trace: &PowerTrace) -> Result<SummaryStats, TraceError> {
    let values: Vec<f64> = trace.powers_mw().collect();
    summarize_values(&values)
}

pub(crate) fn summarize_values(values: &[f64]) -> Result<SummaryStats, TraceError> {
    if values.is_empty() {
        return Err(TraceError::Empty(0, 1));
    }
    let n = values.len();
    let mut acc = CompensatedSum::default();
    values.iter().for_each(|&v| acc.add(v));
    let mean = acc.value() / n as f64;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };

    let std_dev = if n > 1 {
        let mut sq = CompensatedSum::default();
        values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
        (sq.value() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };

    Ok(SummaryStats {
        mean_mw: mean,
        median_mw: median,
        std_dev_mw: std_dev,
        count: n,
    })
}

/// Subtracts the energy an idle machine would have used over `duration_s`.
///
/// A negative result is clamped to zero and flagged; idle power is noisy
/// enough that small negatives are expected for light workloads.
pub fn net_energy(total: &EnergyEstimate, idle_power_mw: f64, duration_s: f64) -> Result<EnergyEstimate, TraceError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(TraceError::InvalidArgument(format!(
            "duration must be positive, got {duration_s} s"
        )));
    }
    if !(idle_power_mw >= 0.0 && idle_power_mw.is_finite()) {
        return Err(TraceError::InvalidArgument(format!(
            "idle power must be non-negative, got {idle_power_mw} mW"
        )));
    }
    let joules = total.joules - idle_power_mw / 1000.0 * duration_s;
    let mut est = EnergyEstimate::new(joules.max(0.0), duration_s, EnergyMethod::NetOfIdle);
    est.clamped = joules < 0.0;
    Ok(est)
}

pub fn per_run_energy(net: &EnergyEstimate, runs: u32) -> Result<EnergyEstimate, TraceError> {
    if runs == 0 {
        return Err(TraceError::InvalidArgument("runs must be at least 1".into()));
    }
    let mut est = EnergyEstimate::new(
        net.joules / runs as f64,
        net.duration_s / runs as f64,
        EnergyMethod::PerRun,
    );
    est.clamped = net.clamped;
    Ok(est)
}

/// Compares a trace against what its nominal rate should have produced.
pub fn trace_diagnostics(trace: &PowerTrace, wall_duration_s: f64) -> Result<TraceDiagnostics, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty(0, 1));
    }
    if !(wall_duration_s > 0.0 && wall_duration_s.is_finite()) {
        return Err(TraceError::InvalidArgument(format!(
            "wall duration must be positive, got {wall_duration_s} s"
        )));
    }
    let expected = (wall_duration_s * trace.nominal_rate_hz()).floor() as u64;
    let actual = trace.len() as u64;
    let loss_ratio = if expected == 0 {
        0.0
    } else {
        (1.0 - actual as f64 / expected as f64).max(0.0)
    };
    let max_gap_us = trace
        .samples()
        .windows(2)
        .map(|w| w[1].timestamp_us - w[0].timestamp_us)
        .max()
        .unwrap_or(0);
    Ok(TraceDiagnostics {
        expected_samples: expected,
        actual_samples: actual,
        loss_ratio,
        mean_interval_us: trace.mean_interval_us(),
        max_gap_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regular(powers: &[f64], interval_us: u64) -> PowerTrace {
        let samples = powers
            .iter()
            .enumerate()
            .map(|(i, &p)| PowerSample::new(i as u64 * interval_us, p).unwrap())
            .collect();
        PowerTrace::new(samples, 1e6 / interval_us as f64, "test").unwrap()
    }

    #[test]
    fn constant_ten_watts_for_five_seconds() {
        let t = regular(&[10_000.0; 50], 100_000);
        let e = integrate_power_trace(&t).unwrap();
        assert_eq!(e.joules, 50.0);
        assert_eq!(e.duration_s, 5.0);
        assert_eq!(e.method, EnergyMethod::TraceIntegration);
    }

    #[test]
    fn ramp_rectangle_sum() {
        let powers: Vec<f64> = (0..=10).map(|w| w as f64 * 1000.0).collect();
        let e = integrate_power_trace(&regular(&powers, 1_000_000)).unwrap();
        assert!((e.joules - 55.0).abs() < 1e-12);
        assert_eq!(e.duration_s, 11.0);
    }

    #[test]
    fn single_sample_is_empty_error() {
        let t = regular(&[5.0], 1000);
        assert_eq!(integrate_power_trace(&t), Err(TraceError::Empty(1, 2)));
    }

    #[test]
    fn rejects_non_monotonic_and_negative() {
        let s = vec![
            PowerSample {
                timestamp_us: 10,
                power_mw: 1.0,
            },
            PowerSample {
                timestamp_us: 10,
                power_mw: 1.0,
            },
        ];
        assert!(matches!(PowerTrace::new(s, 10.0, "x"), Err(TraceError::Malformed(_))));
        assert!(PowerSample::new(0, -1.0).is_err());
        assert!(PowerSample::new(0, f64::NAN).is_err());
        assert!(PowerTrace::new(vec![], 0.0, "x").is_err());
    }

    #[test]
    fn deserialization_validates() {
        let bad = r#"{"samples":[{"timestamp_us":5,"power_mw":1.0},{"timestamp_us":4,"power_mw":1.0}],"nominal_rate_hz":10.0,"source":"x"}"#;
        assert!(serde_json::from_str::<PowerTrace>(bad).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summarize_trace(&regular(&[5000.0; 7], 100)).unwrap();
        assert_eq!(
            (s.mean_mw, s.median_mw, s.std_dev_mw, s.count),
            (5000.0, 5000.0, 0.0, 7)
        );

        let s = summarize_trace(&regular(&[18.0, 18.0, 400.0], 100)).unwrap();
        assert_eq!(s.median_mw, 18.0);

        let s = summarize_trace(&regular(&[1.0, 2.0, 3.0, 4.0], 100)).unwrap();
        assert_eq!(s.mean_mw, 2.5);
        assert_eq!(s.median_mw, 2.5);
        // sqrt(5/3)
        assert!((s.std_dev_mw - 1.2909944487358056).abs() < 1e-12);

        assert!(summarize_trace(&regular(&[], 100)).is_err());
    }

    #[test]
    fn net_energy_examples() {
        let total = EnergyEstimate::new(652.902, 42.91, EnergyMethod::TraceIntegration);
        let net = net_energy(&total, 106.0, 42.91).unwrap();
        assert!((net.joules - 648.354).abs() < 0.01);
        assert_eq!(net.method, EnergyMethod::NetOfIdle);
        assert!(!net.clamped);

        let total = EnergyEstimate::new(100.0, 50.0, EnergyMethod::TraceIntegration);
        assert_eq!(net_energy(&total, 0.0, 50.0).unwrap().joules, 100.0);

        let total = EnergyEstimate::new(1.0, 10.0, EnergyMethod::TraceIntegration);
        let net = net_energy(&total, 1000.0, 10.0).unwrap();
        assert_eq!(net.joules, 0.0);
        assert!(net.clamped);

        assert!(net_energy(&total, 1.0, 0.0).is_err());
        assert!(net_energy(&total, -1.0, 1.0).is_err());
    }

    #[test]
    fn per_run_examples() {
        let net = EnergyEstimate::new(648.354, 42.91, EnergyMethod::NetOfIdle);
        let r = per_run_energy(&net, 10).unwrap();
        assert!((r.joules - 64.835).abs() < 0.001);
        assert_eq!(r.method, EnergyMethod::PerRun);
        assert_eq!(per_run_energy(&net, 1).unwrap().joules, 648.354);
        let net = EnergyEstimate::new(100.0, 1.0, EnergyMethod::NetOfIdle);
        assert_eq!(per_run_energy(&net, 4).unwrap().joules, 25.0);
        assert!(per_run_energy(&net, 0).is_err());
    }

    #[test]
    fn diagnostics_regular_trace() {
        let t = regular(&[1.0; 100], 100_000);
        let d = trace_diagnostics(&t, 10.0).unwrap();
        assert_eq!(d.expected_samples, 100);
        assert_eq!(d.loss_ratio, 0.0);
        assert_eq!(d.max_gap_us as f64, d.mean_interval_us);
    }

    #[test]
    fn diagnostics_more_samples_than_expected_is_zero_loss() {
        let t = regular(&[1.0; 20], 100_000);
        assert_eq!(trace_diagnostics(&t, 1.0).unwrap().loss_ratio, 0.0);
        assert!(trace_diagnostics(&t, 0.0).is_err());
    }

    #[test]
    fn integrate_between_clips_and_extends() {
        let t = regular(&[1000.0, 2000.0, 3000.0], 100_000);
        // 1 W for 50 ms, 2 W for 100 ms, 3 W for 50 ms
        let e = integrate_between(&t, 50_000, 250_000).unwrap();
        assert!((e.joules - 0.4).abs() < 1e-12);
        assert!((e.duration_s - 0.2).abs() < 1e-12);
        // held past the end and before the start
        let e = integrate_between(&t, 300_000, 400_000).unwrap();
        assert!((e.joules - 0.3).abs() < 1e-12);
        let late = regular(&[5000.0], 1000).window(0, 10);
        assert!((integrate_between(&late, 0, 1_000_000).unwrap().joules - 5.0).abs() < 1e-12);
        assert!(integrate_between(&t, 10, 10).is_err());
    }

    #[test]
    fn window_and_split() {
        let t = regular(&[1.0, 2.0, 3.0, 4.0], 10);
        assert_eq!(t.window(10, 20).len(), 2);
        let (a, b) = t.split_at(1);
        assert_eq!((a.len(), b.len()), (1, 3));
    }
}
