//! Recorded sampler logs: the two generic CSV layouts and powermetrics text.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::counter::{counter_delta, raw_to_joules, CounterReading, PowerDomain, RaplDomainSpec};
use super::BackendError;
use crate::trace::{PowerSample, PowerTrace};

pub const POWER_CSV_HEADER: &str = "timestamp_us,power_mw";
pub const COUNTER_CSV_HEADER: &str = "timestamp_us,energy_raw,unit_ujoules,width_bits";

/// Rate assumed for powermetrics output when none is given (`-i 100`).
pub const POWERMETRICS_DEFAULT_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerLogFormat {
    GenericPowerCsv,
    GenericCounterCsv,
    PowermetricsText,
}

impl SamplerLogFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerLogFormat::GenericPowerCsv => "generic-power-csv",
            SamplerLogFormat::GenericCounterCsv => "generic-counter-csv",
            SamplerLogFormat::PowermetricsText => "powermetrics-text",
        }
    }
}

impl fmt::Display for SamplerLogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerLogFormat {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic-power-csv" => Ok(SamplerLogFormat::GenericPowerCsv),
            "generic-counter-csv" => Ok(SamplerLogFormat::GenericCounterCsv),
            "powermetrics-text" => Ok(SamplerLogFormat::PowermetricsText),
            other => Err(BackendError::InvalidArgument(format!(
                "unknown log format {other:?} (expected generic-power-csv, generic-counter-csv or powermetrics-text)"
            ))),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> BackendError {
    BackendError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a sampler log, inferring the nominal rate for CSV formats from the
/// median sample spacing.
pub fn parse_sampler_log<R: Read>(input: R, format: SamplerLogFormat) -> Result<PowerTrace, BackendError> {
    parse_sampler_log_at(input, format, None)
}

/// Like [`parse_sampler_log`] but with an explicit nominal rate. For
/// powermetrics text the rate also determines the synthesized timestamps.
pub fn parse_sampler_log_at<R: Read>(
    input: R,
    format: SamplerLogFormat,
    nominal_rate_hz: Option<f64>,
) -> Result<PowerTrace, BackendError> {
    if let Some(r) = nominal_rate_hz {
        if !(r.is_finite() && r > 0.0) {
            return Err(BackendError::InvalidArgument(format!(
                "rate must be positive, got {r} Hz"
            )));
        }
    }
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, format!("unreadable line: {e}")))?;
        lines.push(line.trim_end_matches('\r').to_owned());
    }
    if lines.is_empty() {
        return Err(parse_err(1, "empty input"));
    }
    let samples = match format {
        SamplerLogFormat::GenericPowerCsv => parse_power_csv(&lines)?,
        SamplerLogFormat::GenericCounterCsv => parse_counter_csv(&lines)?,
        SamplerLogFormat::PowermetricsText => {
            let rate = nominal_rate_hz.unwrap_or(POWERMETRICS_DEFAULT_RATE_HZ);
            parse_powermetrics(&lines, rate)?
        }
    };
    let rate = nominal_rate_hz.unwrap_or_else(|| infer_rate_hz(&samples));
    Ok(PowerTrace::new(samples, rate, format.as_str())?)
}

fn infer_rate_hz(samples: &[PowerSample]) -> f64 {
    let mut gaps: Vec<u64> = samples
        .windows(2)
        .map(|w| w[1].timestamp_us.saturating_sub(w[0].timestamp_us))
        .filter(|&g| g > 0)
        .collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_unstable();
    1e6 / gaps[gaps.len() / 2] as f64
}

fn check_header(lines: &[String], expected: &str) -> Result<(), BackendError> {
    if lines[0] != expected {
        return Err(parse_err(
            1,
            format!("expected header {expected:?}, found {:?}", lines[0]),
        ));
    }
    Ok(())
}

fn records(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.as_str()))
}

fn field<T: FromStr>(line_no: usize, name: &str, raw: Option<&str>) -> Result<T, BackendError> {
    let raw = raw.ok_or_else(|| parse_err(line_no, format!("missing field {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line_no, format!("invalid {name} {raw:?}")))
}

fn check_monotonic(line_no: usize, prev: Option<u64>, ts: u64) -> Result<(), BackendError> {
    match prev {
        Some(p) if ts <= p => Err(BackendError::Trace(crate::trace::TraceError::Malformed(format!(
            "line {line_no}: timestamp {ts} us does not follow {p} us"
        )))),
        _ => Ok(()),
    }
}

fn parse_power_csv(lines: &[String]) -> Result<Vec<PowerSample>, BackendError> {
    check_header(lines, POWER_CSV_HEADER)?;
    let mut samples = Vec::with_capacity(lines.len());
    let mut prev = None;
    for (n, line) in records(lines) {
        let mut it = line.split(',');
        let ts: u64 = field(n, "timestamp_us", it.next())?;
        let p: f64 = field(n, "power_mw", it.next())?;
        if it.next().is_some() {
            return Err(parse_err(n, "expected 2 fields"));
        }
        check_monotonic(n, prev, ts)?;
        prev = Some(ts);
        samples.push(PowerSample::new(ts, p).map_err(|e| parse_err(n, e.to_string()))?);
    }
    Ok(samples)
}

/// One sample per reading after the first: power over the preceding interval,
/// stamped at the later reading.
fn parse_counter_csv(lines: &[String]) -> Result<Vec<PowerSample>, BackendError> {
    check_header(lines, COUNTER_CSV_HEADER)?;
    let mut samples = Vec::with_capacity(lines.len());
    let mut spec: Option<(f64, u32, RaplDomainSpec)> = None;
    let mut prev: Option<CounterReading> = None;
    for (n, line) in records(lines) {
        let mut it = line.split(',');
        let ts: u64 = field(n, "timestamp_us", it.next())?;
        let raw: u64 = field(n, "energy_raw", it.next())?;
        let unit: f64 = field(n, "unit_ujoules", it.next())?;
        let width: u32 = field(n, "width_bits", it.next())?;
        if it.next().is_some() {
            return Err(parse_err(n, "expected 4 fields"));
        }
        let domain = match spec {
            None => {
                let d = RaplDomainSpec::new(PowerDomain::Pkg, unit, width).map_err(|e| parse_err(n, e.to_string()))?;
                spec = Some((unit, width, d));
                d
            }
            Some((u, w, d)) => {
                if u != unit || w != width {
                    return Err(parse_err(n, "unit and width must be constant within a file"));
                }
                d
            }
        };
        let reading = CounterReading::new(raw, ts, domain).map_err(|e| parse_err(n, e.to_string()))?;
        if let Some(p) = prev {
            check_monotonic(n, Some(p.timestamp_us()), ts)?;
            let joules = raw_to_joules(counter_delta(&p, &reading)?, &domain);
            let dt_s = (ts - p.timestamp_us()) as f64 * 1e-6;
            samples.push(PowerSample::new(ts, joules / dt_s * 1000.0).map_err(|e| parse_err(n, e.to_string()))?);
        }
        prev = Some(reading);
    }
    Ok(samples)
}

fn parse_powermetrics(lines: &[String], rate_hz: f64) -> Result<Vec<PowerSample>, BackendError> {
    let interval_us = 1e6 / rate_hz;
    let mut samples = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let Some(rest) = line.trim_start().strip_prefix("CPU Power:") else {
            continue;
        };
        let value = rest
            .trim()
            .strip_suffix("mW")
            .ok_or_else(|| parse_err(i + 1, format!("expected a value in mW, found {rest:?}")))?;
        let mw: u64 = field(i + 1, "CPU power", Some(value))?;
        let ts = (samples.len() as f64 * interval_us).round() as u64;
        samples.push(PowerSample::new(ts, mw as f64)?);
    }
    if samples.is_empty() {
        return Err(parse_err(lines.len(), "no \"CPU Power:\" lines found"));
    }
    Ok(samples)
}

/// Writes a trace as generic-power-csv. Powers use the shortest decimal that
/// parses back to the same value.
pub fn write_power_csv<W: Write>(trace: &PowerTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{POWER_CSV_HEADER}")?;
    for s in trace.samples() {
        writeln!(out, "{},{}", s.timestamp_us, s.power_mw)?;
    }
    out.flush()
}

pub fn power_csv_string(trace: &PowerTrace) -> String {
    let mut buf = Vec::new();
    write_power_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}
