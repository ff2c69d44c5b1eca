//! Replay of recorded traces, either as fast as possible or paced to the
//! original timing.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::log::{parse_sampler_log, SamplerLogFormat};
use super::{BackendError, PowerSource};
use crate::clock::Clock;
use crate::trace::{PowerSample, PowerTrace};

pub fn load_trace(path: &Path, format: SamplerLogFormat) -> Result<PowerTrace, BackendError> {
    let file = File::open(path).map_err(|e| BackendError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(parse_sampler_log(file, format)?.with_source(format!("replay:{}", path.display())))
}

fn check_speed(speed: f64) -> Result<(), BackendError> {
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(BackendError::InvalidArgument(format!(
            "replay speed must be >= 0, got {speed}"
        )));
    }
    Ok(())
}

/// Opens a generic-power-csv file for replay. Speed 0 emits immediately;
/// speed `s` emits each sample `(t - t0) / s` after the first.
pub fn replay_trace(path: &Path, speed: f64) -> Result<ReplayStream, BackendError> {
    check_speed(speed)?;
    Ok(ReplayStream::new(
        load_trace(path, SamplerLogFormat::GenericPowerCsv)?,
        speed,
    ))
}

/// Single-consumer iterator over a trace's samples.
pub struct ReplayStream {
    trace: PowerTrace,
    speed: f64,
    next: usize,
    started: Option<Instant>,
}

impl ReplayStream {
    pub fn new(trace: PowerTrace, speed: f64) -> Self {
        Self {
            trace,
            speed,
            next: 0,
            started: None,
        }
    }

    pub fn trace(&self) -> &PowerTrace {
        &self.trace
    }

    /// Drains the stream back into a trace with the original rate and label.
    pub fn collect_trace(self) -> Result<PowerTrace, BackendError> {
        let rate = self.trace.nominal_rate_hz();
        let source = self.trace.source().to_owned();
        let samples: Vec<PowerSample> = self.collect();
        Ok(PowerTrace::new(samples, rate, source)?)
    }
}

impl Iterator for ReplayStream {
    type Item = PowerSample;

    fn next(&mut self) -> Option<PowerSample> {
        let sample = *self.trace.samples().get(self.next)?;
        self.next += 1;
        if self.speed > 0.0 {
            let t0 = self.trace.samples()[0].timestamp_us;
            let started = *self.started.get_or_insert_with(Instant::now);
            let due = Duration::from_secs_f64((sample.timestamp_us - t0) as f64 * 1e-6 / self.speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        Some(sample)
    }
}

/// Replays a trace as if it were a live meter: samples come out paced to the
/// orchestrator's clock and are re-stamped on it.
pub struct ReplaySource {
    trace: PowerTrace,
    speed: f64,
    next: usize,
    origin_us: Option<u64>,
    clock: Arc<dyn Clock>,
}

impl ReplaySource {
    pub fn new(trace: PowerTrace, speed: f64, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        check_speed(speed)?;
        if speed == 0.0 {
            return Err(BackendError::InvalidArgument(
                "a paced replay source needs a positive speed".into(),
            ));
        }
        Ok(Self {
            trace,
            speed,
            next: 0,
            origin_us: None,
            clock,
        })
    }
}

impl PowerSource for ReplaySource {
    fn label(&self) -> String {
        self.trace.source().to_owned()
    }

    fn next_sample(&mut self) -> Result<Option<PowerSample>, BackendError> {
        let Some(s) = self.trace.samples().get(self.next).copied() else {
            return Ok(None);
        };
        self.next += 1;
        let origin = *self.origin_us.get_or_insert_with(|| self.clock.now_us());
        let t0 = self.trace.samples()[0].timestamp_us;
        let due = origin + ((s.timestamp_us - t0) as f64 / self.speed).round() as u64;
        self.clock.sleep_until_us(due);
        Ok(Some(PowerSample::new(due, s.power_mw)?))
    }
}
