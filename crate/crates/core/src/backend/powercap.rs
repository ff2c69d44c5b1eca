//! Live sampling from the Linux powercap hierarchy
//! (`/sys/class/powercap/intel-rapl:N/energy_uj`).
//!
//! Counters there are already in microjoules and wrap at
//! `max_energy_range_uj + 1`, which is generally not a power of two.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::counter::{modular_delta, raw_to_joules, CounterReading, PowerDomain, RaplDomainSpec};
use super::{BackendError, PowerSource};
use crate::clock::Clock;
use crate::trace::PowerSample;

pub const DEFAULT_POWERCAP_PATH: &str = "/sys/class/powercap/intel-rapl:0/energy_uj";

/// A zone directory resolves to its `energy_uj` file.
pub fn resolve_counter_path(locator: &Path) -> PathBuf {
    if locator.is_dir() {
        locator.join("energy_uj")
    } else {
        locator.to_path_buf()
    }
}

fn map_io(path: &Path, e: io::Error) -> BackendError {
    match e.kind() {
        io::ErrorKind::NotFound => BackendError::UnsupportedPlatform(format!(
            "no energy counter at {} (is the powercap interface available?)",
            path.display()
        )),
        io::ErrorKind::PermissionDenied => BackendError::Privilege(format!(
            "cannot read {}; energy counters usually require root",
            path.display()
        )),
        _ => BackendError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

fn read_u64(path: &Path) -> Result<u64, BackendError> {
    let text = fs::read_to_string(path).map_err(|e| map_io(path, e))?;
    text.trim().parse().map_err(|_| BackendError::Parse {
        line: 1,
        message: format!("{}: expected an integer, found {:?}", path.display(), text.trim()),
    })
}

fn zone_domain(counter: &Path) -> PowerDomain {
    let name = counter
        .parent()
        .and_then(|dir| fs::read_to_string(dir.join("name")).ok())
        .unwrap_or_default();
    let name = name.trim();
    if name.starts_with("package") {
        PowerDomain::Pkg
    } else {
        name.parse().unwrap_or(PowerDomain::Pkg)
    }
}

/// Reads the counter once and timestamps it right after the read.
pub fn poll_live_counter(locator: &Path, clock: &dyn Clock) -> Result<CounterReading, BackendError> {
    let path = resolve_counter_path(locator);
    let raw = read_u64(&path)?;
    let ts = clock.now_us();
    CounterReading::new(raw, ts, RaplDomainSpec::powercap(zone_domain(&path)))
}

/// Periodic sampler over one powercap counter. Each sample is the average
/// power over the interval ending at its timestamp.
pub struct PowercapSource {
    path: PathBuf,
    modulus: u128,
    period_us: u64,
    next_due_us: u64,
    prev: CounterReading,
    clock: Arc<dyn Clock>,
}

impl PowercapSource {
    pub fn open(locator: &Path, rate_hz: f64, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(BackendError::InvalidArgument(format!(
                "rate must be positive, got {rate_hz} Hz"
            )));
        }
        let path = resolve_counter_path(locator);
        let prev = poll_live_counter(&path, clock.as_ref())?;
        let modulus = path
            .parent()
            .map(|d| d.join("max_energy_range_uj"))
            .and_then(|p| read_u64(&p).ok())
            .map(|max| max as u128 + 1)
            .unwrap_or_else(|| prev.domain().modulus());
        let period_us = ((1e6 / rate_hz).round() as u64).max(1);
        Ok(Self {
            path,
            modulus,
            period_us,
            next_due_us: prev.timestamp_us() + period_us,
            prev,
            clock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Counter wrap bound in microjoules.
    pub fn modulus(&self) -> u128 {
        self.modulus
    }
}

impl PowerSource for PowercapSource {
    fn label(&self) -> String {
        format!("powercap:{}", self.path.display())
    }

    fn next_sample(&mut self) -> Result<Option<PowerSample>, BackendError> {
        self.clock.sleep_until_us(self.next_due_us);
        let curr = poll_live_counter(&self.path, self.clock.as_ref())?;
        let ticks = modular_delta(self.prev.raw(), curr.raw(), self.modulus);
        let joules = raw_to_joules(ticks, curr.domain());
        let dt_s = (curr.timestamp_us() - self.prev.timestamp_us()) as f64 * 1e-6;
        let sample = PowerSample::new(curr.timestamp_us(), joules / dt_s * 1000.0)?;
        // stay on the original grid; skip slots that were missed entirely
        self.next_due_us += self.period_us;
        if self.next_due_us <= curr.timestamp_us() {
            let behind = curr.timestamp_us() - self.next_due_us;
            self.next_due_us += (behind / self.period_us + 1) * self.period_us;
        }
        self.prev = curr;
        Ok(Some(sample))
    }
}
