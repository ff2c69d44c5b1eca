//! Sources of power traces: live energy counters, recorded logs and replays.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{PowerSample, TraceError};

pub mod counter;
pub mod log;
pub mod powercap;
pub mod replay;

pub use counter::{
    counter_delta, max_safe_poll_interval, raw_to_joules, wraparound_period, CounterReading, PowerDomain,
    RaplDomainSpec, HASWELL_UNIT_UJ, SANDY_BRIDGE_UNIT_UJ,
};
pub use log::{parse_sampler_log, parse_sampler_log_at, write_power_csv, SamplerLogFormat};
pub use powercap::{poll_live_counter, PowercapSource};
pub use replay::{replay_trace, ReplaySource, ReplayStream};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("counter domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported platform: {0}")]
    UnsupportedPlatform(String),
    #[error("insufficient privileges: {0}")]
    Privilege(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Something that yields power samples one at a time, blocking until each
/// is due. `Ok(None)` means the source is exhausted.
pub trait PowerSource: Send {
    fn label(&self) -> String;
    fn next_sample(&mut self) -> Result<Option<PowerSample>, BackendError>;
}

/// Where an experiment's power data comes from.
///
/// Textual forms: `powercap`, `powercap:<path>`, `replay:<file>`,
/// `replay:<file>@<speed>`, `log:<file>:<format>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSelector {
    Powercap {
        path: PathBuf,
    },
    /// Speed 0 treats the file as the recording of the workload itself.
    Replay {
        file: PathBuf,
        speed: f64,
    },
    Log {
        file: PathBuf,
        format: SamplerLogFormat,
    },
}

impl BackendSelector {
    /// Whether the data is pre-recorded rather than sampled while the
    /// workload runs.
    pub fn is_recorded(&self) -> bool {
        match self {
            BackendSelector::Powercap { .. } => false,
            BackendSelector::Replay { speed, .. } => *speed == 0.0,
            BackendSelector::Log { .. } => true,
        }
    }

    pub fn is_live_hardware(&self) -> bool {
        matches!(self, BackendSelector::Powercap { .. })
    }
}

impl fmt::Display for BackendSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSelector::Powercap { path } => write!(f, "powercap:{}", path.display()),
            BackendSelector::Replay { file, speed } if *speed == 0.0 => write!(f, "replay:{}", file.display()),
            BackendSelector::Replay { file, speed } => write!(f, "replay:{}@{speed}", file.display()),
            BackendSelector::Log { file, format } => write!(f, "log:{}:{format}", file.display()),
        }
    }
}

impl FromStr for BackendSelector {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            BackendError::InvalidArgument(format!(
                "invalid backend {s:?} (expected powercap[:<path>], replay:<file>[@<speed>] or log:<file>:<format>)"
            ))
        };
        if s == "powercap" {
            return Ok(BackendSelector::Powercap {
                path: PathBuf::from(powercap::DEFAULT_POWERCAP_PATH),
            });
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "powercap" => Ok(BackendSelector::Powercap { path: rest.into() }),
            "replay" => {
                let (file, speed) = match rest.rsplit_once('@') {
                    Some((file, speed)) => (file, speed.parse::<f64>().map_err(|_| bad())?),
                    None => (rest, 0.0),
                };
                if !(speed.is_finite() && speed >= 0.0) || file.is_empty() {
                    return Err(bad());
                }
                Ok(BackendSelector::Replay {
                    file: file.into(),
                    speed,
                })
            }
            "log" => {
                let (file, format) = rest.rsplit_once(':').ok_or_else(bad)?;
                if file.is_empty() {
                    return Err(bad());
                }
                Ok(BackendSelector::Log {
                    file: file.into(),
                    format: format.parse()?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for BackendSelector {
    type Error = BackendError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BackendSelector> for String {
    fn from(b: BackendSelector) -> Self {
        b.to_string()
    }
}
