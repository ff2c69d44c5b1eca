//! Decoding of raw, wrapping energy counters.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::BackendError;

/// Tick size on Sandy Bridge, in microjoules.
pub const SANDY_BRIDGE_UNIT_UJ: f64 = 15.3;
/// Tick size on Haswell and Skylake, in microjoules.
pub const HASWELL_UNIT_UJ: f64 = 61.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PowerDomain {
    Pkg,
    Pp0,
    Pp1,
    Dram,
}

impl fmt::Display for PowerDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerDomain::Pkg => "PKG",
            PowerDomain::Pp0 => "PP0",
            PowerDomain::Pp1 => "PP1",
            PowerDomain::Dram => "DRAM",
        })
    }
}

impl FromStr for PowerDomain {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PKG" | "PACKAGE" => Ok(PowerDomain::Pkg),
            "PP0" | "CORE" | "CORES" => Ok(PowerDomain::Pp0),
            "PP1" | "UNCORE" => Ok(PowerDomain::Pp1),
            "DRAM" => Ok(PowerDomain::Dram),
            other => Err(BackendError::InvalidArgument(format!("unknown power domain {other:?}"))),
        }
    }
}

/// How to decode one domain's raw counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaplDomainSpec {
    domain: PowerDomain,
    energy_unit_uj: f64,
    counter_width: u32,
}

impl RaplDomainSpec {
    pub fn new(domain: PowerDomain, energy_unit_uj: f64, counter_width: u32) -> Result<Self, BackendError> {
        if !(energy_unit_uj.is_finite() && energy_unit_uj > 0.0) {
            return Err(BackendError::InvalidArgument(format!(
                "energy unit must be positive, got {energy_unit_uj} uJ"
            )));
        }
        if counter_width != 32 && counter_width != 64 {
            return Err(BackendError::InvalidArgument(format!(
                "counter width must be 32 or 64 bits, got {counter_width}"
            )));
        }
        Ok(Self {
            domain,
            energy_unit_uj,
            counter_width,
        })
    }

    pub fn sandy_bridge(domain: PowerDomain) -> Self {
        Self::new(domain, SANDY_BRIDGE_UNIT_UJ, 32).expect("valid preset")
    }

    pub fn haswell(domain: PowerDomain) -> Self {
        Self::new(domain, HASWELL_UNIT_UJ, 32).expect("valid preset")
    }

    /// The Linux powercap interface already reports microjoules.
    pub fn powercap(domain: PowerDomain) -> Self {
        Self::new(domain, 1.0, 64).expect("valid preset")
    }

    pub fn domain(&self) -> PowerDomain {
        self.domain
    }

    pub fn energy_unit_uj(&self) -> f64 {
        self.energy_unit_uj
    }

    pub fn counter_width(&self) -> u32 {
        self.counter_width
    }

    /// Largest raw value plus one.
    pub fn modulus(&self) -> u128 {
        1u128 << self.counter_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterReading {
    raw: u64,
    timestamp_us: u64,
    domain: RaplDomainSpec,
}

impl CounterReading {
    pub fn new(raw: u64, timestamp_us: u64, domain: RaplDomainSpec) -> Result<Self, BackendError> {
        if (raw as u128) >= domain.modulus() {
            return Err(BackendError::InvalidArgument(format!(
                "raw value {raw} does not fit in {} bits",
                domain.counter_width
            )));
        }
        Ok(Self {
            raw,
            timestamp_us,
            domain,
        })
    }

    pub fn raw(&self) -> u64 {
        self.raw
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn domain(&self) -> &RaplDomainSpec {
        &self.domain
    }
}

/// Ticks elapsed between two readings of the same counter, assuming it
/// wrapped at most once in between.
pub fn counter_delta(prev: &CounterReading, curr: &CounterReading) -> Result<u64, BackendError> {
    if prev.domain != curr.domain {
        return Err(BackendError::DomainMismatch(format!(
            "{} ({} uJ, {} bit) vs {} ({} uJ, {} bit)",
            prev.domain.domain,
            prev.domain.energy_unit_uj,
            prev.domain.counter_width,
            curr.domain.domain,
            curr.domain.energy_unit_uj,
            curr.domain.counter_width
        )));
    }
    if curr.timestamp_us <= prev.timestamp_us {
        return Err(BackendError::InvalidArgument(format!(
            "reading at {} us does not follow reading at {} us",
            curr.timestamp_us, prev.timestamp_us
        )));
    }
    Ok(modular_delta(prev.raw, curr.raw, prev.domain.modulus()))
}

/// `(curr - prev) mod modulus`, for counters that wrap at an arbitrary bound.
pub fn modular_delta(prev: u64, curr: u64, modulus: u128) -> u64 {
    let (p, c) = (prev as u128, curr as u128);
    ((c + modulus - p % modulus) % modulus) as u64
}

pub fn raw_to_joules(ticks: u64, spec: &RaplDomainSpec) -> f64 {
    ticks as f64 * spec.energy_unit_uj * 1e-6
}

/// Seconds until a counter of this domain wraps when drawing `power_w` watts.
pub fn wraparound_period(power_w: f64, spec: &RaplDomainSpec) -> Result<f64, BackendError> {
    if !(power_w.is_finite() && power_w > 0.0) {
        return Err(BackendError::InvalidArgument(format!(
            "power must be positive, got {power_w} W"
        )));
    }
    Ok(spec.modulus() as f64 * spec.energy_unit_uj * 1e-6 / power_w)
}

/// Half the wraparound period at the platform's thermal design power.
pub fn max_safe_poll_interval(tdp_w: f64, spec: &RaplDomainSpec) -> Result<f64, BackendError> {
    Ok(wraparound_period(tdp_w, spec)? / 2.0)
}
