//! Non-blocking warnings about the measurement setup.

use serde::{Deserialize, Serialize};

use super::plan::ExperimentPlan;
use crate::backend::{max_safe_poll_interval, RaplDomainSpec};

/// Warns when one polling interval is long enough for a counter that wraps
/// after `wrap_energy_j` joules to wrap more than once at `tdp_w`. The safe
/// interval is half the wraparound period.
pub fn check_polling_interval_for_range(rate_hz: f64, tdp_w: f64, wrap_energy_j: f64) -> Option<String> {
    if !(tdp_w > 0.0 && rate_hz > 0.0) {
        return None;
    }
    let safe = wrap_energy_j / tdp_w / 2.0;
    let interval = 1.0 / rate_hz;
    (interval > safe).then(|| {
        format!(
            "polling interval {interval:.3} s exceeds the safe maximum of {safe:.3} s \
             for a counter wrapping every {wrap_energy_j:.1} J at {tdp_w} W"
        )
    })
}

/// Peripherals that linger in a high-power state after use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentHint {
    #[default]
    CpuOnly,
    Network,
    Gps,
    SdCard,
}

/// Minimum cooldown for components with tail power states.
pub const TAIL_STATE_FLOOR_MS: u64 = 3_000;

impl ComponentHint {
    pub fn cooldown_floor_ms(&self) -> u64 {
        match self {
            ComponentHint::CpuOnly => 0,
            ComponentHint::Network | ComponentHint::Gps | ComponentHint::SdCard => TAIL_STATE_FLOOR_MS,
        }
    }
}

pub fn check_tail_state_buffer(plan: &ExperimentPlan, hint: ComponentHint) -> Option<String> {
    let floor = hint.cooldown_floor_ms();
    (plan.cooldown_ms < floor).then(|| {
        format!(
            "cooldown of {} ms is below the {floor} ms suggested for {hint:?} workloads; \
             tail power states may leak into the next phase",
            plan.cooldown_ms
        )
    })
}

/// [`check_polling_interval_for_range`] for a raw MSR-style counter.
pub fn check_polling_interval(rate_hz: f64, tdp_w: f64, spec: &RaplDomainSpec) -> Option<String> {
    let safe = max_safe_poll_interval(tdp_w, spec).ok()?;
    let interval = 1.0 / rate_hz;
    (interval > safe).then(|| {
        format!(
            "polling interval {interval:.3} s exceeds the safe maximum of {safe:.3} s \
             for a {}-bit counter at {tdp_w} W",
            spec.counter_width()
        )
    })
}
