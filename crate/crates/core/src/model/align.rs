//! Least-squares mapping between a reference clock and an external meter's clock.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::trace::{PowerSample, PowerTrace, TraceError};

/// `meter_time ≈ drift * reference_time + offset`, all times in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockAlignment {
    pub offset_us: f64,
    pub drift: f64,
    pub residual_rms_us: f64,
    pub n_points: usize,
}

/// Ordinary least squares over matched event timestamps. Outliers are not
/// rejected; a large `residual_rms_us` is the signal to look for them.
pub fn align_clocks(reference_us: &[f64], meter_us: &[f64]) -> Result<ClockAlignment, ModelError> {
    if reference_us.len() != meter_us.len() {
        return Err(ModelError::InvalidArgument(format!(
            "{} reference events but {} meter events",
            reference_us.len(),
            meter_us.len()
        )));
    }
    let n = reference_us.len();
    if n < 2 {
        return Err(ModelError::InsufficientPoints(n));
    }
    if reference_us.iter().chain(meter_us).any(|t| !t.is_finite()) {
        return Err(ModelError::InvalidArgument("timestamps must be finite".into()));
    }
    let nf = n as f64;
    let mean_x = reference_us.iter().sum::<f64>() / nf;
    let mean_y = meter_us.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in reference_us.iter().zip(meter_us) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(ModelError::SingularFit);
    }
    let drift = sxy / sxx;
    let offset = mean_y - drift * mean_x;
    let sse: f64 = reference_us
        .iter()
        .zip(meter_us)
        .map(|(x, y)| {
            let r = y - (drift * x + offset);
            r * r
        })
        .sum();
    Ok(ClockAlignment {
        offset_us: offset,
        drift,
        residual_rms_us: (sse / nf).sqrt(),
        n_points: n,
    })
}

impl ClockAlignment {
    pub fn to_reference_us(&self, meter_us: f64) -> f64 {
        (meter_us - self.offset_us) / self.drift
    }

    /// Re-stamps a meter-recorded trace onto the reference clock.
    pub fn retime_trace(&self, trace: &PowerTrace) -> Result<PowerTrace, ModelError> {
        if self.drift.is_nan() || self.drift <= 0.0 {
            return Err(ModelError::InvalidArgument(format!(
                "cannot re-time with non-positive drift {}",
                self.drift
            )));
        }
        let samples = trace
            .samples()
            .iter()
            .map(|s| {
                let t = self.to_reference_us(s.timestamp_us as f64).round();
                if t < 0.0 {
                    return Err(ModelError::Trace(TraceError::Malformed(format!(
                        "sample at {} us maps before the reference origin ({t} us)",
                        s.timestamp_us
                    ))));
                }
                Ok(PowerSample::new(t as u64, s.power_mw)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rate = trace.nominal_rate_hz() * self.drift;
        Ok(PowerTrace::new(samples, rate, format!("{} (aligned)", trace.source()))?)
    }
}
