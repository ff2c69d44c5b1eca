use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Confidence level and relative margin of error for sizing a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRequest {
    pub confidence: f64,
    pub margin: f64,
}

impl SampleSizeRequest {
    pub fn new(confidence: f64, margin: f64) -> Result<Self, StatsError> {
        let inside = |x: f64| x > 0.0 && x < 1.0;
        if !inside(confidence) {
            return Err(StatsError::InvalidArgument(format!(
                "confidence must lie in (0, 1), got {confidence}"
            )));
        }
        if !inside(margin) {
            return Err(StatsError::InvalidArgument(format!(
                "margin must lie in (0, 1), got {margin}"
            )));
        }
        Ok(Self { confidence, margin })
    }
}

/// Cochran's sample size for an unlimited population, with the
/// maximum-variance proportion p = 0.5: `ceil(z^2 p (1 - p) / e^2)`.
pub fn required_sample_size(req: &SampleSizeRequest) -> Result<u64, StatsError> {
    let req = SampleSizeRequest::new(req.confidence, req.margin)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf((1.0 + req.confidence) / 2.0);
    Ok((z * z * 0.25 / (req.margin * req.margin)).ceil() as u64)
}
