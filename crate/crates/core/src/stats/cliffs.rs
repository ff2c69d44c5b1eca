use serde::{Deserialize, Serialize};
use std::fmt;

use super::{check_sample, StatsError};

/// Effect-size labels using the 0.147 / 0.33 / 0.474 thresholds on |delta|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn from_delta(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cliff's delta of `a` over `b`, in `[-1, 1]`. Sorts `b` once and counts
/// with binary searches, so it scales to traces with tens of thousands of
/// samples.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<(f64, Magnitude), StatsError> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut greater, mut less) = (0u64, 0u64);
    for &x in a {
        let below = sorted.partition_point(|&y| y < x);
        let at_or_below = sorted.partition_point(|&y| y <= x);
        greater += below as u64;
        less += (sorted.len() - at_or_below) as u64;
    }
    let delta = (greater as f64 - less as f64) / (a.len() as f64 * b.len() as f64);
    Ok((delta, Magnitude::from_delta(delta)))
}
