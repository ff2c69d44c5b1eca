//! Two-sided Mann-Whitney U test.
//!
//! Ties get mid-ranks. Ranks are kept doubled so that every mid-rank, rank
//! sum and U value is an integer; the exact null distribution is then a
//! plain counting problem over those integers.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{check_sample, StatsError};

/// Largest smaller-sample size for which the exact distribution is used.
pub const EXACT_MAX_SMALLER_N: usize = 20;
/// Exact enumeration is skipped when the counting table would need more
/// cell updates than this (very unbalanced samples with a large side).
const EXACT_WORK_LIMIT: f64 = 4e8;
/// p-values below this are reported as zero with the underflow flag set.
pub const P_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// U for the first sample: pairs where it is larger, plus half the ties.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    pub p_underflow: bool,
}

struct Ranking {
    /// Doubled rank sum of the first sample.
    rank_sum_a2: u64,
    /// (size, doubled mid-rank) per tie group, in ascending value order.
    groups: Vec<(usize, u64)>,
}

fn rank(a: &[f64], b: &[f64]) -> Ranking {
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a2 = 0;
    let mut groups = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // positions i..=j hold 1-based ranks i+1..=j+1; doubled mid-rank is their sum
        let mid2 = (i + 1 + j + 1) as u64;
        let in_a = pooled[i..=j].iter().filter(|p| p.1).count() as u64;
        rank_sum_a2 += in_a * mid2;
        groups.push((j - i + 1, mid2));
        i = j + 1;
    }
    Ranking { rank_sum_a2, groups }
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, StatsError> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let (na, nb) = (a.len(), b.len());
    let ranking = rank(a, b);
    let u_a2 = ranking.rank_sum_a2 - (na * (na + 1)) as u64;
    let u = u_a2 as f64 / 2.0;

    let smaller = na.min(nb);
    let n = na + nb;
    let table = (2 * smaller * (n - smaller) + 1) as f64;
    let exact = smaller <= EXACT_MAX_SMALLER_N && n as f64 * smaller as f64 * table <= EXACT_WORK_LIMIT;

    let (p, method) = if exact {
        (exact_p(&ranking.groups, na, nb, u_a2), PValueMethod::Exact)
    } else {
        (normal_p(&ranking.groups, na, nb, u), PValueMethod::NormalApproximation)
    };
    let underflow = p < P_UNDERFLOW;
    Ok(MannWhitneyResult {
        u_statistic: u,
        p_value: if underflow { 0.0 } else { p.min(1.0) },
        method,
        p_underflow: underflow,
    })
}

fn binomial_row(t: usize) -> Vec<f64> {
    let mut row = vec![1.0; t + 1];
    for j in 1..t {
        row[j] = row[j - 1] * (t - j + 1) as f64 / j as f64;
    }
    row
}

/// Null distribution of the doubled U of the first sample over all
/// `C(na + nb, na)` equally likely label assignments.
fn exact_distribution(groups: &[(usize, u64)], na: usize, nb: usize) -> Vec<f64> {
    // count subsets of the smaller side; U of the other side mirrors it
    let m = na.min(nb);
    let max_s2: u64 = {
        let mut top = 0;
        let mut left = m;
        for &(t, r2) in groups.iter().rev() {
            let take = t.min(left);
            top += take as u64 * r2;
            left -= take;
            if left == 0 {
                break;
            }
        }
        top
    };
    let width = max_s2 as usize + 1;
    let mut dp = vec![vec![0.0f64; width]; m + 1];
    dp[0][0] = 1.0;
    let mut reach = 0usize;
    for &(t, r2) in groups {
        let binom = binomial_row(t);
        for k in (0..=m.min(reach)).rev() {
            let jmax = t.min(m - k);
            if jmax == 0 {
                continue;
            }
            let (lo, hi) = dp.split_at_mut(k + 1);
            let src = &lo[k];
            for (s, &ways) in src.iter().enumerate() {
                if ways == 0.0 {
                    continue;
                }
                for j in 1..=jmax {
                    let target = s + j * r2 as usize;
                    if target < width {
                        hi[j - 1][target] += ways * binom[j];
                    }
                }
            }
        }
        reach += t;
    }

    let total_u2 = 2 * na * nb;
    let offset = m * (m + 1);
    let mut dist = vec![0.0; total_u2 + 1];
    for (s2, &ways) in dp[m].iter().enumerate() {
        if ways == 0.0 {
            continue;
        }
        let u_small2 = s2 - offset;
        let u_a2 = if na <= nb { u_small2 } else { total_u2 - u_small2 };
        dist[u_a2] += ways;
    }
    dist
}

fn exact_p(groups: &[(usize, u64)], na: usize, nb: usize, u_a2: u64) -> f64 {
    let dist = exact_distribution(groups, na, nb);
    let total: f64 = dist.iter().sum();
    let u = u_a2 as usize;
    let lower: f64 = dist[..=u].iter().sum();
    let upper: f64 = dist[u..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(groups: &[(usize, u64)], na: usize, nb: usize, u: f64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let ties: f64 = groups
        .iter()
        .map(|&(t, _)| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if variance.is_nan() || variance <= 0.0 {
        return 1.0;
    }
    let mean = na * nb / 2.0;
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}
