//! Plain-text profile, cost-model and event-pair files.
//!
//! ```text
//! operation_id,count              platform,<identifier>
//! alloc,100                       operation_id,millijoules_per_op
//! hash,50                         alloc,2
//! ```
//!
//! Lines starting with `#` are comments. In profile files, `# note: <text>`
//! lines become free-text annotations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ModelError, OperationCostModel, OperationProfile};

pub const PROFILE_HEADER: &str = "operation_id,count";
pub const COST_HEADER: &str = "operation_id,millijoules_per_op";
pub const PAIRS_HEADER: &str = "reference_us,meter_us";

fn parse_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

/// Non-blank, non-comment lines with 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn expect_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<(usize, &'a str), ModelError> {
    lines.next().ok_or_else(|| parse_err(1, format!("missing {what}")))
}

fn parse_records<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    value_name: &str,
) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut map = BTreeMap::new();
    for (n, line) in lines {
        let (op, value) = line
            .split_once(',')
            .ok_or_else(|| parse_err(n, "expected operation_id,value"))?;
        let op = op.trim();
        if op.is_empty() {
            return Err(parse_err(n, "empty operation id"));
        }
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(n, format!("invalid {value_name} {value:?}")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(parse_err(n, format!("{value_name} must be non-negative, got {v}")));
        }
        if map.insert(op.to_owned(), v).is_some() {
            return Err(parse_err(n, format!("duplicate operation {op:?}")));
        }
    }
    Ok(map)
}

pub fn parse_profile(text: &str, label: &str) -> Result<OperationProfile, ModelError> {
    let annotations = text
        .lines()
        .filter_map(|l| l.strip_prefix("# note:"))
        .map(|s| s.trim().to_owned())
        .collect();
    let mut lines = content_lines(text);
    let (n, header) = expect_line(&mut lines, "header")?;
    if header != PROFILE_HEADER {
        return Err(parse_err(n, format!("expected header {PROFILE_HEADER:?}")));
    }
    Ok(OperationProfile {
        label: label.to_owned(),
        counts: parse_records(lines, "count")?,
        annotations,
    })
}

pub fn parse_cost_model(text: &str) -> Result<OperationCostModel, ModelError> {
    let mut lines = content_lines(text);
    let (n, platform_line) = expect_line(&mut lines, "platform line")?;
    let platform = platform_line
        .strip_prefix("platform,")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| parse_err(n, "expected \"platform,<identifier>\""))?;
    let (n, header) = expect_line(&mut lines, "header")?;
    if header != COST_HEADER {
        return Err(parse_err(n, format!("expected header {COST_HEADER:?}")));
    }
    let note = text
        .lines()
        .find_map(|l| l.strip_prefix("# calibration:"))
        .map(|s| s.trim().to_owned())
        .unwrap_or_default();
    Ok(OperationCostModel {
        platform: platform.to_owned(),
        costs_mj: parse_records(lines, "cost")?,
        calibration_note: note,
    })
}

pub fn write_cost_model(model: &OperationCostModel) -> String {
    let mut out = format!("platform,{}\n", model.platform);
    if !model.calibration_note.is_empty() {
        let _ = writeln!(out, "# calibration: {}", model.calibration_note.replace('\n', " "));
    }
    out.push_str(COST_HEADER);
    out.push('\n');
    for (op, cost) in &model.costs_mj {
        let _ = writeln!(out, "{op},{cost}");
    }
    out
}

/// Matched event timestamps, `reference_us,meter_us` per line.
pub fn parse_event_pairs(text: &str) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut lines = content_lines(text);
    let (n, header) = expect_line(&mut lines, "header")?;
    if header != PAIRS_HEADER {
        return Err(parse_err(n, format!("expected header {PAIRS_HEADER:?}")));
    }
    let (mut reference, mut meter) = (Vec::new(), Vec::new());
    for (n, line) in lines {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err(n, "expected two fields"))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(n, format!("invalid timestamp {s:?}")))
        };
        reference.push(parse(a)?);
        meter.push(parse(b)?);
    }
    Ok((reference, meter))
}
