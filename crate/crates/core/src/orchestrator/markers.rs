//! `##RUN <k> START` / `##RUN <k> END` lines emitted by workloads.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Marker {
    pub run: u32,
    pub kind: MarkerKind,
}

pub fn parse_marker(line: &str) -> Option<Marker> {
    let mut parts = line.trim_end_matches(['\r', '\n']).split(' ');
    if parts.next()? != "##RUN" {
        return None;
    }
    let run = parts.next()?.parse().ok()?;
    let kind = match parts.next()? {
        "START" => MarkerKind::Start,
        "END" => MarkerKind::End,
        _ => return None,
    };
    parts.next().is_none().then_some(Marker { run, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunBoundary {
    pub run: u32,
    pub start_us: u64,
    pub end_us: u64,
}

/// Pairs timestamped markers into complete runs, in start order. Unmatched
/// markers are dropped.
pub fn assemble_boundaries(events: &[(u64, Marker)]) -> Vec<RunBoundary> {
    let mut open: Vec<(u32, u64)> = Vec::new();
    let mut runs = Vec::new();
    for &(ts, m) in events {
        match m.kind {
            MarkerKind::Start => open.push((m.run, ts)),
            MarkerKind::End => {
                if let Some(i) = open.iter().position(|&(r, _)| r == m.run) {
                    let (run, start_us) = open.remove(i);
                    runs.push(RunBoundary {
                        run,
                        start_us,
                        end_us: ts,
                    });
                }
            }
        }
    }
    runs.sort_by_key(|b| b.start_us);
    runs
}
