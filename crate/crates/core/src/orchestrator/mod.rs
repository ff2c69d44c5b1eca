//! Runs a measurement campaign: idle baseline, then the workload with the
//! sampler bracketing it, then energy accounting.
//!
//! Two acquisition modes exist. *Recorded* backends (`replay:<file>` at speed
//! 0, `log:`) supply the workload's trace up front; the workload command is
//! still executed for its exit status, but timing comes from the recording,
//! which makes results reproducible. *Live* backends (`powercap`, paced
//! replay) are sampled on a background thread that starts before the workload
//! is launched and stops at the first sample taken after it exits.
//!
//! The idle baseline is subtracted using its mean, not its median.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::log::parse_sampler_log_at;
use crate::backend::replay::load_trace;
use crate::backend::{BackendError, BackendSelector, PowerSource, PowercapSource, ReplaySource, SamplerLogFormat};
use crate::clock::{Clock, MonotonicClock};
use crate::trace::{
    integrate_between, integrate_power_trace, net_energy, per_run_energy, summarize_trace, trace_diagnostics,
    EnergyEstimate, PowerSample, PowerTrace, SummaryStats, TraceDiagnostics, TraceError,
};

pub mod advisory;
pub mod markers;
pub mod plan;

pub use advisory::{check_tail_state_buffer, ComponentHint};
pub use markers::RunBoundary;
pub use plan::{ExperimentPlan, MarkerStream};

use markers::{assemble_boundaries, parse_marker, Marker};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("idle baseline stopped after {} of {requested} samples: {cause}", collected.len())]
    PartialBaseline {
        collected: PowerTrace,
        requested: usize,
        cause: String,
    },
    #[error("cannot start workload {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("workload failed ({status})")]
    ExperimentFailed {
        status: String,
        trace: Option<Box<PowerTrace>>,
    },
    #[error(
        "workload finished too fast to measure: {samples} samples over {wall_duration_s:.6} s \
         (sampling period {period_s:.6} s)"
    )]
    TooFastWorkload {
        samples: usize,
        wall_duration_s: f64,
        period_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub stats: SummaryStats,
    pub trace: PowerTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub baseline: BaselineResult,
    pub workload_trace: PowerTrace,
    pub wall_duration_s: f64,
    pub total_energy: EnergyEstimate,
    pub net_energy: EnergyEstimate,
    pub per_run: EnergyEstimate,
    /// Runs the per-run figure is averaged over (`runs - warmup_discard_runs`).
    pub measured_runs: u32,
    pub diagnostics: TraceDiagnostics,
    pub run_boundaries: Option<Vec<RunBoundary>>,
    /// Workload start minus first sample, live mode only.
    pub start_skew_us: Option<u64>,
    /// Last sample minus workload exit, live mode only.
    pub end_skew_us: Option<u64>,
    /// User + system CPU time of the workload; informational only.
    pub cpu_time_s: Option<f64>,
    pub warnings: Vec<String>,
}

enum Acquisition {
    Recorded(PowerTrace),
    Live(Box<dyn PowerSource>, Option<f64>),
}

fn open_backend(sel: &BackendSelector, rate_hz: f64, clock: &Arc<dyn Clock>) -> Result<Acquisition, BackendError> {
    Ok(match sel {
        BackendSelector::Powercap { path } => {
            let src = PowercapSource::open(path, rate_hz, clock.clone())?;
            let wrap_j = src.modulus() as f64 * 1e-6;
            Acquisition::Live(Box::new(src), Some(wrap_j))
        }
        BackendSelector::Replay { file, speed } if *speed == 0.0 => {
            Acquisition::Recorded(load_trace(file, SamplerLogFormat::GenericPowerCsv)?.with_nominal_rate(rate_hz)?)
        }
        BackendSelector::Replay { file, speed } => {
            let trace = load_trace(file, SamplerLogFormat::GenericPowerCsv)?;
            Acquisition::Live(Box::new(ReplaySource::new(trace, *speed, clock.clone())?), None)
        }
        BackendSelector::Log { file, format } => {
            let f = std::fs::File::open(file).map_err(|e| BackendError::Io {
                path: file.clone(),
                source: e,
            })?;
            Acquisition::Recorded(parse_sampler_log_at(f, *format, Some(rate_hz))?.with_source(sel.to_string()))
        }
    })
}

pub fn measure_idle(plan: &ExperimentPlan) -> Result<BaselineResult, ExperimentError> {
    measure_idle_with(plan, Arc::new(MonotonicClock::new()))
}

/// Collects exactly `baseline_samples` samples from the idle source. The
/// machine is assumed quiescent; nothing here can check that.
pub fn measure_idle_with(plan: &ExperimentPlan, clock: Arc<dyn Clock>) -> Result<BaselineResult, ExperimentError> {
    plan.validate_idle()?;
    let wanted = plan.baseline_samples;
    let rate = plan.sampling_rate_hz;
    let trace = match open_backend(plan.idle_source(), rate, &clock)? {
        Acquisition::Recorded(trace) => {
            if trace.len() < wanted {
                let cause = format!("recording holds only {} samples", trace.len());
                return Err(ExperimentError::PartialBaseline {
                    collected: trace,
                    requested: wanted,
                    cause,
                });
            }
            trace.split_at(wanted).0
        }
        Acquisition::Live(mut src, _) => {
            let label = src.label();
            let mut samples = Vec::with_capacity(wanted);
            while samples.len() < wanted {
                let cause = match src.next_sample() {
                    Ok(Some(s)) => {
                        samples.push(s);
                        continue;
                    }
                    Ok(None) => "source exhausted".to_owned(),
                    Err(e) => e.to_string(),
                };
                return Err(ExperimentError::PartialBaseline {
                    collected: PowerTrace::new(samples, rate, label)?,
                    requested: wanted,
                    cause,
                });
            }
            PowerTrace::new(samples, rate, label)?
        }
    };
    Ok(BaselineResult {
        stats: summarize_trace(&trace)?,
        trace,
    })
}

struct WorkloadOutcome {
    start_us: u64,
    end_us: u64,
    status: ExitStatus,
    markers: Vec<(u64, Marker)>,
    cpu_time_s: Option<f64>,
}

#[cfg(unix)]
fn children_cpu_time_s() -> Option<f64> {
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::getrusage(libc::RUSAGE_CHILDREN, &mut usage) };
    (rc == 0).then(|| {
        let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
        tv(usage.ru_utime) + tv(usage.ru_stime)
    })
}

#[cfg(not(unix))]
fn children_cpu_time_s() -> Option<f64> {
    None
}

type MarkerSink = (Arc<dyn Clock>, Arc<Mutex<Vec<(u64, Marker)>>>);

/// Copies a child stream line by line to our stderr, timestamping run
/// markers when `markers` is set.
fn pump<R: Read + Send + 'static>(stream: R, markers: Option<MarkerSink>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
            if let Some((clock, sink)) = &markers {
                if let Some(m) = parse_marker(&line) {
                    let ts = clock.now_us();
                    sink.lock().expect("marker sink").push((ts, m));
                    continue;
                }
            }
            let _ = std::io::stderr().write_all(line.as_bytes());
        }
    })
}

fn supervise_workload(plan: &ExperimentPlan, clock: &Arc<dyn Clock>) -> Result<WorkloadOutcome, ExperimentError> {
    let command = plan.workload.join(" ");
    let mut cmd = Command::new(&plan.workload[0]);
    cmd.args(&plan.workload[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let cpu_before = children_cpu_time_s();
    let start_us = clock.now_us();
    let mut child = cmd.spawn().map_err(|e| ExperimentError::Spawn { command, source: e })?;

    let sink = Arc::new(Mutex::new(Vec::new()));
    let tap = Some((clock.clone(), sink.clone()));
    let (out_tap, err_tap) = match plan.marker_stream {
        MarkerStream::Stdout => (tap, None),
        MarkerStream::Stderr => (None, tap),
    };
    let pumps = [
        pump(child.stdout.take().expect("piped stdout"), out_tap),
        pump(child.stderr.take().expect("piped stderr"), err_tap),
    ];

    let status = child.wait().map_err(|e| ExperimentError::Io {
        path: PathBuf::from(&plan.workload[0]),
        source: e,
    })?;
    let end_us = clock.now_us();
    let cpu_time_s = match (cpu_before, children_cpu_time_s()) {
        (Some(a), Some(b)) => Some((b - a).max(0.0)),
        _ => None,
    };
    for p in pumps {
        let _ = p.join();
    }
    let markers = std::mem::take(&mut *sink.lock().expect("marker sink"));
    Ok(WorkloadOutcome {
        start_us,
        end_us,
        status,
        markers,
        cpu_time_s,
    })
}

struct LiveCapture {
    trace: PowerTrace,
    outcome: WorkloadOutcome,
    warnings: Vec<String>,
}

fn capture_live(
    plan: &ExperimentPlan,
    source: Box<dyn PowerSource>,
    clock: &Arc<dyn Clock>,
) -> Result<LiveCapture, ExperimentError> {
    let label = source.label();
    let stop_after = Arc::new(AtomicU64::new(u64::MAX));
    let (tx, rx) = mpsc::channel::<Result<PowerSample, BackendError>>();
    let sampler = {
        let stop_after = stop_after.clone();
        let mut source = source;
        thread::spawn(move || loop {
            match source.next_sample() {
                Ok(Some(s)) => {
                    let last = s.timestamp_us >= stop_after.load(Ordering::Acquire);
                    if tx.send(Ok(s)).is_err() || last {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        })
    };

    // the workload starts only once the sampler has produced something
    let mut samples = Vec::new();
    match rx.recv() {
        Ok(Ok(s)) => samples.push(s),
        Ok(Err(e)) => {
            let _ = sampler.join();
            return Err(e.into());
        }
        Err(_) => {
            let _ = sampler.join();
            return Err(BackendError::InvalidArgument(format!("{label} produced no samples")).into());
        }
    }

    let outcome = supervise_workload(plan, clock);
    let end_us = outcome.as_ref().map(|o| o.end_us).unwrap_or(0);
    stop_after.store(end_us, Ordering::Release);
    let mut sampler_error = None;
    for msg in rx {
        match msg {
            Ok(s) => samples.push(s),
            Err(e) => sampler_error = Some(e),
        }
    }
    let _ = sampler.join();
    let outcome = outcome?;
    if let Some(e) = sampler_error {
        return Err(e.into());
    }

    let mut warnings = Vec::new();
    let last_ts = samples.last().map(|s| s.timestamp_us).unwrap_or(0);
    if last_ts < outcome.end_us {
        warnings.push(format!(
            "{label} ran out {} us before the workload exited; the tail is unmeasured",
            outcome.end_us - last_ts
        ));
    }
    Ok(LiveCapture {
        trace: PowerTrace::new(samples, plan.sampling_rate_hz, label)?,
        outcome,
        warnings,
    })
}

fn failed(status: ExitStatus, trace: PowerTrace) -> ExperimentError {
    ExperimentError::ExperimentFailed {
        status: status.to_string(),
        trace: Some(Box::new(trace)),
    }
}

#[derive(Debug)]
struct Accounting {
    total: EnergyEstimate,
    net: EnergyEstimate,
    per_run: EnergyEstimate,
    measured_runs: u32,
}

/// Energy bookkeeping with warm-up discard. With run markers the measured
/// window runs from the start of the first kept run to the end of the last
/// run; without them the first `discard / runs` of the workload time is cut.
///
/// Live traces overhang the workload by up to a sampling period at each end,
/// so they are integrated over `window_us` only. A recorded trace is the
/// workload, and is integrated whole.
#[allow(clippy::too_many_arguments)]
fn account(
    plan: &ExperimentPlan,
    trace: &PowerTrace,
    idle_mw: f64,
    window_us: (u64, u64),
    wall_s: f64,
    boundaries: Option<&[RunBoundary]>,
    live: bool,
    warnings: &mut Vec<String>,
) -> Result<Accounting, ExperimentError> {
    let too_fast = |samples: usize| ExperimentError::TooFastWorkload {
        samples,
        wall_duration_s: wall_s,
        period_s: 1.0 / plan.sampling_rate_hz,
    };
    let (from, to) = window_us;
    let total = if live {
        integrate_between(trace, from, to)
    } else {
        integrate_power_trace(trace)
    }
    .map_err(|_| too_fast(trace.len()))?;
    let (runs, discard) = (plan.runs, plan.warmup_discard_runs);
    let measured_runs = runs - discard;
    if discard == 0 {
        let net = net_energy(&total, idle_mw, wall_s)?;
        let per_run = per_run_energy(&net, runs)?;
        return Ok(Accounting {
            total,
            net,
            per_run,
            measured_runs,
        });
    }

    let kept = boundaries.filter(|b| b.len() > discard as usize);
    let (start, end) = match kept {
        Some(b) => {
            if b.len() != runs as usize {
                warnings.push(format!(
                    "workload reported {} runs but the plan declares {runs}",
                    b.len()
                ));
            }
            (b[discard as usize].start_us, b[b.len() - 1].end_us)
        }
        None => (
            from + ((to - from) as f64 * discard as f64 / runs as f64).round() as u64,
            to,
        ),
    };
    let inside = trace.window(start, end).len();
    if end <= start || inside < 2 {
        return Err(too_fast(inside));
    }
    let measured = integrate_between(trace, start, end)?;
    let net = net_energy(&measured, idle_mw, measured.duration_s)?;
    let per_run = per_run_energy(&net, measured_runs)?;
    Ok(Accounting {
        total,
        net,
        per_run,
        measured_runs,
    })
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult, ExperimentError> {
    run_experiment_with(plan, Arc::new(MonotonicClock::new()))
}

pub fn run_experiment_with(plan: &ExperimentPlan, clock: Arc<dyn Clock>) -> Result<ExperimentResult, ExperimentError> {
    plan.validate()?;
    let mut warnings = Vec::new();
    warnings.extend(check_tail_state_buffer(plan, plan.component_hint));

    let baseline = measure_idle_with(plan, clock.clone())?;
    let idle_mw = baseline.stats.mean_mw;
    let period_s = 1.0 / plan.sampling_rate_hz;

    let (trace, wall_s, window_us, live) = match open_backend(&plan.backend, plan.sampling_rate_hz, &clock)? {
        Acquisition::Recorded(trace) => {
            let outcome = supervise_workload(plan, &clock)?;
            if !outcome.status.success() {
                return Err(failed(outcome.status, trace));
            }
            let wall_s = match integrate_power_trace(&trace) {
                Ok(e) => e.duration_s,
                Err(_) => {
                    return Err(ExperimentError::TooFastWorkload {
                        samples: trace.len(),
                        wall_duration_s: 0.0,
                        period_s,
                    })
                }
            };
            let first = trace.samples()[0].timestamp_us;
            let window = (first, first + (wall_s * 1e6).round() as u64);
            (trace, wall_s, window, None)
        }
        Acquisition::Live(source, wrap_j) => {
            if let (Some(tdp), Some(wrap_j)) = (plan.tdp_watts, wrap_j) {
                warnings.extend(advisory::check_polling_interval_for_range(
                    plan.sampling_rate_hz,
                    tdp,
                    wrap_j,
                ));
            }
            let cap = capture_live(plan, source, &clock)?;
            warnings.extend(cap.warnings);
            if !cap.outcome.status.success() {
                return Err(failed(cap.outcome.status, cap.trace));
            }
            let o = &cap.outcome;
            let wall_s = (o.end_us - o.start_us) as f64 * 1e-6;
            if cap.trace.len() < 2 || wall_s < period_s {
                return Err(ExperimentError::TooFastWorkload {
                    samples: cap.trace.len(),
                    wall_duration_s: wall_s,
                    period_s,
                });
            }
            let window = (o.start_us, o.end_us);
            (cap.trace, wall_s, window, Some(cap.outcome))
        }
    };

    if plan.cooldown_ms > 0 {
        thread::sleep(Duration::from_millis(plan.cooldown_ms));
    }

    let boundaries = live
        .as_ref()
        .map(|o| assemble_boundaries(&o.markers))
        .filter(|b| !b.is_empty());
    let acc = account(
        plan,
        &trace,
        idle_mw,
        window_us,
        wall_s,
        boundaries.as_deref(),
        live.is_some(),
        &mut warnings,
    )?;
    let diagnostics = trace_diagnostics(&trace, wall_s)?;
    let (start_skew_us, end_skew_us) = match &live {
        Some(o) => {
            let first = trace.samples()[0].timestamp_us;
            let last = trace.samples()[trace.len() - 1].timestamp_us;
            (
                Some(o.start_us.saturating_sub(first)),
                Some(last.saturating_sub(o.end_us)),
            )
        }
        None => (None, None),
    };

    Ok(ExperimentResult {
        plan: plan.clone(),
        baseline,
        workload_trace: trace,
        wall_duration_s: wall_s,
        total_energy: acc.total,
        net_energy: acc.net,
        per_run: acc.per_run,
        measured_runs: acc.measured_runs,
        diagnostics,
        run_boundaries: boundaries,
        start_skew_us,
        end_skew_us,
        cpu_time_s: live.as_ref().and_then(|o| o.cpu_time_s),
        warnings,
    })
}
