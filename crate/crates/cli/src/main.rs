use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use energyprobe_core::backend::replay::load_trace;
use energyprobe_core::backend::{replay_trace, BackendSelector, SamplerLogFormat};
use energyprobe_core::model::files::{parse_cost_model, parse_event_pairs, parse_profile, write_cost_model};
use energyprobe_core::model::{
    align_clocks, calibrate_costs, estimate_from_models, flops_proxy, Coverage, Microbenchmark,
};
use energyprobe_core::orchestrator::{measure_idle, run_experiment, ExperimentError, ExperimentPlan};
use energyprobe_core::report::{
    emit_alignment, emit_baseline, emit_flops_proxy, emit_model_estimate, emit_overhead, emit_report, read_report,
    write_output, ReportFormat,
};
use energyprobe_core::stats::{overhead_report, required_sample_size, SampleSizeRequest};

/// Measure the energy used by a program from power traces and energy counters.
#[derive(Parser)]
#[command(name = "energyprobe", version, about)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Experiment plan (TOML); flags given on the command line override it
    #[arg(long, global = true)]
    plan: Option<PathBuf>,

    /// Sampling rate in Hz [default: 10]
    #[arg(long, global = true)]
    rate_hz: Option<f64>,

    /// Number of workload iterations the command performs [default: 10]
    #[arg(long, global = true)]
    runs: Option<u32>,

    /// Leading runs excluded from energy accounting [default: 0]
    #[arg(long, global = true)]
    warmup_discard: Option<u32>,

    /// Pause after the workload exits, in milliseconds [default: 0]
    #[arg(long, global = true)]
    cooldown_ms: Option<u64>,

    /// Idle samples to collect before the workload [default: 385]
    #[arg(long, global = true)]
    baseline_samples: Option<usize>,

    /// powercap[:<path>], replay:<file>[@<speed>] or log:<file>:<format> [default: powercap]
    #[arg(long, global = true)]
    backend: Option<BackendSelector>,

    /// Source for the idle baseline when it differs from --backend
    #[arg(long, global = true)]
    idle_backend: Option<BackendSelector>,

    /// Write output here instead of stdout
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// report or plotdata
    #[arg(long, global = true, default_value = "report")]
    format: ReportFormat,

    /// Environment disclosure, `key=value` or free text; repeatable
    #[arg(long = "env-note", global = true)]
    env_notes: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the idle power baseline
    Baseline,
    /// Run a workload under the sampler and account its energy
    Measure {
        /// Workload command line
        #[arg(last = true)]
        command: Vec<String>,
    },
    /// Compare two experiment reports taken at a low and a high sampling rate
    Compare {
        /// Report of the low-rate run
        low: PathBuf,
        /// Report of the high-rate run
        high: PathBuf,
    },
    /// Analytical energy models
    #[command(subcommand)]
    Model(ModelCommand),
    /// Fit a meter clock to the reference clock from matched event timestamps
    Align {
        /// CSV with header `reference_us,meter_us`
        #[arg(long)]
        pairs: PathBuf,
        /// Meter-recorded power CSV to re-stamp onto the reference clock
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Stream a recorded power CSV, optionally paced to its original timing
    Replay {
        file: PathBuf,
        /// 0 emits at once; 1 reproduces the recorded timing
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
    },
    /// Number of samples needed for a confidence level and margin of error
    Samplesize {
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Operation counts times per-operation costs
    Estimate {
        /// Profile file (`operation_id,count`)
        #[arg(long)]
        profile: PathBuf,
        /// Cost model file (`platform,<id>` then `operation_id,millijoules_per_op`)
        #[arg(long)]
        costs: PathBuf,
        /// List operations without a cost instead of failing
        #[arg(long)]
        lenient: bool,
    },
    /// Derive per-operation costs from microbenchmark traces
    Calibrate {
        #[arg(long)]
        platform: String,
        /// `<operation>=<power csv>:<repetitions>`; repeatable
        #[arg(long = "bench", required = true)]
        benches: Vec<String>,
    },
    /// Duration times FLOP rate, a comparison proxy for accelerator work
    Flops {
        #[arg(long)]
        duration_s: f64,
        #[arg(long)]
        flops_rate: f64,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn build_plan(opts: &GlobalOpts, workload: Vec<String>) -> Result<ExperimentPlan> {
    let mut plan = match &opts.plan {
        Some(path) => ExperimentPlan::load(path)?,
        None => ExperimentPlan::new(
            opts.backend
                .clone()
                .unwrap_or_else(|| "powercap".parse().expect("valid selector")),
            Vec::new(),
            10.0,
        ),
    };
    if let Some(b) = &opts.backend {
        plan.backend = b.clone();
    }
    if let Some(b) = &opts.idle_backend {
        plan.idle_backend = Some(b.clone());
    }
    if let Some(r) = opts.rate_hz {
        plan.sampling_rate_hz = r;
    }
    if let Some(r) = opts.runs {
        plan.runs = r;
    }
    if let Some(d) = opts.warmup_discard {
        plan.warmup_discard_runs = d;
    }
    if let Some(c) = opts.cooldown_ms {
        plan.cooldown_ms = c;
    }
    if let Some(n) = opts.baseline_samples {
        plan.baseline_samples = n;
    }
    if !workload.is_empty() {
        plan.workload = workload;
    }
    merge_env_notes(&mut plan.environment, &opts.env_notes);
    Ok(plan)
}

fn merge_env_notes(env: &mut BTreeMap<String, String>, notes: &[String]) {
    for note in notes {
        match note.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() && !k.contains(' ') => {
                env.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            _ => {
                env.entry("note".to_owned())
                    .and_modify(|n| {
                        n.push_str("; ");
                        n.push_str(note);
                    })
                    .or_insert_with(|| note.clone());
            }
        }
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(path) => write_output(path, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let opts = &cli.opts;
    let output = opts.output.as_deref();
    match cli.command {
        Command::Baseline => {
            let plan = build_plan(opts, Vec::new())?;
            if plan.idle_source().is_live_hardware() && plan.environment.is_empty() {
                eprintln!("warning: no --env-note given; the report will not describe the test environment");
            }
            let baseline = measure_idle(&plan)?;
            eprintln!(
                "idle: mean {:.3} mW, median {:.3} mW, std dev {:.3} mW over {} samples",
                baseline.stats.mean_mw, baseline.stats.median_mw, baseline.stats.std_dev_mw, baseline.stats.count
            );
            emit(output, &emit_baseline(&plan, &baseline, opts.format)?)
        }
        Command::Measure { command } => {
            let plan = build_plan(opts, command)?;
            if plan.workload.is_empty() {
                return Err(usage("measure needs a workload command after `--`"));
            }
            let live = plan.backend.is_live_hardware() || plan.idle_source().is_live_hardware();
            if live && plan.environment.is_empty() {
                return Err(usage(
                    "measuring on live hardware requires --env-note (or an [environment] table in the plan) \
                     describing power source, governor and background load",
                ));
            }
            let result = run_experiment(&plan)?;
            warn_all(&result.warnings);
            eprintln!(
                "net {:.3} J over {:.3} s, {:.3} J per run ({} runs)",
                result.net_energy.joules, result.wall_duration_s, result.per_run.joules, result.measured_runs
            );
            emit(output, &emit_report(&result, opts.format)?)
        }
        Command::Compare { low, high } => {
            let low = read_report(&low)?.to_experiment_result()?;
            let high = read_report(&high)?.to_experiment_result()?;
            let overhead = overhead_report(&low, &high)?;
            eprintln!(
                "{} Hz -> {} Hz: net energy {:+.2}%, Cliff's delta {:.3} ({})",
                overhead.low_rate_hz,
                overhead.high_rate_hz,
                overhead.relative_difference_percent(),
                overhead.comparison.cliffs_delta,
                overhead.comparison.magnitude
            );
            let mut env = BTreeMap::new();
            merge_env_notes(&mut env, &opts.env_notes);
            emit(output, &emit_overhead(&overhead, env, opts.format)?)
        }
        Command::Model(cmd) => run_model(cmd, output),
        Command::Align { pairs, trace } => {
            let text = std::fs::read_to_string(&pairs).with_context(|| pairs.display().to_string())?;
            let (reference, meter) =
                parse_event_pairs(&text).with_context(|| format!("reading {}", pairs.display()))?;
            let alignment = align_clocks(&reference, &meter)?;
            match trace {
                None => emit(output, &emit_alignment(&alignment)?),
                Some(path) => {
                    eprint!("{}", String::from_utf8_lossy(&emit_alignment(&alignment)?));
                    let trace = load_trace(&path, SamplerLogFormat::GenericPowerCsv)?;
                    let aligned = alignment.retime_trace(&trace)?;
                    emit(
                        output,
                        energyprobe_core::backend::log::power_csv_string(&aligned).as_bytes(),
                    )
                }
            }
        }
        Command::Replay { file, speed } => {
            let stream = replay_trace(&file, speed)?;
            let mut sink: Box<dyn Write> = match output {
                Some(path) => {
                    Box::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)
                }
                None => Box::new(std::io::stdout().lock()),
            };
            writeln!(sink, "{}", energyprobe_core::backend::log::POWER_CSV_HEADER)?;
            for s in stream {
                writeln!(sink, "{},{}", s.timestamp_us, s.power_mw)?;
                sink.flush()?;
            }
            Ok(())
        }
        Command::Samplesize { confidence, margin } => {
            let request = SampleSizeRequest::new(confidence, margin).map_err(|e| usage(e.to_string()))?;
            let n = required_sample_size(&request)?;
            emit(output, format!("{n}\n").as_bytes())
        }
    }
}

fn parse_bench(spec: &str) -> Result<(String, PathBuf, u64)> {
    let bad = || {
        usage(format!(
            "invalid --bench {spec:?}, expected <operation>=<power csv>:<repetitions>"
        ))
    };
    let (op, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (path, reps) = rest.rsplit_once(':').ok_or_else(bad)?;
    let reps: u64 = reps.parse().map_err(|_| bad())?;
    if op.is_empty() || path.is_empty() {
        return Err(bad());
    }
    Ok((op.to_owned(), PathBuf::from(path), reps))
}

fn run_model(cmd: ModelCommand, output: Option<&Path>) -> Result<()> {
    match cmd {
        ModelCommand::Estimate {
            profile,
            costs,
            lenient,
        } => {
            let label = profile
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let profile_text = std::fs::read_to_string(&profile).with_context(|| profile.display().to_string())?;
            let cost_text = std::fs::read_to_string(&costs).with_context(|| costs.display().to_string())?;
            let prof =
                parse_profile(&profile_text, &label).with_context(|| format!("reading {}", profile.display()))?;
            let model = parse_cost_model(&cost_text).with_context(|| format!("reading {}", costs.display()))?;
            let coverage = if lenient { Coverage::Lenient } else { Coverage::Strict };
            let estimate = estimate_from_models(&prof, &model, coverage)?;
            if !estimate.uncovered.is_empty() {
                eprintln!("warning: no cost for {}", estimate.uncovered.join(", "));
            }
            emit(output, &emit_model_estimate(&prof, &model, &estimate)?)
        }
        ModelCommand::Calibrate { platform, benches } => {
            let mut map = BTreeMap::new();
            for spec in &benches {
                let (op, path, repetitions) = parse_bench(spec)?;
                let trace = load_trace(&path, SamplerLogFormat::GenericPowerCsv)?;
                if map.insert(op.clone(), Microbenchmark { trace, repetitions }).is_some() {
                    bail!(usage(format!("operation {op:?} given twice")));
                }
            }
            let model = calibrate_costs(&platform, &map)?;
            emit(output, write_cost_model(&model).as_bytes())
        }
        ModelCommand::Flops { duration_s, flops_rate } => {
            emit(output, &emit_flops_proxy(&flops_proxy(duration_s, flops_rate)?)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<ExperimentError>(),
                    Some(ExperimentError::InvalidPlan(_))
                );
            if is_usage {
                eprintln!("\nFor more information, try '--help'.");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
