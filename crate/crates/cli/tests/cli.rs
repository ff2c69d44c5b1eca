use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn energyprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_energyprobe"))
        .args(args)
        .current_dir(root())
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const REPLICA: [&str; 6] = [
    "--backend",
    "replay:fixtures/reference_run_10hz.csv",
    "--idle-backend",
    "replay:fixtures/reference_idle.csv",
    "--runs",
    "10",
];

#[test]
fn samplesize_examples() {
    for (conf, margin, n) in [("0.95", "0.05", "385"), ("0.95", "0.1", "97"), ("0.99", "0.05", "664")] {
        let o = energyprobe(&["samplesize", "--confidence", conf, "--margin", margin]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), n);
    }
    assert_eq!(
        energyprobe(&["samplesize", "--confidence", "1.5"]).status.code(),
        Some(2)
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(energyprobe(&["measure"]).status.code(), Some(2));
    assert_eq!(energyprobe(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(energyprobe(&["baseline", "--no-such-flag"]).status.code(), Some(2));
    let o = energyprobe(&[
        "measure",
        "--rate-hz",
        "-3",
        "--backend",
        "replay:fixtures/reference_run_10hz.csv",
        "--",
        "true",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn live_measure_requires_environment_note() {
    let o = energyprobe(&["measure", "--backend", "powercap", "--", "true"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--env-note"));
}

#[test]
fn measure_report_and_plotdata() {
    let mut args = vec!["measure"];
    args.extend(REPLICA);
    args.extend(["--env-note", "power=AC", "--env-note", "governor fixed", "--", "true"]);
    let o = energyprobe(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("\"energy_j\": 648.354"));
    assert!(text.contains("\"energy_j\": 64.835"));
    assert!(text.contains("\"power\": \"AC\""));
    assert!(text.contains("\"note\": \"governor fixed\""));

    let mut args = vec!["measure", "--format", "plotdata"];
    args.extend(REPLICA);
    args.extend(["--", "true"]);
    let plot = stdout(&energyprobe(&args));
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "timestamp_us,power_mw");
    assert_eq!(lines.len(), 407);
}

#[test]
fn failing_workload_exits_1() {
    let mut args = vec!["measure"];
    args.extend(REPLICA);
    args.extend(["--", "false"]);
    let o = energyprobe(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("workload failed"));
}

#[test]
fn baseline_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("idle.json");
    let o = energyprobe(&[
        "baseline",
        "--backend",
        "replay:fixtures/reference_idle.csv",
        "--output",
        base.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&base).unwrap();
    assert!(text.contains("\"mean_mw\": 106.000"));
    assert!(text.contains("\"median_mw\": 18.000"));
    assert!(text.contains("\"kind\": \"baseline\""));

    // a baseline report is not an experiment
    let o = energyprobe(&["compare", base.to_str().unwrap(), base.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = energyprobe(&[
        "baseline",
        "--output",
        "/nonexistent-dir/idle.json",
        "--backend",
        "replay:fixtures/reference_idle.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/idle.json"));
}

#[test]
fn model_commands() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("app.csv");
    let costs = dir.path().join("costs.csv");
    std::fs::write(&profile, "operation_id,count\nalloc,100\nhash,50\n").unwrap();
    std::fs::write(
        &costs,
        "platform,box\noperation_id,millijoules_per_op\nalloc,2\nhash,1\n",
    )
    .unwrap();
    let o = energyprobe(&[
        "model",
        "estimate",
        "--profile",
        profile.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"energy_j\": 0.250"));

    std::fs::write(&profile, "operation_id,count\nalloc,100\nx,1\n").unwrap();
    let strict = energyprobe(&[
        "model",
        "estimate",
        "--profile",
        profile.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
    ]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("\"x\""));
    let lenient = energyprobe(&[
        "model",
        "estimate",
        "--lenient",
        "--profile",
        profile.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
    ]);
    assert!(lenient.status.success());
    assert!(stdout(&lenient).contains("\"x\""));

    let o = energyprobe(&[
        "model",
        "calibrate",
        "--platform",
        "box",
        "--bench",
        "alloc=fixtures/constant_10w_5s.csv:1000",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("alloc,50\n"));

    let o = energyprobe(&["model", "flops", "--duration-s", "2", "--flops-rate", "40e12"]);
    assert!(
        stdout(&o).contains("\"flop_count\": 80000000000000.0"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn align_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    std::fs::write(
        &pairs,
        "reference_us,meter_us\n0,5000000\n1000000,6000000\n2000000,7000000\n",
    )
    .unwrap();
    let o = energyprobe(&["align", "--pairs", pairs.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("\"offset_us\": 5000000.0") && text.contains("\"drift_ratio\": 1.0"),
        "{text}"
    );

    let o = energyprobe(&["replay", "fixtures/constant_10w_5s.csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 51);
    let fixture = std::fs::read_to_string(root().join("fixtures/constant_10w_5s.csv")).unwrap();
    let values = |t: &str| -> Vec<(u64, f64)> {
        t.lines()
            .skip(1)
            .map(|l| {
                let (ts, p) = l.split_once(',').unwrap();
                (ts.parse().unwrap(), p.parse().unwrap())
            })
            .collect()
    };
    assert_eq!(values(&text), values(&fixture));
}
