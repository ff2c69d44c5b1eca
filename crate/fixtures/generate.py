#!/usr/bin/env python3
"""Regenerates the replay fixtures in this directory.

Every expected value the Rust tests assert about these files is printed by
this script, computed here independently of the Rust implementation.
Run from the repository root: python3 fixtures/generate.py
"""
import os
import random
import statistics

HERE = os.path.dirname(os.path.abspath(__file__))


def rectangle_joules(ts_us, p_mw):
    """Zero-order hold; last sample held for the mean interval."""
    mean_dt = (ts_us[-1] - ts_us[0]) / (len(ts_us) - 1)
    total = 0.0
    for i in range(len(ts_us) - 1):
        total += p_mw[i] * (ts_us[i + 1] - ts_us[i])
    total += p_mw[-1] * mean_dt
    duration_s = (ts_us[-1] - ts_us[0] + mean_dt) / 1e6
    return total * 1e-9, duration_s


def write_power_csv(name, ts_us, p_mw):
    with open(os.path.join(HERE, name), "w", newline="\n") as f:
        f.write("timestamp_us,power_mw\n")
        for t, p in zip(ts_us, p_mw):
            f.write(f"{t},{p!r}\n")


def jittered_timestamps(rng, n, span_us):
    """n strictly increasing integer timestamps from 0 to span_us."""
    weights = [rng.uniform(0.8, 1.2) for _ in range(n - 1)]
    scale = span_us / sum(weights)
    ts = [0]
    acc = 0.0
    for w in weights[:-1]:
        acc += w * scale
        ts.append(int(round(acc)))
    ts.append(span_us)
    return ts


def reference_run(rng, name, n, span_us, mean_mw, std_mw, target_joules):
    ts = jittered_timestamps(rng, n, span_us)
    p = [max(0.0, rng.gauss(mean_mw, std_mw)) for _ in range(n)]
    joules, _ = rectangle_joules(ts, p)
    p = [x * target_joules / joules for x in p]
    write_power_csv(name, ts, p)
    joules, duration = rectangle_joules(ts, p)
    print(f"{name}: n={n} joules={joules!r} duration_s={duration!r} "
          f"mean_mw={statistics.fmean(p)!r}")


def main():
    rng = random.Random(20240612)

    # Idle: 385 samples at 10 Hz, mostly 18 mW with 20 spikes; mean exactly 106 mW.
    idle = [18.0] * 385
    spikes = rng.sample(range(385), 20)
    spike_values = [rng.randint(800, 2600) for _ in range(19)]
    spike_values.append(20 * 1712 - sum(spike_values))
    assert spike_values[-1] > 0
    for i, v in zip(spikes, spike_values):
        idle[i] = float(v)
    write_power_csv("reference_idle.csv", [i * 100_000 for i in range(385)], idle)
    print(f"reference_idle.csv: mean={statistics.fmean(idle)!r} "
          f"median={statistics.median(idle)!r} std={statistics.stdev(idle)!r}")

    # 10 Hz workload replica: 406 samples whose rectangle integral is 652.902 J
    # over ~42.91 s.
    reference_run(rng, "reference_run_10hz.csv", 406, 42_804_310, 15_215.0, 610.0, 652.902)

    # 1 kHz workload replica: 10 019 samples over ~46.79 s, net 684.754 J after
    # subtracting 106 mW of idle.
    span = 46_785_330
    duration = span * 10_019 / 10_018 / 1e6
    reference_run(rng, "reference_run_1khz.csv", 10_019, span, 14_740.0, 899.0,
              684.754 + 0.106 * duration)

    # Constant fixtures.
    write_power_csv("constant_10w_5s.csv", [i * 100_000 for i in range(50)], [10_000.0] * 50)
    write_power_csv("constant_10w_8s.csv", [i * 100_000 for i in range(80)], [10_000.0] * 80)
    write_power_csv("constant_idle_100mw.csv", [i * 100_000 for i in range(400)], [100.0] * 400)

    # Energy counter log: constant 20 W, 15.3 uJ ticks, 32-bit, wraps once.
    unit_uj = 15.3
    width = 32
    start_ticks = 2**width - 500_000
    rows = []
    for i in range(40):
        t_us = i * 100_000
        energy_uj = 20.0 * t_us  # 20 W == 20 uJ/us
        raw = (start_ticks + int(energy_uj // unit_uj)) % 2**width
        rows.append((t_us, raw))
    wraps = sum(1 for a, b in zip(rows, rows[1:]) if b[1] < a[1])
    assert wraps == 1
    with open(os.path.join(HERE, "counter_wrap.csv"), "w", newline="\n") as f:
        f.write("timestamp_us,energy_raw,unit_ujoules,width_bits\n")
        for t, raw in rows:
            f.write(f"{t},{raw},{unit_uj},{width}\n")
    print(f"counter_wrap.csv: 40 readings, one wrap, expected 20000 mW within "
          f"{unit_uj / 0.1 / 1000:.3f} mW")

    # powermetrics-style text with 5 sampling blocks.
    cpu = [18, 1234, 56, 18, 402]
    with open(os.path.join(HERE, "powermetrics_sample.txt"), "w", newline="\n") as f:
        f.write("Machine model: Mac14,2\nOS version: 23F79\n\n")
        for k, mw in enumerate(cpu):
            f.write(f"*** Sampled system activity (Wed Jun 12 10:00:0{k} 2024 -0300) "
                    f"(100.{k}3ms elapsed) ***\n\n")
            f.write("**** Processor usage ****\n\n")
            f.write(f"E-Cluster HW active frequency: 1020 MHz\n")
            f.write(f"CPU Power: {mw} mW\nGPU Power: 0 mW\nANE Power: 0 mW\n")
            f.write(f"Combined Power (CPU + GPU + ANE): {mw} mW\n\n")
    print(f"powermetrics_sample.txt: cpu_mw={cpu}")


if __name__ == "__main__":
    main()
