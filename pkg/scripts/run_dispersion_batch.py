#!/usr/bin/env python3
"""Multi-seed dispersion batch over the default walled arena.

Runs the coverage experiment once per derived seed, then writes the
aggregated union-coverage curve (mean and sd over seeds) plus a JSON
summary with per-seed finals and coverage rates.  Seeds are derived from
the base seed exactly like the coverage subcommand's --seeds mode, so a
batch here reproduces the CLI numbers.
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from biobotsim.locomotion import PRESETS
from biobotsim.seeding import child_seed
from biobotsim.swarm import Arena, UwbSystem, coverage_rate, simulate


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20,
                    help="number of independent runs (default 20)")
    ap.add_argument("--seed", type=int, default=42,
                    help="base seed the per-run seeds derive from")
    ap.add_argument("--agents", type=int, default=4)
    ap.add_argument("--duration", type=float, default=631.0,
                    help="run length in seconds (default 631)")
    ap.add_argument("--stim-period", type=float, default=10.0)
    ap.add_argument("--preset", choices=sorted(PRESETS), default="auto",
                    help="stimulation response preset (default auto)")
    ap.add_argument("--output-dir", type=Path, default=Path("out/dispersion"))
    return ap.parse_args()


def main():
    args = parse_args()
    arena = Arena()
    uwb = UwbSystem()
    params = [PRESETS[args.preset]] * args.agents

    finals, rates, curves = [], [], []
    log_t = None
    t0 = time.perf_counter()
    for i in range(args.seeds):
        seed = child_seed(args.seed, "coverage.batch", i)
        run = simulate(arena, uwb, params, stim_period=args.stim_period,
                       duration=args.duration, seed=seed)
        finals.append(run.final_union_coverage)
        rates.append(coverage_rate(run))
        curves.append(run.union_coverage_pct)
        log_t = run.log_t
        print(f"seed {i:02d}  final union {finals[-1]:6.2f} %"
              f"  rate {rates[-1]:6.2f} cm^2/s")
    wall = time.perf_counter() - t0

    args.output_dir.mkdir(parents=True, exist_ok=True)
    stack = np.vstack(curves)
    lines = ["t_s,union_mean_pct,union_sd_pct"]
    for t, m, s in zip(log_t, stack.mean(axis=0), stack.std(axis=0)):
        lines.append(f"{t!r},{float(m)!r},{float(s)!r}")
    (args.output_dir / "coverage_curve.csv").write_text("\n".join(lines) + "\n")

    summary = {
        "base_seed": args.seed,
        "n_seeds": args.seeds,
        "n_agents": args.agents,
        "duration_s": args.duration,
        "preset": args.preset,
        "mean_final_union_coverage_pct": float(np.mean(finals)),
        "sd_final_union_coverage_pct": float(np.std(finals)),
        "mean_coverage_rate_cm2_per_s": float(np.mean(rates)),
        "wall_time_s": wall,
        "per_seed": [
            {"index": i, "final_union_coverage_pct": f,
             "coverage_rate_cm2_per_s": r}
            for i, (f, r) in enumerate(zip(finals, rates))
        ],
    }
    (args.output_dir / "dispersion_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")

    print(f"\nmean final union coverage: {np.mean(finals):.2f} %"
          f" (sd {np.std(finals):.2f}) over {args.seeds} seeds")
    print(f"mean coverage rate: {np.mean(rates):.2f} cm^2/s")
    print(f"wall time: {wall:.1f} s")
    print(f"wrote {args.output_dir}/coverage_curve.csv and"
          f" dispersion_summary.json")


if __name__ == "__main__":
    main()
