#!/usr/bin/env python3
"""Single-layer runtime scaling across a doubling ladder of layer widths.

Times the per-step (base) and single-factorization (efficient)
error-corrected drivers, plus optq and gpfq for context, and prints the
median algorithm time per cell with the base/efficient speedup.
"""

import argparse
import json
import sys

from qronos.bench import BENCH_METHODS, BenchConfig, median_algo_times, run_bench


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-min", type=int, default=32)
    ap.add_argument("--k-max", type=int, default=512)
    ap.add_argument("--m", type=int, default=2000, help="calibration rows")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--levels", type=int, default=16)
    ap.add_argument("--methods", default=",".join(BENCH_METHODS))
    ap.add_argument("--reps", type=int, default=3, help="inner repetitions per cell")
    ap.add_argument("--out", help="write the JSON report here")
    args = ap.parse_args()

    cfg = BenchConfig(
        k_min=args.k_min,
        k_max=args.k_max,
        m=args.m,
        seeds=args.seeds,
        levels=args.levels,
        methods=tuple(tok.strip() for tok in args.methods.split(",") if tok.strip()),
        inner_reps=args.reps,
    )
    report = run_bench(cfg)
    med = median_algo_times(report)

    header = ["K"] + list(cfg.methods)
    if "qronos_base" in cfg.methods and "qronos" in cfg.methods:
        header.append("speedup")
    print("  ".join(f"{h:>12}" for h in header))
    for k in cfg.ladder:
        row = [f"{k:>12}"]
        for method in cfg.methods:
            row.append(f"{med[(method, k)] * 1e3:>10.2f}ms")
        if header[-1] == "speedup":
            row.append(f"{med[('qronos_base', k)] / med[('qronos', k)]:>11.1f}x")
        print("  ".join(row))

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"schema": 1, "command": "bench", **report}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
