#!/usr/bin/env python3
"""Run every numerical certification suite at full trial counts.

Prints one line per suite and exits nonzero if any suite records a
failure.  Writes the full JSON report when --out is given.
"""

import argparse
import json
import sys
import time

from qronos.verify import SUITE_NAMES, run_suite, suite_collapse


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the JSON report here")
    args = ap.parse_args()

    results = []
    t0 = time.perf_counter()
    for name in SUITE_NAMES:
        res = run_suite(name, seed=args.seed)
        results.append(res)
        status = "PASS" if res.passed else "FAIL"
        print(
            f"{status} {res.name}: trials={res.trials} failures={res.failures} "
            f"max_dev={res.max_dev:.3e} tol={res.tol:.1e}"
        )
    res = suite_collapse(seed=args.seed)
    results.append(res)
    status = "PASS" if res.passed else "FAIL"
    print(
        f"{status} {res.name}: trials={res.trials} failures={res.failures} "
        f"max_dev={res.max_dev:.3e} (exact match required)"
    )
    total = time.perf_counter() - t0
    print(f"total {total:.1f}s")

    if args.out:
        payload = {
            "schema": 1,
            "command": "certification",
            "seed": args.seed,
            "suites": [r.to_dict() for r in results],
            "timing": {"total_seconds": total},
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
