"""Single-layer runtime scaling benchmark.

One synthetic layer per cell: K Gaussian input features, K/4 output
channels, m calibration rows, quantized-path activations = reference
plus 10 percent noise.  The stats phase (building the moment matrices)
and the algorithm phase (everything from moments to quantized weights)
are timed separately inside one execution; end to end is their sum.
Each (method, K, seed) cell runs a fixed number of inner repetitions
and reports the minimum and the mean.

Normalized views divide by the optq algorithm (or end-to-end) time at
the smallest K, averaged over seeds, so curves from different machines
are comparable.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import calib as _calib
from . import rounding as _rounding
from .grid import grid_from_minmax
from .netsim import METHOD_DAMPING

BENCH_METHODS = ("optq", "gpfq", "qronos_base", "qronos")


@dataclass
class BenchConfig:
    k_min: int = 32
    k_max: int = 1024
    m: int = 10000
    seeds: int = 3
    levels: int = 16
    methods: tuple = BENCH_METHODS
    dtype: str = "f64"
    inner_reps: int = 3

    def __post_init__(self):
        if self.k_min < 4 or self.k_max < self.k_min:
            raise ValueError(f"bad K range [{self.k_min}, {self.k_max}]")
        for m in self.methods:
            if m not in _rounding.METHODS or m in ("rtn", "optq_ref"):
                raise ValueError(f"method {m!r} is not benchmarkable")
        if self.dtype not in ("f64", "f32"):
            raise ValueError(f"dtype must be f64 or f32, got {self.dtype!r}")

    @property
    def ladder(self) -> list[int]:
        ks = []
        k = self.k_min
        while k <= self.k_max:
            ks.append(k)
            k *= 2
        return ks


def _drive_algorithm(method, w, h, g, grids):
    """Moments to quantized weights; this is the timed algorithm phase."""
    stats = _calib.CalibStats(w.shape[0], H=h, G=g)
    req = _rounding.LayerQuantRequest(
        weights=w, grids=grids, method=method, stats=stats, damping=METHOD_DAMPING[method]
    )
    return _rounding.quantize_layer(req)[0]


def _time_cell(method, x, xq, w, grids, cfg):
    """Return (stats_time, algo_time) lists over the inner repetitions."""
    stats_times = []
    algo_times = []
    for _ in range(cfg.inner_reps):
        t0 = time.perf_counter()
        if method == "optq":
            h = x.T @ x
            g = h
        else:
            h = xq.T @ xq
            g = xq.T @ x
        t1 = time.perf_counter()
        if cfg.dtype == "f32":
            # truncation knob for precision studies; the drive itself is f64
            h = h.astype(np.float32).astype(np.float64)
            g = g.astype(np.float32).astype(np.float64)
        t2 = time.perf_counter()
        _drive_algorithm(method, w, h, g, grids)
        t3 = time.perf_counter()
        stats_times.append(t1 - t0)
        algo_times.append(t3 - t2)
    return stats_times, algo_times


def run_bench(cfg: BenchConfig) -> dict:
    """Execute the full ladder and return the report dictionary."""
    rows = []
    for k in cfg.ladder:
        n_out = max(1, k // 4)
        for seed in range(cfg.seeds):
            rng = np.random.default_rng([seed, k])
            x = rng.standard_normal((cfg.m, k))
            xq = x + 0.1 * rng.standard_normal((cfg.m, k))
            w = rng.standard_normal((k, n_out))
            grids = [grid_from_minmax(w[:, j], cfg.levels, 1.0) for j in range(n_out)]
            for method in cfg.methods:
                try:
                    stats_t, algo_t = _time_cell(method, x, xq, w, grids, cfg)
                except MemoryError:
                    rows.append(
                        {"method": method, "k": k, "seed": seed, "skipped": "resource"}
                    )
                    continue
                e2e = [s + a for s, a in zip(stats_t, algo_t)]
                rows.append(
                    {
                        "method": method,
                        "k": k,
                        "seed": seed,
                        "stats": {"min": min(stats_t), "mean": sum(stats_t) / len(stats_t)},
                        "algo": {"min": min(algo_t), "mean": sum(algo_t) / len(algo_t)},
                        "e2e": {"min": min(e2e), "mean": sum(e2e) / len(e2e)},
                    }
                )
    report = {
        "config": {
            "k_ladder": cfg.ladder,
            "m": cfg.m,
            "seeds": cfg.seeds,
            "levels": cfg.levels,
            "methods": list(cfg.methods),
            "dtype": cfg.dtype,
            "inner_reps": cfg.inner_reps,
        },
        "machine": {
            "platform": platform.platform(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timing": {"cells": rows, "normalized": _normalize(rows, cfg)},
    }
    return report


def _normalize(rows, cfg):
    """Divide by the optq time at the smallest K (mean of seed minima)."""
    out = {}
    for phase in ("algo", "e2e"):
        base_vals = [
            r[phase]["min"]
            for r in rows
            if r.get("method") == "optq" and r.get("k") == cfg.ladder[0] and "skipped" not in r
        ]
        if not base_vals:
            continue
        base = sum(base_vals) / len(base_vals)
        norm_rows = []
        for r in rows:
            if "skipped" in r:
                continue
            norm_rows.append(
                {
                    "method": r["method"],
                    "k": r["k"],
                    "seed": r["seed"],
                    "value": r[phase]["min"] / base,
                }
            )
        out[phase] = {"baseline_seconds": base, "rows": norm_rows}
    return out


def median_algo_times(report: dict) -> dict:
    """{(method, k): median-over-seeds of per-seed min algo time}."""
    acc: dict = {}
    for r in report["timing"]["cells"]:
        if "skipped" in r:
            continue
        acc.setdefault((r["method"], r["k"]), []).append(r["algo"]["min"])
    return {key: float(np.median(vals)) for key, vals in acc.items()}
