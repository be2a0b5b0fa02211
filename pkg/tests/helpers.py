"""Shared instance builders for the test suite."""

import numpy as np

from qronos import CalibStats, accumulate, grid_from_minmax


def column_instance(rng, n, m, levels, noise=0.1, identical=False):
    """One rounding problem: column w, activations x and drifted xq, grid."""
    x = rng.standard_normal((m, n))
    xq = x if identical else x + noise * rng.standard_normal((m, n))
    w = rng.standard_normal(n)
    grid = grid_from_minmax(w, levels)
    return w, x, xq, grid


def layer_instance(rng, n, m, n_out, levels, noise=0.1, identical=False):
    """One layer problem with accumulated moment statistics."""
    x = rng.standard_normal((m, n))
    xq = x if identical else x + noise * rng.standard_normal((m, n))
    w = rng.standard_normal((n, n_out))
    stats = accumulate(CalibStats(n), x, xq)
    grids = [grid_from_minmax(w[:, j], levels) for j in range(n_out)]
    return w, x, xq, stats, grids


def random_spd(rng, n, spread=1.0):
    a = rng.standard_normal((n + 4, n))
    m = a.T @ a + spread * np.eye(n)
    return (m + m.T) / 2.0


def on_grid_weights(rng, n, n_out, levels=4):
    """Weight matrix that is a bit-exact fixed point of its min-max grids.

    Integer codes scaled by powers of two keep every grid computation
    exact, so rebuilding the grid from the weights reproduces them.
    """
    w = np.empty((n, n_out))
    for j in range(n_out):
        lo = float(rng.integers(-3, 3))
        scale = float(2.0 ** rng.integers(-2, 3))
        codes = rng.integers(0, levels, size=n).astype(np.float64)
        codes[0], codes[1] = 0.0, levels - 1.0
        w[:, j] = scale * (lo + codes)
    return w
