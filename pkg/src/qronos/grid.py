"""Uniform quantization grids and the round-to-nearest operator.

A grid is the finite alphabet of values one channel may take: ``levels``
points spaced ``step_size`` apart, positioned by a real-valued
``zero_point`` measured in integer-grid units.  Quantizing a value maps
it to the nearest alphabet point, with the integer code clipped to
``[0, levels - 1]``:

    code = clip(round(w / step) + zero_point, 0, levels - 1)
    out  = step * (code - zero_point)

Rounding is half away from zero.  The zero point is kept real valued
rather than snapped to an integer, which forces one refinement of the
formula above: the round is taken against the nearest integer to the
zero point (for integer zero points that is exactly ``round(w / step)
+ zero_point``).  Keeping the rounded quantity integer-valued makes
already-quantized values fixed points of the operator bit for bit and
caps the alphabet at exactly ``levels`` elements, while centering the
tie rule on the grid rather than on the shifted axis, so odd-level
symmetric grids negate cleanly even at exact half-step ties.

Asymmetric grids come from the (optionally shrunk) min/max range of the
data: ``step = beta * (max - min) / (levels - 1)`` and
``zero_point = -beta * min / step``, so integer code 0 dequantizes to
``beta * min`` and code ``levels - 1`` to ``beta * max`` exactly.
Symmetric grids center the integer range (``zero_point = (levels-1)/2``)
and pick their step by linear search over candidate scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _round_half_away(x):
    # np.round ties to even; the alphabet convention here is half away from zero
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def integer_codes(values, step, zero, levels):
    """Clipped integer codes of ``values`` on a grid, tie rule centered.

    The rounding origin is the nearest integer to the zero point, so the
    result is always integer valued and, for integer zero points,
    identical to ``round(values / step) + zero``.
    """
    anchor = np.floor(zero + 0.5)
    code = _round_half_away(values / step + (zero - anchor)) + anchor
    return np.clip(code, 0.0, levels - 1.0)


@dataclass(frozen=True)
class QuantGrid:
    """One channel's quantization alphabet."""

    levels: int
    step_size: float
    zero_point: float
    beta: float = 1.0
    symmetric: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"need at least 2 levels, got {self.levels}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")

    @property
    def alphabet(self) -> np.ndarray:
        """All representable values, ascending with integer code."""
        codes = np.arange(self.levels, dtype=np.float64)
        return self.step_size * (codes - self.zero_point)


def levels_from_bits(bits: float) -> int:
    """Level count for a bit width; the 1.58-bit convention means ternary."""
    if abs(bits - 1.58) < 1e-9:
        return 3
    if bits < 1 or bits != int(bits):
        raise ValueError(f"unsupported bit width {bits!r} (use an integer >= 1, or 1.58)")
    return 2 ** int(bits)


def grid_from_minmax(w: np.ndarray, levels: int, beta: float = 1.0) -> QuantGrid:
    """Asymmetric grid from the data range of ``w``.

    ``beta`` shrinks the covered range toward zero before the step is
    derived; values outside it get clipped by the operator.  A constant
    input has no range, so the grid degenerates to step 1 anchored at
    that value and is flagged.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("cannot build a grid from an empty vector")
    lo = float(w.min())
    hi = float(w.max())
    if hi == lo:
        return QuantGrid(levels, 1.0, -lo, beta=beta, degenerate=True)
    step = beta * (hi - lo) / (levels - 1)
    zero = -beta * lo / step
    return QuantGrid(levels, step, zero, beta=beta)


def quantize_rtn(w, grid: QuantGrid):
    """Round ``w`` (scalar or array) to the nearest grid value."""
    arr = np.asarray(w, dtype=np.float64)
    code = integer_codes(arr, grid.step_size, grid.zero_point, grid.levels)
    out = grid.step_size * (code - grid.zero_point)
    if np.isscalar(w) or arr.ndim == 0:
        return float(out)
    return out


def symmetric_scale_search(w: np.ndarray, levels: int, candidates: int = 100) -> QuantGrid:
    """Symmetric grid whose step minimizes round-trip squared error.

    Candidate steps are linearly spaced over ``[0.2, 1.0]`` times the
    max-abs step ``2 * max|w| / (levels - 1)``; the first candidate
    attaining the minimal error wins, so the search is deterministic.
    """
    if candidates < 2:
        raise ValueError(f"need at least 2 candidates, got {candidates}")
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("cannot build a grid from an empty vector")
    zero = (levels - 1) / 2.0
    amax = float(np.abs(w).max())
    if amax == 0.0:
        return QuantGrid(levels, 1.0, zero, symmetric=True, degenerate=True)
    steps = np.linspace(0.2, 1.0, candidates) * (2.0 * amax / (levels - 1))
    errs = np.empty(candidates)
    for i, s in enumerate(steps):
        g = QuantGrid(levels, float(s), zero, symmetric=True)
        r = w - quantize_rtn(w, g)
        errs[i] = float(r @ r)
    best = int(np.argmin(errs))
    return QuantGrid(levels, float(steps[best]), zero, symmetric=True)


def quantize_per_token(x: np.ndarray, levels: int) -> np.ndarray:
    """Row-wise asymmetric quantization of an activation matrix.

    Each row gets its own min/max grid (beta 1).  Constant rows are
    returned unchanged, matching the degenerate-grid convention.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D activation matrix, got shape {x.shape}")
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    flat = (hi == lo)
    span = np.where(flat, 1.0, hi - lo)
    step = span / (levels - 1)
    zero = -lo / step
    code = integer_codes(x, step, zero, levels)
    out = step * (code - zero)
    return np.where(flat, x, out)
