"""Dense symmetric linear algebra behind the rounding engine.

Everything here operates on small-to-medium SPD matrices (calibration
second moments and their inverses).  Factorizations and triangular
solves are LAPACK-backed; the routines the rounding algorithms actually
reason about (inverse slicing, damping, residual projection, spectral
norm estimation) are implemented explicitly on top of them.

The inverse pipeline is fixed: Cholesky-factor the damped matrix, build
its inverse by triangular solves, symmetrize, then factor the inverse
again.  Downstream code leans on the identity that for H^-1 = L L^T
(L lower triangular), the trailing principal block of L factors the
inverse of the corresponding trailing block of H:
(H[t:, t:])^-1 = L[t:, t:] L[t:, t:]^T.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import ConvergenceError, NotPositiveDefiniteError, ShapeError

_SYM_RTOL = 1e-9

DAMPING_MODES = ("mean_diag_percent", "top_singular_fraction", "none")


def _as_square(m, name="matrix") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")
    return m


def _check_symmetric(m, name="matrix"):
    scale = float(np.abs(m).max()) if m.size else 0.0
    skew = float(np.abs(m - m.T).max()) if m.size else 0.0
    if skew > _SYM_RTOL * max(scale, 1e-300):
        raise ValueError(f"{name} is not symmetric (max asymmetry {skew:.3e} at scale {scale:.3e})")


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L L^T equal to the source matrix."""

    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.L)


def cholesky_lower(m: np.ndarray) -> CholeskyFactor:
    """Cholesky factorization of a symmetric positive definite matrix.

    Raises NotPositiveDefiniteError carrying the 1-based failing pivot
    when the matrix is not positive definite.
    """
    m = _as_square(m)
    _check_symmetric(m)
    if m.shape[0] == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    c, info = lapack.dpotrf(m, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return CholeskyFactor(c)


def chol_solve(factor: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b with two triangular solves."""
    y = solve_triangular(factor.L, b, lower=True)
    return solve_triangular(factor.L, y, lower=True, trans="T")


def solve_spd(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve m x = b for symmetric positive definite m."""
    return chol_solve(cholesky_lower(m), b)


def spd_inverse(m: np.ndarray) -> np.ndarray:
    """Explicit inverse of an SPD matrix, symmetrized exactly.

    Computed as (L^-1)^T (L^-1) from the Cholesky factor; the final
    averaging removes the last-ulp asymmetry of the matmul so callers
    can factor the result again without a symmetry guard.
    """
    factor = cholesky_lower(m)
    if factor.dim == 0:
        return np.zeros((0, 0))
    eye = np.eye(factor.dim)
    linv = solve_triangular(factor.L, eye, lower=True)
    out = linv.T @ linv
    return (out + out.T) / 2.0


def top_singular_value(m: np.ndarray, tol: float = 1e-6, max_iter: int = 1000) -> float:
    """Largest singular value of a symmetric PSD matrix by power iteration.

    Runs once from the deterministic all-ones start, then once more from
    a fixed-seed random start, and returns the larger Rayleigh estimate.
    The all-ones vector can be exactly orthogonal to the top eigenspace
    (that is the stagnation case); the seeded second phase removes that
    failure mode without sacrificing determinism.
    """
    m = _as_square(m)
    _check_symmetric(m)
    n = m.shape[0]
    if n == 0 or float(np.abs(m).max()) == 0.0:
        return 0.0

    def run(v0: np.ndarray) -> float:
        v = v0 / np.linalg.norm(v0)
        lam = 0.0
        for _ in range(max_iter):
            y = m @ v
            ny = float(np.linalg.norm(y))
            if ny == 0.0:
                return 0.0  # v sits in the nullspace; nothing further to extract
            new = float(v @ y)
            v = y / ny
            if abs(new - lam) <= tol * max(abs(new), 1e-300):
                return new
            lam = new
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", last_estimate=lam
        )

    est_ones = run(np.ones(n))
    rng = np.random.default_rng(0x5EED)
    est_rand = run(rng.standard_normal(n))
    return max(est_ones, est_rand)


@dataclass(frozen=True)
class DampingPolicy:
    """How the diagonal ridge added to H is chosen.

    mode "mean_diag_percent" uses 1 percent of the mean diagonal entry;
    "top_singular_fraction" uses alpha times the largest singular value;
    "none" leaves H untouched.  ``resolved_lambda`` is filled in by
    apply_damping and echoes the value actually used.
    """

    mode: str
    alpha: float = 1e-6
    resolved_lambda: float | None = None

    def __post_init__(self):
        if self.mode not in DAMPING_MODES:
            raise ValueError(f"unknown damping mode {self.mode!r} (expected one of {DAMPING_MODES})")


def apply_damping(h: np.ndarray, policy: DampingPolicy) -> tuple[np.ndarray, DampingPolicy]:
    """Resolve the policy on H and return (H + lambda I, resolved policy).

    The ridge is resolved once, on the undamped matrix it is handed; all
    downstream consumers must share the returned value rather than
    re-resolving on modified matrices.
    """
    h = _as_square(h, "H")
    if policy.mode == "none":
        lam = 0.0
    elif policy.mode == "mean_diag_percent":
        lam = 0.01 * float(np.mean(np.diag(h))) if h.shape[0] else 0.0
    else:
        lam = policy.alpha * top_singular_value(h)
    damped = h if lam == 0.0 else h + lam * np.eye(h.shape[0])
    return damped, replace(policy, resolved_lambda=lam)


def inverse_hessian_step(hinv: np.ndarray) -> np.ndarray:
    """Trailing inverse from the current inverse, one index at a time.

    Given hinv = (H[t:, t:])^-1 this returns (H[t+1:, t+1:])^-1 without
    touching H, via the Schur-style update

        (hinv - hinv[:, 0] hinv[0, :] / hinv[0, 0])[1:, 1:]

    Iterating it walks the whole family of trailing inverses in O(n^2)
    per step.
    """
    hinv = _as_square(hinv, "inverse")
    n = hinv.shape[0]
    if n == 0:
        raise ShapeError("cannot step an empty inverse")
    lead = float(hinv[0, 0])
    if lead <= 0.0:
        raise ValueError(f"leading entry of the inverse must be positive, got {lead}")
    if n == 1:
        return np.zeros((0, 0))
    return hinv[1:, 1:] - np.outer(hinv[1:, 0], hinv[0, 1:]) / lead


def project_residual(r: np.ndarray, basis: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Remove from ``r`` its best approximation by columns of ``basis``.

    Solves the (optionally ridge-damped) normal equations via Cholesky.
    Linearly dependent columns with ridge 0 surface as
    NotPositiveDefiniteError.
    """
    r = np.asarray(r, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != r.shape[0]:
        raise ShapeError(f"basis shape {basis.shape} does not match residual length {r.shape[0]}")
    gram = basis.T @ basis
    if ridge > 0.0:
        gram = gram + ridge * np.eye(gram.shape[0])
    coef = chol_solve(cholesky_lower(gram), basis.T @ r)
    return r - basis @ coef
