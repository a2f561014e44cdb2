"""Dense and block-tridiagonal linear algebra kernels.

Dense factorizations are thin LAPACK wrappers (via numpy/scipy) with a fixed
sign convention and honest failure reporting: every solve carries a 1-norm
condition estimate and a `censored` flag instead of silently returning a
garbage solution near singularity.  The block-tridiagonal solver is a block
Thomas elimination, O(N W^3), and is deliberately a different code path from
the dense solver so the two can cross-check each other.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import ContractError, DimensionError, SingularMatrixError

# Solves whose condition estimate exceeds this guard are flagged, not trusted.
CONDITION_GUARD = 1.0e12

__all__ = [
    "CONDITION_GUARD",
    "SolveReport",
    "lu_factor_checked",
    "qr_decompose",
    "sym_eigen",
    "solve_dense",
    "block_tridiag_solve",
    "op_norm",
]


@dataclass
class SolveReport:
    """Solution of a linear system plus the evidence for trusting it."""

    solution: np.ndarray
    condition_estimate: float
    censored: bool


def _as_matrix(m, name: str = "m") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _require_square(a: np.ndarray, name: str = "m") -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")


def qr_decompose(m) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization with the diagonal of R normalized to be >= 0."""
    a = _as_matrix(m)
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0.0] = 1.0
    return q * d, d[:, None] * r


def sym_eigen(m, asym_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (values ascending, vectors as columns).  Rejects input whose
    asymmetry exceeds `asym_tol` relative to its magnitude.
    """
    a = _as_matrix(m)
    _require_square(a)
    scale = max(1.0, float(np.max(np.abs(a))))
    if float(np.max(np.abs(a - a.T))) > asym_tol * scale:
        raise ContractError("sym_eigen requires a symmetric matrix")
    values, vectors = np.linalg.eigh((a + a.T) / 2.0)
    return values, vectors


def lu_factor_checked(a: np.ndarray, what: str):
    """LU-factor `a`, returning (lu, piv, condition_estimate).

    Raises SingularMatrixError on an exactly vanishing pivot.
    """
    anorm = float(np.linalg.norm(a, 1)) if a.size else 0.0
    with warnings.catch_warnings():
        # scipy warns on singular input; we detect it from the pivots instead.
        warnings.simplefilter("ignore")
        lu, piv = lu_factor(a)
    pivots = np.abs(np.diag(lu))
    if pivots.size and float(pivots.min()) < 1e-300:
        raise SingularMatrixError(f"{what} is exactly singular")
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0:
        raise RuntimeError(f"condition estimation failed (info={info})")
    condition = float(1.0 / rcond) if rcond > 0.0 else float("inf")
    return lu, piv, condition


def solve_dense(m, rhs, guard: float = CONDITION_GUARD) -> SolveReport:
    """Solve m x = rhs by partial-pivot LU with a 1-norm condition estimate."""
    a = _as_matrix(m)
    _require_square(a)
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionError(
            f"rhs has leading dimension {b.shape[0]}, expected {a.shape[0]}"
        )
    lu, piv, condition = lu_factor_checked(a, "matrix")
    x = lu_solve((lu, piv), b)
    return SolveReport(x, condition, censored=not condition <= guard)


def _check_blocks(diag_blocks, off_blocks):
    diag = [np.asarray(d, dtype=float) for d in diag_blocks]
    off = [np.asarray(b, dtype=float) for b in off_blocks]
    if not diag:
        raise DimensionError("need at least one diagonal block")
    if len(off) != len(diag) - 1:
        raise DimensionError(
            f"{len(diag)} diagonal blocks need {len(diag) - 1} off-diagonal "
            f"blocks, got {len(off)}"
        )
    w = diag[0].shape[0]
    for i, d in enumerate(diag):
        if d.shape != (w, w):
            raise DimensionError(f"diagonal block {i + 1} has shape {d.shape}")
    for i, b in enumerate(off):
        if b.shape != (w, w):
            raise DimensionError(f"off-diagonal block {i + 1} has shape {b.shape}")
    return diag, off, w


def block_tridiag_solve(
    diag_blocks,
    off_blocks,
    rhs,
    shift: float = 0.0,
    guard: float = CONDITION_GUARD,
) -> SolveReport:
    """Solve (H - shift I) x = rhs for block-tridiagonal symmetric H.

    H has `diag_blocks` on the block diagonal and `off_blocks[i]` in block
    position (i, i+1), mirrored by transpose below.  Block Thomas elimination:
    the pivot blocks are the Schur complements
    S_1 = A_1 - shift, S_{j+1} = A_{j+1} - shift - B_j^T S_j^{-1} B_j.
    The condition estimate is the worst 1-norm estimate over pivot blocks.
    """
    diag, off, w = _check_blocks(diag_blocks, off_blocks)
    n = len(diag)
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != n * w:
        raise DimensionError(
            f"rhs has leading dimension {b.shape[0]}, expected {n * w}"
        )
    vec = b.ndim == 1
    y = b.reshape(n, w, -1).astype(float, copy=True)

    shift_eye = shift * np.eye(w)
    condition = 1.0
    lus = []
    pivot = diag[0] - shift_eye
    for j in range(n):
        lu, piv, cond_j = lu_factor_checked(pivot, f"pivot block {j + 1}")
        condition = max(condition, cond_j)
        lus.append((lu, piv))
        if j < n - 1:
            y[j + 1] -= off[j].T @ lu_solve((lu, piv), y[j])
            pivot = diag[j + 1] - shift_eye - off[j].T @ lu_solve((lu, piv), off[j])

    x = np.empty_like(y)
    x[n - 1] = lu_solve(lus[n - 1], y[n - 1])
    for j in range(n - 2, -1, -1):
        x[j] = lu_solve(lus[j], y[j] - off[j] @ x[j + 1])

    solution = x.reshape(n * w, -1)
    if vec:
        solution = solution[:, 0]
    return SolveReport(solution, condition, censored=not condition <= guard)


def op_norm(m, tol: float = 1e-9, max_iter: int = 5000) -> float:
    """Largest singular value by power iteration on m^T m.

    Deterministic start vector (fixed seeded draw), iteration cap, early exit
    when the Rayleigh estimate stops moving.  The estimate approaches the true
    value from below, so op_norm(m) <= Frobenius norm holds exactly.
    """
    a = _as_matrix(m)
    if a.size == 0:
        return 0.0
    v = np.random.default_rng(0xB0B).normal(size=a.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        u = a @ v
        w = a.T @ u
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        new_estimate = float(np.linalg.norm(u))
        v = w / norm_w
        done = abs(new_estimate - estimate) <= tol * max(new_estimate, 1e-300)
        estimate = new_estimate
        if done:
            break
    return estimate
