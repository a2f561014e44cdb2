"""Corner resolvent blocks of band chains through Schur pivot factorization.

For a block tridiagonal chain H with diagonal blocks A_j and couplings B_j,
the shifted pivots

    D_1 = A_1 - E,   D_{j+1} = A_{j+1} - E - B_j^T D_j^{-1} B_j

are the Schur complements of the leading principal subchains: D_j^{-1} equals
the (j, j) block of the resolvent of the chain restricted to blocks [1, j].
The far corner of the full resolvent factorizes through them,

    G(1, N) = (-1)^(N-1) D_1^{-1} B_1 D_2^{-1} B_2 ... B_{N-1} D_N^{-1},

which this module evaluates two ways: as an explicit W x W product, and as a
telescoping backward sweep that accumulates one log norm per factor applied
to a probe vector, so the corner's size is available as a sum of N bounded
increments instead of one catastrophically small number.

Every pivot inversion carries a condition estimate; a chain whose worst pivot
exceeds the guard is flagged `censored` rather than silently trusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve

from .band import BlockTridiagonal, assemble_dense, restrict
from .errors import ContractError, DimensionError
from .linalg import CONDITION_GUARD, lu_factor_checked

__all__ = [
    "ResolventChain",
    "IdentityReport",
    "pivot_recursion",
    "backward_directions",
    "corner_block_product",
    "build_chain",
    "verify_identities",
]


@dataclass
class ResolventChain:
    """Pivot factorization of one sampled chain at one energy.

    `log_increments[j]` is the log norm gained by the j-th factor of the
    corner product applied to the running probe direction; their sum is
    log ||G(1, N) probe||.  `directions[j]` is the unit vector entering
    factor j+1 (there are N-1 of them).  `sign` is the corner product's
    global sign (-1)^(N-1).
    """

    energy: float
    pivots: tuple
    directions: tuple
    log_increments: np.ndarray
    sign: int
    probe: np.ndarray
    censored: bool
    condition_max: float

    @property
    def n_blocks(self) -> int:
        return len(self.pivots)

    @property
    def block_size(self) -> int:
        return self.pivots[0].shape[0]

    def corner_log_norm(self) -> float:
        return float(self.log_increments.sum())


@dataclass
class IdentityReport:
    """Residuals of the factorization identities against dense linear algebra."""

    product_residual: float
    pivot_residual: float
    log_residual: float
    split_residual: float
    censored: bool
    condition_max: float

    def max_residual(self) -> float:
        return max(
            self.product_residual,
            self.pivot_residual,
            self.log_residual,
            self.split_residual,
        )

    def passed(self, tolerance: float = 1e-8) -> bool:
        return not self.censored and self.max_residual() <= tolerance


def _pivot_lus(ham: BlockTridiagonal, energy: float):
    """Shared recursion: pivots with their LU factors and worst condition."""
    w = ham.block_size
    eye = np.eye(w)
    pivots = []
    lus = []
    condition_max = 0.0
    current = ham.diag_blocks[0] - energy * eye
    for j in range(ham.n_blocks):
        lu, piv, cond = lu_factor_checked(current, f"pivot block {j + 1}")
        pivots.append(current)
        lus.append((lu, piv))
        condition_max = max(condition_max, cond)
        if j + 1 < ham.n_blocks:
            b = ham.off_blocks[j]
            current = ham.diag_blocks[j + 1] - energy * eye - b.T @ lu_solve((lu, piv), b)
    return tuple(pivots), lus, condition_max


def pivot_recursion(
    ham: BlockTridiagonal, energy: float, guard: float = CONDITION_GUARD
) -> tuple[tuple, bool, float]:
    """Run the Schur pivot recursion.

    Returns (pivots, censored, condition_max) where censored means some
    pivot's condition estimate exceeded the guard.
    """
    pivots, _, condition_max = _pivot_lus(ham, energy)
    return pivots, not condition_max <= guard, condition_max


def backward_directions(pivots, off_blocks, probe=None):
    """Telescoping sweep from the far end of the chain.

    Returns (directions, log_increments): unit vectors v_1..v_{N-1} and the
    per-factor log norms alpha_1..alpha_N with
    sum(alpha) = log ||G(1, N) probe|| and direction v_j feeding the factor
    D_j^{-1} B_j.
    """
    n = len(pivots)
    w = pivots[0].shape[0]
    if len(off_blocks) != n - 1:
        raise DimensionError(f"{n} pivots need {n - 1} coupling blocks")
    if probe is None:
        probe = np.zeros(w)
        probe[0] = 1.0
    else:
        probe = np.asarray(probe, dtype=float)
        if probe.shape != (w,):
            raise DimensionError(f"probe must have shape ({w},), got {probe.shape}")
        if not np.linalg.norm(probe) > 0:
            raise ContractError("probe must be nonzero")

    lus = [lu_factor_checked(p, f"pivot block {j + 1}")[:2] for j, p in enumerate(pivots)]
    alphas = np.empty(n)
    directions = [None] * (n - 1)
    t = lu_solve(lus[n - 1], probe)
    norm = float(np.linalg.norm(t))
    if norm == 0.0:
        raise ContractError("probe annihilated by the chain")
    alphas[n - 1] = math.log(norm)
    for j in range(n - 2, -1, -1):
        directions[j] = t / norm
        t = lu_solve(lus[j], off_blocks[j] @ directions[j])
        norm = float(np.linalg.norm(t))
        if norm == 0.0:
            raise ContractError("probe annihilated by the chain")
        alphas[j] = math.log(norm)
    return tuple(directions), alphas


def corner_block_product(pivots, off_blocks) -> np.ndarray:
    """Explicit signed corner block: the full W x W matrix G(1, N)."""
    n = len(pivots)
    if len(off_blocks) != n - 1:
        raise DimensionError(f"{n} pivots need {n - 1} coupling blocks")
    lus = [lu_factor_checked(p, f"pivot block {j + 1}")[:2] for j, p in enumerate(pivots)]
    out = lu_solve(lus[n - 1], np.eye(pivots[0].shape[0]))
    for j in range(n - 2, -1, -1):
        out = lu_solve(lus[j], off_blocks[j] @ out)
    if (n - 1) % 2:
        out = -out
    return out


def build_chain(
    ham: BlockTridiagonal,
    energy: float,
    probe=None,
    guard: float = CONDITION_GUARD,
) -> ResolventChain:
    """Factor one chain at one energy and run the backward sweep."""
    pivots, censored, condition_max = pivot_recursion(ham, energy, guard)
    directions, alphas = backward_directions(pivots, ham.off_blocks, probe)
    if probe is None:
        probe = np.zeros(ham.block_size)
        probe[0] = 1.0
    return ResolventChain(
        energy=energy,
        pivots=pivots,
        directions=directions,
        log_increments=alphas,
        sign=-1 if (ham.n_blocks - 1) % 2 else 1,
        probe=np.asarray(probe, dtype=float),
        censored=censored,
        condition_max=condition_max,
    )


def verify_identities(
    ham: BlockTridiagonal,
    energy: float,
    probe=None,
    split: int | None = None,
    guard: float = CONDITION_GUARD,
) -> IdentityReport:
    """Check the factorization against dense inversion of the same chain.

    Four residuals, all relative where a scale exists:
      * product: corner product vs the dense resolvent's (1, N) block,
      * pivot: D_j (dense G_[1,j](j,j)) = I for every j,
      * log: sum of sweep increments vs log ||dense corner @ probe||,
      * split: G(1, N) = -G_[1,m](1, m) B_m G(m+1, N) with the last factor
        taken from the dense resolvent of the full chain, split at m.
    """
    n, w = ham.n_blocks, ham.block_size
    chain = build_chain(ham, energy, probe, guard)
    dense = np.linalg.inv(assemble_dense(ham, shift=energy))
    corner_dense = dense[0:w, (n - 1) * w :]

    product = corner_block_product(chain.pivots, ham.off_blocks)
    scale = max(float(np.abs(corner_dense).max()), 1e-300)
    product_residual = float(np.abs(product - corner_dense).max()) / scale

    pivot_residual = 0.0
    for j in range(1, n + 1):
        leading = np.linalg.inv(assemble_dense(restrict(ham, 1, j), shift=energy))
        tail = leading[(j - 1) * w :, (j - 1) * w :]
        gap = chain.pivots[j - 1] @ tail - np.eye(w)
        pivot_residual = max(pivot_residual, float(np.abs(gap).max()))

    log_residual = abs(
        chain.corner_log_norm() - math.log(float(np.linalg.norm(corner_dense @ chain.probe)))
    )

    if n == 1:
        split_residual = 0.0
    else:
        m = split if split is not None else n // 2
        if not 1 <= m <= n - 1:
            raise DimensionError(f"split {m} not in [1, {n - 1}]")
        left = restrict(ham, 1, m)
        left_pivots, _, _ = pivot_recursion(left, energy, guard)
        left_corner = corner_block_product(left_pivots, left.off_blocks)
        tail_dense = dense[m * w : (m + 1) * w, (n - 1) * w :]
        recombined = -left_corner @ ham.off_blocks[m - 1] @ tail_dense
        split_residual = float(np.abs(recombined - corner_dense).max()) / scale

    return IdentityReport(
        product_residual=product_residual,
        pivot_residual=pivot_residual,
        log_residual=log_residual,
        split_residual=split_residual,
        censored=chain.censored,
        condition_max=chain.condition_max,
    )
