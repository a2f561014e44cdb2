"""Monte-Carlo estimators for localization observables of band ensembles.

Each estimator draws its randomness from per-sample child streams, so the
result depends only on (root stream, sample count), never on how the samples
were scheduled across workers.  Scaling predictions are always consumed as
ratios across block sizes; the fits report slopes with standard errors and
leave intercepts free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve
from scipy.special import logsumexp

from ._pool import map_indexed
from .band import (
    TAG_DIAG,
    TAG_OFF,
    BandEnsemble,
    BlockTridiagonal,
    assemble_dense,
    sample_coupling_block,
    sample_diag_block,
    sample_hamiltonian,
)
from .errors import ContractError, DimensionError, FitError, SingularMatrixError
from .linalg import CONDITION_GUARD, lu_factor_checked, qr_decompose, sym_eigen
from .resolvent import backward_directions, pivot_recursion
from .streams import Stream

__all__ = [
    "EIGENSOLVE_LIMIT",
    "NOISE_FLOOR",
    "Q_MAX",
    "DecayFit",
    "linear_fit",
    "log_power_mean",
    "ScanRow",
    "MomentScan",
    "fractional_moment_scan",
    "eigenvector_correlator",
    "distance_profile",
    "CorrelatorProfile",
    "correlator_profile",
    "LocalizationFit",
    "localization_length_fit",
    "TailRow",
    "WegnerReport",
    "wegner_tail",
    "LyapunovReport",
    "transfer_exponents",
    "lyapunov_spectrum",
    "NormTailRow",
    "NormTailReport",
    "operator_norm_samples",
    "operator_norm_tail",
]

EIGENSOLVE_LIMIT = 4096  # hard cap for dense eigensolves
NOISE_FLOOR = 1e-12  # below double-precision eigenvector accuracy
Q_MAX = 0.2  # fractional moments stay integrable against the resolvent tails


# ------------------------------------------------------------- line fitting


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through (x, y) with the slope's standard error."""

    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points_used: int


def linear_fit(x, y, sigma=None) -> DecayFit:
    """Fit y = slope*x + intercept, optionally weighted by 1/sigma^2.

    With `sigma` given, the slope error comes from the stated per-point
    errors; without it, from the residual scatter.  Closed-form normal
    equations keep the 3-point minimum usable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionError(f"x and y must be equal-length vectors, got {x.shape}, {y.shape}")
    n = x.size
    if n < 3:
        raise FitError(f"need at least 3 points, got {n}")
    if sigma is None:
        wts = np.ones(n)
    else:
        s = np.asarray(sigma, dtype=float)
        if s.shape != x.shape or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ContractError("sigma must be positive and finite per point")
        wts = 1.0 / np.square(s)
    sw = float(np.sum(wts))
    sx = float(np.sum(wts * x))
    sy = float(np.sum(wts * y))
    sxx = float(np.sum(wts * x * x))
    sxy = float(np.sum(wts * x * y))
    denom = sw * sxx - sx * sx
    if not denom > 0:
        raise FitError("abscissae are degenerate")
    slope = (sw * sxy - sx * sy) / denom
    intercept = (sxx * sy - sx * sxy) / denom
    resid = y - slope * x - intercept
    ss_res = float(np.sum(wts * resid * resid))
    mean_y = sy / sw
    ss_tot = float(np.sum(wts * np.square(y - mean_y)))
    var_slope = sw / denom
    if sigma is None:
        var_slope *= ss_res / (n - 2)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        slope=slope,
        intercept=intercept,
        stderr=math.sqrt(max(var_slope, 0.0)),
        r_squared=r_squared,
        points_used=n,
    )


def log_power_mean(log_values, q: float) -> float:
    """log of the q-th power mean, fed with log-scale samples.

    q = 0 returns the log geometric mean; the result is nondecreasing in q.
    """
    x = np.asarray(log_values, dtype=float)
    if x.size == 0:
        raise ContractError("need at least one sample")
    if q == 0.0:
        return float(np.mean(x))
    return float((logsumexp(q * x) - math.log(x.size)) / q)


# -------------------------------------------------- fractional-moment decay


@dataclass(frozen=True)
class ScanRow:
    """One (block size, chain length) cell of a fractional-moment scan."""

    block_size: int
    n_blocks: int
    log_root_moment: float  # (1/q) log of the empirical q-th moment
    moment: float  # exp of the above
    stderr: float  # standard error of log_root_moment
    samples: int
    censored: int


@dataclass(frozen=True)
class MomentScan:
    q: float
    rows: tuple
    fits: dict  # block size -> DecayFit of log_root_moment against chain length
    samples: int


def _decay_sample(args):
    """Corner log norms of one sampled chain at every requested prefix length."""
    ensemble, n_list, stream = args
    ham = sample_hamiltonian(ensemble, stream)
    pivots, censored, _ = pivot_recursion(ham, ensemble.energy)
    if censored:
        return None
    out = np.empty(len(n_list))
    for k, nn in enumerate(n_list):
        _, alphas = backward_directions(pivots[:nn], ham.off_blocks[: nn - 1])
        out[k] = float(np.sum(alphas))
    return out


def fractional_moment_scan(members, q: float, samples: int, stream: Stream, workers=None) -> MomentScan:
    """Scan empirical corner-resolvent moments over chain lengths.

    `members` is a sequence of (ensemble, n_list) pairs; every chain length in
    n_list must be at most ensemble.n_blocks.  One chain per sample is drawn
    at the full length and its prefixes stand in for the shorter chains: the
    per-block sampling streams make a shorter chain's blocks literally a
    prefix of the longer chain's, so no separate draws are needed.
    """
    if not 0.0 < q <= Q_MAX:
        raise ContractError(f"q must lie in (0, 1/5], got {q}")
    if samples < 2:
        raise ContractError("need at least 2 samples")
    rows = []
    fits = {}
    for m_index, (ensemble, n_list) in enumerate(members):
        n_list = [int(n) for n in n_list]
        if len(n_list) < 3:
            raise ContractError("need at least 3 chain lengths per block size")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ContractError("chain lengths must be strictly increasing")
        if not 1 <= n_list[0] or n_list[-1] > ensemble.n_blocks:
            raise ContractError(
                f"chain lengths must lie in [1, {ensemble.n_blocks}], got {n_list}"
            )
        args = [(ensemble, n_list, stream.child(m_index, i)) for i in range(samples)]
        results = map_indexed(_decay_sample, args, workers)
        kept = np.array([r for r in results if r is not None])
        censored = samples - kept.shape[0]
        if kept.shape[0] < 2:
            raise ContractError("all samples censored by the condition guard")
        count = kept.shape[0]
        y = np.empty(len(n_list))
        se = np.empty(len(n_list))
        for k in range(len(n_list)):
            a = q * kept[:, k]
            log_m = float(logsumexp(a)) - math.log(count)
            log_m2 = float(logsumexp(2.0 * a)) - math.log(count)
            rel_var = math.expm1(max(log_m2 - 2.0 * log_m, 0.0))
            y[k] = log_m / q
            se[k] = math.sqrt(max(rel_var, 0.0) / count) / q
        w = ensemble.block_size
        for k, nn in enumerate(n_list):
            rows.append(
                ScanRow(
                    block_size=w,
                    n_blocks=nn,
                    log_root_moment=float(y[k]),
                    moment=float(math.exp(y[k])),
                    stderr=float(se[k]),
                    samples=count,
                    censored=censored,
                )
            )
        fits[w] = linear_fit(np.array(n_list, dtype=float), y, sigma=np.maximum(se, 1e-12))
    return MomentScan(q=q, rows=tuple(rows), fits=fits, samples=samples)


# ------------------------------------------------------ eigenvector profiles


def eigenvector_correlator(ham: BlockTridiagonal, energy_window: float) -> np.ndarray:
    """Summed absolute eigenvector overlaps within a symmetric energy window.

    Entry (x, y) is the sum of |psi(x)| |psi(y)| over eigenvectors whose
    eigenvalue lies in [-energy_window, energy_window].  Dense eigensolve;
    the trace equals the number of eigenvalues in the window and every entry
    is at most 1 by Cauchy-Schwarz.
    """
    if not energy_window > 0:
        raise ContractError("energy window must be positive")
    if ham.dimension > EIGENSOLVE_LIMIT:
        raise ContractError(
            f"dense eigensolve capped at dimension {EIGENSOLVE_LIMIT}, got "
            f"{ham.dimension}; use fractional_moment_scan for long chains"
        )
    values, vectors = sym_eigen(assemble_dense(ham))
    inside = np.abs(values) <= energy_window
    psi = np.abs(vectors[:, inside])
    return psi @ psi.T


def distance_profile(rho) -> np.ndarray:
    """Average of a square profile over all index pairs at each displacement."""
    a = np.asarray(rho, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"profile must be square, got {a.shape}")
    return np.array([float(np.mean(np.diagonal(a, offset=d))) for d in range(a.shape[0])])


@dataclass(frozen=True)
class CorrelatorProfile:
    distances: np.ndarray
    profile: np.ndarray  # sample-averaged overlap at each displacement
    window_count_mean: float  # mean number of eigenvalues in the window
    samples: int


def _correlator_sample(args):
    ensemble, window, stream = args
    rho = eigenvector_correlator(sample_hamiltonian(ensemble, stream), window)
    return distance_profile(rho), float(np.trace(rho))


def correlator_profile(
    ensemble: BandEnsemble, energy_window: float, samples: int, stream: Stream, workers=None
) -> CorrelatorProfile:
    """Sample-averaged displacement profile of the eigenvector correlator."""
    if samples < 1:
        raise ContractError("need at least 1 sample")
    args = [(ensemble, energy_window, stream.child(i)) for i in range(samples)]
    results = map_indexed(_correlator_sample, args, workers)
    profiles = np.stack([p for p, _ in results])
    counts = np.array([c for _, c in results])
    return CorrelatorProfile(
        distances=np.arange(ensemble.dimension),
        profile=profiles.mean(axis=0),
        window_count_mean=float(counts.mean()),
        samples=samples,
    )


@dataclass(frozen=True)
class LocalizationFit:
    fit: DecayFit
    length: float  # -1/slope of the log profile


def localization_length_fit(profile, block_size: int, noise_floor: float = NOISE_FLOOR) -> LocalizationFit:
    """Decay length of a displacement profile from a log-linear fit.

    Uses displacements strictly beyond twice the block size (outside the
    short-range core) whose value exceeds the noise floor.
    """
    p = np.asarray(profile, dtype=float)
    if p.ndim != 1:
        raise DimensionError(f"profile must be a vector, got shape {p.shape}")
    if block_size < 1:
        raise ContractError("block size must be at least 1")
    d = np.arange(p.size)
    keep = (d > 2 * block_size) & (p > noise_floor)
    if int(keep.sum()) < 3:
        raise FitError(f"only {int(keep.sum())} usable profile points, need 3")
    fit = linear_fit(d[keep].astype(float), np.log(p[keep]))
    if not fit.slope < 0:
        raise FitError(f"profile does not decay (slope {fit.slope:.3g})")
    return LocalizationFit(fit=fit, length=-1.0 / fit.slope)


# ------------------------------------------------------------- resolvent tails


@dataclass(frozen=True)
class TailRow:
    threshold: float
    probability: float
    stderr: float


@dataclass(frozen=True)
class WegnerReport:
    rows: tuple
    sup_scaled: float  # max over the grid of threshold * probability
    samples: int
    censored: int  # draws whose dense solve failed outright; counted as exceedances
    block_pair: tuple


def _wegner_sample(args):
    ensemble, i, j, stream = args
    ham = sample_hamiltonian(ensemble, stream)
    dense = assemble_dense(ham, shift=ensemble.energy)
    w = ensemble.block_size
    rhs = np.zeros((dense.shape[0], w))
    rhs[(j - 1) * w : j * w] = np.eye(w)
    try:
        x = np.linalg.solve(dense, rhs)
    except np.linalg.LinAlgError:
        return math.inf
    block = x[(i - 1) * w : i * w]
    return float(np.linalg.norm(block, 2))


def wegner_tail(
    ensemble: BandEnsemble,
    block_pair,
    thresholds,
    samples: int,
    stream: Stream,
    workers=None,
) -> WegnerReport:
    """Empirical tail of the resolvent block norm over a threshold grid.

    The tail is exactly nonincreasing in the threshold because every
    threshold is evaluated on the same sampled norms.  A draw whose dense
    solve fails is kept as an exceedance of every threshold and counted as
    censored.
    """
    i, j = (int(block_pair[0]), int(block_pair[1]))
    for label, idx in (("row", i), ("column", j)):
        if not 1 <= idx <= ensemble.n_blocks:
            raise ContractError(f"block {label} {idx} outside [1, {ensemble.n_blocks}]")
    lam = np.asarray(thresholds, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ContractError("need a 1-D threshold grid")
    if not np.all(lam > 0) or np.any(np.diff(lam) <= 0):
        raise ContractError("thresholds must be positive and strictly increasing")
    if samples < 1:
        raise ContractError("need at least 1 sample")
    args = [(ensemble, i, j, stream.child(k)) for k in range(samples)]
    norms = np.array(map_indexed(_wegner_sample, args, workers))
    censored = int(np.sum(~np.isfinite(norms)))
    rows = []
    sup_scaled = 0.0
    for threshold in lam:
        p = float(np.mean(norms > threshold))
        stderr = math.sqrt(p * (1.0 - p) / samples)
        rows.append(TailRow(threshold=float(threshold), probability=p, stderr=stderr))
        sup_scaled = max(sup_scaled, float(threshold) * p)
    return WegnerReport(
        rows=tuple(rows),
        sup_scaled=sup_scaled,
        samples=samples,
        censored=censored,
        block_pair=(i, j),
    )


# ------------------------------------------------------------ transfer products


@dataclass(frozen=True)
class LyapunovReport:
    exponents: np.ndarray  # descending
    stderr: np.ndarray  # batch-means standard error, same order
    steps: int
    reorth_period: int
    censored: int  # coupling draws replaced for failing the condition guard
    det_error_max: float  # worst |log |det T|| along the product
    increments: np.ndarray  # per-window log |diag R|, columns ordered like exponents


def transfer_exponents(transfer_fn, steps: int, reorth_period: int = 4):
    """Growth exponents of a product of square matrices by QR accumulation.

    `transfer_fn(i)` supplies the i-th factor.  Returns (exponents, stderr,
    increments) with exponents sorted descending; stderr comes from batch
    means over the re-orthogonalization windows.
    """
    if steps < 1000:
        raise ContractError(f"need at least 1000 steps, got {steps}")
    if reorth_period < 1:
        raise ContractError("reorth_period must be at least 1")
    first = np.asarray(transfer_fn(0), dtype=float)
    if first.ndim != 2 or first.shape[0] != first.shape[1]:
        raise DimensionError(f"transfer matrices must be square, got {first.shape}")
    dim = first.shape[0]
    m = np.eye(dim)
    increments = []
    in_window = 0
    for i in range(steps):
        t = first if i == 0 else np.asarray(transfer_fn(i), dtype=float)
        m = t @ m
        in_window += 1
        if in_window == reorth_period or i == steps - 1:
            q, r = qr_decompose(m)
            increments.append(np.log(np.maximum(np.diag(r), 1e-300)))
            m = q
            in_window = 0
    inc = np.array(increments)
    raw = inc.sum(axis=0) / steps
    order = np.argsort(raw)[::-1]
    full_windows = steps // reorth_period
    stderr = np.full(dim, math.inf)
    if full_windows >= 4:
        batches = np.array_split(inc[:full_windows], min(32, full_windows // 2))
        means = np.array([b.sum(axis=0) / (b.shape[0] * reorth_period) for b in batches])
        stderr = means.std(axis=0, ddof=1) / math.sqrt(len(batches))
    return raw[order], stderr[order], inc[:, order]


def lyapunov_spectrum(
    ensemble: BandEnsemble,
    steps: int,
    stream: Stream,
    reorth_period: int = 4,
    guard: float = CONDITION_GUARD,
) -> LyapunovReport:
    """Lyapunov spectrum of the chain's one-step transfer matrices.

    Each step consumes a diagonal block A and a coupling block B and builds
    the 2W x 2W factor [[B^{-1}(E - A), -B^{-1}], [B^T, 0]].  This is the
    memoryless rewrite of the block eigen-equation propagation (the second
    row carries B^T psi_j forward as the memory variable), so the exponent
    spectrum is symmetric around zero and |det| = 1 identically; the worst
    observed |log |det|| is reported as a numerical check.  Coupling draws
    failing the condition guard are redrawn from a retry stream and counted.
    """
    w = ensemble.block_size
    energy = ensemble.energy
    state = {"censored": 0, "det_error": 0.0}

    def factor(i):
        a = sample_diag_block(ensemble.a_law, w, stream.child(TAG_DIAG, i).generator())
        attempt = 0
        while True:
            key = (TAG_OFF, i) if attempt == 0 else (TAG_OFF, i, attempt)
            b = sample_coupling_block(ensemble.b_law, w, stream.child(*key).generator())
            try:
                lu, piv, condition = lu_factor_checked(b, "coupling block")
            except SingularMatrixError:
                condition = math.inf
            if condition <= guard:
                break
            state["censored"] += 1
            attempt += 1
            if attempt > 100:
                raise ContractError("coupling blocks keep failing the condition guard")
        b_inv = lu_solve((lu, piv), np.eye(w))
        t = np.zeros((2 * w, 2 * w))
        t[:w, :w] = b_inv @ (energy * np.eye(w) - a)
        t[:w, w:] = -b_inv
        t[w:, :w] = b.T
        _, logdet = np.linalg.slogdet(t)
        state["det_error"] = max(state["det_error"], abs(float(logdet)))
        return t

    exponents, stderr, increments = transfer_exponents(factor, steps, reorth_period)
    return LyapunovReport(
        exponents=exponents,
        stderr=stderr,
        steps=steps,
        reorth_period=reorth_period,
        censored=state["censored"],
        det_error_max=state["det_error"],
        increments=increments,
    )


# ------------------------------------------------------------ operator norms


@dataclass(frozen=True)
class NormTailRow:
    dimension: int
    threshold: float
    probability: float
    stderr: float


@dataclass(frozen=True)
class NormTailReport:
    rows: tuple
    epsilon: float
    fill: str
    samples: int
    passing_from: int | None  # smallest dimension from which every tail is <= epsilon


_FILLS = ("symmetric", "iid", "score")


def _norm_sample(args):
    law, n, fill, stream = args
    rng = stream.generator()
    if fill == "iid":
        m = np.asarray(law.sample(rng, size=(n, n)), dtype=float)
        return float(np.linalg.svd(m, compute_uv=False)[0])
    iu = np.triu_indices(n)
    values = np.asarray(law.sample(rng, size=iu[0].size), dtype=float)
    m = np.zeros((n, n))
    m[iu] = values
    m.T[iu] = values
    if fill == "score":
        # halved scores everywhere: for a unit gaussian this is exactly -m/2
        m = np.asarray(law.score(m), dtype=float) / 2.0
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def operator_norm_samples(law, n: int, samples: int, stream: Stream, fill: str = "symmetric"):
    """Operator norms of matrices with unnormalized law entries."""
    if fill not in _FILLS:
        raise ContractError(f"fill must be one of {_FILLS}, got {fill!r}")
    if n < 1:
        raise ContractError("dimension must be at least 1")
    if samples < 1:
        raise ContractError("need at least 1 sample")
    args = [(law, n, fill, stream.child(k)) for k in range(samples)]
    return np.array([_norm_sample(a) for a in args])


def operator_norm_tail(
    law,
    n_list,
    epsilon: float,
    samples: int,
    stream: Stream,
    fill: str = "symmetric",
    workers=None,
) -> NormTailReport:
    """Empirical probability that the operator norm exceeds (2+eps) sqrt(n).

    Entries are left unnormalized (variance at most 1 per the law's
    certificate), so sqrt(n) is the bulk-edge scale.
    """
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    if fill not in _FILLS:
        raise ContractError(f"fill must be one of {_FILLS}, got {fill!r}")
    dims = [int(n) for n in n_list]
    if not dims or any(n < 1 for n in dims):
        raise ContractError("dimensions must be positive")
    rows = []
    for m_index, n in enumerate(dims):
        args = [(law, n, fill, stream.child(m_index, k)) for k in range(samples)]
        norms = np.array(map_indexed(_norm_sample, args, workers))
        threshold = (2.0 + epsilon) * math.sqrt(n)
        p = float(np.mean(norms >= threshold))
        rows.append(
            NormTailRow(
                dimension=n,
                threshold=threshold,
                probability=p,
                stderr=math.sqrt(p * (1.0 - p) / samples),
            )
        )
    passing_from = None
    for row in rows:
        if row.probability <= epsilon:
            if passing_from is None:
                passing_from = row.dimension
        else:
            passing_from = None
    return NormTailReport(
        rows=tuple(rows), epsilon=epsilon, fill=fill, samples=samples, passing_from=passing_from
    )
