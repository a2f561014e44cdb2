"""Fluctuation machinery for the conditional coupling-block law.

Given two consecutive Schur pivots of a chain, the coupling block between
them has an explicit conditional density: the product of the diagonal-block
law evaluated at the reconstructed next diagonal block and the coupling
law evaluated entrywise,

    F(B) = (1/Z) phi_diag(D_next + E + B^T D^{-1} B) * phi_coupling(B).

The cheap perturbation that probes this density is the rank-one tilt
B -> B + delta |Bv><v|, which rescales ||Bv|| by (1 + delta) while changing
the density by a controlled amount (the distortion).  This module provides
the tilt, the conditional density, the distortion and its bounding norms, a
Metropolis sampler for F, anti-concentration statistics with their
supporting one-dimensional quadrature check, the exponential-moment gap,
and the deterministic either-or norm bound along a factorized chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_solve
from scipy.special import logsumexp

from .band import BlockTridiagonal
from .errors import ContractError, DimensionError
from .laws import score_matrix
from .linalg import CONDITION_GUARD, lu_factor_checked, op_norm
from .resolvent import ResolventChain

__all__ = [
    "PerturbationStep",
    "FluctuationContext",
    "default_delta",
    "default_threshold",
    "rank_one_map",
    "distortion",
    "distortion_bound_terms",
    "DistortionTerms",
    "mcmc_conditional_sample",
    "mcmc_conditional_chain",
    "anti_concentration",
    "SmoothMap",
    "IntervalObservable",
    "scale_map",
    "log_abs_observable",
    "UniformSegment",
    "ToyFluctuationReport",
    "toy_fluctuation_check",
    "JensenGapReport",
    "jensen_gap",
    "EitherOrReport",
    "either_or_norm_check",
    "FrequencyReport",
    "step_norms",
    "bounded_step_frequency",
]

# From the underlying contradiction argument: concentration above
# 1 - (1/8) sqrt(t) p is impossible, so 1/8 is the certified constant.
TOY_CHECK_CONSTANT = 0.125


def default_delta(w: int) -> float:
    """Default tilt size 2/sqrt(W), bumped to 3/sqrt(W) at W = 4.

    At W = 4 the default 2/sqrt(W) would put 1 + delta at zero for the
    inverse tilt, so the step is widened there.
    """
    if w < 1:
        raise ContractError("block size must be at least 1")
    return 3.0 / math.sqrt(w) if w == 4 else 2.0 / math.sqrt(w)


def default_threshold(law, energy: float) -> float:
    """Norm threshold 100 (1 + M + |E|) for the bounded-step event."""
    return 100.0 * (1.0 + law.regularity_bound + abs(energy))


@dataclass(frozen=True, eq=False)
class PerturbationStep:
    """A rank-one tilt: size delta along unit direction v."""

    delta: float
    direction: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.delta == -1.0:
            raise ContractError("delta = -1 collapses the tilt (determinant 0)")
        if not abs(self.delta) <= 2.0:
            raise ContractError(f"|delta| must be at most 2, got {self.delta}")
        v = np.asarray(self.direction, dtype=float)
        if v.ndim != 1:
            raise DimensionError("direction must be a vector")
        norm = float(np.linalg.norm(v))
        if not abs(norm - 1.0) <= 1e-8:
            raise ContractError(f"direction must be a unit vector, norm {norm}")
        object.__setattr__(self, "direction", v / norm)

    def inverse(self) -> "PerturbationStep":
        """The tilt undoing this one: delta* = -delta/(1+delta)."""
        return replace(self, delta=-self.delta / (1.0 + self.delta))


def rank_one_map(b: np.ndarray, step: PerturbationStep) -> np.ndarray:
    """B + delta |Bv><v|; multiplies the component of each row along v."""
    b = np.asarray(b, dtype=float)
    v = step.direction
    if b.shape != (v.size, v.size):
        raise DimensionError(f"block must be {v.size}x{v.size}, got {b.shape}")
    return b + step.delta * np.outer(b @ v, v)


class FluctuationContext:
    """Frozen conditioning data (D, D_next, E, laws) for one chain position.

    The pivot D is LU-factored once at construction; a condition estimate
    beyond the guard marks the context censored but does not raise, so
    sweeps over sampled chains can skip bad positions explicitly.
    """

    def __init__(self, pivot, next_pivot, energy, a_law, b_law, guard=CONDITION_GUARD):
        pivot = np.asarray(pivot, dtype=float)
        next_pivot = np.asarray(next_pivot, dtype=float)
        if pivot.ndim != 2 or pivot.shape[0] != pivot.shape[1]:
            raise DimensionError(f"pivot must be square, got {pivot.shape}")
        if next_pivot.shape != pivot.shape:
            raise DimensionError(
                f"pivots must share a shape, got {pivot.shape} and {next_pivot.shape}"
            )
        for name, m in (("pivot", pivot), ("next pivot", next_pivot)):
            scale = max(1.0, float(np.abs(m).max()))
            if float(np.abs(m - m.T).max()) > 1e-9 * scale:
                raise ContractError(f"{name} must be symmetric")
        self.pivot = (pivot + pivot.T) / 2
        self.next_pivot = (next_pivot + next_pivot.T) / 2
        self.energy = float(energy)
        self.a_law = a_law
        self.b_law = b_law
        lu, piv, condition = lu_factor_checked(self.pivot, "conditioning pivot")
        self._lu = (lu, piv)
        self.condition = condition
        self.censored = not condition <= guard

    @property
    def block_size(self) -> int:
        return self.pivot.shape[0]

    def apply_pivot_inverse(self, m) -> np.ndarray:
        return lu_solve(self._lu, np.asarray(m, dtype=float))

    def interaction_matrix(self, b) -> np.ndarray:
        """The next diagonal block reconstructed from B: D_next + E + B^T D^{-1} B."""
        b = np.asarray(b, dtype=float)
        w = self.block_size
        if b.shape != (w, w):
            raise DimensionError(f"block must be {w}x{w}, got {b.shape}")
        s = self.next_pivot + b.T @ self.apply_pivot_inverse(b)
        s = (s + s.T) / 2
        s[np.diag_indices(w)] += self.energy
        return s

    def log_density_coupling_part(self, b) -> float:
        """Log diagonal-law density of the reconstructed block (upper triangle)."""
        s = self.interaction_matrix(b)
        w = self.block_size
        iu = np.triu_indices(w)
        return float(np.sum(self.a_law.log_density(math.sqrt(w) * s[iu])))

    def log_density_entry_part(self, b) -> float:
        """Log coupling-law density of B itself, all entries."""
        b = np.asarray(b, dtype=float)
        w = self.block_size
        return float(np.sum(self.b_law.log_density(math.sqrt(w) * b)))

    def conditional_log_density(self, b) -> float:
        """log F(B) up to the additive normalization, which is never computed."""
        return self.log_density_coupling_part(b) + self.log_density_entry_part(b)


def distortion(b, step: PerturbationStep, ctx: FluctuationContext) -> float:
    """Second difference of log F along the tilt:

    log F(T_{-delta}B) + log F(T_{+delta}B) - 2 log F(B).
    """
    down = replace(step, delta=-step.delta)
    return (
        ctx.conditional_log_density(rank_one_map(b, step))
        + ctx.conditional_log_density(rank_one_map(b, down))
        - 2.0 * ctx.conditional_log_density(b)
    )


@dataclass
class DistortionTerms:
    """The three squared norms that bound the distortion, and their scaled sum."""

    tilted_column: float  # ||B v||^2
    score_column: float  # ||f(D_next + E + B^T D^{-1} B) v||^2
    quadratic_column: float  # ||B^T D^{-1} B v||^2
    scaled_sum: float  # delta^2 W (sum of the three)


def distortion_bound_terms(b, step: PerturbationStep, ctx: FluctuationContext) -> DistortionTerms:
    b = np.asarray(b, dtype=float)
    v = step.direction
    w = ctx.block_size
    bv = b @ v
    s = ctx.interaction_matrix(b)
    fv = score_matrix(s, ctx.a_law) @ v
    qv = b.T @ ctx.apply_pivot_inverse(bv)
    n1 = float(bv @ bv)
    n2 = float(fv @ fv)
    n3 = float(qv @ qv)
    return DistortionTerms(
        tilted_column=n1,
        score_column=n2,
        quadratic_column=n3,
        scaled_sum=step.delta**2 * w * (n1 + n2 + n3),
    )


# -------------------------------------------------------------------- sampler


def _mcmc_run(ctx, rng, total_steps, burn_in, collect_every, initial):
    w = ctx.block_size
    if initial is None:
        state = ctx.b_law.sample(rng, (w, w)) / math.sqrt(w)
    else:
        state = np.array(initial, dtype=float)
        if state.shape != (w, w):
            raise DimensionError(f"initial state must be {w}x{w}")
    log_f = ctx.conditional_log_density(state)
    scale = 0.5 / math.sqrt(w)
    accepted_in_round = 0
    round_size = 100
    collected = []
    for step_index in range(total_steps):
        proposal = state + scale * rng.standard_normal((w, w))
        log_f_new = ctx.conditional_log_density(proposal)
        if math.log(rng.random()) < log_f_new - log_f:
            state, log_f = proposal, log_f_new
            accepted_in_round += 1
        tuning = step_index < burn_in
        if tuning and (step_index + 1) % round_size == 0:
            rate = accepted_in_round / round_size
            if rate < 0.2:
                scale *= 0.5
            elif rate > 0.4:
                scale *= 2.0
            accepted_in_round = 0
        if not tuning and collect_every and (step_index + 1 - burn_in) % collect_every == 0:
            collected.append(state.copy())
    return state, collected


def mcmc_conditional_sample(ctx: FluctuationContext, rng, steps: int | None = None) -> np.ndarray:
    """One draw from F by random-walk Metropolis over all W^2 entries.

    The proposal scale is tuned toward 20-40% acceptance during burn-in
    (default 1000 W^2 steps) and frozen afterwards; `steps` counts total
    Metropolis steps and must cover the burn-in.
    """
    burn_in = 1000 * ctx.block_size**2
    if steps is None:
        steps = burn_in + 1000
    if steps < burn_in:
        raise ContractError(f"steps {steps} below the burn-in {burn_in}")
    state, _ = _mcmc_run(ctx, rng, steps, burn_in, collect_every=0, initial=None)
    return state


def mcmc_conditional_chain(
    ctx: FluctuationContext,
    rng,
    n_samples: int,
    thin: int | None = None,
    burn_in: int | None = None,
    initial=None,
) -> np.ndarray:
    """`n_samples` draws from F, `thin` Metropolis steps apart after burn-in."""
    w = ctx.block_size
    if burn_in is None:
        burn_in = 1000 * w**2
    if thin is None:
        thin = 5 * w**2
    total = burn_in + thin * n_samples
    _, collected = _mcmc_run(ctx, rng, total, burn_in, collect_every=thin, initial=initial)
    return np.asarray(collected[:n_samples])


# ------------------------------------------------------- concentration checks


def anti_concentration(samples, width: float) -> float:
    """Largest fraction of samples inside any window [a - width, a + width].

    Exact over the sorted samples: the maximizing window can always anchor
    its left edge at a sample point.
    """
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size < 100:
        raise ContractError(f"need at least 100 samples, got {values.size}")
    if width < 0:
        raise ContractError("width must be nonnegative")
    upper = np.searchsorted(values, values + 2.0 * width, side="right")
    best = int(np.max(upper - np.arange(values.size)))
    return best / values.size


@dataclass
class SmoothMap:
    """A one-dimensional diffeomorphism given in closed form with its Jacobian."""

    fn: object
    jacobian: object


@dataclass
class IntervalObservable:
    """A scalar observable g plus the preimage map of value intervals.

    `preimage(lo, hi)` returns disjoint x-intervals whose union is
    {x : lo <= g(x) <= hi}.
    """

    fn: object
    preimage: object


def scale_map(factor: float) -> SmoothMap:
    if factor == 0:
        raise ContractError("scale factor must be nonzero")
    return SmoothMap(fn=lambda x: factor * x, jacobian=lambda x: abs(factor) * np.ones_like(x))


def log_abs_observable() -> IntervalObservable:
    def preimage(lo: float, hi: float):
        return ((-math.exp(hi), -math.exp(lo)), (math.exp(lo), math.exp(hi)))

    return IntervalObservable(fn=lambda x: np.log(np.abs(x)), preimage=preimage)


@dataclass
class UniformSegment:
    """Uniform law on [lo, hi]; the minimal density/cdf surface the toy needs."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ContractError("segment must have positive length")

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)


@dataclass
class ToyFluctuationReport:
    """One-dimensional quadrature verdict on the anti-concentration bound."""

    delta: float
    t: float
    concentration_sup: float  # sup_a P(|g(X) - a| <= delta/2)
    spread_probability: float  # P(pullback-ratio product >= t)
    constant: float
    bound: float  # 1 - constant sqrt(t) spread_probability
    margin: float
    shift_error_plus: float  # sup |g(T_+ x) - g(x) - delta| over the grid
    shift_error_minus: float
    passed: bool


def _law_range(law) -> tuple[float, float]:
    lo, hi = -1.0, 1.0
    for _ in range(60):
        if float(law.cdf(lo)) > 1e-9:
            lo *= 2.0
        elif float(law.cdf(hi)) < 1.0 - 1e-9:
            hi *= 2.0
        else:
            return lo, hi
    return lo, hi


def toy_fluctuation_check(
    law,
    g: IntervalObservable,
    t_plus: SmoothMap,
    t_minus: SmoothMap,
    delta: float,
    t: float,
    a_points: int = 2001,
    x_points: int = 200_001,
) -> ToyFluctuationReport:
    """Verify the one-dimensional anti-concentration bound by quadrature.

    Checks sup_a P(|g(X) - a| <= delta/2) <= 1 - c sqrt(t) P(R+ R- >= t)
    where R+- are the pullback-density ratios of the supplied maps and
    c = 1/8 is the constant certified by the contradiction argument.
    All probabilities come from the law's CDF (window side) or a dense
    trapezoid grid (ratio side); nothing is sampled.
    """
    if not 0.0 <= t <= 1.0:
        raise ContractError("t must lie in [0, 1]")
    if delta < 0:
        raise ContractError("delta must be nonnegative")

    x_lo, x_hi = _law_range(law)
    xs = np.linspace(x_lo, x_hi, x_points)
    dens = np.asarray(law.density(xs), dtype=float)
    positive = dens > 0

    # spread side: P(R+ R- >= t) on the grid
    ratio = np.zeros_like(dens)
    up = np.asarray(law.density(t_plus.fn(xs)), dtype=float) * np.asarray(
        t_plus.jacobian(xs), dtype=float
    )
    down = np.asarray(law.density(t_minus.fn(xs)), dtype=float) * np.asarray(
        t_minus.jacobian(xs), dtype=float
    )
    ratio[positive] = up[positive] * down[positive] / dens[positive] ** 2
    spread = float(np.trapezoid(np.where(ratio >= t, dens, 0.0), xs))
    spread = min(spread, 1.0)

    # concentration side: windows of g-values resolved through the preimage
    with np.errstate(divide="ignore", invalid="ignore"):
        g_values = np.asarray(g.fn(xs), dtype=float)
    finite = positive & np.isfinite(g_values)
    mass = dens[finite] / dens[finite].sum()
    order = np.argsort(g_values[finite])
    sorted_g = g_values[finite][order]
    cum = np.cumsum(mass[order])
    lo_q = float(np.interp(1e-4, cum, sorted_g))
    hi_q = float(np.interp(1.0 - 1e-4, cum, sorted_g))
    a_grid = np.linspace(lo_q - delta, hi_q + delta, a_points)
    concentration = 0.0
    for a in a_grid:
        prob = 0.0
        for left, right in g.preimage(a - delta / 2.0, a + delta / 2.0):
            prob += float(law.cdf(right)) - float(law.cdf(left))
        concentration = max(concentration, prob)

    shift_plus = float(
        np.max(np.abs(g.fn(t_plus.fn(xs[finite])) - g_values[finite] - delta))
    )
    shift_minus = float(
        np.max(np.abs(g.fn(t_minus.fn(xs[finite])) - g_values[finite] + delta))
    )

    bound = 1.0 - TOY_CHECK_CONSTANT * math.sqrt(t) * spread
    return ToyFluctuationReport(
        delta=delta,
        t=t,
        concentration_sup=concentration,
        spread_probability=spread,
        constant=TOY_CHECK_CONSTANT,
        bound=bound,
        margin=bound - concentration,
        shift_error_plus=shift_plus,
        shift_error_minus=shift_minus,
        passed=concentration <= bound,
    )


@dataclass
class JensenGapReport:
    """Exponential-moment gap of a sample set against its fluctuation floor."""

    gap: float  # log E e^{2X} - 2 log E e^X, always >= 0
    bound: float  # anti_conc_p * width^2, the floor's scale
    fitted_constant: float  # gap / bound when the floor is positive


def jensen_gap(samples, width: float, anti_conc_p: float) -> JensenGapReport:
    """Gap of empirical exponential moments, compared against p delta^2.

    The gap is nonnegative on every sample set by the Cauchy-Schwarz
    inequality; computed through log-sum-exp so large values never overflow.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 1:
        raise ContractError("need at least one sample")
    n = math.log(x.size)
    gap = float(logsumexp(2.0 * x) + n - 2.0 * logsumexp(x))
    bound = float(anti_conc_p) * float(width) ** 2
    fitted = gap / bound if bound > 0 else math.inf if gap > 0 else 0.0
    return JensenGapReport(gap=gap, bound=bound, fitted_constant=fitted)


# ----------------------------------------------------------- chain-wide checks


@dataclass
class EitherOrReport:
    checked: int
    violations: int
    skipped: int  # positions whose operator-norm guard failed


def either_or_norm_check(chain: ResolventChain, ham: BlockTridiagonal) -> EitherOrReport:
    """Deterministic either-or bound along an uncensored factorized chain.

    At every position j (1-indexed, j <= N-1) whose blocks satisfy
    ||A_j||, ||B_j|| <= 10, at least one of
        ||B_j^T D_j^{-1} B_j v_j|| <= 100
        ||B_{j-1}^T D_{j-1}^{-1} B_{j-1} v_{j-1}|| <= 100 + |E|
    must hold; the second branch is vacuous at j = 1, where the recursion's
    base case makes the previous-step quantity identically zero.
    """
    if chain.censored:
        raise ContractError("either-or check needs an uncensored chain")
    n = chain.n_blocks
    if ham.n_blocks != n:
        raise DimensionError("chain and matrix disagree on the block count")
    energy = chain.energy

    quadratic = []
    for j in range(n - 1):
        b = ham.off_blocks[j]
        lu = lu_factor_checked(chain.pivots[j], f"pivot block {j + 1}")[:2]
        quadratic.append(float(np.linalg.norm(b.T @ lu_solve(lu, b @ chain.directions[j]))))

    checked = violations = skipped = 0
    for j in range(1, n):  # 1-indexed positions
        a_norm = op_norm(ham.diag_blocks[j - 1])
        b_norm = op_norm(ham.off_blocks[j - 1])
        if a_norm > 10.0 or b_norm > 10.0:
            skipped += 1
            continue
        checked += 1
        first = quadratic[j - 1] <= 100.0
        second = j == 1 or quadratic[j - 2] <= 100.0 + abs(energy)
        if not (first or second):
            violations += 1
    return EitherOrReport(checked=checked, violations=violations, skipped=skipped)


@dataclass
class FrequencyReport:
    per_position: np.ndarray
    average: float
    threshold: float
    n_chains: int


def step_norms(chain: ResolventChain, ham: BlockTridiagonal, a_law) -> np.ndarray:
    """Per-position max of the three norms controlling one sweep step.

    Position j (1-indexed, j <= N-1) collects ||B_j v_j||,
    ||f(A_{j+1}) v_j||, and ||B_j^T D_j^{-1} B_j v_j||.
    """
    n = chain.n_blocks
    if ham.n_blocks != n:
        raise DimensionError("chain and matrix disagree on the block count")
    out = np.empty(n - 1)
    for j in range(n - 1):
        v = chain.directions[j]
        b = ham.off_blocks[j]
        bv = b @ v
        lu = lu_factor_checked(chain.pivots[j], f"pivot block {j + 1}")[:2]
        qv = b.T @ lu_solve(lu, bv)
        fv = score_matrix(ham.diag_blocks[j + 1], a_law) @ v
        out[j] = max(
            float(np.linalg.norm(bv)),
            float(np.linalg.norm(fv)),
            float(np.linalg.norm(qv)),
        )
    return out


def bounded_step_frequency(pairs, threshold: float, a_law) -> FrequencyReport:
    """Frequency of the bounded-step event {X_j <= threshold} over sampled chains.

    `pairs` is a sequence of (chain, matrix) tuples from a common ensemble;
    censored chains are rejected by contract.
    """
    if math.isnan(threshold):
        raise ContractError("threshold must not be NaN")
    indicator_sum = None
    count = 0
    for chain, ham in pairs:
        if chain.censored:
            raise ContractError("bounded-step frequency needs uncensored chains")
        norms = step_norms(chain, ham, a_law)
        flags = (norms <= threshold).astype(float)
        indicator_sum = flags if indicator_sum is None else indicator_sum + flags
        count += 1
    if count == 0:
        raise ContractError("need at least one chain")
    per_position = indicator_sum / count
    return FrequencyReport(
        per_position=per_position,
        average=float(per_position.mean()),
        threshold=threshold,
        n_chains=count,
    )
