"""Scalar entry laws with certified regularity bounds.

A `RegularLaw` is a centered scalar law with a strictly positive, twice
differentiable density.  Each law carries a `regularity_bound` M that is
supposed to dominate both its fourth moment and the sup of |(log density)''|;
`verify_regularity` checks those certificates (plus the induced bounds on the
score moments) by Monte Carlo and by adaptive quadrature.

Three kinds ship: gaussian, polynomial heavy tail with density proportional
to 1/(1 + |x|^alpha), and laws tabulated on a grid.  Heavy-tail laws are
rescaled at construction so their second moment is exactly 1; their bound M
is computed numerically, not assumed.  `score_matrix` lifts the scalar score
to symmetric-matrix arguments under the trace inner product, with the 1/W
normalization used throughout the package.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import ContractError, DimensionError

__all__ = [
    "RegularLaw",
    "GaussianLaw",
    "HeavyTailLaw",
    "TabulatedLaw",
    "RegularityReport",
    "gaussian",
    "heavy_tail",
    "tabulated",
    "load_tabulated",
    "verify_regularity",
    "score_matrix",
]

# Default grid on which sup |(log density)''| is certified.
CURVATURE_GRID = (-20.0, 20.0, 1e-3)


class RegularLaw:
    """A centered scalar law, possibly rescaled from a base variable.

    The law is X = scale * U where subclasses define the base variable U
    through densities and samplers in base coordinates.
    """

    kind = "base"

    def __init__(self, scale: float, regularity_bound: float):
        if not scale > 0:
            raise ContractError("scale must be positive")
        self.scale = float(scale)
        self.regularity_bound = float(regularity_bound)

    # hooks in base coordinates -------------------------------------------
    def _log_density(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _score(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _curvature(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    # public surface in law coordinates -----------------------------------
    def log_density(self, x) -> np.ndarray:
        u = np.asarray(x, dtype=float) / self.scale
        return self._log_density(u) - math.log(self.scale)

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def score(self, x) -> np.ndarray:
        """(log density)'(x)."""
        u = np.asarray(x, dtype=float) / self.scale
        return self._score(u) / self.scale

    def curvature(self, x) -> np.ndarray:
        """(log density)''(x)."""
        u = np.asarray(x, dtype=float) / self.scale
        return self._curvature(u) / self.scale**2

    def cdf(self, x) -> np.ndarray:
        u = np.asarray(x, dtype=float) / self.scale
        return self._cdf(u)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.scale * self._sample(rng, size)

    def spec(self) -> dict:
        """Plain-data description (for sidecar metadata)."""
        return {"kind": self.kind, "scale": self.scale, "bound": self.regularity_bound}


class GaussianLaw(RegularLaw):
    kind = "gaussian"

    def __init__(self, scale: float = 1.0):
        super().__init__(scale, max(3.0 * scale**4, 1.0 / scale**2))

    def _log_density(self, u):
        return -0.5 * u**2 - 0.5 * math.log(2.0 * math.pi)

    def _score(self, u):
        return -u

    def _curvature(self, u):
        return np.full_like(np.asarray(u, dtype=float), -1.0)

    def _cdf(self, u):
        from scipy.special import ndtr

        return ndtr(u)

    def _sample(self, rng, size):
        return rng.standard_normal(size)


class HeavyTailLaw(RegularLaw):
    """Density proportional to 1/(1 + |x|^alpha) in base coordinates.

    The tail index must exceed 3 so the variance exists; indices at or below
    5 are accepted for construction but fail `verify_regularity` on the
    fourth moment, which is the point of building them in tests.
    Sampling inverts a tabulated CDF (4096 panels of adaptive quadrature,
    monotone cubic interpolation); mass outside the table is below 2e-9 and
    is clamped to the end nodes.
    """

    kind = "heavy_tail"

    def __init__(self, alpha: float, scale: float, normalization: float,
                 regularity_bound: float, grid_x: np.ndarray, grid_cdf: np.ndarray):
        super().__init__(scale, regularity_bound)
        self.alpha = float(alpha)
        self.normalization = float(normalization)
        self._grid_x = grid_x
        self._grid_cdf = grid_cdf
        self._cdf_interp = PchipInterpolator(grid_x, grid_cdf, extrapolate=False)
        keep = np.concatenate([[True], np.diff(grid_cdf) > 0.0])
        self._quantile_interp = PchipInterpolator(
            grid_cdf[keep], grid_x[keep], extrapolate=False
        )

    def _log_density(self, u):
        return -math.log(self.normalization) - np.log1p(np.abs(u) ** self.alpha)

    def _score(self, u):
        a = self.alpha
        absu = np.abs(u)
        return -a * absu ** (a - 1.0) * np.sign(u) / (1.0 + absu**a)

    def _curvature(self, u):
        a = self.alpha
        absu = np.abs(u)
        body = absu ** (a - 2.0) * ((a - 1.0) - absu**a)
        return -a * body / (1.0 + absu**a) ** 2

    def _cdf(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self._grid_x[0], self._grid_x[-1]
        out = np.asarray(self._cdf_interp(np.clip(u, lo, hi)), dtype=float)
        out = np.where(u < lo, 0.0, out)
        out = np.where(u > hi, 1.0, out)
        return out

    def _sample(self, rng, size):
        u = rng.random(size)
        u = np.clip(u, self._grid_cdf[0], self._grid_cdf[-1])
        return np.asarray(self._quantile_interp(u), dtype=float)

    def spec(self):
        out = super().spec()
        out["alpha"] = self.alpha
        return out


class TabulatedLaw(RegularLaw):
    """Law given by density values on a strictly increasing grid.

    Two interpolants split the work.  Log density, score, and curvature use
    a C2 cubic spline through the log values (exact on polynomial log
    densities up to cubics).  Mass, CDF, and quantiles use the exact
    antiderivative of a monotone cubic through the density values, which
    cannot undershoot zero, so the sampler and the CDF agree by
    construction.  Support is the grid's span; the density is treated as
    zero outside.
    """

    kind = "tabulated"

    def __init__(self, xs: np.ndarray, density: np.ndarray):
        xs = np.asarray(xs, dtype=float)
        density = np.asarray(density, dtype=float)
        if xs.ndim != 1 or xs.shape != density.shape:
            raise DimensionError("grid and density must be 1-D and equal length")
        if xs.size < 8:
            raise ContractError("tabulated law needs at least 8 grid points")
        if np.any(np.diff(xs) <= 0):
            raise ContractError("grid must be strictly increasing")
        if np.any(density <= 0):
            raise ContractError("density must be strictly positive on its grid")

        pdf = PchipInterpolator(xs, density, extrapolate=False)
        mass_fn = pdf.antiderivative()
        total = float(mass_fn(xs[-1]) - mass_fn(xs[0]))
        if not total > 0:
            raise ContractError("density has zero mass")
        self._support = (float(xs[0]), float(xs[-1]))
        self._log_interp = CubicSpline(
            xs, np.log(density) - math.log(total), extrapolate=False
        )
        self._score_interp = self._log_interp.derivative()
        self._curv_interp = self._log_interp.derivative(2)
        self._mass_fn = mass_fn
        self._mass_base = float(mass_fn(xs[0]))
        self._total = total
        cdf_vals = (np.asarray(mass_fn(xs), dtype=float) - self._mass_base) / total
        cdf_vals[-1] = 1.0
        self._cdf_vals = cdf_vals
        self._xs = xs
        keep = np.concatenate([[True], np.diff(cdf_vals) > 0.0])
        self._quantile_interp = PchipInterpolator(cdf_vals[keep], xs[keep])

        # certify the bound with the same routines verification will use:
        # quadrature fourth moment under both interpolants (the spline-log
        # density that log_density exposes and the monotone-cubic density the
        # sampler draws from), curvature sup on the default dense grid (plus
        # the breakpoints) inside the support
        def mass_pdf(t: float) -> float:
            out = float(pdf(t)) / total if xs[0] <= t <= xs[-1] else 0.0
            return out if math.isfinite(out) else 0.0

        def log_pdf(t: float) -> float:
            if not xs[0] <= t <= xs[-1]:
                return 0.0
            out = float(np.exp(self._log_interp(t)))
            return out if math.isfinite(out) else 0.0

        fourth = max(_panel_moment(mass_pdf, 4), _panel_moment(log_pdf, 4))
        lo, hi, step = CURVATURE_GRID
        dense = np.arange(lo, hi + step / 2, step)
        dense = np.concatenate([dense[(dense >= xs[0]) & (dense <= xs[-1])], xs])
        curv_sup = float(np.max(np.abs(self._curv_interp(dense))))
        super().__init__(1.0, max(fourth, curv_sup))

    def _log_density(self, u):
        u = np.asarray(u, dtype=float)
        out = np.asarray(self._log_interp(u), dtype=float)
        return np.where(np.isnan(out), -np.inf, out)

    def _score(self, u):
        out = np.asarray(self._score_interp(np.asarray(u, dtype=float)), dtype=float)
        return np.where(np.isnan(out), 0.0, out)

    def _curvature(self, u):
        out = np.asarray(self._curv_interp(np.asarray(u, dtype=float)), dtype=float)
        return np.where(np.isnan(out), 0.0, out)

    def _cdf(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self._support
        mass = np.asarray(self._mass_fn(np.clip(u, lo, hi)), dtype=float)
        out = (mass - self._mass_base) / self._total
        out = np.where(u < lo, 0.0, out)
        out = np.where(u > hi, 1.0, out)
        return np.clip(out, 0.0, 1.0)

    def _sample(self, rng, size):
        u = rng.random(size)
        u = np.clip(u, self._cdf_vals[0], self._cdf_vals[-1])
        return np.asarray(self._quantile_interp(u), dtype=float)

    def spec(self):
        out = super().spec()
        out["support"] = list(self._support)
        return out


def gaussian(scale: float = 1.0) -> GaussianLaw:
    return GaussianLaw(scale)


@functools.lru_cache(maxsize=32)
def heavy_tail(alpha: float, unit_variance: bool = True) -> HeavyTailLaw:
    """Heavy-tail law with density proportional to 1/(1 + |x|^alpha).

    With `unit_variance` (the shipped default) the law is rescaled so its
    second moment is exactly 1.  The regularity bound is computed
    numerically: max of the fourth moment (infinite for alpha <= 5, in which
    case only the curvature bound is certified and verification will fail)
    and of sup |(log density)''| on the default grid.
    """
    alpha = float(alpha)
    if alpha <= 3.0:
        raise ContractError("heavy_tail needs alpha > 3 for a finite variance")

    def base_pdf(x: float) -> float:
        return 1.0 / (1.0 + abs(x) ** alpha)

    z, _ = quad(base_pdf, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)

    def pdf(x: float) -> float:
        return base_pdf(x) / z

    base_var = _panel_moment(pdf, 2)
    scale = 1.0 / math.sqrt(base_var) if unit_variance else 1.0

    # table covering all but ~1e-9 of mass per side, with 0 as a node
    tail = 1e-9
    x_max = max(20.0, (1.0 / ((alpha - 1.0) * z * tail)) ** (1.0 / (alpha - 1.0)))
    grid_x = np.linspace(-x_max, x_max, 4097)
    panels = np.empty(grid_x.size - 1)
    for i in range(grid_x.size - 1):
        panels[i], _ = quad(pdf, grid_x[i], grid_x[i + 1], epsabs=1e-14, epsrel=1e-11)
    left, _ = quad(pdf, -np.inf, grid_x[0], epsabs=1e-14, epsrel=1e-11)
    grid_cdf = left + np.concatenate([[0.0], np.cumsum(panels)])

    # bound certified on the scaled law
    fourth_base = _panel_moment(pdf, 4)
    fourth = fourth_base * scale**4 if math.isfinite(fourth_base) else math.inf
    lo, hi, step = CURVATURE_GRID
    grid = np.arange(lo, hi + step / 2, step)
    probe = HeavyTailLaw(alpha, scale, z, math.inf, grid_x, grid_cdf)
    curv_sup = float(np.max(np.abs(probe.curvature(grid))))
    bound = max(curv_sup, fourth) if math.isfinite(fourth) else curv_sup
    return HeavyTailLaw(alpha, scale, z, bound, grid_x, grid_cdf)


def tabulated(xs, density) -> TabulatedLaw:
    return TabulatedLaw(np.asarray(xs), np.asarray(density))


def load_tabulated(path) -> TabulatedLaw:
    """Load a law from a two-column text file: x and density per line."""
    data = np.loadtxt(path)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ContractError(f"{path} must have exactly two columns (x, density)")
    return tabulated(data[:, 0], data[:, 1])


def _panel_moment(pdf, power: int, r0: float = 1.0, max_doublings: int = 120) -> float:
    """integral of x^power pdf(x) dx with doubling panels and divergence detection.

    Returns inf when the panel contributions grow with the cutoff instead of
    vanishing, which is how a divergent moment shows up under doubling.
    """

    def f(x: float) -> float:
        return x**power * pdf(x)

    with warnings.catch_warnings():
        # comparisons against panel integrals all carry >=1e-6 cushions, so
        # roundoff-limited accuracy on awkward panels is acceptable
        warnings.simplefilter("ignore", IntegrationWarning)
        total, _ = quad(f, -r0, r0, epsabs=1e-14, epsrel=1e-11, limit=200)
        prev = math.inf
        growth = 0
        r = r0
        for _ in range(max_doublings):
            right, _ = quad(f, r, 2 * r, epsabs=1e-14, epsrel=1e-11, limit=200)
            left, _ = quad(f, -2 * r, -r, epsabs=1e-14, epsrel=1e-11, limit=200)
            inc = right + left
            total += inc
            if abs(inc) <= 1e-11 * max(1.0, abs(total)):
                return total
            if abs(inc) >= 0.99 * abs(prev):
                growth += 1
                if growth >= 3:
                    return math.inf
            else:
                growth = 0
            prev = inc
            r *= 2.0
    return total


# ----------------------------------------------------------------- verification


@dataclass
class RegularityReport:
    """Evidence that a law satisfies its certified regularity bound."""

    bound: float
    mean: float
    mean_stderr: float
    second_moment: float
    second_stderr: float
    fourth_moment: float
    fourth_stderr: float
    mean_quad: float
    second_quad: float
    fourth_quad: float
    score_mean: float
    score_mean_stderr: float
    score_moment2: float
    score_moment2_stderr: float
    score_moment4: float
    score_moment4_stderr: float
    sup_log_density_curvature: float
    samples: int
    passed: bool
    failures: tuple[str, ...]


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def verify_regularity(
    law: RegularLaw,
    samples: int = 100_000,
    rng: np.random.Generator | None = None,
    grid: tuple[float, float, float] = CURVATURE_GRID,
) -> RegularityReport:
    """Check the law's moment and curvature certificates.

    Monte Carlo estimates come with 3-sigma bands; the mean, second, and
    fourth moments are additionally computed by adaptive quadrature with
    divergence detection, so a law whose fourth moment does not exist fails
    deterministically no matter how the sampler truncates its tails.
    """
    if samples < 10_000:
        raise ContractError("verify_regularity needs at least 10^4 samples")
    if rng is None:
        rng = np.random.default_rng(0)
    m = law.regularity_bound

    x = law.sample(rng, samples)
    s = np.asarray(law.score(x), dtype=float)
    mean, mean_se = _mean_stderr(x)
    second, second_se = _mean_stderr(x**2)
    fourth, fourth_se = _mean_stderr(x**4)
    s_mean, s_mean_se = _mean_stderr(s)
    s2, s2_se = _mean_stderr(s**2)
    s4, s4_se = _mean_stderr(s**4)

    def pdf(t: float) -> float:
        out = float(np.exp(law.log_density(t)))
        return out if math.isfinite(out) else 0.0

    mean_quad = _panel_moment(pdf, 1)
    second_quad = _panel_moment(pdf, 2)
    fourth_quad = _panel_moment(pdf, 4)

    lo, hi, step = grid
    points = np.arange(lo, hi + step / 2, step)
    curv = np.asarray(law.curvature(points), dtype=float)
    curv_sup = float(np.max(np.abs(curv[np.isfinite(curv)])))

    failures = []
    if not (abs(mean) <= 3 * mean_se and abs(mean_quad) <= 1e-6):
        failures.append("mean")
    if not (second <= 1.0 + 3 * second_se and second_quad <= 1.0 + 1e-6):
        failures.append("second_moment")
    if not (fourth <= m + 3 * fourth_se and fourth_quad <= m * (1 + 1e-6)):
        failures.append("fourth_moment")
    if not curv_sup <= m + 1e-9:
        failures.append("curvature")
    if not abs(s_mean) <= 3 * s_mean_se:
        failures.append("score_mean")
    if not s2 <= m + 3 * s2_se:
        failures.append("score_moment2")
    if not s4 <= 3 * m**2 + 3 * s4_se:
        failures.append("score_moment4")

    return RegularityReport(
        bound=m,
        mean=mean,
        mean_stderr=mean_se,
        second_moment=second,
        second_stderr=second_se,
        fourth_moment=fourth,
        fourth_stderr=fourth_se,
        mean_quad=mean_quad,
        second_quad=second_quad,
        fourth_quad=fourth_quad,
        score_mean=s_mean,
        score_mean_stderr=s_mean_se,
        score_moment2=s2,
        score_moment2_stderr=s2_se,
        score_moment4=s4,
        score_moment4_stderr=s4_se,
        sup_log_density_curvature=curv_sup,
        samples=samples,
        passed=not failures,
        failures=tuple(failures),
    )


# ----------------------------------------------------------------- matrix score


def score_matrix(a, laws) -> np.ndarray:
    """Score of a symmetric matrix under independent entry laws, scaled by 1/W.

    The entries of sqrt(W) * A are drawn from the given laws (a single law,
    or a (diagonal, off-diagonal) pair).  Under the trace inner product the
    gradient of the log joint density has diagonal entries
    (1/W) d/da log phi(a_ii) and off-diagonal entries (1/(2W)) d/da log
    phi(a_ik), which in law coordinates is score(sqrt(W) a)/sqrt(W) on the
    diagonal and half that off it.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"score_matrix needs a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if float(np.max(np.abs(a - a.T))) > 1e-10 * scale:
        raise ContractError("score_matrix needs a symmetric matrix")
    if isinstance(laws, tuple):
        diag_law, off_law = laws
    else:
        diag_law = off_law = laws
    w = a.shape[0]
    root_w = math.sqrt(w)
    f = np.asarray(off_law.score(root_w * a), dtype=float) / (2.0 * root_w)
    diag_scores = np.asarray(diag_law.score(root_w * np.diag(a)), dtype=float)
    np.fill_diagonal(f, diag_scores / root_w)
    return f
