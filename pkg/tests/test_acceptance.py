"""Acceptance gate: twelve numbered product-level checks, one test each.

Every test finishes by printing one `[criterion NN] PASS — ...` line (visible
with `pytest -rP` or `-s`); the per-test PASSED/FAILED verdict in `pytest -v`
is the authoritative pass/fail record.  Seeds are fixed so each criterion is
a deterministic replay; tolerances and sample sizes are stated inline.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from bandlab.band import BandEnsemble, assemble_dense, restrict, sample_hamiltonian
from bandlab.estimators import (
    correlator_profile,
    fractional_moment_scan,
    localization_length_fit,
    lyapunov_spectrum,
    wegner_tail,
)
from bandlab.fluctuation import (
    FluctuationContext,
    PerturbationStep,
    anti_concentration,
    default_delta,
    either_or_norm_check,
    log_abs_observable,
    rank_one_map,
    scale_map,
    toy_fluctuation_check,
)
from bandlab.laws import gaussian, heavy_tail
from bandlab.resolvent import build_chain, corner_block_product, pivot_recursion
from bandlab.streams import Stream

GAUSS = gaussian()
ENERGY = 0.3
WORKERS = 4


def ensemble(w: int, n: int) -> BandEnsemble:
    return BandEnsemble(n_blocks=n, block_size=w, energy=ENERGY, a_law=GAUSS, b_law=GAUSS)


def note(line: str) -> None:
    print(line, flush=True)


def unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------- criteria 1+2
# One sweep serves both: 208 gaussian instances over W in {1,2,4,8} and
# N in {1,2,8,32} at E = 0.3, with dense inverses as the oracle.


@pytest.fixture(scope="module")
def identity_sweep():
    started = time.perf_counter()
    product_residuals, pivot_residuals = [], []
    censored = total = 0
    cell = 0
    for w in (1, 2, 4, 8):
        for n in (1, 2, 8, 32):
            ens = ensemble(w, n)
            root = Stream.from_seed(1).child(cell)
            for i in range(13):
                total += 1
                ham = sample_hamiltonian(ens, root.child(i))
                pivots, was_censored, _ = pivot_recursion(ham, ENERGY)
                if was_censored:
                    censored += 1
                    continue
                dense = np.linalg.inv(assemble_dense(ham, shift=ENERGY))
                corner = dense[0:w, (n - 1) * w :]
                product = corner_block_product(pivots, ham.off_blocks)
                product_residuals.append(
                    float(np.linalg.norm(product - corner) / np.linalg.norm(corner))
                )
                worst = 0.0
                for j in range(1, n + 1):
                    lead = np.linalg.inv(assemble_dense(restrict(ham, 1, j), shift=ENERGY))
                    tail = lead[(j - 1) * w :, (j - 1) * w :]
                    inv_pivot = np.linalg.inv(pivots[j - 1])
                    worst = max(
                        worst,
                        float(
                            np.linalg.norm(inv_pivot - tail) / np.linalg.norm(inv_pivot)
                        ),
                    )
                pivot_residuals.append(worst)
            cell += 1
    return {
        "product": product_residuals,
        "pivot": pivot_residuals,
        "censored": censored,
        "total": total,
        "elapsed": time.perf_counter() - started,
    }


def test_01_corner_product_matches_dense_inverse(identity_sweep):
    sweep = identity_sweep
    assert sweep["total"] >= 200
    assert sweep["censored"] / sweep["total"] < 0.01
    worst = max(sweep["product"])
    assert worst <= 1e-8
    assert sweep["elapsed"] < 60.0
    note(
        f"[criterion 01] PASS — {sweep['total']} instances, worst relative "
        f"Frobenius error {worst:.2e}, censored {sweep['censored']}, "
        f"{sweep['elapsed']:.1f}s"
    )


def test_02_pivot_inverse_matches_leading_resolvent_block(identity_sweep):
    worst = max(identity_sweep["pivot"])
    assert worst <= 1e-8
    note(f"[criterion 02] PASS — worst relative pivot-inverse error {worst:.2e}")


# ------------------------------------------------------------------ criterion 3


def test_03_tilt_determinant_closed_form():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for w in (2, 3, 4, 8):
        for delta in (0.5, -0.5, 2.0 / math.sqrt(w)):
            for _ in range(3):
                step = PerturbationStep(delta, unit(rng.standard_normal(w)))
                basis_images = np.empty((w * w, w * w))
                for k in range(w * w):
                    e = np.zeros((w, w))
                    e.flat[k] = 1.0
                    basis_images[:, k] = rank_one_map(e, step).ravel()
                det = float(np.linalg.det(basis_images))
                target = (1.0 + delta) ** w
                worst = max(worst, abs(det - target) / abs(target))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-10
    assert elapsed < 10.0
    note(f"[criterion 03] PASS — worst relative determinant error {worst:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------------------ criterion 4


def test_04_gaussian_second_difference_closed_form():
    started = time.perf_counter()
    rng = np.random.default_rng(4)
    instances = 0
    worst = 0.0
    for w in (2, 4, 8):
        ens = ensemble(w, 3)
        root = Stream.from_seed(40 + w)
        for i in range(34):
            ham = sample_hamiltonian(ens, root.child(i))
            pivots, censored, _ = pivot_recursion(ham, ENERGY)
            if censored:
                continue
            ctx = FluctuationContext(pivots[0], pivots[1], ENERGY, GAUSS, GAUSS)
            if ctx.censored:
                continue
            b = rng.standard_normal((w, w)) / math.sqrt(w)
            delta = default_delta(w)
            step = PerturbationStep(delta, unit(rng.standard_normal(w)))
            down = replace(step, delta=-delta)
            second_diff = (
                ctx.log_density_entry_part(rank_one_map(b, step))
                + ctx.log_density_entry_part(rank_one_map(b, down))
                - 2.0 * ctx.log_density_entry_part(b)
            )
            bv = b @ step.direction
            closed_form = -w * delta**2 * float(bv @ bv)
            worst = max(worst, abs(second_diff - closed_form))
            instances += 1
    elapsed = time.perf_counter() - started
    assert instances >= 100
    assert worst <= 1e-10
    assert elapsed < 10.0
    note(
        f"[criterion 04] PASS — {instances} instances, worst absolute error "
        f"{worst:.2e}, {elapsed:.1f}s"
    )


# ------------------------------------------------------------------ criterion 5


def test_05_corner_moment_decay_rate_scales_with_bandwidth():
    started = time.perf_counter()
    members = [
        (ensemble(2, 100), list(range(10, 101, 10))),
        (ensemble(4, 200), list(range(20, 201, 20))),
        (ensemble(8, 400), list(range(40, 401, 40))),
    ]
    scan = fractional_moment_scan(
        members, q=0.2, samples=2000, stream=Stream.from_seed(505), workers=WORKERS
    )
    fit4 = scan.fits[4]
    z = fit4.slope / fit4.stderr
    assert fit4.slope < 0
    assert z <= -5.0
    products = {w: abs(scan.fits[w].slope) * w for w in (2, 4, 8)}
    spread = max(products.values()) / min(products.values())
    assert spread <= 3.0
    elapsed = time.perf_counter() - started
    assert elapsed < 600.0
    note(
        f"[criterion 05] PASS — W=4 slope {fit4.slope:.4f} (z = {z:.0f}), "
        f"|slope|*W spread factor {spread:.3f}, {elapsed:.0f}s"
    )


# ------------------------------------------------------------------ criterion 6


def test_06_localization_length_grows_with_squared_bandwidth():
    started = time.perf_counter()
    prof2 = correlator_profile(ensemble(2, 512), 0.5, 50, Stream.from_seed(602), workers=WORKERS)
    length2 = localization_length_fit(prof2.profile, 2).length
    prof8 = correlator_profile(ensemble(8, 128), 0.5, 50, Stream.from_seed(608), workers=WORKERS)
    length8 = localization_length_fit(prof8.profile, 8).length
    ratio = length8 / length2
    assert 16.0 / 3.0 <= ratio <= 48.0
    elapsed = time.perf_counter() - started
    assert elapsed < 900.0
    note(
        f"[criterion 06] PASS — lengths {length2:.1f} (W=2) and {length8:.1f} "
        f"(W=8), ratio {ratio:.2f} in [16/3, 48], {elapsed:.0f}s"
    )


# ------------------------------------------------------------------ criterion 7


def test_07_resolvent_tail_mass_bounded_across_bandwidths():
    started = time.perf_counter()
    grid = [1.0, 10.0, 100.0, 1000.0, 10000.0]
    scaled = {}
    for w in (2, 4, 8):
        report = wegner_tail(
            ensemble(w, 16), (1, 1), grid, 2000, Stream.from_seed(700 + w), workers=WORKERS
        )
        probabilities = [row.probability for row in report.rows]
        assert probabilities == sorted(probabilities, reverse=True)
        scaled[w] = report.sup_scaled / w**1.5
    worst = max(scaled.values())
    assert worst <= 5.0
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    note(
        "[criterion 07] PASS — monotone tails; scaled tail mass "
        + ", ".join(f"W={w}: {scaled[w]:.3f}" for w in (2, 4, 8))
        + f" all <= 5.0, {elapsed:.0f}s"
    )


# ------------------------------------------------------------------ criterion 8


def test_08_transfer_spectrum_symmetric_with_positive_gap():
    started = time.perf_counter()
    lines = []
    for w in (2, 4, 8):
        report = lyapunov_spectrum(ensemble(w, 4), 10_000, Stream.from_seed(800 + w))
        g, se = report.exponents, report.stderr
        total = float(g.sum())
        assert abs(total) <= 3.0 * math.sqrt(float((se**2).sum()))
        pairing = float(np.abs(g + g[::-1]).max())
        assert pairing <= 5.0 * float(se.max())
        gap, gap_se = float(g[w - 1]), float(se[w - 1])
        assert gap > 0
        assert gap / gap_se >= 3.0
        lines.append(f"W={w}: gap {gap:.3f} (z = {gap / gap_se:.0f}), pairing {pairing:.1e}")
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    note(f"[criterion 08] PASS — {'; '.join(lines)}, {elapsed:.0f}s")


# ------------------------------------------------------------------ criterion 9


def test_09_score_moment_certificates():
    started = time.perf_counter()
    lines = []
    for k, (law, analytic) in enumerate(((GAUSS, (1.0, 3.0)), (heavy_tail(6.0), None))):
        rng = Stream.from_seed(9).child(k).generator()
        x = law.sample(rng, 100_000)
        s = law.score(x)
        n = s.size
        mean, mean_se = float(s.mean()), float(s.std(ddof=1) / math.sqrt(n))
        assert abs(mean) <= 3.0 * mean_se
        s2, s4 = s**2, s**4
        m2, se2 = float(s2.mean()), float(s2.std(ddof=1) / math.sqrt(n))
        m4, se4 = float(s4.mean()), float(s4.std(ddof=1) / math.sqrt(n))
        bound = law.regularity_bound
        assert m2 <= bound + 3.0 * se2
        assert m4 <= 3.0 * bound**2 + 3.0 * se4
        if analytic is not None:
            assert abs(m2 - analytic[0]) <= 3.0 * se2
            assert abs(m4 - analytic[1]) <= 3.0 * se4
        lines.append(f"{type(law).__name__}: Es^2 {m2:.3f} <= {bound:.2f}, Es^4 {m4:.3f}")
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    note(f"[criterion 09] PASS — {'; '.join(lines)}, {elapsed:.0f}s")


# ----------------------------------------------------------------- criterion 10


def test_10_either_or_norm_dichotomy_holds_on_sampled_chains():
    started = time.perf_counter()
    cells = ((2, 64), (4, 16), (8, 32), (16, 64))
    chains = violations = checked = skipped = censored = 0
    for k, (w, n) in enumerate(cells):
        ens = ensemble(w, n)
        root = Stream.from_seed(10).child(k)
        for i in range(250):
            chains += 1
            ham = sample_hamiltonian(ens, root.child(i))
            chain = build_chain(ham, ENERGY)
            if chain.censored:
                censored += 1
                continue
            report = either_or_norm_check(chain, ham)
            violations += report.violations
            checked += report.checked
            skipped += report.skipped
    elapsed = time.perf_counter() - started
    assert chains == 1000
    assert checked > 0
    assert violations == 0
    assert elapsed < 120.0
    note(
        f"[criterion 10] PASS — 0 violations over {checked} guarded positions "
        f"({chains} chains, {skipped} positions skipped by the norm guard, "
        f"{censored} chains censored), {elapsed:.0f}s"
    )


# ----------------------------------------------------------------- criterion 11


def test_11_scalar_anti_concentration_quadrature_margin():
    started = time.perf_counter()
    margins = []
    for delta in (0.1, 0.2):
        for t in (0.25, 0.5):
            report = toy_fluctuation_check(
                GAUSS,
                log_abs_observable(),
                scale_map(math.exp(delta)),
                scale_map(math.exp(-delta)),
                delta=delta,
                t=t,
            )
            assert report.passed
            assert report.margin > 0
            margins.append(f"delta={delta}, t={t}: margin {report.margin:.3f}")
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    note(f"[criterion 11] PASS — {'; '.join(margins)}, {elapsed:.1f}s")


# ----------------------------------------------------------------- criterion 12


def test_12_sweep_increment_anti_concentration_bounded():
    started = time.perf_counter()
    ens = ensemble(8, 32)
    root = Stream.from_seed(1212)
    alphas = []
    censored = 0
    for i in range(5000):
        ham = sample_hamiltonian(ens, root.child(i))
        chain = build_chain(ham, ENERGY)
        if chain.censored:
            censored += 1
            continue
        alphas.append(float(chain.log_increments[15]))
    concentration = anti_concentration(np.array(alphas), 8.0**-0.5)
    elapsed = time.perf_counter() - started
    assert concentration <= 0.98
    assert elapsed < 300.0
    note(
        f"[criterion 12] PASS — sliding-window mass {concentration:.4f} <= 0.98 "
        f"over {len(alphas)} chains ({censored} censored), {elapsed:.0f}s"
    )
