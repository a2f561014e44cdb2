"""Experiment orchestration: typed flat configs, runners, and artifact files.

A configuration document is a flat JSON object with typed values.  Every run
writes one or more result tables (CSV by default, 17-significant-digit
decimals, a ``config_hash`` column on every row) plus a JSON metadata sidecar
carrying the seed, the config hash, censored counts, and wall time.  Rerunning
the same config and seed reproduces the tables byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from ._pool import map_indexed
from .band import BandEnsemble, sample_hamiltonian, write_dense_text
from .errors import ConfigError
from .estimators import (
    correlator_profile,
    fractional_moment_scan,
    linear_fit,
    localization_length_fit,
    lyapunov_spectrum,
    wegner_tail,
)
from .fluctuation import (
    FluctuationContext,
    PerturbationStep,
    anti_concentration,
    default_delta,
    default_threshold,
    distortion,
    distortion_bound_terms,
    either_or_norm_check,
    jensen_gap,
    rank_one_map,
    step_norms,
)
from .laws import gaussian, heavy_tail, load_tabulated, verify_regularity
from .resolvent import build_chain, verify_identities
from .streams import Stream

EXPERIMENTS = (
    "verify",
    "decay",
    "localize",
    "wegner",
    "lyapunov",
    "fluctuate",
    "mregular",
)

# ------------------------------------------------------------- config schema

_INT = "integer"
_FLOAT = "number"
_STR = "string"
_INT_LIST = "integer list"
_FLOAT_LIST = "number list"
_STR_LIST = "string list"

_REQUIRED = object()

# field -> (type label, default).  A dict default maps experiment -> value,
# with "*" as the fallback, so one flat schema serves every subcommand.
_SCHEMA: dict = {
    "experiment": (_STR, _REQUIRED),
    "seed": (_INT, _REQUIRED),
    "workers": (_INT, 1),
    "out": (_STR, "results"),
    "format": (_STR, "csv"),
    "a_law": (_STR, "gaussian"),
    "b_law": (_STR, "gaussian"),
    "energy": (_FLOAT, 0.3),
    "w_list": (
        _INT_LIST,
        {"verify": [1, 2, 4, 8], "localize": [2, 8], "fluctuate": [8], "*": [2, 4, 8]},
    ),
    "n_list": (_INT_LIST, [1, 2, 8, 32]),
    "n_per_w": (_INT_LIST, [5, 10, 15, 20, 25, 30, 35, 40, 45, 50]),
    "q": (_FLOAT, 0.2),
    "samples": (
        _INT,
        {
            "verify": 13,
            "decay": 2000,
            "localize": 50,
            "wegner": 2000,
            "fluctuate": 1000,
            "mregular": 100_000,
            "*": 100,
        },
    ),
    "n_blocks": (_INT, {"wegner": 16, "fluctuate": 32, "*": 16}),
    "nw": (_INT, 1024),
    "window": (_FLOAT, 0.5),
    "thresholds": (_FLOAT_LIST, [1.0, 10.0, 100.0, 1000.0, 10000.0]),
    "block_pair": (_INT_LIST, [1, 1]),
    "steps": (_INT, 10000),
    "reorth_period": (_INT, 4),
    "delta": (_FLOAT, 0.0),  # 0 selects the per-width default 2/sqrt(W)
    "threshold": (_FLOAT, 0.0),  # 0 selects the law/energy default
    "width": (_FLOAT, 0.0),  # 0 selects the per-width default W^{-1/2}
    "laws": (_STR_LIST, ["gaussian", "heavy_tail:6"]),
    "tolerance": (_FLOAT, 1e-8),
    "export_matrix": (_STR, ""),  # optional dense-text dump of one instance
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully defaulted, validated parameters for one experiment run."""

    experiment: str
    seed: int
    workers: int
    out: str
    format: str
    a_law: str
    b_law: str
    energy: float
    w_list: tuple
    n_list: tuple
    n_per_w: tuple
    q: float
    samples: int
    n_blocks: int
    nw: int
    window: float
    thresholds: tuple
    block_pair: tuple
    steps: int
    reorth_period: int
    delta: float
    threshold: float
    width: float
    laws: tuple
    tolerance: float
    export_matrix: str

    def as_document(self) -> dict:
        """The config as a flat JSON-ready dict; parses back to an equal config."""
        out = {}
        for f in dataclass_fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @property
    def config_hash(self) -> str:
        """Hash of the result-affecting parameters (not out/workers/format)."""
        doc = self.as_document()
        for plumbing in ("out", "workers", "format"):
            doc.pop(plumbing)
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _default_for(name: str, experiment: str):
    default = _SCHEMA[name][1]
    if isinstance(default, dict):
        return default.get(experiment, default["*"])
    return default


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _coerce(name: str, kind: str, value):
    label = f"config key '{name}'"
    if kind == _INT:
        if not _is_int(value):
            raise ConfigError(f"{label} expects an integer, got {type(value).__name__}")
        return value
    if kind == _FLOAT:
        if not (_is_int(value) or isinstance(value, float)):
            raise ConfigError(f"{label} expects a number, got {type(value).__name__}")
        return float(value)
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{label} expects a string, got {type(value).__name__}")
        return value
    if not isinstance(value, list):
        raise ConfigError(f"{label} expects a {kind}, got {type(value).__name__}")
    if kind == _INT_LIST:
        if not all(_is_int(v) for v in value):
            raise ConfigError(f"{label} expects a {kind}")
        return tuple(value)
    if kind == _FLOAT_LIST:
        if not all(_is_int(v) or isinstance(v, float) for v in value):
            raise ConfigError(f"{label} expects a {kind}")
        return tuple(float(v) for v in value)
    if not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{label} expects a {kind}")
    return tuple(value)


_LAW_KINDS = ("gaussian", "heavy_tail", "tabulated")


def law_from_name(spec: str):
    """Build a law from its config string.

    Accepted forms: ``gaussian``, ``heavy_tail:ALPHA`` (tail exponent, e.g.
    ``heavy_tail:6``), and ``tabulated:PATH`` (two-column x/density text file).
    """
    kind, _, arg = spec.partition(":")
    if kind == "gaussian":
        if arg:
            raise ConfigError(f"law 'gaussian' takes no argument, got '{arg}'")
        return gaussian()
    if kind == "heavy_tail":
        try:
            alpha = float(arg)
        except ValueError:
            raise ConfigError(f"law 'heavy_tail' needs a numeric tail exponent, got '{arg}'")
        return heavy_tail(alpha)
    if kind == "tabulated":
        if not arg:
            raise ConfigError("law 'tabulated' needs a file path, e.g. tabulated:law.txt")
        return load_tabulated(arg)
    raise ConfigError(f"unknown law kind '{kind}'; choose one of {', '.join(_LAW_KINDS)}")


def _validate_law_name(name: str, spec: str) -> None:
    kind = spec.partition(":")[0]
    if kind not in _LAW_KINDS:
        raise ConfigError(
            f"config key '{name}': unknown law kind '{kind}'; "
            f"choose one of {', '.join(_LAW_KINDS)}"
        )


def _validate(values: dict) -> None:
    experiment = values["experiment"]

    def positive_list(name):
        seq = values[name]
        if not seq:
            raise ConfigError(f"config key '{name}' must not be empty")
        if any(v < 1 for v in seq):
            raise ConfigError(f"config key '{name}' entries must be at least 1")

    if not 0 <= values["seed"] < 2**64:
        raise ConfigError("config key 'seed' must be a 64-bit nonnegative integer")
    for name in ("workers", "samples", "n_blocks", "nw", "steps", "reorth_period"):
        if values[name] < 1:
            raise ConfigError(f"config key '{name}' must be at least 1")
    if values["format"] not in ("csv", "json"):
        raise ConfigError("config key 'format' must be 'csv' or 'json'")
    for name in ("w_list", "n_list", "n_per_w", "block_pair"):
        positive_list(name)
    if len(values["block_pair"]) != 2:
        raise ConfigError("config key 'block_pair' must hold exactly two block indices")
    if not abs(values["energy"]) < 2.0:
        raise ConfigError("config key 'energy' must lie strictly inside (-2, 2)")
    if not values["tolerance"] > 0:
        raise ConfigError("config key 'tolerance' must be positive")
    if not values["window"] > 0:
        raise ConfigError("config key 'window' must be positive")
    for name in ("delta", "threshold", "width"):
        if values[name] < 0:
            raise ConfigError(f"config key '{name}' must be nonnegative (0 = automatic)")
    thresholds = values["thresholds"]
    if not thresholds or any(t <= 0 for t in thresholds):
        raise ConfigError("config key 'thresholds' must be a nonempty positive grid")
    if not values["laws"]:
        raise ConfigError("config key 'laws' must not be empty")
    _validate_law_name("a_law", values["a_law"])
    _validate_law_name("b_law", values["b_law"])
    for spec in values["laws"]:
        _validate_law_name("laws", spec)

    if experiment == "decay":
        if not 0.0 < values["q"] <= 0.2:
            raise ConfigError(f"config key 'q' must lie in the range q ∈ (0, 1/5], got {values['q']}")
        if len(values["n_per_w"]) < 3 or any(
            a >= b for a, b in zip(values["n_per_w"], values["n_per_w"][1:])
        ):
            raise ConfigError(
                "config key 'n_per_w' must list at least 3 strictly increasing lengths"
            )
    if experiment == "localize" and any(values["nw"] < w for w in values["w_list"]):
        raise ConfigError("config key 'nw' must be at least every entry of 'w_list'")
    if experiment == "wegner" and any(j > values["n_blocks"] for j in values["block_pair"]):
        raise ConfigError("config key 'block_pair' indices must be at most 'n_blocks'")
    if experiment == "fluctuate":
        if values["n_blocks"] < 2:
            raise ConfigError("config key 'n_blocks' must be at least 2 for fluctuate")
        if values["samples"] < 100:
            raise ConfigError(
                "config key 'samples' must be at least 100 for fluctuate "
                "(the anti-concentration estimate needs that many chains)"
            )
    if experiment == "mregular" and values["samples"] < 10_000:
        raise ConfigError("config key 'samples' must be at least 10000 for mregular")


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat JSON config document, fill defaults, and validate.

    Unknown keys and type mismatches are rejected by name; the result
    round-trips through ``as_document`` and back.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object of key/value pairs")
    for key in doc:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")

    if "experiment" not in doc:
        raise ConfigError("missing required config key 'experiment'")
    experiment = _coerce("experiment", _STR, doc["experiment"])
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"config key 'experiment' must be one of {', '.join(EXPERIMENTS)}; got '{experiment}'"
        )
    if "seed" not in doc:
        raise ConfigError("missing required config key 'seed'")

    values = {"experiment": experiment}
    for name, (kind, _) in _SCHEMA.items():
        if name == "experiment":
            continue
        raw = doc[name] if name in doc else _default_for(name, experiment)
        values[name] = _coerce(name, kind, raw)
    _validate(values)
    return ExperimentConfig(**values)


# ----------------------------------------------------------- table formatting


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_table(path: Path, columns, rows, config_hash: str, fmt: str) -> None:
    columns = [*columns, "config_hash"]
    rows = [[*row, config_hash] for row in rows]
    if fmt == "csv":
        lines = [",".join(columns)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
    else:
        doc = {
            "columns": columns,
            "rows": [[_fmt(v) for v in row] for row in rows],
            "config_hash": config_hash,
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ------------------------------------------------------------------- runners


def _ensemble(config: ExperimentConfig, w: int, n: int) -> BandEnsemble:
    return BandEnsemble(
        n_blocks=n,
        block_size=w,
        energy=config.energy,
        a_law=law_from_name(config.a_law),
        b_law=law_from_name(config.b_law),
    )


def _unit_direction(w: int, stream: Stream) -> np.ndarray:
    if w == 1:
        return np.ones(1)
    v = stream.generator().standard_normal(w)
    return v / np.linalg.norm(v)


def _verify_instance(args):
    """Residuals of every exact identity on one sampled instance."""
    config, w, n, cell, index = args
    stream = Stream.from_seed(config.seed).child(cell, index)
    ens = _ensemble(config, w, n)
    ham = sample_hamiltonian(ens, stream.child(0))
    report = verify_identities(ham, config.energy)

    delta = default_delta(w)
    v = _unit_direction(w, stream.child(1))
    step = PerturbationStep(delta=delta, direction=v)
    b = ham.off_blocks[0] if ham.off_blocks else sample_hamiltonian(
        _ensemble(config, w, 2), stream.child(2)
    ).off_blocks[0]

    basis_images = np.empty((w * w, w * w))
    for k in range(w * w):
        e = np.zeros((w, w))
        e.flat[k] = 1.0
        basis_images[:, k] = rank_one_map(e, step).ravel()
    det = np.linalg.det(basis_images)
    det_residual = abs(det / (1.0 + delta) ** w - 1.0)

    second = PerturbationStep(delta=-0.25, direction=v)
    combined = PerturbationStep(
        delta=step.delta + second.delta + step.delta * second.delta, direction=v
    )
    two_steps = rank_one_map(rank_one_map(b, step), second)
    one_step = rank_one_map(b, combined)
    scale = max(1.0, float(np.abs(one_step).max()))
    compose_residual = float(np.abs(two_steps - one_step).max()) / scale

    return {
        "w": w,
        "n_blocks": n,
        "sample": index,
        "product_residual": report.product_residual,
        "pivot_residual": report.pivot_residual,
        "log_residual": report.log_residual,
        "split_residual": report.split_residual,
        "det_residual": det_residual,
        "compose_residual": compose_residual,
        "censored": report.censored,
    }


_RESIDUAL_COLUMNS = (
    "product_residual",
    "pivot_residual",
    "log_residual",
    "split_residual",
    "det_residual",
    "compose_residual",
)


def _run_verify(config: ExperimentConfig):
    jobs = []
    for cell, (w, n) in enumerate(
        (w, n) for w in config.w_list for n in config.n_list
    ):
        jobs += [(config, w, n, cell, i) for i in range(config.samples)]
    rows = map_indexed(_verify_instance, jobs, config.workers)

    table = [
        [r["w"], r["n_blocks"], r["sample"]]
        + [r[c] for c in _RESIDUAL_COLUMNS]
        + [r["censored"]]
        for r in rows
    ]
    summary = []
    failures = 0
    censored_total = 0
    for w in config.w_list:
        for n in config.n_list:
            cell_rows = [r for r in rows if r["w"] == w and r["n_blocks"] == n]
            live = [r for r in cell_rows if not r["censored"]]
            censored = len(cell_rows) - len(live)
            censored_total += censored
            worst = {
                c: max((r[c] for r in live), default=math.nan) for c in _RESIDUAL_COLUMNS
            }
            passed = live and all(worst[c] <= config.tolerance for c in _RESIDUAL_COLUMNS)
            if not passed:
                failures += 1
            summary.append(
                [w, n, len(cell_rows), censored]
                + [worst[c] for c in _RESIDUAL_COLUMNS]
                + [bool(passed)]
            )

    if config.export_matrix:
        w, n = config.w_list[0], config.n_list[0]
        ham = sample_hamiltonian(
            _ensemble(config, w, n), Stream.from_seed(config.seed).child(0, 0, 0)
        )
        write_dense_text(ham, Path(config.out) / config.export_matrix)

    exit_status = 0
    total = len(rows)
    if failures or (total and censored_total / total >= 0.01):
        exit_status = 1
    tables = [
        (
            "verify_residuals",
            ("w", "n_blocks", "sample", *_RESIDUAL_COLUMNS, "censored"),
            table,
        ),
        (
            "verify_summary",
            ("w", "n_blocks", "instances", "censored", *(f"max_{c}" for c in _RESIDUAL_COLUMNS), "passed"),
            summary,
        ),
    ]
    meta = {"censored": {"instances": censored_total}, "failed_cells": failures}
    return tables, meta, exit_status


def _run_decay(config: ExperimentConfig):
    stream = Stream.from_seed(config.seed)
    members = []
    for w in config.w_list:
        lengths = [r * w for r in config.n_per_w]
        members.append((_ensemble(config, w, lengths[-1]), lengths))
    scan = fractional_moment_scan(
        members, config.q, config.samples, stream, workers=config.workers
    )
    moment_rows = [
        [r.block_size, r.n_blocks, scan.q, r.log_root_moment, r.moment, r.stderr, r.samples, r.censored]
        for r in scan.rows
    ]
    fit_rows = []
    for w in config.w_list:
        fit = scan.fits[w]
        fit_rows.append(
            [
                w,
                scan.q,
                fit.slope,
                fit.intercept,
                fit.stderr,
                fit.r_squared,
                fit.points_used,
                abs(fit.slope) * w,
                fit.slope / fit.stderr,
            ]
        )
    censored = {str(r.block_size): r.censored for r in scan.rows}
    tables = [
        (
            "decay_moments",
            ("w", "n_blocks", "q", "log_root_moment", "moment", "stderr", "samples", "censored"),
            moment_rows,
        ),
        (
            "decay_fits",
            ("w", "q", "slope", "intercept", "stderr", "r_squared", "points_used", "abs_slope_times_w", "slope_z"),
            fit_rows,
        ),
    ]
    return tables, {"censored": censored}, 0


def _run_localize(config: ExperimentConfig):
    stream = Stream.from_seed(config.seed)
    profile_rows = []
    fit_rows = []
    for k, w in enumerate(config.w_list):
        n = config.nw // w
        ens = _ensemble(config, w, n)
        prof = correlator_profile(
            ens, config.window, config.samples, stream.child(k), workers=config.workers
        )
        loc = localization_length_fit(prof.profile, w)
        profile_rows += [
            [w, int(d), float(p)] for d, p in zip(prof.distances, prof.profile)
        ]
        fit_rows.append(
            [
                w,
                n,
                loc.length,
                loc.fit.slope,
                loc.fit.stderr,
                loc.fit.r_squared,
                loc.fit.points_used,
                prof.window_count_mean,
                prof.samples,
            ]
        )
    tables = [
        ("localize_profile", ("w", "distance", "mean_correlator"), profile_rows),
        (
            "localize_fits",
            ("w", "n_blocks", "length", "slope", "stderr", "r_squared", "points_used", "window_count_mean", "samples"),
            fit_rows,
        ),
    ]
    return tables, {"censored": {}}, 0


def _run_wegner(config: ExperimentConfig):
    stream = Stream.from_seed(config.seed)
    tail_rows = []
    summary_rows = []
    censored = {}
    pair = tuple(config.block_pair)
    for k, w in enumerate(config.w_list):
        ens = _ensemble(config, w, config.n_blocks)
        report = wegner_tail(
            ens, pair, config.thresholds, config.samples, stream.child(k), workers=config.workers
        )
        for row in report.rows:
            scaled = row.threshold * row.probability / w**1.5
            tail_rows.append(
                [w, config.n_blocks, row.threshold, row.probability, row.stderr, scaled]
            )
        summary_rows.append(
            [w, config.n_blocks, report.sup_scaled, report.sup_scaled / w**1.5, report.samples, report.censored]
        )
        censored[str(w)] = report.censored
    tables = [
        (
            "wegner_tails",
            ("w", "n_blocks", "threshold", "probability", "stderr", "scaled_mass"),
            tail_rows,
        ),
        (
            "wegner_summary",
            ("w", "n_blocks", "sup_threshold_mass", "sup_scaled_mass", "samples", "censored"),
            summary_rows,
        ),
    ]
    return tables, {"censored": censored}, 0


def _run_lyapunov(config: ExperimentConfig):
    stream = Stream.from_seed(config.seed)
    exponent_rows = []
    summary_rows = []
    censored = {}
    for k, w in enumerate(config.w_list):
        ens = _ensemble(config, w, 2)
        report = lyapunov_spectrum(
            ens, config.steps, stream.child(k), reorth_period=config.reorth_period
        )
        for i, (g, se) in enumerate(zip(report.exponents, report.stderr)):
            exponent_rows.append([w, i, float(g), float(se)])
        pairing = float(np.abs(report.exponents + report.exponents[::-1]).max())
        gap = float(report.exponents[w - 1])
        gap_se = float(report.stderr[w - 1])
        summary_rows.append(
            [
                w,
                report.steps,
                report.reorth_period,
                float(report.exponents.sum()),
                float(np.sqrt((report.stderr**2).sum())),
                pairing,
                gap,
                gap_se,
                report.det_error_max,
                report.censored,
            ]
        )
        censored[str(w)] = report.censored
    tables = [
        ("lyapunov_exponents", ("w", "index", "exponent", "stderr"), exponent_rows),
        (
            "lyapunov_summary",
            (
                "w",
                "steps",
                "reorth_period",
                "sum_exponents",
                "sum_stderr",
                "pairing_gap",
                "min_positive_exponent",
                "min_positive_stderr",
                "det_error_max",
                "censored",
            ),
            summary_rows,
        ),
    ]
    return tables, {"censored": censored}, 0


def _fluctuate_chain(args):
    """Per-chain middle-position statistics for the fluctuation report."""
    config, w, chain_index = args
    stream = Stream.from_seed(config.seed).child(w, chain_index)
    n = config.n_blocks
    ens = _ensemble(config, w, n)
    ham = sample_hamiltonian(ens, stream.child(0))
    chain = build_chain(ham, config.energy)
    if chain.censored:
        return {"censored": True}

    mid = n // 2 - 1  # 0-based index of block N/2
    delta = config.delta or default_delta(w)
    threshold = config.threshold or default_threshold(ens.a_law, config.energy)
    norms = step_norms(chain, ham, ens.a_law)
    either = either_or_norm_check(chain, ham)

    out = {
        "censored": False,
        "alpha_mid": float(chain.log_increments[mid]),
        "step_freq": float(np.mean(norms <= threshold)),
        "checked": either.checked,
        "violations": either.violations,
        "skipped": either.skipped,
        "ratio": None,
    }
    ctx = FluctuationContext(
        chain.pivots[mid], chain.pivots[mid + 1], config.energy, ens.a_law, ens.b_law
    )
    if not ctx.censored:
        step = PerturbationStep(delta=delta, direction=_unit_direction(w, stream.child(1)))
        b = ham.off_blocks[mid]
        terms = distortion_bound_terms(b, step, ctx)
        if terms.scaled_sum > 0:
            out["ratio"] = abs(distortion(b, step, ctx)) / terms.scaled_sum
    return out


def _run_fluctuate(config: ExperimentConfig):
    rows = []
    censored = {}
    for w in config.w_list:
        results = map_indexed(
            _fluctuate_chain,
            [(config, w, i) for i in range(config.samples)],
            config.workers,
        )
        live = [r for r in results if not r["censored"]]
        n_censored = len(results) - len(live)
        censored[str(w)] = n_censored
        if not live:
            continue
        n = config.n_blocks
        delta = config.delta or default_delta(w)
        width = config.width or w**-0.5
        threshold = config.threshold or default_threshold(
            law_from_name(config.a_law), config.energy
        )

        alphas = np.array([r["alpha_mid"] for r in live])
        conc = anti_concentration(alphas, width)
        conc_se = math.sqrt(max(conc * (1.0 - conc), 0.0) / alphas.size)
        gap = jensen_gap(alphas, width, conc)

        freqs = np.array([r["step_freq"] for r in live])
        freq_se = float(freqs.std(ddof=1) / math.sqrt(freqs.size)) if freqs.size > 1 else 0.0

        checked = sum(r["checked"] for r in live)
        violations = sum(r["violations"] for r in live)
        rate = violations / checked if checked else 0.0
        rate_se = math.sqrt(max(rate * (1.0 - rate), 0.0) / checked) if checked else 0.0

        ratios = [r["ratio"] for r in live if r["ratio"] is not None]
        ratio_censored = n_censored + (len(live) - len(ratios))

        def row(kind, t, statistic, stderr, cens):
            return [kind, w, n, delta, t, statistic, stderr, cens]

        rows.append(row("anti_concentration", width, conc, conc_se, n_censored))
        rows.append(row("jensen_gap", width, gap.gap, 0.0, n_censored))
        rows.append(row("jensen_floor", width, gap.bound, 0.0, n_censored))
        rows.append(row("bounded_step_frequency", threshold, float(freqs.mean()), freq_se, n_censored))
        rows.append(row("either_or_violation_rate", threshold, rate, rate_se, n_censored))
        if ratios:
            rows.append(row("distortion_ratio_max", 0.0, float(max(ratios)), 0.0, ratio_censored))
    tables = [
        (
            "fluctuate_report",
            ("kind", "w", "n_blocks", "delta", "t", "statistic", "stderr", "censored_count"),
            rows,
        )
    ]
    return tables, {"censored": censored}, 0


def _run_mregular(config: ExperimentConfig):
    stream = Stream.from_seed(config.seed)
    rows = []
    all_passed = True
    for k, spec in enumerate(config.laws):
        law = law_from_name(spec)
        report = verify_regularity(
            law, samples=config.samples, rng=stream.child(k).generator()
        )
        all_passed = all_passed and report.passed
        rows.append(
            [
                spec,
                bool(report.passed),
                report.bound,
                report.mean,
                report.mean_stderr,
                report.second_moment,
                report.second_quad,
                report.fourth_moment,
                report.fourth_quad,
                report.score_mean,
                report.score_moment2,
                report.score_moment4,
                report.sup_log_density_curvature,
                report.samples,
                ";".join(report.failures),
            ]
        )
    tables = [
        (
            "mregular_report",
            (
                "law",
                "passed",
                "bound",
                "mean",
                "mean_stderr",
                "second_moment",
                "second_quad",
                "fourth_moment",
                "fourth_quad",
                "score_mean",
                "score_moment2",
                "score_moment4",
                "curvature_sup",
                "samples",
                "failures",
            ),
            rows,
        )
    ]
    return tables, {"censored": {}}, 0 if all_passed else 1


_RUNNERS = {
    "verify": _run_verify,
    "decay": _run_decay,
    "localize": _run_localize,
    "wegner": _run_wegner,
    "lyapunov": _run_lyapunov,
    "fluctuate": _run_fluctuate,
    "mregular": _run_mregular,
}


def run(config: ExperimentConfig) -> int:
    """Run one experiment: write its tables and metadata sidecar, return exit status."""
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    tables, meta, exit_status = _RUNNERS[config.experiment](config)

    ext = "csv" if config.format == "csv" else "json"
    written = []
    for name, columns, rows in tables:
        path = out_dir / f"{name}.{ext}"
        _write_table(path, columns, rows, config.config_hash, config.format)
        written.append(path.name)

    sidecar = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "config": config.as_document(),
        "tables": written,
        "exit_status": exit_status,
        "wall_time_seconds": time.perf_counter() - started,
        **meta,
    }
    (out_dir / f"{config.experiment}_meta.json").write_text(
        json.dumps(sidecar, indent=1, sort_keys=True) + "\n"
    )
    return exit_status
