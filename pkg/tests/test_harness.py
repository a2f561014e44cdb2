"""Config parsing, experiment runners, artifact files, and the CLI."""

import json
import math

import numpy as np
import pytest

from bandlab.cli import main
from bandlab.errors import ConfigError
from bandlab.harness import (
    EXPERIMENTS,
    ExperimentConfig,
    law_from_name,
    parse_config,
    run,
)
from bandlab.laws import GaussianLaw, HeavyTailLaw


def make_config(**overrides) -> ExperimentConfig:
    doc = {"experiment": "verify", "seed": 1}
    doc.update(overrides)
    return parse_config(json.dumps(doc))


# ------------------------------------------------------------------- parsing


def test_minimal_document_fills_all_defaults():
    config = make_config()
    assert config.experiment == "verify"
    assert config.seed == 1
    assert config.workers == 1
    assert config.format == "csv"
    assert config.w_list == (1, 2, 4, 8)
    assert config.n_list == (1, 2, 8, 32)
    assert config.samples == 13
    assert config.energy == 0.3
    assert config.a_law == "gaussian"
    assert config.tolerance == 1e-8


def test_defaults_depend_on_experiment():
    decay = make_config(experiment="decay")
    assert decay.w_list == (2, 4, 8)
    assert decay.samples == 2000
    fluct = make_config(experiment="fluctuate", samples=150)
    assert fluct.w_list == (8,)
    assert fluct.n_blocks == 32


def test_round_trips_through_serialization():
    config = make_config(experiment="wegner", seed=99, w_list=[2, 4], samples=17)
    doc = config.as_document()
    again = parse_config(json.dumps(doc))
    assert again == config


def test_integer_list_parsed_as_tuple_of_ints():
    config = make_config(w_list=[2, 4, 8])
    assert config.w_list == (2, 4, 8)
    assert all(isinstance(v, int) for v in config.w_list)


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="frobnicate"):
        make_config(frobnicate=3)


def test_type_mismatch_names_expected_type():
    with pytest.raises(ConfigError, match="integer list"):
        make_config(w_list="2,4")
    with pytest.raises(ConfigError, match="expects an integer"):
        make_config(seed=1.5)
    with pytest.raises(ConfigError, match="expects a number"):
        make_config(energy="big")
    with pytest.raises(ConfigError, match="expects a string"):
        make_config(out=7)


def test_bool_is_not_an_integer():
    with pytest.raises(ConfigError, match="integer"):
        make_config(workers=True)


def test_negative_sample_count_rejected():
    with pytest.raises(ConfigError, match="samples"):
        make_config(samples=-5)


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="experiment"):
        parse_config(json.dumps({"seed": 1}))
    with pytest.raises(ConfigError, match="seed"):
        parse_config(json.dumps({"experiment": "verify"}))


def test_experiment_name_must_be_known():
    with pytest.raises(ConfigError, match="diagonalize"):
        make_config(experiment="diagonalize")


def test_config_must_be_json_object():
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("not json at all {")
    with pytest.raises(ConfigError, match="object"):
        parse_config(json.dumps([1, 2]))


def test_q_range_enforced_for_decay_only():
    assert make_config(q=0.3).q == 0.3  # irrelevant for verify
    with pytest.raises(ConfigError, match=r"\(0, 1/5\]"):
        make_config(experiment="decay", q=0.3)
    with pytest.raises(ConfigError, match=r"\(0, 1/5\]"):
        make_config(experiment="decay", q=0.0)
    assert make_config(experiment="decay", q=0.2).q == 0.2


def test_semantic_validation():
    with pytest.raises(ConfigError, match="energy"):
        make_config(energy=2.5)
    with pytest.raises(ConfigError, match="block_pair"):
        make_config(block_pair=[1, 2, 3])
    with pytest.raises(ConfigError, match="w_list"):
        make_config(w_list=[])
    with pytest.raises(ConfigError, match="thresholds"):
        make_config(thresholds=[1.0, -2.0])
    with pytest.raises(ConfigError, match="format"):
        make_config(format="xml")
    with pytest.raises(ConfigError, match="n_per_w"):
        make_config(experiment="decay", n_per_w=[5, 5, 10])
    with pytest.raises(ConfigError, match="samples"):
        make_config(experiment="fluctuate", samples=99)
    with pytest.raises(ConfigError, match="seed"):
        make_config(seed=-1)


def test_law_names_validated_at_parse_time():
    with pytest.raises(ConfigError, match="lorentz"):
        make_config(a_law="lorentz")
    with pytest.raises(ConfigError, match="laws"):
        make_config(experiment="mregular", laws=["gaussian", "cauchy:1"])


def test_law_from_name():
    assert isinstance(law_from_name("gaussian"), GaussianLaw)
    law = law_from_name("heavy_tail:6")
    assert isinstance(law, HeavyTailLaw)
    assert law.alpha == 6.0
    with pytest.raises(ConfigError, match="gaussian"):
        law_from_name("gaussian:2")
    with pytest.raises(ConfigError, match="heavy_tail"):
        law_from_name("heavy_tail:soft")
    with pytest.raises(ConfigError, match="tabulated"):
        law_from_name("tabulated")


def test_config_hash_tracks_parameters_not_plumbing():
    base = make_config()
    assert base.config_hash != make_config(seed=2).config_hash
    assert base.config_hash != make_config(samples=14).config_hash
    assert base.config_hash == make_config(out="elsewhere").config_hash
    assert base.config_hash == make_config(workers=4).config_hash
    assert base.config_hash == make_config(format="json").config_hash
    assert len(base.config_hash) == 12


# ------------------------------------------------------------------- runners


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def test_run_verify_writes_tables_and_sidecar(tmp_path):
    config = make_config(
        w_list=[1, 2], n_list=[1, 3], samples=2, out=str(tmp_path), workers=1
    )
    assert run(config) == 0
    rows = read_csv(tmp_path / "verify_residuals.csv")
    assert len(rows) == 2 * 2 * 2
    for row in rows:
        assert float(row["product_residual"]) <= 1e-8
        assert float(row["det_residual"]) <= 1e-10
        assert row["config_hash"] == config.config_hash
    summary = read_csv(tmp_path / "verify_summary.csv")
    assert all(r["passed"] == "1" for r in summary)

    meta = json.loads((tmp_path / "verify_meta.json").read_text())
    assert meta["seed"] == 1
    assert meta["config_hash"] == config.config_hash
    assert meta["exit_status"] == 0
    assert "wall_time_seconds" in meta and "censored" in meta
    assert sorted(meta["tables"]) == ["verify_residuals.csv", "verify_summary.csv"]
    assert parse_config(json.dumps(meta["config"])) == config


def test_run_verify_fails_on_impossible_tolerance(tmp_path):
    config = make_config(
        w_list=[4], n_list=[8], samples=2, out=str(tmp_path), tolerance=1e-300
    )
    assert run(config) == 1
    meta = json.loads((tmp_path / "verify_meta.json").read_text())
    assert meta["exit_status"] == 1


def test_verify_can_export_a_dense_instance(tmp_path):
    config = make_config(
        w_list=[3], n_list=[4], samples=1, out=str(tmp_path), export_matrix="instance.txt"
    )
    assert run(config) == 0
    dense = np.loadtxt(tmp_path / "instance.txt")
    assert dense.shape == (12, 12)
    assert np.allclose(dense, dense.T)
    # block tridiagonal: the (1,3) block is identically zero
    assert np.all(dense[0:3, 6:9] == 0.0)


def test_rerun_is_byte_identical_and_worker_independent(tmp_path):
    config = make_config(
        experiment="wegner",
        w_list=[2],
        n_blocks=3,
        samples=20,
        thresholds=[1.0, 10.0],
        out=str(tmp_path / "a"),
    )
    run(config)
    first = (tmp_path / "a" / "wegner_tails.csv").read_bytes()
    run(config)
    assert (tmp_path / "a" / "wegner_tails.csv").read_bytes() == first

    doc = config.as_document()
    doc.update(out=str(tmp_path / "b"), workers=2)
    run(parse_config(json.dumps(doc)))
    assert (tmp_path / "b" / "wegner_tails.csv").read_bytes() == first


def test_floats_are_written_with_17_significant_digits(tmp_path):
    config = make_config(
        experiment="decay",
        w_list=[2],
        n_per_w=[2, 3, 4],
        samples=5,
        out=str(tmp_path),
    )
    assert run(config) == 0
    rows = read_csv(tmp_path / "decay_moments.csv")
    assert rows[0]["q"] == "0.20000000000000001"
    for row in rows:
        value = float(row["log_root_moment"])
        assert float(format(value, ".17g")) == value


def test_json_format_tables(tmp_path):
    config = make_config(
        experiment="lyapunov",
        w_list=[2],
        steps=1000,
        out=str(tmp_path),
        format="json",
    )
    assert run(config) == 0
    doc = json.loads((tmp_path / "lyapunov_exponents.json").read_text())
    assert doc["config_hash"] == config.config_hash
    assert doc["columns"][-1] == "config_hash"
    assert len(doc["rows"]) == 4  # 2W exponents for W = 2


def test_run_decay_fit_direction(tmp_path):
    config = make_config(
        experiment="decay",
        w_list=[2],
        n_per_w=[5, 10, 15, 20],
        samples=40,
        out=str(tmp_path),
    )
    assert run(config) == 0
    fits = read_csv(tmp_path / "decay_fits.csv")
    assert len(fits) == 1
    assert float(fits[0]["slope"]) < 0
    moments = read_csv(tmp_path / "decay_moments.csv")
    assert [int(r["n_blocks"]) for r in moments] == [10, 20, 30, 40]


def test_run_localize_profile_and_fit(tmp_path):
    config = make_config(
        experiment="localize",
        w_list=[2],
        nw=64,
        samples=8,
        out=str(tmp_path),
    )
    assert run(config) == 0
    fits = read_csv(tmp_path / "localize_fits.csv")
    assert float(fits[0]["length"]) > 0
    profile = read_csv(tmp_path / "localize_profile.csv")
    assert len(profile) == 64
    assert float(profile[0]["mean_correlator"]) > float(profile[40]["mean_correlator"])


def test_run_wegner_monotone_rows(tmp_path):
    config = make_config(
        experiment="wegner",
        w_list=[2],
        n_blocks=3,
        samples=40,
        thresholds=[1.0, 10.0, 100.0],
        out=str(tmp_path),
    )
    assert run(config) == 0
    rows = read_csv(tmp_path / "wegner_tails.csv")
    probs = [float(r["probability"]) for r in rows]
    assert probs == sorted(probs, reverse=True)


def test_run_lyapunov_summary_structure(tmp_path):
    config = make_config(
        experiment="lyapunov", w_list=[2], steps=1500, out=str(tmp_path)
    )
    assert run(config) == 0
    summary = read_csv(tmp_path / "lyapunov_summary.csv")[0]
    assert float(summary["min_positive_exponent"]) > 0
    assert abs(float(summary["sum_exponents"])) < 1e-6
    assert float(summary["det_error_max"]) < 1e-9
    exponents = read_csv(tmp_path / "lyapunov_exponents.csv")
    values = [float(r["exponent"]) for r in exponents]
    assert values == sorted(values, reverse=True)


def test_run_fluctuate_report_rows(tmp_path):
    config = make_config(
        experiment="fluctuate",
        w_list=[2],
        n_blocks=4,
        samples=120,
        out=str(tmp_path),
    )
    assert run(config) == 0
    rows = read_csv(tmp_path / "fluctuate_report.csv")
    kinds = {r["kind"] for r in rows}
    assert {
        "anti_concentration",
        "jensen_gap",
        "bounded_step_frequency",
        "either_or_violation_rate",
        "distortion_ratio_max",
    } <= kinds
    by_kind = {r["kind"]: r for r in rows}
    conc = float(by_kind["anti_concentration"]["statistic"])
    assert 0.0 <= conc <= 1.0
    assert float(by_kind["jensen_gap"]["statistic"]) >= 0.0
    assert float(by_kind["either_or_violation_rate"]["statistic"]) == 0.0
    assert float(by_kind["bounded_step_frequency"]["t"]) == pytest.approx(430.0)
    for row in rows:
        assert row["w"] == "2" and row["n_blocks"] == "4"


def test_run_mregular_pass_and_fail(tmp_path):
    ok = make_config(
        experiment="mregular", laws=["gaussian"], samples=10000, out=str(tmp_path / "ok")
    )
    assert run(ok) == 0
    rows = read_csv(tmp_path / "ok" / "mregular_report.csv")
    assert rows[0]["passed"] == "1" and rows[0]["failures"] == ""

    bad = make_config(
        experiment="mregular",
        laws=["heavy_tail:4.5"],
        samples=10000,
        out=str(tmp_path / "bad"),
    )
    assert run(bad) == 1
    rows = read_csv(tmp_path / "bad" / "mregular_report.csv")
    assert rows[0]["passed"] == "0" and rows[0]["failures"] != ""


# ----------------------------------------------------------------------- CLI


def test_cli_verify_small(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"w_list": [1, 2], "n_list": [1, 2], "samples": 2}))
    code = main(["verify", "--config", str(config), "--seed", "3", "--out", str(tmp_path / "r")])
    assert code == 0
    assert (tmp_path / "r" / "verify_residuals.csv").exists()


def test_cli_decay_q_out_of_range_is_usage_error(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"q": 0.3}))
    code = main(["decay", "--config", str(config), "--seed", "5", "--out", str(tmp_path)])
    assert code == 2
    assert "(0, 1/5]" in capsys.readouterr().err


def test_cli_requires_seed(capsys, tmp_path):
    code = main(["verify", "--out", str(tmp_path)])
    assert code == 2
    assert "seed" in capsys.readouterr().err


def test_cli_rejects_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify", "--seed", "1"])
    assert exc.value.code == 2


def test_cli_rejects_experiment_mismatch(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"experiment": "decay", "seed": 1}))
    code = main(["verify", "--config", str(config)])
    assert code == 2
    assert "decay" in capsys.readouterr().err


def test_cli_rejects_unreadable_or_malformed_config(tmp_path, capsys):
    code = main(["verify", "--config", str(tmp_path / "missing.json"), "--seed", "1"])
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    code = main(["verify", "--config", str(bad), "--seed", "1"])
    assert code == 2
    err = capsys.readouterr().err
    assert "object" in err


def test_cli_unknown_key_is_usage_error(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"frobnicate": 1}))
    code = main(["verify", "--config", str(config), "--seed", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "frobnicate" in capsys.readouterr().err


def test_cli_seed_override_changes_results(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(
        json.dumps({"w_list": [2], "n_blocks": 3, "samples": 15, "thresholds": [1.0]})
    )
    base = ["wegner", "--config", str(config)]
    assert main([*base, "--seed", "1", "--out", str(tmp_path / "s1")]) == 0
    assert main([*base, "--seed", "2", "--out", str(tmp_path / "s2")]) == 0
    a = read_csv(tmp_path / "s1" / "wegner_tails.csv")
    b = read_csv(tmp_path / "s2" / "wegner_tails.csv")
    assert a[0]["probability"] != b[0]["probability"] or a[0]["config_hash"] != b[0]["config_hash"]


def test_every_experiment_has_a_cli_subcommand():
    for name in EXPERIMENTS:
        with pytest.raises(SystemExit) as exc:
            main([name, "--help"])
        assert exc.value.code == 0
