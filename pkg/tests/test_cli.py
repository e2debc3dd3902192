import json
import math

import pytest

from crossmoments import cli


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


GAUSS = {"model": {"kind": "gaussian_exp", "params": {"scale": 1.0}}}


def test_geman_converges_exit_zero(tmp_path, capsys):
    cfg = write_config(tmp_path, "g.json", GAUSS)
    assert cli.main(["geman", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "Converges" in out


def test_geman_json_output(tmp_path, capsys):
    cfg = write_config(tmp_path, "g.json", GAUSS)
    assert cli.main(["geman", "--config", cfg, "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["classification"] == "Converges"
    assert payload["sigma2_form"]["alpha"] == pytest.approx(2.0, abs=0.01)
    assert len(payload["table"]) > 10
    assert set(payload["table"][0]) == {"tau", "sigma2", "numerator"}


def test_geman_inconclusive_exit_three(tmp_path):
    cfg = write_config(
        tmp_path,
        "short.json",
        {"model": {"kind": "lacunary_log"}, "geman": {"k_min": 6, "k_max": 9}},
    )
    assert cli.main(["geman", "--config", cfg]) == 3


def test_malformed_config_names_key(tmp_path, capsys):
    cfg = write_config(tmp_path, "bad.json", {**GAUSS, "oops": 1})
    assert cli.main(["geman", "--config", cfg]) == 2
    assert "oops" in capsys.readouterr().err


def test_malformed_nested_key(tmp_path, capsys):
    cfg = write_config(tmp_path, "bad.json", {**GAUSS, "mc": {"replicas": 3}})
    assert cli.main(["geman", "--config", cfg]) == 2
    assert "mc.'replicas'" in capsys.readouterr().err.replace('"', "'")


def test_unparseable_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert cli.main(["geman", "--config", str(path)]) == 2
    assert "malformed JSON" in capsys.readouterr().err


def test_model_and_field_mutually_exclusive(tmp_path):
    cfg = write_config(
        tmp_path, "both.json",
        {**GAUSS, "field": {"profiles": [{"kind": "gaussian", "params": {}}]}},
    )
    assert cli.main(["geman", "--config", cfg]) == 2


def test_moments_1d_report(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "m.json", {**GAUSS, "level": 0.0, "domain": {"T": 1.0}}
    )
    out_dir = tmp_path / "out"
    assert cli.main(["moments", "--config", cfg, "--json", "--out", str(out_dir)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["geman"]["class"] == "Converges"
    assert payload["second_moment"] == pytest.approx(
        payload["second_factorial"] + payload["mean"]
    )
    report = json.loads((out_dir / "report.json").read_text())
    assert report == payload
    trace = (out_dir / "integrand_trace.csv").read_text().splitlines()
    assert trace[0] == "tau,integrand"
    assert len(trace) > 100


def test_moments_divergent_exit_four(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "d.json",
        {"model": {"kind": "lacunary_log"}, "level": 0.0, "domain": {"T": 1.0}},
    )
    out_dir = tmp_path / "outd"
    assert cli.main(["moments", "--config", cfg, "--json", "--out", str(out_dir)]) == 4
    payload = json.loads(capsys.readouterr().out)
    assert payload["second_factorial"] == "inf"
    assert (out_dir / "report.json").exists()


def test_moments_2d_length_always_finite(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "len.json",
        {
            "field": {"profiles": [{"kind": "gaussian", "params": {"scale": 0.5}}],
                      "domain_dim": 2},
            "level": 0.0,
            "domain": {"rect": [1.0, 1.0]},
        },
    )
    assert cli.main(["moments", "--config", cfg, "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert math.isfinite(payload["second_moment"])
    assert payload["inner_mc_se"] > 0


def test_simulate_requires_mc_settings(tmp_path):
    cfg = write_config(
        tmp_path, "s.json", {**GAUSS, "level": 0.0, "domain": {"T": 1.0}}
    )
    assert cli.main(["simulate", "--config", cfg]) == 2


def test_simulate_zero_replicates_config_error(tmp_path):
    cfg = write_config(
        tmp_path, "s.json",
        {**GAUSS, "level": 0.0, "domain": {"T": 1.0},
         "mc": {"replicates": 0, "resolution": 257, "seed": 1}},
    )
    assert cli.main(["simulate", "--config", cfg]) == 2


def test_simulate_byte_identical_reruns(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "s.json",
        {
            "model": {"kind": "sine_cosine", "params": {"w": 2.0}},
            "level": 0.0,
            "domain": {"T": math.pi},
            "mc": {"replicates": 100, "resolution": 513, "seed": 11},
        },
    )
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "ensemble.csv").read_bytes() == (out2 / "ensemble.csv").read_bytes()
    assert (out1 / "aggregate.json").read_bytes() == (out2 / "aggregate.json").read_bytes()
    agg = json.loads((out1 / "aggregate.json").read_text())
    assert agg["mean"] == 2.0  # a.s. two zeros per period
    assert agg["variance"] == 0.0
    capsys.readouterr()


def test_simulate_seed_override_changes_output(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "s.json",
        {**GAUSS, "level": 0.0, "domain": {"T": 1.0},
         "mc": {"replicates": 40, "resolution": 257, "seed": 1}},
    )
    assert cli.main(["simulate", "--config", cfg]) == 0
    first = capsys.readouterr().out
    assert cli.main(["simulate", "--config", cfg, "--seed", "2"]) == 0
    second = capsys.readouterr().out
    assert first != second


def test_validate_filter_runs_subset(capsys):
    assert cli.main(["validate", "--filter", "abs-moment"]) == 0
    out = capsys.readouterr().out
    assert "abs-moment" in out
    assert "PASS" in out
    assert "1d-moments" not in out


def test_validate_unknown_filter(capsys):
    assert cli.main(["validate", "--filter", "zzz-nothing"]) == 2


def test_validate_tampered_tolerances_fail(capsys):
    assert cli.main(["validate", "--filter", "abs-moment", "--tamper-tolerances"]) == 1
    assert "FAIL" in capsys.readouterr().out
