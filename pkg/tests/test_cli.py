from __future__ import annotations

import csv
import hashlib
import json

import pytest

from interlace_lab.cli import main as cli_main
from interlace_lab.cli.config import KINDS, ConfigError, parse_config, validate
from interlace_lab.green_gauge.potential import EquilibriumError


def write(tmp_path, body, name="cfg.json"):
    path = tmp_path / name
    path.write_text(body if isinstance(body, str) else json.dumps(body))
    return path


def test_defaults_are_filled_for_every_kind():
    for kind in KINDS:
        cfg = validate({"kind": kind})
        assert cfg.kind == kind and cfg["d"] == 3 and cfg["threads"] >= 1


def test_all_violations_are_reported():
    with pytest.raises(ConfigError) as exc:
        validate({"kind": "laplace-threeway", "N": 0, "samples": 1, "bogus": 1, "seed": -4})
    msgs = " ".join(exc.value.violations)
    for fragment in ("N must be", "samples must be", "unknown key 'bogus'", "seed must be"):
        assert fragment in msgs


def test_geometry_violation_names_the_constraint():
    with pytest.raises(ConfigError, match="more than delta apart"):
        validate({"kind": "disconnection-frequency", "box": {"lo": [-0.8] * 3, "hi": [0.8] * 3}})


def test_unknown_kind_and_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="kind must be one of"):
        validate({"kind": "nope"})
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config(write(tmp_path, '{"kind": "capacity-scan", "seed": 1, "seed": 2}'))
    with pytest.raises(ConfigError, match="malformed JSON"):
        parse_config(write(tmp_path, "{kind"))
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.json")


def test_exit_code_for_invalid_config(tmp_path, capsys):
    path = write(tmp_path, {"kind": "tilted-entropy", "a": 0.2, "eps": 0.1})
    assert cli_main.main(["run", str(path)]) == cli_main.EXIT_VALIDATION
    assert "a + eps must be at least u" in capsys.readouterr().err


def test_exit_code_for_numerical_failure(tmp_path, monkeypatch, capsys):
    def boom(config):
        raise EquilibriumError("synthetic failure")

    monkeypatch.setattr(cli_main, "run", boom)
    path = write(tmp_path, {"kind": "capacity-scan"})
    assert cli_main.main(["run", str(path)]) == cli_main.EXIT_NUMERICAL
    assert "synthetic failure" in capsys.readouterr().err


def test_run_is_deterministic_across_thread_counts(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "laplace-threeway", "samples": 3000, "seed": 5})
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"out{threads}"
        assert cli_main.main(["run", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        outs.append(out)
    a, b = ((o / "results.csv").read_bytes() for o in outs)
    assert a == b
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["files"]["results.csv"] == hashlib.sha256(a).hexdigest()
    assert manifest["config"]["threads"] == 1 and "gauge_solve" in manifest["timings_s"]
    row = next(csv.DictReader(a.decode().splitlines()))
    assert row["gauge_vs_gamma"] == "true"
    other = tmp_path / "seed6"
    cli_main.main(["run", str(cfg), "--out", str(other), "--seed", "6"])
    assert (other / "results.csv").read_bytes() != a


SMOKE = {
    "capacity-scan": {"N_ladder": [2, 3]},
    "rate-function": {},
    "insulation": {"N_ladder": [3], "delta_values": [0.4]},
    "tilted-entropy": {"samples": 300},
    "subadditivity": {"samples": 300, "N": 2},
    "disconnection-frequency": {"N_ladder": [3], "samples": 10},
}


@pytest.mark.parametrize("kind", sorted(SMOKE))
def test_every_experiment_kind_runs(tmp_path, kind, capsys):
    cfg = write(tmp_path, {"kind": kind, **SMOKE[kind], "output_dir": str(tmp_path / "res")})
    assert cli_main.main(["run", str(cfg), "--threads", "2"]) == 0
    rows = list(csv.DictReader((tmp_path / "res" / "results.csv").read_text().splitlines()))
    assert rows
    summary = json.loads(capsys.readouterr().out)
    assert "results.csv" in summary["files"]


def test_validate_command_prints_filled_config(tmp_path, capsys):
    path = write(tmp_path, {"kind": "insulation"})
    assert cli_main.main(["validate", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["delta_values"] == [0.4, 0.2, 0.1]


def test_oracle_green(tmp_path):
    out = tmp_path / "green.json"
    assert cli_main.main(["oracle", "green", "--extent", "1", "--check", "--out", str(out)]) == 0
    body = json.loads(out.read_text())
    assert len(body["values"]) == 4
    origin = body["values"][0]
    assert origin["x"] == [0, 0, 0]
    assert origin["g"] == pytest.approx(body["closed_form_origin"], abs=1e-12)
    for rec in body["values"]:
        assert rec["g"] == pytest.approx(rec["fourier"], abs=1e-9)
