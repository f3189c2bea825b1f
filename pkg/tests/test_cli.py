import copy
import json
from pathlib import Path

import numpy as np
import pytest

from tsparametrix.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load(name):
    return json.loads((CONFIGS / name).read_text())


def small_cauchy(tmp_path):
    cfg = load("cauchy_benchmark.json")
    cfg["experiment"]["simulation"]["n_paths"] = 50_000
    cfg["experiment"]["grid"] = {"half_width": 64.0, "n_points": 2048}
    path = tmp_path / "cauchy.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.mark.parametrize("name", ["cauchy_benchmark.json", "holder_series.json", "relativistic.json"])
def test_shipped_configs_validate(tmp_path, name):
    assert main(["--config", str(CONFIGS / name), "--stage", "validate", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "assumptions.json").read_text())
    assert report


def test_failed_assumption_exit_code(tmp_path):
    code = main(["--config", str(CONFIGS / "invalid_drift.json"), "--out", str(tmp_path)])
    assert code == 2
    err = json.loads((tmp_path / "error.json").read_text())
    assert set(err) == {"stage", "code", "message", "context"}
    assert err["code"] == 2 and err["stage"] == "validate"
    assert err["context"]["failures"] == ["H3"]


def test_schema_violation_exit_code(tmp_path):
    cfg = load("cauchy_benchmark.json")
    cfg["model"]["flavour"] = "H1a"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["stage"] == "config"


def test_all_stages_and_idempotence(tmp_path):
    cfg = small_cauchy(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
    a, b = (json.loads((o / "manifest.json").read_text()) for o in outs)
    assert a["reports"] == b["reports"]
    assert a["reports"]["compare"]["passed"]
    for name in ("ensemble.bin", "histogram.csv", "zscores.csv", "series/partial_sum.csv", "exponent.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    assert not (outs[0] / "error.json").exists()


def test_seed_override_changes_the_ensemble(tmp_path):
    cfg = small_cauchy(tmp_path)
    main(["--config", str(cfg), "--stage", "simulate", "--out", str(tmp_path / "s1")])
    main(["--config", str(cfg), "--stage", "simulate", "--seed", "7", "--out", str(tmp_path / "s2")])
    m2 = json.loads((tmp_path / "s2" / "manifest.json").read_text())
    assert m2["reports"]["simulate"]["seed"] == 7
    assert (tmp_path / "s1" / "ensemble.bin").read_bytes() != (tmp_path / "s2" / "ensemble.bin").read_bytes()


def test_exponent_csv_columns(tmp_path):
    main(["--config", str(CONFIGS / "cauchy_benchmark.json"), "--stage", "exponent", "--out", str(tmp_path)])
    data = np.genfromtxt(tmp_path / "exponent.csv", delimiter=",", names=True)
    np.testing.assert_allclose(data["phi"], -np.abs(data["zeta"]), rtol=1e-12)
    np.testing.assert_allclose(data["phi_quadrature"], data["phi"], rtol=1e-7)


def test_output_directory_from_config(tmp_path, monkeypatch):
    cfg = copy.deepcopy(load("relativistic.json"))
    cfg["output"] = str(tmp_path / "from_cfg")
    path = tmp_path / "r.json"
    path.write_text(json.dumps(cfg))
    assert main(["--config", str(path), "--stage", "exponent"]) == 0
    assert (tmp_path / "from_cfg" / "exponent.csv").exists()
