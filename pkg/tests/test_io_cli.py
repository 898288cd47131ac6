import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from jacobi_ist import cli, io
from jacobi_ist.direct import SpectralSingularity

from conftest import FIXTURES, scattering

CONFIGS = Path(__file__).parent / "configs"
CONFIG_NAMES = sorted(p.name for p in CONFIGS.glob("*.json"))


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_schema_rejects_unknown_keys():
    with pytest.raises(io.InputError):
        io.validate_config({"background_plus": {"type": "constant", "a": 0.5, "b": 0}, "colour": 1})


@pytest.mark.parametrize("bg", [
    {"type": "constant", "a": -0.5, "b": 0},
    {"type": "periodic", "a": [0.5], "b": 0.1},
    {"type": "hyperbolic", "a": 1, "b": 0},
])
def test_schema_rejects_bad_backgrounds(bg):
    with pytest.raises(io.InputError):
        io.validate_config({"background_plus": bg})


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_scattering_json_roundtrip_is_lossless(name, tmp_path):
    S = scattering(name)
    io.save_scattering(S, tmp_path / "s.json")
    T = io.load_scattering(tmp_path / "s.json")
    for key in ("R_plus", "T_plus", "R_minus", "T_minus", "eigenvalues", "gamma_plus", "gamma_minus"):
        assert np.array_equal(getattr(S, key), getattr(T, key))
    assert np.array_equal(S.grid_plus.lam, T.grid_plus.lam)
    assert np.array_equal(S.grid_minus.weight, T.grid_minus.weight)
    assert T.bg_plus == S.bg_plus and T.bg_minus == S.bg_minus
    io.save_scattering(T, tmp_path / "t.json")
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()


def test_malformed_scattering_data(tmp_path):
    d = io.scattering_to_dict(scattering("one"))
    d["gamma_plus"] = [-1.0]
    (tmp_path / "bad.json").write_text(json.dumps(d))
    with pytest.raises(io.InputError):
        io.load_scattering(tmp_path / "bad.json")
    assert run("inverse", "--data", tmp_path / "bad.json", "--out", tmp_path) == cli.EXIT_INPUT


def test_csv_floats_roundtrip(tmp_path):
    x = [0.1, 1 / 3, -2.5e-300, np.pi]
    io.write_csv(tmp_path / "t.csv", ["x"], ([v] for v in x))
    rows = io.read_csv(tmp_path / "t.csv")
    assert rows[0] == ["x"]
    assert [float(r[0]) for r in rows[1:]] == x


@pytest.mark.parametrize("config", CONFIG_NAMES)
def test_cli_pipeline_and_determinism(config, tmp_path):
    cfg = CONFIGS / config
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run("forward", "--config", cfg, "--out", out) == 0
        data = out / "scattering.json"
        assert run("inverse", "--config", cfg, "--data", data, "--out", out) == 0
        assert run("validate", "--config", cfg, "--data", data, "--out", out) == 0
        assert run("spectrum", "--config", cfg, "--out", out) == 0
        assert run("roundtrip", "--config", cfg, "--out", out) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(outputs[0]) == {"scattering.json", "scattering.csv", "coefficients.json", "coefficients.csv",
                               "report.json", "spectrum.csv", "roundtrip.json"}
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0]["report.json"])
    assert report["verdict"] == "pass"
    summary = json.loads(outputs[0]["roundtrip.json"])["summary"]
    assert summary["max_error_inside"] < 1e-8


def test_missing_config_is_input_error(tmp_path):
    assert run("forward", "--config", tmp_path / "nope.json", "--out", tmp_path) == cli.EXIT_INPUT
    assert run("forward", "--out", tmp_path) == cli.EXIT_INPUT
    assert run("inverse", "--out", tmp_path) == cli.EXIT_INPUT


def test_invalid_coefficients_is_input_error(tmp_path):
    cfg = {"background_plus": {"type": "constant", "a": 0.5, "b": 0},
           "perturbation": {"a_dev": {"1": -0.6}}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("forward", "--config", tmp_path / "c.json", "--out", tmp_path) == cli.EXIT_INPUT


def test_data_not_in_class_exit_code(tmp_path):
    d = io.scattering_to_dict(scattering("one"))
    for key in ("R_plus", "R_minus"):
        d[key] = [[-30 * x, -30 * y] for x, y in d[key]]
    (tmp_path / "bad.json").write_text(json.dumps(d))
    assert run("inverse", "--data", tmp_path / "bad.json", "--out", tmp_path) == cli.EXIT_NOT_IN_CLASS


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SpectralSingularity("W vanishes on the grid")

    monkeypatch.setattr(cli, "forward", boom)
    assert run("forward", "--config", CONFIGS / "one_site.json", "--out", tmp_path) == cli.EXIT_NUMERIC


def test_seed_changes_random_fixture():
    cfg = io.load_config(CONFIGS / "step_random.json")
    a = io.coefficients_from_config(cfg, 1)
    b = io.coefficients_from_config(cfg, 1)
    c = io.coefficients_from_config(cfg, 2)
    assert a == b and a != c


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "jacobi_ist", "spectrum", "--config",
                           str(CONFIGS / "one_site.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rows = io.read_csv(tmp_path / "spectrum.csv")
    kinds = [r[0] for r in rows[1:]]
    assert "eigenvalue" in kinds and kinds.count("virtual_level") == 2
