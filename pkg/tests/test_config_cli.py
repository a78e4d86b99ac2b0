"""Config validation and the command-line runner."""

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from rsqmp.chebyshev import grid_sup_error, inverse_model
from rsqmp.cli import main
from rsqmp.config import canonical_json, load_config, validate_config, validate_dict
from rsqmp.errors import ParseError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

ALG1 = """\
command: estimate
seed: 7
function:
  tag: monomial
  t: 20
  nu: 1.0e-3
matrix: {kind: random_hermitian, dim: 8, norm: 0.9, seed: 1}
algorithm: 1
phi: {kind: random, seed: 2}
psi: {kind: random, seed: 3}
epsilon: 0.05
delta: 0.1
"""


# ------------------------------------------------------------------ config


def test_missing_epsilon_names_field():
    text = ALG1.replace("epsilon: 0.05\n", "")
    with pytest.raises(ParseError) as info:
        validate_config(text)
    assert info.value.field == "epsilon"
    assert "epsilon" in str(info.value)


def test_bad_value_reports_line_number():
    text = ALG1.replace("nu: 1.0e-3", "nu: 2.0")
    with pytest.raises(ParseError) as info:
        validate_config(text)
    assert info.value.field == "function.nu"
    assert info.value.line == 6


def test_exp_nu_range():
    raw = {"command": "approximate", "function": {"tag": "exp", "beta": 1.0, "nu": 0.9}}
    with pytest.raises(ParseError) as info:
        validate_dict(raw)
    assert info.value.field == "function.nu"
    raw["function"]["nu"] = 0.8
    assert validate_dict(raw).data["function"]["nu"] == 0.8


@pytest.mark.parametrize(
    "text,field",
    [
        (ALG1 + "shots: 10\n", "shots"),
        (ALG1 + "colour: red\n", "colour"),
        (ALG1.replace("t: 20", "t: 20\n  beta: 1.0"), "function.beta"),
        (ALG1.replace("seed: 1}", "seed: 1, rank: 2}"), "matrix.rank"),
    ],
)
def test_unknown_or_inapplicable_keys_rejected(text, field):
    with pytest.raises(ParseError) as info:
        validate_config(text)
    assert info.value.field == field


def test_malformed_yaml():
    with pytest.raises(ParseError) as info:
        validate_config("command: [estimate\n")
    assert info.value.line is not None


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    once = canonical_json(cfg.data)
    again = canonical_json(validate_dict(json.loads(once), base_dir=str(path.parent)).data)
    assert once == again


# ---------------------------------------------------------------- CLI runs


def _report(out):
    return json.loads((Path(out) / "report.json").read_text())["report"]


def test_approximate_inverse(tmp_path):
    out = tmp_path / "inv"
    code = main(["approximate", "--function", "inverse", "--kappa", "8", "--nu", "1e-2", "--out", str(out), "--check"])
    assert code == 0
    rep = _report(out)
    m = inverse_model(8.0, 1e-2)
    assert rep["summary"]["k"] == m.k
    assert rep["summary"]["one_norm"] == pytest.approx(m.one_norm)
    assert rep["grid_sup_error"] <= 1e-2
    assert rep["grid_sup_error"] == pytest.approx(grid_sup_error(m))


def test_histogram_mean_within_three_sigma(tmp_path):
    out = tmp_path / "hist"
    args = ["histogram", "--function", "monomial", "--t", "200", "--nu", "1e-2", "--shots", "1000", "--seed", "7"]
    assert main(args + ["--out", str(out)]) == 0
    rep = _report(out)
    with open(out / "histogram.csv") as fh:
        rows = list(csv.DictReader(fh))
    deg = np.array([int(r["degree"]) for r in rows])
    cnt = np.array([int(r["count"]) for r in rows])
    assert cnt.sum() == 1000
    mean = float(deg @ cnt) / 1000
    assert mean == pytest.approx(rep["mean_degree"])
    assert abs(mean - rep["expected_degree"]) <= 3 * rep["degree_std"] / math.sqrt(1000)


def test_resources_femoco(tmp_path):
    out = tmp_path / "fem"
    assert main(["resources", "--femoco", "--out", str(out), "--check"]) == 0
    rep = _report(out)
    for key in ("k", "expected_degree", "one_norm_sq"):
        assert set(rep["comparison"][key]) == {"computed", "published", "log10_ratio"}
    assert rep["published"]["k"] == 1.12e7
    assert rep["checks"] == {"k_same_order": True, "expected_degree_same_order": True, "ratio_in_range": True}


def test_estimate_writes_shots(tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--config", str(CONFIGS / "estimate_alg1.yaml"), "--out", str(out)]) == 0
    with open(out / "shots.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["alpha", "part", "j", "l", "b", "omega", "queries"]
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config_canonical"] == canonical_json(load_config(CONFIGS / "estimate_alg1.yaml").data)


# -------------------------------------------------------------- exit codes


def test_exit_config_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(ALG1.replace("delta: 0.1\n", "delta: 1.5\n"))
    assert main(["estimate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["approximate", "--workers", "0"]) == 2
    assert main(["histogram", "--config", str(CONFIGS / "estimate_alg1.yaml")]) == 2


def test_exit_numeric_failure(tmp_path):
    raw = yaml.safe_load((CONFIGS / "mcmc.yaml").read_text())
    raw["usecase"]["beta"] = 30.0
    cfg = tmp_path / "cold.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    assert main(["usecase", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_exit_check_failed(tmp_path):
    # this seed draws a 50-shot sample mean more than 3 sigma from E[j]
    args = ["histogram", "--function", "monomial", "--t", "200", "--nu", "1e-2", "--shots", "50", "--seed", "400"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--check"]) == 4


def test_exit_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["approximate", "--function", "monomial", "--t", "5", "--nu", "0.1", "--out", str(blocker / "o")]) == 5
    assert main(["estimate", "--config", str(tmp_path / "missing.yaml")]) == 5
