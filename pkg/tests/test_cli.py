import csv
import json

import pytest

from config import settings
from database import recent_runs
from errors import ConfigInvalid
from geometry.kahler_core import FlatTorus
from main import main
from schemas import ExperimentConfig
from tasks.builders import build_grid, overrides
from tasks.reporting import parse_config, run

SPECTRUM_CONFIG = """
task = "spectrum"

[manifold]
backend = "flat"
n = 1
periods = [6.283185307179586, 0.0]

[lagrangian]
kind = "linear"
offsets = [0.0]

[discretization]
N = 16
m = 4
"""

BAD_TRIANGLE_CONFIG = """
task = "validate"

[manifold]
backend = "toric"
n = 2

[[manifold.polytope.facets]]
normal = [1, 0]
offset = 0

[[manifold.polytope.facets]]
normal = [0, 1]
offset = 0

[[manifold.polytope.facets]]
normal = [-1, -2]
offset = 1
"""

FIBRATE_CONFIG = """
task = "fibrate"

[manifold]
backend = "flat"
n = 1
periods = [6.283185307179586, 0.0]

[lagrangian]
kind = "linear"
offsets = [0.0]

[discretization]
N = 16
m = 4

[deformation]
t_grid = [-0.1, 0.1]
"""

CP1_FIBER_CONFIG = """
task = "hslag-check"

[manifold]
backend = "projective"
n = 1

[lagrangian]
kind = "moment_fiber"
point = [0.5]
"""


def _write(tmp_path, text, name="experiment.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _report(directory):
    return json.loads((directory / "report.json").read_text(encoding="utf-8"))


def test_missing_block_is_a_config_error(tmp_path):
    config = _write(tmp_path, 'task = "validate"\n')
    out = tmp_path / "out"
    assert main(["run", str(config), "--out-dir", str(out)]) == 1
    report = _report(out)
    assert report["error"]["code"] == "ConfigInvalid"
    assert "missing key 'manifold'" in report["error"]["detail"]
    assert report["verdict"] is None


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigInvalid, match="unknown key 'colour'"):
        parse_config({"task": "validate", "manifold": {"backend": "flat"}, "colour": 1})


def test_invalid_value_names_the_key():
    with pytest.raises(ConfigInvalid) as info:
        parse_config({"task": "validate", "manifold": {"backend": "flat", "n": 0}})
    assert info.value.context["key"] == "manifold.n"


def test_unreadable_config(tmp_path):
    report, status = run(tmp_path / "absent.toml", tmp_path / "out")
    assert status == 1
    assert report.error.code == "ConfigInvalid"


def test_spectrum_run_writes_report_and_ledger(tmp_path):
    config = _write(tmp_path, SPECTRUM_CONFIG)
    out = tmp_path / "spectrum"
    assert main(["run", str(config), "--out-dir", str(out)]) == 0
    report = _report(out)
    assert report["verdict"] is True
    assert report["results"]["kernel_dimension"] == 1
    with (out / "spectrum.csv").open(newline="", encoding="utf-8") as fh:
        eigenvalues = [float(row["eigenvalue"]) for row in csv.DictReader(fh)]
    assert eigenvalues == pytest.approx([0, 1, 1, 16, 16, 81, 81, 256, 256], abs=1e-8)
    latest = recent_runs(1)[0]
    assert latest.task == "spectrum"
    assert latest.exit_status == 0
    assert latest.report_hash == report["report_hash"]


def test_report_hash_is_reproducible(tmp_path):
    config = _write(tmp_path, SPECTRUM_CONFIG)
    first, _ = run(config, tmp_path / "a")
    second, _ = run(config, tmp_path / "b")
    assert first.config_hash == second.config_hash
    assert _report(tmp_path / "a")["report_hash"] == _report(tmp_path / "b")["report_hash"]


def test_hslag_check_on_clifford_circle(tmp_path):
    config = _write(tmp_path, CP1_FIBER_CONFIG)
    report, status = run(config, tmp_path / "out")
    assert status == 0
    assert report.results["residual"]["sup"] < settings.hslag_tol
    assert (tmp_path / "out" / "curve.csv").exists()


def test_non_delzant_polytope_fails_validation(tmp_path):
    config = _write(tmp_path, BAD_TRIANGLE_CONFIG)
    report, status = run(config, tmp_path / "out")
    assert status == 2
    assert report.verdict is False
    assert report.results["delzant"]["delzant"] is False


def test_overrides_are_scoped():
    config = ExperimentConfig.model_validate(
        {"task": "validate", "manifold": {"backend": "flat"}, "tolerances": {"hslag_tol": 1e-3}}
    )
    before = settings.hslag_tol
    with overrides(config):
        assert settings.hslag_tol == 1e-3
    assert settings.hslag_tol == before


def test_fibrate_continues_harmonic_graphs(tmp_path):
    config = _write(tmp_path, FIBRATE_CONFIG)
    report, status = run(config, tmp_path / "out")
    assert status == 0
    assert report.results["reached"] == [-0.1, 0.1]
    assert report.results["stops"] == []
    assert [row["t"] for row in report.results["rows"]] == [-0.1, 0.0, 0.1]
    for row in report.results["rows"]:
        assert row["residual_sup"] < settings.hslag_tol


def test_default_nodes_shrink_with_dimension():
    config = ExperimentConfig.model_validate({"task": "validate", "manifold": {"backend": "flat", "n": 1}})
    assert config.discretization.N is None
    assert build_grid(config, FlatTorus(1)).N == 32
    assert build_grid(config, FlatTorus(2)).N == 32
    assert build_grid(config, FlatTorus(3)).N == 16
