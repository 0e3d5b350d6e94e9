"""
Unit Tests for the command-line front-end
"""

import json
import os
import sys
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app import build_parser, main, resolve_config

REPO_ROOT = Path(__file__).resolve().parents[1]
SPECS = REPO_ROOT / "specs"


def summary(out: Path, command: str) -> dict:
    return json.loads((out / command / "summary.json").read_text())


@pytest.fixture
def out(tmp_path):
    return tmp_path / "artifacts"


class TestConfig:
    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"k": 7, "seed": 5, "t_levels": 8}))
        args = build_parser().parse_args(["parametrix", "x.json", "--config", str(config), "--k", "2"])
        cfg = resolve_config(args)
        assert cfg.k == 2
        assert cfg.seed == 5
        assert cfg.t_levels == 8
        assert cfg.inputs == ["x.json"]

    def test_out_defaults_to_environment(self, monkeypatch):
        monkeypatch.setenv("OSCULATE_OUT", "/tmp/osculate-env")
        cfg = resolve_config(build_parser().parse_args(["demo-heisenberg"]))
        assert cfg.out == "/tmp/osculate-env"

    def test_invalid_flag_value(self, out):
        assert main(["zoom-test", str(SPECS / "symbols" / "sqrt_family.json"), "--grid-eta", "12",
                     "--out", str(out)]) == 2
        assert not out.exists()

    def test_unreadable_config(self, tmp_path, out):
        config = tmp_path / "run.json"
        config.write_text("{k: 3")
        assert main(["demo-heisenberg", "--config", str(config), "--out", str(out)]) == 2


class TestExitCodes:
    def test_validate_algebra_passes(self, out, capsys):
        assert main(["validate-algebra", str(SPECS / "algebras" / "heis.json"), "--out", str(out)]) == 0
        result = summary(out, "validate-algebra")
        assert result["passed"] is True
        assert result["metrics"]["associativity_failures"] == 0
        assert result["metrics"]["sweep_triples"] == 1000
        assert result["inputs"] == ["heis.json"]
        assert "✅" in capsys.readouterr().out

    def test_bad_grading_fails(self, out):
        assert main(["validate-algebra", str(SPECS / "algebras" / "heis_bad_grading.json"), "--out", str(out)]) == 1
        assert summary(out, "validate-algebra")["passed"] is False

    def test_filtration_closure_fails(self, out):
        assert main(["check-filtration", str(SPECS / "patches" / "heis_depth1_patch.json"), "--out", str(out)]) == 1
        result = summary(out, "check-filtration")
        assert result["metrics"]["filtration"]["ok"] is False
        assert (out / "check-filtration" / "brackets.csv").exists()

    def test_cosymbol(self, out):
        assert main(["cosymbol", str(SPECS / "operators" / "heis_sublaplacian.json"), "--out", str(out)]) == 0
        assert summary(out, "cosymbol")["metrics"]["nose_homogeneous"] is True

    def test_zoom_test_writes_tables(self, out):
        code = main(["zoom-test", str(SPECS / "symbols" / "sqrt_family.json"), "--grid-eta", "64",
                     "--t-levels", "6", "--out", str(out)])
        assert code == 0
        assert (out / "zoom-test" / "homogeneity.csv").exists()
        assert summary(out, "zoom-test")["config"]["grid_eta"] == 64
        assert summary(out, "zoom-test")["metrics"]["regularity"] is None

    def test_zoom_test_checks_kernel_regularity(self, tmp_path, out):
        spec = tmp_path / "decaying.json"
        spec.write_text(json.dumps({
            "kind": "symbol", "name": "decaying", "family": "expression", "d": 1,
            "expression": "(1 + t^2 + eta0^2)^(-3/2)", "weight": -3,
        }))
        code = main(["zoom-test", str(spec), "--grid-eta", "64", "--t-levels", "4", "--out", str(out)])
        assert code == 1
        regularity = summary(out, "zoom-test")["metrics"]["regularity"]
        assert regularity["derivatives"] == 1
        assert regularity["passed"] is True
        assert regularity["grid_sizes"] == [64, 128, 256]

    def test_calculus_error_is_reported(self, tmp_path, out):
        spec = tmp_path / "shifted.json"
        spec.write_text(json.dumps({
            "kind": "symbol", "name": "shifted", "family": "expression", "d": 1,
            "expression": "eta0^2 - 16", "weight": 2,
        }))
        code = main(["parametrix", str(spec), "--grid-eta", "64", "--t-levels", "4", "--out", str(out)])
        assert code == 1
        error = summary(out, "parametrix")["error"]
        assert error["type"] == "NotHEllipticError"
        assert "witness" in error


class TestInputErrors:
    def test_missing_file(self, tmp_path, out):
        assert main(["validate-algebra", str(tmp_path / "absent.json"), "--out", str(out)]) == 2

    def test_not_json(self, tmp_path, out):
        spec = tmp_path / "broken.json"
        spec.write_text("{\"kind\": \"algebra\",")
        assert main(["validate-algebra", str(spec), "--out", str(out)]) == 2

    def test_invalid_fields(self, tmp_path, out):
        spec = tmp_path / "zero.json"
        spec.write_text(json.dumps({"kind": "algebra", "name": "zero", "weights": [1, 0]}))
        assert main(["validate-algebra", str(spec), "--out", str(out)]) == 2

    def test_wrong_number_of_inputs(self, out):
        assert main(["compose", str(SPECS / "operators" / "heis_x.json"), "--out", str(out)]) == 2

    def test_wrong_kind(self, out):
        assert main(["cosymbol", str(SPECS / "algebras" / "heis.json"), "--out", str(out)]) == 2
        assert not (out / "cosymbol").exists()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
