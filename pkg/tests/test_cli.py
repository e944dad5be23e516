import json
import re
import xml.etree.ElementTree as ET

import pytest

from peridiv.cli import main

MODEL_TEXT = """\
drift_c = 0.027
sigma = 0.09
jump_rate_1 = 1.0
jump_scale_1 = 33.33
gamma = 0.04
delta = 0.003
"""


@pytest.fixture()
def model_file(tmp_path):
    p = tmp_path / "baseline.model"
    p.write_text(MODEL_TEXT)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestScaleCommand:
    def test_csv_schema(self, capsys, model_file):
        code, out, _ = run(capsys, "scale", model_file, "--x-grid", "0:2:5")
        assert code == 0
        lines = out.strip().split("\n")
        assert re.fullmatch(r"# manifest_hash: [0-9a-f]{64}", lines[0])
        assert lines[1] == "x,W_delta,Z_delta,Z_gamma_delta,J,H"
        assert len(lines) == 2 + 5
        first = lines[2].split(",")
        assert first[0] == "0"
        assert first[3] == "1" or abs(float(first[3]) - 1.0) < 1e-11

    def test_file_output_with_manifest(self, capsys, model_file, tmp_path):
        out_path = tmp_path / "scale.csv"
        code, _, _ = run(capsys, "scale", model_file, "--out", str(out_path))
        assert code == 0
        assert out_path.exists()
        manifest = json.loads((tmp_path / "scale.csv.manifest.json").read_text())
        assert manifest["subcommand"] == "scale"
        assert manifest["manifest_hash"] in out_path.read_text()


class TestValueCommand:
    def test_csv_schema_and_formatting(self, capsys, model_file):
        code, out, _ = run(
            capsys, "value", model_file, "--bu", "1.0", "--bl", "0.3",
            "--kappa", "0.06", "--x-grid", "0:1.5:4",
        )
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[1] == "x,value,dvalue,residual_gen,residual_hjb"
        val = lines[3].split(",")[1]
        # golden: 12 significant digits, plain '.' decimal separator
        assert val == "0.521656142819"
        assert lines[5].split(",")[1] == "1.43135248623"

    def test_byte_identical_rerun(self, capsys, model_file):
        args = ("value", model_file, "--bu", "1.0", "--bl", "0.3",
                "--kappa", "0.06", "--x-grid", "0:2:9")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2


class TestOptimizeCommand:
    def test_json_payload(self, capsys, model_file):
        code, out, _ = run(capsys, "optimize", model_file, "--kappa", "0.06")
        assert code == 0
        doc = json.loads(out)
        assert doc["liquidation"] is False
        assert doc["b_l_star"] <= doc["b_star"] <= doc["b_u_star"]
        assert abs(doc["residuals"]["gamma"]) <= 1e-10
        assert abs(doc["residuals"]["smoothness_gap"]) <= 1e-10
        assert re.fullmatch(r"[0-9a-f]{64}", doc["manifest_hash"])

    def test_deterministic(self, capsys, model_file):
        _, out1, _ = run(capsys, "optimize", model_file, "--kappa", "0.06")
        _, out2, _ = run(capsys, "optimize", model_file, "--kappa", "0.06")
        assert out1 == out2


class TestSweepCommand:
    def test_csv_and_svg(self, capsys, model_file, tmp_path):
        out_csv = tmp_path / "sweep.csv"
        out_svg = tmp_path / "sweep.svg"
        code, _, _ = run(
            capsys, "sweep", model_file, "--param", "kappa", "--from", "0.02",
            "--to", "0.5", "--steps", "5", "--out", str(out_csv),
            "--svg", str(out_svg),
        )
        assert code == 0
        lines = out_csv.read_text().strip().split("\n")
        assert lines[1] == "param,value,b_star,b_u_star,b_l_star,liquidation,status"
        assert len(lines) == 2 + 5
        assert all(row.split(",")[-1] == "ok" for row in lines[2:])
        root = ET.fromstring(out_svg.read_text())
        assert root.tag.endswith("svg")

    def test_monotone_columns(self, capsys, model_file, tmp_path):
        out_csv = tmp_path / "s.csv"
        run(capsys, "sweep", model_file, "--param", "kappa", "--from", "0.01",
            "--to", "1.0", "--steps", "8", "--out", str(out_csv))
        rows = [r.split(",") for r in out_csv.read_text().strip().split("\n")[2:]]
        bu = [float(r[3]) for r in rows]
        bl = [float(r[4]) for r in rows]
        assert bu == sorted(bu)
        assert bl == sorted(bl, reverse=True)
        assert rows[-1][5] == "true"


class TestSimulateCommand:
    def test_json_and_determinism(self, capsys, model_file):
        args = ("simulate", model_file, "--bu", "1.0", "--bl", "0.3",
                "--kappa", "0.06", "--x0", "0.5", "--paths", "20000",
                "--seed", "42")
        code, out1, _ = run(capsys, *args)
        assert code == 0
        doc = json.loads(out1)
        assert doc["mean"] > 0
        assert doc["std_error"] > 0
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    def test_agrees_with_value_command(self, capsys, model_file):
        _, sim_out, _ = run(
            capsys, "simulate", model_file, "--bu", "1.0", "--bl", "0.3",
            "--kappa", "0.06", "--x0", "0.5", "--paths", "100000",
            "--seed", "7",
        )
        sim = json.loads(sim_out)
        _, val_out, _ = run(
            capsys, "value", model_file, "--bu", "1.0", "--bl", "0.3",
            "--kappa", "0.06", "--x-grid", "0.5:1.0:2",
        )
        closed = float(val_out.strip().split("\n")[2].split(",")[1])
        assert abs(sim["mean"] - closed) <= 3 * sim["std_error"]


class TestVerifyCommand:
    def test_solved_strategy_passes(self, capsys, model_file):
        code, out, _ = run(capsys, "verify", model_file, "--kappa", "0.06")
        assert code == 0
        assert "FAIL" not in out

    def test_perturbed_bu_fails_smoothness(self, capsys, model_file):
        code, out, _ = run(
            capsys, "verify", model_file, "--kappa", "0.06",
            "--bu", "1.1877", "--bl", "0.33137",
        )
        assert code == 4
        assert "FAIL  smoothness_gap" in out
        assert "verification failed: smoothness_gap" in out

    def test_liquidation_regime_passes(self, capsys, model_file):
        # kappa above the liquidation threshold: checks hold with b_l* = 0
        code, out, _ = run(capsys, "verify", model_file, "--kappa", "0.5")
        assert code == 0
        assert "b_l*=0.000000" in out


class TestErrorPaths:
    def test_missing_model_file(self, capsys):
        code, _, err = run(capsys, "optimize", "/no/such/file", "--kappa", "0.1")
        assert code == 2
        assert "error" in err

    def test_malformed_model_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.model"
        bad.write_text(MODEL_TEXT + "\nwhat = 1\n")
        code, _, err = run(capsys, "optimize", str(bad), "--kappa", "0.1")
        assert code == 2
        assert "unknown" in err

    def test_inadmissible_strategy_is_solver_error(self, capsys, model_file):
        code, _, err = run(
            capsys, "verify", model_file, "--kappa", "0.06",
            "--bu", "0.4", "--bl", "0.38",
        )
        assert code == 3
        assert "admissible" in err

    def test_bad_grid_spec(self, capsys, model_file):
        code, _, err = run(capsys, "scale", model_file, "--x-grid", "5:1:10")
        assert code == 2

    def test_bu_without_bl(self, capsys, model_file):
        code, _, err = run(capsys, "verify", model_file, "--kappa", "0.06",
                           "--bu", "1.0")
        assert code == 2
