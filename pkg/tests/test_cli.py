import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from meanfield.cli import params_to_argv, run

GOLDEN = Path(__file__).parent / "golden"


def _invoke(capsys, argv):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _parse_csv(text):
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return meta, rows


COMMANDS = [
    ["var-map", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--grid", "5"],
    ["corr-map", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--grid", "5",
     "--sweep-a", "1,2"],
    ["eoc-curve", "--activation", "tanh", "--sigma-b2", "0.01,0.1"],
    ["phase-diagram", "--activation", "shtanh:1:1", "--sigma-b2", "0.1",
     "--sigma-w2-grid", "0.5,2"],
    ["ratio-bounds", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--sweep-a", "1,5"],
    ["verify-theorem", "--activation", "shtanh:2:1", "--sigma-b2", "0.1", "--grid", "51"],
    ["depth-dynamics", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--depth", "5"],
    ["jacobian-moments", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--depth", "4"],
    ["simulate", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--width", "20",
     "--depth", "3", "--trials", "2", "--jacobian"],
]


class TestCommands:
    @pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] for c in COMMANDS])
    def test_csv_and_json_agree(self, capsys, argv):
        code, text, _ = _invoke(capsys, argv)
        assert code == 0
        meta, rows = _parse_csv(text)
        assert meta["schema_version"] == "1" and meta["command"] == argv[0]
        assert rows
        code, js, _ = _invoke(capsys, argv + ["--format", "json"])
        doc = json.loads(js)
        assert code == 0
        assert doc["params"] == json.loads(meta["params"])
        assert len(doc["rows"]) == len(rows)
        assert doc["columns"] == list(rows[0])

    def test_eoc_curve_values(self, capsys):
        _, text, _ = _invoke(capsys, ["eoc-curve", "--activation", "shtanh:1:1", "--sigma-b2", "0.1"])
        _, rows = _parse_csv(text)
        assert list(rows[0]) == ["sigma_b2", "sigma_w2", "q_star", "chi1"]
        assert len(rows) == 1
        np.testing.assert_allclose(float(rows[0]["q_star"]), 0.6321554645483026, rtol=1e-15)
        np.testing.assert_allclose(float(rows[0]["sigma_w2"]), 1.2634059323861393, rtol=1e-15)

    def test_verify_theorem_satisfied(self, capsys):
        _, text, _ = _invoke(capsys, ["verify-theorem", "--activation", "shtanh:2:1",
                                      "--sigma-b2", "0.1"])
        _, rows = _parse_csv(text)
        assert rows[0]["all_satisfied"] == "1"

    def test_output_file(self, capsys, tmp_path):
        path = tmp_path / "out.csv"
        code, text, _ = _invoke(capsys, COMMANDS[2] + ["--output", str(path)])
        assert code == 0 and text == ""
        assert path.read_text().startswith("# schema_version: 1\n")


class TestExitCodes:
    def test_relu_has_no_fixed_point(self, capsys):
        code, out, err = _invoke(capsys, ["eoc-curve", "--activation", "relu", "--sigma-b2", "0.1"])
        assert code == 1 and out == ""
        assert "no variance fixed point" in err

    @pytest.mark.parametrize("argv", [
        [],
        ["nope"],
        ["eoc-curve", "--sigma-b2", "0.1"],
        ["eoc-curve", "--activation", "softplus", "--sigma-b2", "0.1"],
        ["eoc-curve", "--activation", "tanh", "--sigma-b2", "x"],
        ["simulate", "--activation", "tanh", "--sigma-b2", "0.1", "--width", "0"],
    ])
    def test_usage_errors(self, capsys, argv):
        assert _invoke(capsys, argv)[0] == 2

    def test_domain_error_on_bad_value(self, capsys):
        code, _, err = _invoke(capsys, ["eoc-curve", "--activation", "shtanh:1:1",
                                        "--sigma-b2", "-1"])
        assert code == 1 and "error" in err

    def test_module_entry_point(self):
        ok = subprocess.run([sys.executable, "-m", "meanfield", "ratio-bounds", "--activation",
                             "shtanh:1:1", "--sigma-b2", "0.1"], capture_output=True, text=True)
        bad = subprocess.run([sys.executable, "-m", "meanfield", "eoc-curve", "--activation",
                              "relu", "--sigma-b2", "0.1"], capture_output=True, text=True)
        assert ok.returncode == 0 and ok.stdout.startswith("# schema_version")
        assert bad.returncode == 1


class TestReproducibility:
    def test_golden_round_trip(self, capsys):
        golden = (GOLDEN / "eoc_curve_shtanh.csv").read_text()
        meta, _ = _parse_csv(golden)
        argv = params_to_argv(meta["command"], json.loads(meta["params"]))
        code, text, _ = _invoke(capsys, argv)
        assert code == 0
        assert text == golden

    @pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] for c in COMMANDS])
    def test_params_replay(self, capsys, argv):
        _, first, _ = _invoke(capsys, argv)
        meta, _ = _parse_csv(first)
        _, second, _ = _invoke(capsys, params_to_argv(argv[0], json.loads(meta["params"])))
        assert second == first

    def test_simulate_byte_identical(self, capsys):
        argv = ["simulate", "--activation", "shtanh:1:1", "--sigma-b2", "0.1", "--width", "60",
                "--depth", "5", "--trials", "4", "--seed", "7", "--jacobian"]
        assert _invoke(capsys, argv)[1] == _invoke(capsys, argv)[1]
        other = argv[:-2] + ["8", "--jacobian"]
        assert _invoke(capsys, other)[1] != _invoke(capsys, argv)[1]
