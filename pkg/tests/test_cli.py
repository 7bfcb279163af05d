import json
import math
import subprocess
import sys

import pytest

from ergobands.cli import KEYS, config_hash, run


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return [ln.split(",") for ln in lines[1:]]


def test_free_bands_edges(tmp_path):
    assert run(["bands", "--model", "free", "--q", "8", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bands.csv")
    assert len(rows) == 8
    for j, row in enumerate(rows, start=1):
        left, right = float(row[1]), float(row[2])
        assert left == pytest.approx(-2 * math.cos((j - 1) * math.pi / 8), abs=1e-15)
        assert right == pytest.approx(-2 * math.cos(j * math.pi / 8), abs=1e-15)


def test_convergents_output(capsys):
    assert run(["convergents", "--alpha", "sqrt2", "--count", "9"]) == 0
    lines = capsys.readouterr().out.split()
    assert lines[:4] == ["1/1", "3/2", "7/5", "17/12"] and lines[-1] == "1393/985"


def test_provenance_header(tmp_path):
    run(["bands", "--model", "amo", "--alpha", "17/12", "--q", "12", "--out", str(tmp_path)])
    head = (tmp_path / "bands.csv").read_text().splitlines()[0]
    assert head.startswith("# ergobands 0.1.0 command=bands config_hash=") and "precision=" in head


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["scatter", "--model", "amo", "--alpha", "17/12", "--q", "12"]
    assert run(base + ["--out", str(a)]) == 0
    assert run(base + ["--out", str(b), "--workers", "2"]) == 0
    for name in ("scatter.csv", "scatter.svg", "gamma.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_file_and_hash(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "free", "q": 6}))
    assert run(["bands", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "bands.csv")) == 6
    c = {k: v[1] for k, v in KEYS.items()}
    assert config_hash(c) == config_hash({**c, "out": "elsewhere", "workers": 4})
    assert config_hash(c) != config_hash({**c, "q": 7})


@pytest.mark.parametrize("argv", [
    ["bands", "--q", "0"],
    ["bands", "--q", "2000"],
    ["bands", "--precision-bits", "32"],
    ["bands", "--bogus", "1"],
    ["prob", "--trials", "5"],
])
def test_validation_exit_code(argv, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["error"] == "ValidationError"


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"qq": 3}))
    assert run(["bands", "--config", str(cfg)]) == 2
    assert "qq" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path, capsys):
    assert run(["bands", "--potential", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 4


def test_help_lists_keys():
    out = subprocess.run([sys.executable, "-m", "ergobands.cli", "bands", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for key in KEYS:
        assert "--" + key.replace("_", "-") in out
