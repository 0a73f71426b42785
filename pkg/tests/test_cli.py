import json
import os
import subprocess
import sys

from towerlab.cli import main


def run_cli(args):
    return main(args)


def test_unknown_command_usage_error():
    proc = subprocess.run(
        [sys.executable, "-m", "towerlab", "frobnicate"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode != 0
    assert "invalid choice" in proc.stderr


def test_tails_command(tmp_path):
    out = str(tmp_path / "out")
    rc = run_cli(
        ["tails", "--preset", "doubling", "--out", out, "--seed", "3"]
    )
    assert rc == 0
    manifest = json.loads(open(os.path.join(out, "manifest.json")).read())
    assert manifest["command"] == "tails"
    csv_path = os.path.join(out, "tails.csv")
    assert os.path.exists(csv_path)
    assert manifest["outputs"][0]["path"] == csv_path
    header = open(csv_path).readline().strip()
    assert header == "n,mass_exact,mass_mc,stderr"


def test_reproducible_outputs(tmp_path):
    outs = []
    for d in ("r1", "r2"):
        out = str(tmp_path / d)
        rc = run_cli(["tails", "--preset", "doubling", "--out", out, "--seed", "7"])
        assert rc == 0
        outs.append(open(os.path.join(out, "tails.csv"), "rb").read())
    assert outs[0] == outs[1]


def test_config_file_and_spectrum(tmp_path):
    cfgp = tmp_path / "cfg.toml"
    cfgp.write_text(
        """
preset = "lsv05"

[grid]
m = 48
phi_max = 256

[run]
horizon = 64
"""
    )
    out = str(tmp_path / "out")
    rc = run_cli(["spectrum", "--config", str(cfgp), "--out", out])
    assert rc == 0
    manifest = json.loads(open(os.path.join(out, "manifest.json")).read())
    assert manifest["checks"][0]["passed"] is True
    assert os.path.exists(os.path.join(out, "stationary.csv"))


def test_check_finite_regime_guard(tmp_path):
    rc = run_cli(
        ["check-finite", "--preset", "lsv15", "--out", str(tmp_path / "o")]
    )
    assert rc == 1


def test_tower_identity_command(tmp_path):
    cfgp = tmp_path / "cfg.toml"
    cfgp.write_text(
        """
preset = "lsv05"

[grid]
m = 16
phi_max = 12

[run]
horizon = 12
"""
    )
    out = str(tmp_path / "out")
    rc = run_cli(["tower-identity", "--config", str(cfgp), "--out", out])
    assert rc == 0
    rep = json.loads(open(os.path.join(out, "tower_identity.json")).read())
    assert rep["1"]["max_abs_error"] <= 1e-10


def test_bad_config_returns_one(tmp_path):
    cfgp = tmp_path / "bad.toml"
    cfgp.write_text("[grid]\nm = -3\n")
    rc = run_cli(["tails", "--config", str(cfgp)])
    assert rc == 1
