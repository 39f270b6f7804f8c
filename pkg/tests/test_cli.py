import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from dormcoal.cli import COMMANDS, run_command

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, *argv):
    return run_command([*argv, "--out", str(tmp_path)])


def test_help_exits_zero(capsys):
    assert run_command(["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "dormcoal.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "genealogy" in r.stdout


@pytest.mark.parametrize("cmd", COMMANDS)
def test_subcommand_help(cmd):
    assert run_command([cmd, "--help"]) == 0


def test_unknown_subcommand(capsys):
    assert run_command(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    assert run_command(["forward", "--bogus"]) == 1


def test_no_subcommand():
    assert run_command([]) == 1


def test_malformed_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("regime: {type: two_point, beta: oops}\nN: 100\n")
    assert run(tmp_path, "forward", "--config", str(cfg)) == 1
    assert "regime.beta" in capsys.readouterr().err


def test_missing_field(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("model: {N: 10, lam: 1.0, t_spring: 1.0, t_total: 1.0, wake: {type: two_point, omega: 0.1}}\n")
    assert run(tmp_path, "forward", "--config", str(cfg)) == 1
    assert "model.wake.late_time" in capsys.readouterr().err


def test_bad_yaml(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("a: [1, 2\n")
    assert run(tmp_path, "forward", "--config", str(cfg)) == 1


def test_verify_bad_check(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("checks:\n  - {kind: tail}\n")
    assert run(tmp_path, "verify", "--config", str(cfg)) == 1
    assert "checks[0].a" in capsys.readouterr().err


def test_runtime_error_exit_two(tmp_path):
    # explicit model whose families overflow the count limit
    cfg = tmp_path / "big.yaml"
    cfg.write_text("model: {N: 10, lam: 1.0, t_spring: 200.0, t_total: 200.0,"
                   " wake: {type: two_point, omega: 1.0, late_time: 200.0}}\n")
    assert run(tmp_path, "forward", "--config", str(cfg), "--replicates", "2") == 2


def test_csv_schema_header(tmp_path):
    assert run(tmp_path, "forward", "--config", str(CONFIGS / "forward.yaml"), "--replicates", "5") == 0
    lines = (tmp_path / "forward.csv").read_text().splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1] == "# command: forward"
    assert lines[2].startswith("# config_sha256: ") and len(lines[2].split()[-1]) == 64
    assert lines[3] == "# master_seed: 1"
    assert lines[4] == ("generation,total_spring,total_end,max_family_spring,max_survivors,"
                        "extinct_families,pair_same_parent")
    assert len(lines) == 5 + 5
    doc = json.loads((tmp_path / "forward.json").read_text())
    assert doc["master_seed"] == 1 and doc["config"]["replicates"] == 5
    assert {"dormcoal", "numpy", "scipy"} <= set(doc["versions"])


def test_genealogy_columns(tmp_path):
    argv = ["genealogy", "--config", str(CONFIGS / "genealogy.yaml"), "--replicates", "5",
            "--set", "cn_replicates=1000"]
    assert run(tmp_path, *argv) == 0
    lines = (tmp_path / "genealogy.csv").read_text().splitlines()
    assert lines[4] == "replicate,day,scaled_time,blocks_before,merger_sizes"


def test_coalescent_and_construct(tmp_path):
    assert run(tmp_path, "coalescent", "--config", str(CONFIGS / "coalescent.yaml"), "--replicates", "3") == 0
    doc = json.loads((tmp_path / "coalescent.json").read_text())
    assert doc["criteria"]["consistency"]["pass"]
    assert run(tmp_path, "construct", "--config", str(CONFIGS / "construct.yaml")) == 0
    model = yaml.safe_load((tmp_path / "construct_model.yaml").read_text())
    assert model["model"]["N"] == 10**4
    # the emitted config runs as is
    assert run(tmp_path, "forward", "--config", str(tmp_path / "construct_model.yaml"), "--replicates", "2") == 0


def test_construct_too_small_N(tmp_path, capsys):
    argv = ["construct", "--config", str(CONFIGS / "construct.yaml"), "--N", "3", "--set", "eta=[[1.0, 50.0]]"]
    assert run(tmp_path, *argv) == 1
    assert "smallest admissible N" in capsys.readouterr().err


def test_set_override(tmp_path):
    argv = ["forward", "--config", str(CONFIGS / "forward.yaml"), "--replicates", "3", "--set", "N=50"]
    assert run(tmp_path, *argv) == 0
    assert json.loads((tmp_path / "forward.json").read_text())["config"]["N"] == 50


def _bytes(tmp_path, name, argv, workers):
    out = tmp_path / name
    assert run_command([*argv, "--workers", str(workers), "--out", str(out)]) == 0
    cmd = argv[0]
    return (out / f"{cmd}.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["forward", "--config", str(CONFIGS / "forward.yaml"), "--replicates", "20"],
    ["genealogy", "--config", str(CONFIGS / "genealogy.yaml"), "--replicates", "12", "--set", "cn_replicates=2000"],
    ["coalescent", "--config", str(CONFIGS / "coalescent.yaml"), "--replicates", "10"],
])
def test_byte_identical_across_runs_and_workers(tmp_path, argv):
    a = _bytes(tmp_path, "a", argv, 1)
    b = _bytes(tmp_path, "b", argv, 1)
    c = _bytes(tmp_path, "c", argv, 2)
    assert a == b == c


def test_seed_changes_output(tmp_path):
    argv = ["forward", "--config", str(CONFIGS / "forward.yaml"), "--replicates", "10"]
    a = _bytes(tmp_path, "a", argv, 1)
    b = _bytes(tmp_path, "b", [*argv, "--seed", "2"], 1)
    assert a != b


def test_workers_env(tmp_path, monkeypatch):
    argv = ["forward", "--config", str(CONFIGS / "forward.yaml"), "--replicates", "8"]
    a = _bytes(tmp_path, "a", argv, 1)
    monkeypatch.setenv("DORMCOAL_WORKERS", "2")
    out = tmp_path / "env"
    assert run_command([*argv, "--out", str(out)]) == 0
    assert (out / "forward.csv").read_bytes() == a
