import csv
import json
import math

import pytest

from levy_she import cli
from levy_she.config import ExperimentConfig, dumps, loads

from conftest import KAPPA

BASE = f"""
seed = 7
[measure]
family = "PointMass"
z0 = 1.0
mass = 1.0
[model]
d = 1
kappa = {KAPPA!r}
t = 1.0
[tails]
r_min = 1.0
r_max = 1000.0
per_decade = 5
[simulate]
grid_n = 11
[mc_tail]
estimand = "Ybar"
n_replicates = 2000
r_min = 0.5
r_max = 20.0
replicates_csv = true
[growth_test]
rate = {{form = "PowerLog", a = 0.5, b = 1.0}}
[peaks]
rate = {{form = "PowerLog", a = 0.5, b = 1.0}}
n_max = 200
runs = 3
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(BASE)
    return path


def data_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


@pytest.mark.parametrize(
    "command,files",
    [
        ("tails", ["tails.csv"]),
        ("simulate", ["field.csv"]),
        ("mc-tail", ["mc_tail.csv", "replicates.csv"]),
        ("growth-test", ["growth.json"]),
        ("peaks", ["peaks.json", "peaks.csv"]),
    ],
)
def test_subcommands_write_artifacts(config, tmp_path, command, files):
    out = tmp_path / "out"
    assert cli.main([command, str(config), "--out", str(out)]) == 0
    for name in files:
        assert (out / name).exists()
    manifest = json.loads((out / f"manifest_{command.replace('-', '_')}.json").read_text())
    assert manifest["files"] == files and manifest["seed"] == 7


def test_tails_csv_layout(config, tmp_path):
    assert cli.main(["tails", str(config), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "tails.csv").read_text()
    assert text.startswith("# schema=1\n")
    rows = data_rows(tmp_path / "tails.csv")
    assert tuple(rows[0]) == cli.TAIL_HEADER
    assert {r[0] for r in rows[1:]} == {"eta", "tau", "eta0", "etaA"}
    for r in rows[1:]:
        float(r[2])


def test_invalid_log_tail_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BASE.replace('family = "PointMass"\nz0 = 1.0\nmass = 1.0', 'family = "LogTail"\nbeta = 0.4'))
    assert cli.main(["tails", str(path), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "mild_solution_exists" in err and "beta > d/2" in err


def test_missing_file_exits_2(tmp_path):
    assert cli.main(["tails", str(tmp_path / "absent.toml")]) == 2


def stable_config(tmp_path):
    path = tmp_path / "stable.toml"
    text = BASE.replace('family = "PointMass"\nz0 = 1.0\nmass = 1.0', 'family = "StableLike"\nalpha = 0.8\nc = 1.0')
    path.write_text(text.replace("d = 1", "d = 3"))
    return path


def test_failed_gate_is_config_invalid(tmp_path, capsys):
    assert cli.main(["peaks", str(stable_config(tmp_path)), "--out", str(tmp_path)]) == 2
    assert "local_sup_finite" in capsys.readouterr().err


def test_sup_infinite_during_run_exits_3(tmp_path, capsys):
    path = stable_config(tmp_path)
    path.write_text(path.read_text().replace('estimand = "Ybar"', 'estimand = "supA_grid"'))
    assert cli.main(["mc-tail", str(path), "--out", str(tmp_path)]) == 3
    assert "SUP_INFINITE" in capsys.readouterr().err


def test_reruns_are_byte_identical(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["mc-tail", str(config), "--out", str(out)]) == 0
    assert (a / "mc_tail.csv").read_bytes() == (b / "mc_tail.csv").read_bytes()


def test_seed_override(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", str(config), "--out", str(a)]) == 0
    assert cli.main(["simulate", str(config), "--out", str(b), "--seed", "8"]) == 0
    assert (a / "field.csv").read_text() != (b / "field.csv").read_text()
    assert "# seed=8" in (b / "field.csv").read_text()


def test_config_round_trip():
    cfg = loads(BASE)
    again = loads(dumps(cfg))
    assert again.to_dict() == cfg.to_dict()
    assert isinstance(again, ExperimentConfig) and again.seed == 7


def test_unknown_section_rejected():
    with pytest.raises(Exception, match="unknown config entry"):
        loads(BASE + "\n[plots]\nx = 1\n")


def test_twelve_significant_digits():
    assert cli.fmt(math.pi) == "3.14159265359"
    assert cli.fmt(1e-20 / 3) == "3.33333333333e-21"
    assert cli.fmt(3) == "3" and cli.fmt(None) == ""
