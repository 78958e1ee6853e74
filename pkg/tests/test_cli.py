import csv
import hashlib
import json

import pytest

from dynaprice.cli import main
from dynaprice.experiments import packaged_config

SIMULATE = """[experiment]
kind = simulate
seed = 11
scenarios = 2

[market]
family = strategic_undercutter
K = 4
H = 5
pi = 0.2
"""


def run(tmp_path, text, name="cfg.ini", out="out"):
    cfg = tmp_path / name
    cfg.write_text(text)
    return main(["run", "--config", str(cfg), "--out", str(tmp_path / out)])


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    names = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert names["table2"] == "table2" and names["sticky_policy"] == "solve_policy"


def test_demand_curve_flags_argmax(tmp_path):
    assert main(["run", "demand_curve", "--out", str(tmp_path / "dc")]) == 0
    with open(tmp_path / "dc" / "demand_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2000
    flagged = [r for r in rows if r["argmax"] == "1"]
    assert len(flagged) == 1 and float(flagged[0]["price"]) == 5.17


def test_manifest_hashes_every_output(tmp_path):
    assert run(tmp_path, SIMULATE) == 0
    out = tmp_path / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 11 and man["kind"] == "simulate"
    assert man["config_sha256"] == hashlib.sha256(SIMULATE.encode()).hexdigest()
    written = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(man["files"]) == written
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "numpy" in man["versions"]


def test_reruns_are_byte_identical(tmp_path):
    assert run(tmp_path, SIMULATE, out="a") == 0
    assert run(tmp_path, SIMULATE, out="b") == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())["files"]
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())["files"]
    assert a == b


def test_seed_override_changes_output(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(SIMULATE)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed-override", "12"]) == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert b["seed"] == 12 and a["files"] != b["files"]


def test_verify_run_against_itself(tmp_path, capsys):
    assert run(tmp_path, SIMULATE) == 0
    out = str(tmp_path / "out")
    assert main(["verify", out, "--baseline", out]) == 0
    out = capsys.readouterr().out
    assert "compared: runs.csv, summary.csv" in out and out.rstrip().endswith("OK")


def test_verify_needs_manifests(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["verify", str(tmp_path / "empty")]) == 1
    assert "no manifest.json" in capsys.readouterr().err


def test_verify_lists_missing_baselines(tmp_path, capsys):
    assert run(tmp_path, SIMULATE) == 0
    assert main(["verify", str(tmp_path / "out")]) == 1
    assert "missing baseline" in capsys.readouterr().out


@pytest.mark.parametrize(
    "text, where",
    [
        ("[experiment]\nkind = demand_curve\n[solver]\nc = 3\nbogus = 1\n", "cfg.ini:5: unknown key 'bogus'"),
        ("[experiment]\nkind = demand_curve\n\n[solver]\nc = abc\n", "cfg.ini:5: bad value for 'c'"),
        ("c = 3\n[experiment]\n", "cfg.ini:1: key outside any section"),
        ("[experiment]\nkind = simulate\nscenarios = 2\n", "needs an explicit seed"),
        ("[experiment]\nkind = sideways\n", "cfg.ini:2: unknown experiment kind"),
        ("[experiment]\nkind = calibrate\nseed = 1\n[calibration]\nmarket_file = nope.csv\nsales_file = s.csv\n",
         "file not found"),
    ],
)
def test_bad_config_exits_one_with_line(tmp_path, capsys, text, where):
    assert run(tmp_path, text) == 1
    assert where in capsys.readouterr().err


def test_numerical_failure_exits_two(tmp_path, capsys):
    # with this seed the three synthetic observations contain no sale
    text = "[experiment]\nkind = calibrate\nseed = 1\n[calibration]\nn_obs = 3\n"
    assert run(tmp_path, text) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_usage_errors_are_invalid_input():
    assert main(["run"]) == 1
    assert main(["run", "no_such_experiment"]) == 1
    assert main(["run", "demand_curve", "--jobs", "0"]) == 1


def test_packaged_configs_parse():
    from dynaprice.experiments import list_experiments, load_config, validate

    for name, kind in list_experiments():
        cfg = load_config(packaged_config(name))
        validate(cfg)
        assert cfg.kind == kind
