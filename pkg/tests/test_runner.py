import os

import pytest

from lieflow.cli import main
from lieflow.runner import ConfigError, ExperimentConfig, list_experiments, run

NAMES = ["nonuniqueness", "blowup", "regularization", "conservation", "convergence", "kiw",
         "commutator", "volume"]

BLOWUP_CFG = """# fast closed-form experiment
experiment = blowup
alpha = 0.8
deltas = [1e-2, 1e-4]
seed = 3
"""


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_parse_config_text():
    cfg = ExperimentConfig.from_text(BLOWUP_CFG)
    assert cfg.experiment == "blowup" and cfg.seed == 3
    assert cfg.params == {"alpha": 0.8, "deltas": [1e-2, 1e-4]}
    assert cfg.resolved()["times"] == [0.1, 1.0]


@pytest.mark.parametrize("text,msg", [
    ("experiment = blowup\nfoo = 1\n", "unknown key"),
    ("experiment = blowup\nalpha = 0.8\nalpha = 0.9\n", "duplicate"),
    ("experiment = blowup\nalpha = abc\n", "cannot parse"),
    ("alpha = 0.8\n", "missing key"),
    ("experiment = nope\n", "unknown experiment"),
    ("experiment = blowup\npaths = 10\n", "not used"),
    ("experiment blowup\n", "key=value"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_text(text)


def test_kp_constraint_is_named():
    with pytest.raises(ConfigError, match="kp < n"):
        ExperimentConfig.from_dict({"experiment": "nonuniqueness", "k": 2, "p": 2.0, "n": 3})


def test_empty_path_count_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "volume", "paths": 0})


def test_list_experiments():
    items = list_experiments()
    assert [n for n, _ in items] == NAMES
    assert items == list_experiments()
    desc = dict(items)
    assert "pathwise identity" in desc["kiw"]
    assert all(desc.values())


def test_outputs_are_byte_identical(tmp_path):
    cfg = ExperimentConfig.from_text(BLOWUP_CFG)
    a, b = tmp_path / "a", tmp_path / "b"
    r1 = run(cfg, str(a))
    r2 = run(ExperimentConfig.from_text(BLOWUP_CFG), str(b))
    assert r1.passed and r1.run_id == r2.run_id
    for f in ("checks.csv", "series.csv", "summary.json"):
        assert read(a / f) == read(b / f)
    head = read(a / "checks.csv").decode().splitlines()[0]
    assert head == "run_id,check_name,t,value,tolerance,pass"


def test_pass_flags_recomputable(tmp_path):
    import csv
    import json
    import operator
    run(ExperimentConfig.from_text(BLOWUP_CFG), str(tmp_path))
    rel = {k: v["relation"] for k, v in json.loads(read(tmp_path / "summary.json"))["checks"].items()}
    ops = {"<=": operator.le, ">=": operator.ge, "<": operator.lt}
    with open(tmp_path / "checks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    for row in rows:
        ok = ops[rel[row["check_name"]]](float(row["value"]), float(row["tolerance"]))
        assert int(row["pass"]) == int(ok)


def test_seed_changes_run_id():
    a = ExperimentConfig.from_text(BLOWUP_CFG)
    b = ExperimentConfig.from_text(BLOWUP_CFG.replace("seed = 3", "seed = 4"))
    assert a.run_id() != b.run_id()


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text(BLOWUP_CFG)
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert os.path.exists(tmp_path / "o" / "summary.json")
    assert "PASS" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("experiment = nonuniqueness\nk = 3\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "kp < n" in capsys.readouterr().err
    assert main(["list"]) == 0
    assert "kiw" in capsys.readouterr().out


def test_cli_failing_check_exit_status(tmp_path, monkeypatch):
    from lieflow import experiments
    spec = experiments.REGISTRY["blowup"]

    def failing(params, seed):
        res = experiments.Result()
        res.check("always_fails", 1.0, 0.0)
        return res
    monkeypatch.setattr(spec, "func", failing)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = blowup\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_shipped_configs_match_defaults():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in NAMES:
        cfg = ExperimentConfig.from_file(os.path.join(root, f"{name}.cfg"))
        assert cfg.experiment == name
        assert cfg.resolved() == ExperimentConfig.from_dict({"experiment": name}).resolved()
