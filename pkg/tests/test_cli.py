import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from paldp import cli, schemas
from paldp.measures import PairMeasure, PathMeasure
from paldp.rates import pi_f
from paldp.weights import WeightSpec

TWO_COLORS = """
[colors]
alphabet = r, b
law = 0.3, 0.7

[weights]
gamma = 1
beta = 1
"""


def run(tmp_path, *argv, out="out"):
    target = tmp_path / out
    code = cli.main([*argv, "--out", str(target)])
    return code, target


def check_outputs(target: Path):
    manifest = json.loads((target / "manifest.json").read_text())
    schemas.validate_json("manifest", manifest)
    for name in manifest["outputs"]:
        assert (target / name).exists()
    return manifest


def test_limit_dist(tmp_path):
    code, out = run(tmp_path, "limit-dist", "--kmax", "10")
    assert code == 0
    rows = (out / "limit_dist.csv").read_text().splitlines()
    assert rows[1].startswith("0,0.66666666666666")
    assert rows[2].startswith("1,0.16666666666666")
    assert rows[3].startswith("2,0.06666666666666")
    check_outputs(out)


def test_oracle_table(tmp_path):
    code, out = run(tmp_path, "oracle", "--n", "4")
    assert code == 0
    rows = (out / "oracle_outcomes.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == 6
    assert sum(Fraction(int(r.split(",")[3]), int(r.split(",")[4])) for r in rows) == 1
    law = (out / "oracle_law.csv").read_text().strip().splitlines()[1:]
    assert {r.split(",")[1] + "/" + r.split(",")[2] for r in law} == {"2/5", "8/15", "1/15"}


def test_generate_is_reproducible(tmp_path):
    cfg = tmp_path / "two.ini"
    cfg.write_text(TWO_COLORS)
    _, a = run(tmp_path, "generate", "--n", "2000", "--seed", "5", "--grid", "4", "--config", str(cfg), out="a")
    _, b = run(tmp_path, "generate", "--n", "2000", "--seed", "5", "--grid", "4", "--config", str(cfg), out="b")
    for name in ("eventlog.csv", "snapshots.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = check_outputs(a), check_outputs(b)
    assert ma["outputs"] == mb["outputs"] and ma["config_sha256"] == mb["config_sha256"]
    assert ma["seed"] == 5


def test_rate_round_trip(tmp_path):
    _, out = run(tmp_path, "limit-dist", "--kmax", "200", out="ld")
    code, out = run(tmp_path, "rate", "--which", "I", "--measure", str(out / "limit_dist.csv"))
    assert code == 0
    obj = json.loads((out / "rate.json").read_text())
    assert abs(obj["value"]) < 1e-10


def test_rate_path_measures(tmp_path):
    spec = WeightSpec.plain()
    pi = pi_f(spec, kmax=30)
    (tmp_path / "omega.json").write_text(PairMeasure.from_degree_measure(pi).to_json())
    (tmp_path / "nu.json").write_text(PathMeasure.constant([pi], [1.0]).to_json())
    for which in ("Jtilde", "K"):
        code, out = run(tmp_path, "rate", "--which", which, "--measure", str(tmp_path / "omega.json"),
                        "--path", str(tmp_path / "nu.json"), out=which)
        assert code == 0
        value = json.loads((out / "rate.json").read_text())["value"]
        expected = float(pi.probs @ np.log(spec.f_table(0, 30)[:, 0] / 2.0))
        assert value == pytest.approx(expected, abs=1e-12)


def test_lln_small(tmp_path):
    code, out = run(tmp_path, "lln", "--n", "3000", "--reps", "2", "--seed", "7")
    assert code == 0
    obj = json.loads((out / "lln.json").read_text())
    assert len(obj["tv"]) == 2 and len(obj["tv_tail_law"]) == 2


def test_rare_event_small(tmp_path):
    code, out = run(tmp_path, "rare-event", "--n", "20", "--reps", "500", "--event", "M(0)>=0.5",
                    "--kmax", "8")
    assert code == 0
    obj = json.loads((out / "rare_event.json").read_text())
    assert obj["naive"]["reps"] == 500 and obj["is"]["reps"] == 500


def test_minimize_and_contract(tmp_path):
    code, out = run(tmp_path, "minimize", "--constraints", "M(0)>=0.9", "--kmax", "3", out="m")
    assert code == 0
    assert json.loads((out / "minimize.json").read_text())["value"] == pytest.approx(1.29906, abs=1e-4)
    cfg = tmp_path / "two.ini"
    cfg.write_text(TWO_COLORS)
    code, out = run(tmp_path, "contract", "--config", str(cfg), "--kmax", "4", out="c")
    assert code == 0
    assert abs(json.loads((out / "contract.json").read_text())["gap"]) <= 1e-4


def test_decay_scan(tmp_path):
    code, out = run(tmp_path, "decay-scan", "--n-list", "3,4,5")
    assert code == 0
    rows = (out / "decay_scan.csv").read_text().strip().splitlines()
    assert rows[1].split(",")[5] == "1/3" and rows[2].split(",")[5] == "1/15"


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["generate", "--n", "abc"],
    ["rate", "--measure", "missing.csv"],
    ["generate", "--n", "1"],
    ["oracle", "--n", "12"],
    ["rare-event", "--event", "M(0)>>1"],
])
def test_validation_errors_exit_2(tmp_path, argv, capsys):
    code, out = run(tmp_path, *argv)
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    schemas.validate_json("error", record)
    assert json.loads((out / "error.json").read_text()) == record


def test_invalid_spec_exit_2(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[weights]\ngamma = 0.3\nbeta = 0.3\n")
    code, _ = run(tmp_path, "generate", "--config", str(cfg))
    assert code == 2


def test_runtime_error_exit_3(tmp_path, monkeypatch):
    def boom(run):
        raise RuntimeError("worker died")
    monkeypatch.setitem(cli.COMMANDS, "generate", (boom, ""))
    code, out = run(tmp_path, "generate")
    assert code == 3
    assert json.loads((out / "error.json").read_text())["exit_code"] == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "paldp", "limit-dist", "--kmax", "3", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kmax"] == 3


def test_experiment_section_supplies_defaults(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[weights]\ngamma = 1\nbeta = 2\n[experiment]\nkmax = 4\n")
    code, out = run(tmp_path, "limit-dist", "--config", str(cfg))
    assert code == 0
    rows = (out / "limit_dist.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 5 + 1
    assert float(rows[1].split(",")[1]) == pytest.approx(0.6, abs=1e-15)
