import json
import subprocess
import sys
from pathlib import Path

import pytest

from varlab import cli, runs

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TOY_PHI = {"problem": {"kind": "toy", "name": "linear-quadratic"}, "grid": [0.25, 1.0, 4.0]}
FAST = {
    "phi-curve": TOY_PHI,
    "hunt": {"problem": {"kind": "toy", "name": "oscillating"}, "mu": 0.001,
             "ladder": {"mode": "decreasing", "start": 0.01, "levels": 4}, "budget": 4},
    "bifurcate": {"lambda_grid": {"start": 0.2, "stop": 0.002, "num": 8}, "N": 32},
    "fixed-point": {"potential": {"kind": "linear", "c": 1.0}, "rho": 4.0,
                    "radii": {"start": 0.5, "stop": 16, "num": 12}},
    "check": {"f": "xi^3", "growth": {"a": 1, "q": 3}, "ar": {"c": 4, "r": 1}, "limit_zero": True},
    "mountain-pass": {"problem": {"kind": "toy", "name": "double-well"}, "mu": 0,
                      "end_a": {"point": [-1, 0]}, "end_b": {"point": [1, 0]}},
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(path)


def run(tmp_path, command, cfg, *extra, out="runs"):
    code = cli.main([command, "--config", write(tmp_path, cfg), "--out", str(tmp_path / out),
                     *extra])
    dirs = runs.list_runs(tmp_path / out)
    return code, dirs


def test_phi_curve_outputs(tmp_path, capsys):
    code, dirs = run(tmp_path, "phi-curve", TOY_PHI)
    assert code == 0 and len(dirs) == 1
    d = dirs[0]
    rows = runs.read_csv(d / "phi_curve.csv")
    assert [float(r["phi_hat"]) for r in rows] == pytest.approx([1.0, 0.5, 0.25], abs=1e-4)
    raw = (d / "phi_curve.csv").read_bytes()
    assert raw.count(b"\r\n") == 4
    report = json.loads((d / "report.json").read_text())
    assert report["run"]["config_hash"] == d.name
    manifest = (d / "MANIFEST").read_text().splitlines()
    assert any(line.endswith("  phi_curve.csv") for line in manifest)
    assert "run:" in capsys.readouterr().out


@pytest.mark.parametrize("command", sorted(FAST))
def test_commands_run_and_verify(tmp_path, command, capsys):
    code, dirs = run(tmp_path, command, FAST[command])
    assert code == 0
    assert cli.verify(dirs[0]) == []
    assert cli.main(["verify", str(dirs[0])]) == 0
    out = capsys.readouterr().out
    assert '"ok": true' in out


def test_verify_detects_tampering(tmp_path):
    code, dirs = run(tmp_path, "phi-curve", TOY_PHI)
    path = dirs[0] / "phi_curve.csv"
    rows = path.read_text().splitlines()
    header = rows[0].split(",")
    cells = rows[1].split(",")
    cells[header.index("phi_hat")] = "0.75"
    rows[1] = ",".join(cells)
    path.write_text("\r\n".join(rows) + "\r\n")
    assert cli.verify(dirs[0])
    assert cli.main(["verify", str(dirs[0])]) == 4


def test_check_verdict_keys(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "check.json").read_text())
    code, dirs = run(tmp_path, "check", cfg)
    assert code == 0
    verdicts = json.loads((dirs[0] / "verdicts.json").read_text())
    assert "thm8.osc" in verdicts or "thm9.osc" in verdicts
    printed = json.loads(capsys.readouterr().out.splitlines()[0])
    assert all(isinstance(v, str) for v in printed.values())


def test_check_ar_failure_keys(tmp_path):
    code, dirs = run(tmp_path, "check", {"f": "xi", "ar": {"c": 3, "r": 1}, "limit_zero": True})
    v = json.loads((dirs[0] / "verdicts.json").read_text())
    assert v["thmA.2"]["status"] == "fails" and v["thmA.3"]["status"] == "fails"
    assert v["thmA.2"]["witnesses"]


def test_problem1_not_applicable(tmp_path):
    cfg = {"p": 2, "f": "xi", "grid": [1.0], "growth": {"a": 1, "q": 1}, "ar": {"c": 3, "r": 1}}
    code, dirs = run(tmp_path, "problem1", cfg)
    assert code == 0
    rep = json.loads((dirs[0] / "report.json").read_text())
    assert rep["answer"] == "not-applicable"


def test_problem3_ratio_dropped(tmp_path):
    cfg = {"f": "distosc(2)", "p": 2,
           "sequences": {"a": "fact(k+1)", "b": "2*fact(k+1)"},
           "problem": {"kind": "example1", "p": 2, "N": 16}, "mu": 1,
           "ladder": {"start": 1000, "levels": 2}, "budget": 2}
    code, dirs = run(tmp_path, "problem3", cfg)
    assert code in (0, 4)
    cond = json.loads((dirs[0] / "conditions.json").read_text())
    assert "dropped" in json.dumps(cond)
    assert cli.verify(dirs[0]) == []


@pytest.mark.parametrize("cfg, expected", [
    ({"grid": [1.0]}, 2),                                           # missing problem
    ({**TOY_PHI, "extra": 1}, 2),                                   # unknown key
    ({**TOY_PHI, "grid": []}, 2),                                   # empty grid
    ({**TOY_PHI, "command": "hunt"}, 2),                            # command mismatch
    ({"problem": {"kind": "dirichlet", "N": 8, "f": "xi"}, "grid": [1.0]}, 2),
    ({"problem": {"kind": "dirichlet", "p": 2, "N": 8, "f": "xi^^3"}, "grid": [1.0]}, 3),
    ({"problem": {"kind": "dirichlet", "p": 2, "N": 8, "f": "bogus(xi)"}, "grid": [1.0]}, 3),
    ({"problem": {"kind": "dirichlet", "p": 2, "N": 8, "f": "log(xi)"}, "grid": [1.0]}, 3),
    ("{not json", 2),
])
def test_exit_codes(tmp_path, cfg, expected, capsys):
    code, dirs = run(tmp_path, "phi-curve", cfg)
    assert code == expected
    assert dirs == []
    assert capsys.readouterr().err.startswith("error:")


def test_parse_error_mentions_field(tmp_path, capsys):
    cfg = {"problem": {"kind": "dirichlet", "p": 2, "N": 8, "f": "xi^^3"}, "grid": [1.0]}
    run(tmp_path, "phi-curve", cfg)
    err = capsys.readouterr().err
    assert "problem.f" in err and "offset 3" in err


def test_missing_field_path(tmp_path, capsys):
    run(tmp_path, "phi-curve", {"problem": {"kind": "dirichlet", "N": 8, "f": "xi"}, "grid": [1]})
    assert "problem.p" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["phi-curve", "--config", str(tmp_path / "nope.json")]) == 2


def test_nonconverged_exit(tmp_path):
    cfg = {"problem": {"kind": "dirichlet", "p": 2, "N": 32, "f": "xi^3"}, "mu": 0.5,
           "end_a": {"sine": 0}, "end_b": {"sine": 10}, "tol": 1e-30}
    code, _ = run(tmp_path, "mountain-pass", cfg)
    assert code == 4


def test_seed_override_changes_hash(tmp_path):
    run(tmp_path, "phi-curve", TOY_PHI)
    run(tmp_path, "phi-curve", TOY_PHI, "--seed", "5")
    assert len(runs.list_runs(tmp_path / "runs")) == 2


def test_figures(tmp_path):
    code, dirs = run(tmp_path, "phi-curve", TOY_PHI, "--figures")
    png = dirs[0] / "phi_curve.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "phi_curve.png" in (dirs[0] / "MANIFEST").read_text()


def test_jobs_byte_identical(tmp_path):
    cfg = FAST["hunt"]
    run(tmp_path, "hunt", cfg, "--jobs", "1", out="a")
    run(tmp_path, "hunt", cfg, "--jobs", "8", out="b")
    (a,), (b,) = runs.list_runs(tmp_path / "a"), runs.list_runs(tmp_path / "b")
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes()


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_sample_configs_validate(path):
    from varlab import config

    data = json.loads(path.read_text())
    cfg = config.validate(data)
    cli.preflight(cfg)


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, TOY_PHI)
    res = subprocess.run([sys.executable, "-m", "varlab.cli", "phi-curve", "--config", cfg,
                          "--out", str(tmp_path / "r")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "run:" in res.stdout
