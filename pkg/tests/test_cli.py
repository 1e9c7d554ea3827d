import csv
import json
import os

import pytest

from fdpwave import cli, config, experiments
from fdpwave.experiments import ExperimentConfig

SMALL = {
    "simulate": {"m": 4, "n": 64, "epsilon": 1.0, "mechanism": "laplace"},
    "rate-sweep": {"N_list": [256, 512, 1024, 2048], "reps": 50, "alpha": 0.8, "L_gen": 9},
    "tails": {"tail_draws": 10000, "tail_t_points": 6, "tail_m_list": [1, 4]},
    "hodge": {"hodge_reps": 1000, "hodge_N_list": [256, 1024], "hodge_points": 9, "epsilon": 1.0},
}


def _write(tmp_path, d, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def _csv_bodies(out):
    return {f: (out / f).read_bytes() for f in sorted(os.listdir(out)) if f.endswith(".csv") or f == "rate_fit.json"}


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_run_writes_manifest_and_hashes(kind, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.run([kind, "--config", _write(tmp_path, SMALL[kind]), "--out", str(out), "--seed", "0x2a"])
    assert code == 0
    printed = capsys.readouterr().out.split()
    man = json.loads((out / "manifest.json").read_text())
    assert {"command", "config", "config_hash", "seed", "threads", "versions", "wall_seconds", "files"} <= set(man)
    assert man["seed"] == 42 and man["command"] == kind and man["status"] == "ok"
    cfg = config.from_dict(man["config"])
    assert cfg.hash() == man["config_hash"]
    assert set(man["versions"]) >= {"fdpwave", "python", "numpy", "scipy"}
    csvs = [f for f in man["files"] if f.endswith(".csv")]
    assert csvs and all(str(out / f) in printed for f in man["files"])
    for f in csvs:
        with open(out / f, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["config_hash"] == man["config_hash"] for r in rows)


def test_rate_sweep_fit_json(tmp_path):
    out = tmp_path / "o"
    assert cli.run(["rate-sweep", "--config", _write(tmp_path, SMALL["rate-sweep"]), "--out", str(out)]) == 0
    (fit,) = json.loads((out / "rate_fit.json").read_text())
    assert {"slope", "stderr", "target", "verdict"} <= set(fit)
    assert fit["target"] == pytest.approx(-1.6 / 2.6)
    with open(out / "risk.csv", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    assert header == ["N", "m", "n", "epsilon", "mechanism", "estimator", "risk", "stderr", "theory", "ratio",
                      "config_hash"]


def test_same_seed_same_bytes_any_threads(tmp_path, monkeypatch):
    path = _write(tmp_path, SMALL["rate-sweep"])
    bodies = []
    for i, extra in enumerate((["--threads", "1"], ["--threads", "4"], [])):
        if not extra:
            monkeypatch.setenv("FDP_THREADS", "3")
        out = tmp_path / f"o{i}"
        assert cli.run(["rate-sweep", "--config", path, "--out", str(out), "--seed", "9", *extra]) == 0
        bodies.append(_csv_bodies(out))
    assert bodies[0] and bodies[0] == bodies[1] == bodies[2]


def test_validation_errors_exit_2(tmp_path, capsys):
    assert cli.run(["simulate", "--config", _write(tmp_path, {"m": 0}), "--out", str(tmp_path / "a")]) == 2
    assert "validation error" in capsys.readouterr().err
    assert cli.run(["simulate", "--config", _write(tmp_path, {"nope": 1}), "--out", str(tmp_path / "b")]) == 2
    assert "nope" in capsys.readouterr().err
    assert cli.run(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "c")]) == 2
    assert cli.run(["simulate", "--threads", "0", "--out", str(tmp_path / "d")]) == 2


def test_bad_env_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("FDP_THREADS", "many")
    assert cli.run(["simulate", "--out", str(tmp_path / "e")]) == 2


def test_bad_seed_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.run(["simulate", "--seed", "-1", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_runtime_error_exit_3(tmp_path, capsys, monkeypatch):
    def boom(cfg, out, threads):
        raise FloatingPointError("overflow")

    monkeypatch.setitem(experiments.RUNNERS, "simulate", boom)
    assert cli.run(["simulate", "--out", str(tmp_path / "x")]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_verify_pass_and_fail(tmp_path, capsys, monkeypatch):
    cfg = _write(tmp_path, {"verify_pairs": 16})
    assert cli.run(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 4 and all(ln.startswith("PASS") for ln in lines)

    monkeypatch.setattr(experiments, "verify_checks", lambda c: [("stub", False, "forced")])
    assert cli.run(["verify", "--out", str(tmp_path / "w")]) == 3
    cap = capsys.readouterr()
    assert "FAIL  stub" in cap.out and "verification failed" in cap.err
    man = json.loads((tmp_path / "w" / "manifest.json").read_text())
    assert man["status"] == "verification failed"


def test_list_defaults(capsys):
    assert cli.run(["list-defaults"]) == 0
    text = capsys.readouterr().out
    keys = [ln.split()[0] for ln in text.splitlines()]
    assert keys == list(ExperimentConfig().to_json())
    assert "kappa1" in keys and "burn_in" in keys
    assert any(ln.startswith("burn_in") and "5000" in ln for ln in text.splitlines())
