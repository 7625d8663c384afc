import csv
import json
import os
import shutil
import subprocess
import sys

import pytest

from compassqec.cli import ConfigError, RunConfig, StageError, job_seed, main, run, run_stage


def _small(out, **kw):
    d = {
        "d": 3, "bases": ["Z"], "states": ["0"], "T": [1, 2, 3], "shots": 300,
        "noise": {"kind": "uniform", "p": 2e-3}, "leakage": {"per_measurement": 0.01},
        "calibration_shots": 600, "bootstrap": 20, "seed": 7, "out": str(out),
        "cutoffs": [0.5, 1.0],
    }
    d.update(kw)
    return d


@pytest.mark.parametrize("bad,match", [
    ({"shots": 0}, "shots"),
    ({"T": [4, 2]}, "sorted"),
    ({"T": [2, 2]}, "sorted"),
    ({"d": 4}, "odd"),
    ({"bases": ["Y"]}, "bases"),
    ({"noise": {"kind": "weird"}}, "unknown noise kind"),
    ({"cutoffs": [0.0]}, "cutoffs"),
    ({"colour": 3}, "unknown config keys"),
    ({"decoders": [{"name": "a"}, {"name": "a"}]}, "unique"),
    ({"gmm": None, "decoders": [{"name": "s", "variant": "soft"}]}, "IQ"),
    ({"noise": {"kind": "snapshot", "of": "truth"}}, "cannot be the truth"),
])
def test_config_errors(tmp_path, bad, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(_small(tmp_path / "r", **bad))


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_small(tmp_path / "r", shots=0)))
    assert main(["run", "--config", str(p)]) == 2
    assert "shots" in capsys.readouterr().err


def test_stage_without_inputs_names_stage(tmp_path):
    cfg = RunConfig.from_dict(_small(tmp_path / "r"))
    with pytest.raises(StageError) as ei:
        run_stage(cfg, "decode")
    assert ei.value.stage == "decode" and "run the 'build' stage" in str(ei.value)


def test_job_seed_stable():
    cfg = RunConfig.from_dict({"seed": 3})
    assert job_seed(cfg, "sample", "Z", "0", 2) == job_seed(cfg, "sample", "Z", "0", 2)
    assert job_seed(cfg, "sample", "Z", "0", 2) != job_seed(cfg, "sample", "Z", "0", 4)


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    a = RunConfig.from_dict(_small(base / "a"))
    b = RunConfig.from_dict(_small(base / "b"))
    run(a, workers=1)
    run(b, workers=2)
    return a, b


def test_run_writes_all_artifacts(two_runs):
    a, _ = two_runs
    for rel in ("config.json", "layout/patch.json", "layout/schedule.json", "circuits/Z0_T2.txt",
                "gmm/truth.json", "gmm/fitted.json", "shots/Z0_T3.shots", "reports/counts.json",
                "curves.csv", "fits.json", "tradeoff_Z.csv", "summary.json", "summary.csv",
                "dems/characterised-hard/Z0_T1.dem", "reports/characterised-soft+PS/Z0_T1.csv"):
        assert os.path.exists(os.path.join(a.out, rel)), rel
    s = json.loads(open(os.path.join(a.out, "summary.json")).read())
    assert s["baseline"] == "characterised-hard"
    assert {r["decoder"] for r in s["rows"]} == {"characterised-hard", "characterised-soft+PS"}
    assert s["provenance"]["config_hash"] == a.hash()
    rows = list(csv.reader(l for l in open(os.path.join(a.out, "summary.csv")) if not l.startswith("#")))
    assert rows[0][:3] == ["decoder", "basis", "variant"]


def test_same_seed_identical_regardless_of_workers(two_runs):
    a, b = two_runs
    for rel in ("summary.json", "summary.csv", "curves.csv", "tradeoff_Z.csv", "reports/counts.json"):
        assert open(os.path.join(a.out, rel)).read() == open(os.path.join(b.out, rel)).read(), rel


def test_stage_rerun_is_idempotent(two_runs, tmp_path):
    a, _ = two_runs
    c = RunConfig.from_dict(_small(tmp_path / "c"))
    shutil.copytree(a.out, c.out)
    before = open(os.path.join(c.out, "summary.json")).read()
    for st in ("fit", "report"):
        run_stage(c, st)
    assert open(os.path.join(c.out, "summary.json")).read() == before


def test_different_seed_changes_results(two_runs, tmp_path):
    a, _ = two_runs
    c = RunConfig.from_dict(_small(tmp_path / "c", seed=8))
    run(c)
    assert open(os.path.join(c.out, "reports/counts.json")).read() != open(os.path.join(a.out, "reports/counts.json")).read()


def test_command_line_flags(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_small(tmp_path / "r", T=[1, 2], gmm=None, leakage=None, shots=100)))
    out = tmp_path / "o"
    assert main(["run", "--config", str(p), "--out", str(out), "--variant", "hard", "--seed", "2"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert [r["decoder"] for r in s["rows"]] == ["hard"]
    assert s["config"]["seed"] == 2


def test_console_entry_point(tmp_path):
    exe = shutil.which("compassqec")
    cmd = [exe] if exe else [sys.executable, "-m", "compassqec.cli"]
    r = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "calibrate-gmm" in r.stdout
