import socket
import subprocess
import sys
import time

import pytest

from evonas.cli import main
from evonas.report import CSV_HEADER

GLOBAL_INI = """\
[algorithm]
name = {name}
run_algorithm = elitist_ga
max_gen = 3
pop_size = 4
seed = {seed}
"""

TRAIN_INI = """\
[optimizer]
_optimizer_name = SGD
_batch_size = 64
_total_epoch = {epochs}

[LearningRate]
lr = 0.025
lr_strategy = CosineAnnealingLR

[dataset]
_name = cifar10
"""


def write_configs(tmp_path, name="demo", seed=7, epochs=50, extra_train=""):
    g = tmp_path / f"{name}_global.ini"
    t = tmp_path / f"{name}_train.ini"
    g.write_text(GLOBAL_INI.format(name=name, seed=seed), encoding="utf-8")
    t.write_text(TRAIN_INI.format(epochs=epochs) + extra_train, encoding="utf-8")
    return g, t


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_run_verb_completes_and_resumes(tmp_path, capsys):
    g, t = write_configs(tmp_path)
    code = run_cli("run", "--global-config", g, "--train-config", t, "--run-root", tmp_path / "runs")
    assert code == 0
    out = capsys.readouterr().out
    assert "best indi_gen" in out
    assert (tmp_path / "runs" / "demo" / "begin_2.txt").exists()
    # a second invocation replays from the cache without changing the logs
    before = (tmp_path / "runs" / "demo" / "begin_2.txt").read_bytes()
    assert run_cli("run", "--global-config", g, "--train-config", t, "--run-root", tmp_path / "runs") == 0
    assert (tmp_path / "runs" / "demo" / "begin_2.txt").read_bytes() == before


def test_run_verb_config_error_is_reported(tmp_path, capsys):
    g, t = write_configs(tmp_path)
    g.write_text(g.read_text().replace("elitist_ga", "nonsense"), encoding="utf-8")
    code = run_cli("run", "--global-config", g, "--train-config", t, "--run-root", tmp_path / "runs")
    assert code == 2
    assert "run_algorithm" in capsys.readouterr().err


def test_simulate_verb_reports_makespan(capsys):
    code = run_cli(
        "simulate", "--jobs", 10, "--worker-count", 1, "--slots-per-worker", 4,
        "--duration", "1.0", "--trace",
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "virtual makespan 3.000s" in out
    assert "finish" in out


def test_simulate_verb_with_crash(capsys):
    code = run_cli(
        "simulate", "--jobs", 4, "--worker-count", 2, "--slots-per-worker", 1,
        "--duration", "5.0", "--crash", "w0@2.0",
    )
    assert code == 0
    assert "virtual makespan" in capsys.readouterr().out


def test_retrain_and_compare_verbs(tmp_path, capsys):
    runs = tmp_path / "runs"
    for name, seed in (("alpha", 1), ("bravo", 2)):
        g, t = write_configs(tmp_path, name=name, seed=seed)
        assert run_cli("run", "--global-config", g, "--train-config", t, "--run-root", runs) == 0
    # retrain each best with a 600-epoch budget
    retrain_ini = tmp_path / "retrain_train.ini"
    retrain_ini.write_text(TRAIN_INI.format(epochs=600), encoding="utf-8")
    for name in ("alpha", "bravo"):
        assert run_cli("retrain", "--run-dir", runs / name, "--train-config", retrain_ini) == 0
        assert "retrained indi_gen" in capsys.readouterr().out
        assert (runs / name / "retrain.txt").exists()

    csv_path = tmp_path / "report.csv"
    code = run_cli("compare", runs / "alpha", runs / "bravo", "--csv", csv_path)
    assert code == 0
    out = capsys.readouterr().out
    assert "algorithm" in out and "gpu_days" in out
    lines = csv_path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3


def test_compare_verb_refuses_mixed_settings(tmp_path, capsys):
    runs = tmp_path / "runs"
    g1, t1 = write_configs(tmp_path, name="one", seed=1, epochs=50)
    g2, t2 = write_configs(tmp_path, name="two", seed=2, epochs=25)
    assert run_cli("run", "--global-config", g1, "--train-config", t1, "--run-root", runs) == 0
    assert run_cli("run", "--global-config", g2, "--train-config", t2, "--run-root", runs) == 0
    code = run_cli("compare", runs / "one", runs / "two")
    assert code == 2
    assert "different trainer settings" in capsys.readouterr().err
    assert run_cli("compare", runs / "one", runs / "two", "--allow-mixed") == 0


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_worker_subprocess_serves_run(tmp_path, capsys):
    """The worker CLI in a real subprocess, driven by a remote run."""
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "evonas.cli", "worker", "--listen", f"127.0.0.1:{port}", "--slots", "2"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            try:
                with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                    break
            except OSError:
                time.sleep(0.05)
        else:
            pytest.fail("worker subprocess never came up")
        g, t = write_configs(tmp_path, name="remote_demo", seed=9)
        code = run_cli(
            "run", "--global-config", g, "--train-config", t,
            "--run-root", tmp_path / "runs", "--workers", f"127.0.0.1:{port}=2",
        )
        assert code == 0
        assert "best indi_gen" in capsys.readouterr().out
        assert (tmp_path / "runs" / "remote_demo" / "begin_2.txt").exists()
    finally:
        proc.terminate()
        proc.wait(timeout=10)
