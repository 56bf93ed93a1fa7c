import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dpmkit.cli import CSV_HEADER, cmd_compare, cmd_plan, main
from dpmkit.config import ConfigError, RunConfig


def write_config(tmp_path, name="cfg.json", **fields):
    path = tmp_path / name
    fields.setdefault("output", str(tmp_path / "out.csv"))
    path.write_text(json.dumps(fields))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_plan_output(capsys):
    assert main(["plan", "--nfe", "15"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "3 3 3 3 2 1"
    assert lines[1] == "segment,order,t_start,t_end,lambda_start,lambda_end"
    assert len(lines) == 2 + 6
    assert cmd_plan(10).splitlines()[0] == "3 3 3 1"
    assert cmd_plan(2).splitlines()[0] == "2"


def test_plan_endpoints():
    rows = [line.split(",") for line in cmd_plan(11, T=1.0, eps=1e-3).splitlines()[2:]]
    assert float(rows[0][2]) == 1.0 and float(rows[-1][3]) == 1e-3


@pytest.mark.parametrize("argv", [["plan", "--nfe", "0"], ["plan"], ["nosuch"], ["plan", "--nfe", "5", "--eps", "2"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


@pytest.mark.parametrize(
    "fields",
    [
        {"solver": "dpm9"},
        {"schedule": "sigmoid"},
        {"bogus": 1},
        {"eps": 0.5, "T": 0.4},
        {"weights": [0.5, 0.6], "means": [[0.0], [1.0]], "scales": [1, 1], "problem": "mixture", "dim": 1},
        {"adaptive": {"rtol": -1.0}, "solver": "dpm12"},
        {"adaptive": {"nonsense": 1.0}, "solver": "dpm12"},
    ],
)
def test_config_errors_exit_2(tmp_path, fields):
    assert main(["sample", "--config", str(write_config(tmp_path, **fields))]) == 2


def test_unreadable_and_invalid_config(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["compare", "--config", str(bad)]) == 2


def test_solver_failure_exits_3(tmp_path, capsys):
    path = write_config(tmp_path, solver="dpm23", adaptive={"max_iter": 2})
    assert main(["sample", "--config", str(path)]) == 3
    assert "ConvergenceError" in capsys.readouterr().err


def test_compare_nfe_must_split_evenly(tmp_path):
    assert main(["compare", "--config", str(write_config(tmp_path, compare_nfe=[10]))]) == 2


def test_convergence_csv(tmp_path, capsys):
    path = write_config(tmp_path, solver="dpm1", steps=[10, 20, 40, 80])
    assert main(["convergence", "--config", str(path)]) == 0
    order = float(capsys.readouterr().out.split(":")[1])
    assert 0.7 <= order <= 1.7
    rows = read_rows(tmp_path / "out.csv")
    assert list(rows[0]) == CSV_HEADER
    assert [int(r["nfe"]) for r in rows] == [10, 20, 40, 80]
    assert all(r["solver"] == "dpm1" and r["schedule"] == "linear" for r in rows)


def test_convergence_nfe_sweep(tmp_path, capsys):
    path = write_config(tmp_path, solver="dpm3", nfe=[15, 30, 60, 120], schedule="cosine")
    assert main(["convergence", "--config", str(path)]) == 0
    rows = read_rows(tmp_path / "out.csv")
    assert [int(r["steps"]) for r in rows] == [5, 10, 20, 40]
    assert 2.7 <= float(capsys.readouterr().out.split(":")[1]) <= 3.7


def test_convergence_rejects_adaptive(tmp_path):
    assert main(["convergence", "--config", str(write_config(tmp_path, solver="dpm12"))]) == 2


def test_output_is_deterministic_across_thread_counts(tmp_path, monkeypatch):
    path = write_config(tmp_path, solver="dpm2", steps=[4, 8, 16, 32])
    outputs = []
    for threads in ("1", "3", "8"):
        monkeypatch.setenv("DPMKIT_THREADS", threads)
        out = tmp_path / f"run{threads}.csv"
        assert main(["convergence", "--config", str(path), "--output", str(out)]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("DPMKIT_THREADS", "many")
    assert main(["convergence", "--config", str(write_config(tmp_path, steps=[4, 8, 16]))]) == 2


def test_floats_round_trip_exactly(tmp_path):
    path = write_config(tmp_path, solver="dpm3", steps=[3, 6, 12])
    assert main(["convergence", "--config", str(path)]) == 0
    for row in read_rows(tmp_path / "out.csv"):
        assert repr(float(row["rms_error"])) == repr(float(format(float(row["rms_error"]), ".17g")))


@pytest.fixture(scope="module")
def compare_rows():
    return cmd_compare(RunConfig(problem="mixture", n_fine=20_000))


def test_compare_table_shape(compare_rows):
    methods = {r[0] for r in compare_rows}
    assert {"rk2_t", "rk2_lambda", "dpm2", "rk3_t", "rk3_lambda", "dpm3", "ddim"} <= methods
    for row in compare_rows:
        assert row[3] in (12, 24, 48)
        cost = {"ddim": 1, "dpm1": 1}.get(row[0], 2 if "2" in row[0] else 3)
        assert row[4] * cost == row[3]


def test_compare_ddim_equals_dpm1(compare_rows):
    err = {(r[0], r[3]): r[6] for r in compare_rows}
    for k in (12, 24, 48):
        assert err[("ddim", k)] == pytest.approx(err[("dpm1", k)], rel=1e-12)


@pytest.mark.xfail(strict=True, reason="first-order methods stay near 1e-2 at 48 evaluations on both toys")
@pytest.mark.parametrize("problem", ["gaussian", "mixture"])
def test_compare_all_methods_below_1e3_at_48(problem):
    rows = cmd_compare(RunConfig(problem=problem, compare_nfe=[48]))
    assert all(r[6] < 1e-3 for r in rows)


def test_compare_high_order_wins_at_48(compare_rows):
    # reported, loosely: third-order exponential steps beat DDIM
    err = {(r[0], r[3]): r[6] for r in compare_rows}
    assert err[("dpm3", 48)] < err[("ddim", 48)]


def test_sample_budget_run(tmp_path, capsys):
    path = write_config(tmp_path, solver="dpm-fast", budget=10, problem="mixture")
    assert main(["sample", "--config", str(path)]) == 0
    assert capsys.readouterr().out.split()[0] == "nfe=10"
    with open(tmp_path / "out.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "x0,x1,x2,x3" and len(lines) == 1 + 8


@pytest.mark.parametrize("solver,cost", [("dpm12", 2), ("dpm23", 3)])
@pytest.mark.parametrize("batch", [False, True])
def test_sample_adaptive_nfe(tmp_path, capsys, solver, cost, batch):
    path = write_config(tmp_path, solver=solver, adaptive={"batch": batch})
    assert main(["sample", "--config", str(path)]) == 0
    fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    assert int(fields["nfe"]) % cost == 0
    assert int(fields["nfe"]) == cost * (int(fields["accepted"]) + int(fields["rejected"]))
    assert int(fields["solves"]) == (1 if batch else 8)


def test_sample_seed_reproducible(tmp_path):
    outs = []
    for i, seed in enumerate((3, 3, 4)):
        out = tmp_path / f"s{i}.csv"
        path = write_config(tmp_path, f"c{i}.json", seed=seed, output=str(out), solver="dpm2", steps=[6])
        assert main(["sample", "--config", str(path)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_initial_states_are_standard_normal():
    x = RunConfig(n_samples=20000, dim=2, seed=1).initial_states()
    assert abs(x.mean()) < 0.03 and abs(x.std() - 1) < 0.03


def test_rng_seed_alias():
    assert RunConfig.from_dict({"rng_seed": 9}).seed == 9
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"rng_seed": 9, "seed": 1})


def test_config_defaults_are_valid():
    cfg = RunConfig.from_dict({})
    assert cfg.end_time(10) == 1e-3 and cfg.end_time(20) == 1e-4
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1, 2])


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dpmkit.cli", "plan", "--nfe", "6", "--schedule", "cosine"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "3 2 1"
    lambdas = [float(line.split(",")[4]) for line in proc.stdout.splitlines()[2:]]
    assert np.all(np.diff(lambdas) > 0)
