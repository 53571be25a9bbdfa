import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import constant_mut, one_channel_profile
from surrofal import benchmarks
from surrofal.benchmarks import Benchmark
from surrofal.campaign import (
    ConfigError,
    ExperimentConfig,
    load_config,
    load_sweep,
    normalize_time_units,
    pareto_front,
    read_rows,
    replay,
    run_campaign,
    same_row,
    sweep,
)
from surrofal.cli import main
from surrofal.models import FunctionModel
from surrofal.search import generate
from surrofal.sysid import SurrogateModel, simulate


@pytest.fixture
def toy_models(monkeypatch):
    p = one_channel_profile()

    def boom(d):
        raise RuntimeError("solver crashed")

    monkeypatch.setitem(benchmarks.BENCHMARKS, "always", lambda: Benchmark(
        "always", constant_mut(3.0, step=0.1), p, "G[0,10] (y < 2)", 10))
    monkeypatch.setitem(benchmarks.BENCHMARKS, "crash", lambda: Benchmark(
        "crash", FunctionModel("crash", ("u",), ("y",), boom, step=0.1), p, "G[0,10] (y < 2)", 10))


def uniform(**kw):
    return ExperimentConfig(strategy={"name": "uniform"}, **kw)


def strip_wall(rows):
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]


def test_time_units_normalised():
    assert normalize_time_units("G[0,24h] (error < 2)") == "G[0,86400] (error < 2)"
    assert normalize_time_units("F[1.5min, 2 min] (h > 1)") == "F[90, 120] (h > 1)"
    assert normalize_time_units("G[0,10] (h < 3)") == "G[0,10] (h < 3)"


def test_always_violating_campaign(toy_models, tmp_path):
    rep = run_campaign(uniform(model="always"), tmp_path)
    assert rep.effectiveness == 1.0 and len(rep.rows) == 1
    rows = read_rows(tmp_path / "rows.csv")
    assert rows[0]["outcome"] == "violation_found" and rows[0]["mut_executions"] == 1
    assert (tmp_path / "runs" / "seed_0" / "failing_input.json").exists()


def test_rows_csv_shape_and_seeds(tmp_path):
    rep = run_campaign(uniform(model="heat2r", repetitions=4, seed=10, max_executions=5), tmp_path)
    lines = (tmp_path / "rows.csv").read_text().splitlines()
    assert lines[0] == "seed,mode,outcome,best_objective,mut_executions,iterations,wall_ms"
    assert len(lines) == 5
    assert [r["seed"] for r in rep.rows] == [10, 11, 12, 13]
    assert 0.0 <= rep.effectiveness <= 1.0


def test_campaigns_are_reproducible_and_parallel_safe(tmp_path):
    cfg = ExperimentConfig(model="heat2r", mode="surrogate", strategy="uniform", structure="arx",
                           orders=(2, 2, 1), max_executions=20, max_refinements=3, repetitions=3)
    a = run_campaign(cfg, tmp_path / "a")
    b = run_campaign(cfg, tmp_path / "b", parallel=3)
    assert strip_wall(a.rows) == strip_wall(b.rows)
    assert strip_wall(read_rows(tmp_path / "a" / "rows.csv")) == strip_wall(read_rows(tmp_path / "b" / "rows.csv"))


def test_surrogate_file_round_trips(tmp_path):
    cfg = ExperimentConfig(model="heat2r", mode="surrogate", strategy="uniform", structure="arx",
                           orders=(2, 2, 1), max_executions=10, max_refinements=2)
    run_campaign(cfg, tmp_path)
    d = json.loads((tmp_path / "runs" / "seed_0" / "surrogate.json").read_text())
    assert d["structure"] == "arx" and d["orders"] == [2, 2, 1] and "version" in d
    model = SurrogateModel.from_dict(d)
    b = benchmarks.get_benchmark("heat2r")
    u = generate(b.profile, np.random.default_rng(3)).inputs
    again = SurrogateModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(simulate(model, u).matrix(), simulate(again, u).matrix())


def test_failures_are_recorded_in_row(toy_models, tmp_path):
    rep = run_campaign(uniform(model="crash", repetitions=2), tmp_path)
    assert [r["outcome"] for r in rep.rows] == ["error", "error"]
    assert "solver crashed" in (tmp_path / "runs" / "seed_1" / "error.txt").read_text()


def test_replay_reproduces_row(tmp_path):
    cfg = uniform(model="fuelctl", repetitions=3, max_executions=10)
    rep = run_campaign(cfg, tmp_path)
    row, recorded = replay(tmp_path, 2)
    assert recorded is not None and same_row(row, recorded)
    assert same_row(row, rep.rows[2])


def test_missing_strategy_is_a_config_error():
    with pytest.raises(ConfigError, match="strategy"):
        run_campaign(ExperimentConfig(model="heat2r"))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": "heat2r", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig(model="heat2r", repetitions=0)


def test_shipped_configs_load():
    for name in ("heat2r", "autotrans", "fuelctl", "satlite"):
        cfg = load_config(name)
        assert cfg.model == name and cfg.max_refinements == 10
    assert load_config("autotrans").max_executions == 1000
    configs = load_sweep("heat2r_sweep")
    assert len(configs) == 20 and {c.structure for c in configs} == {"arx", "armax", "bj", "ss"}


# ---------------------------------------------------------------- pareto


def brute_force_front(points):
    def dominates(q, p):
        return q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1])
    return [not any(dominates(q, p) for q in points) for p in points]


@given(st.lists(st.tuples(st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
                          st.integers(1, 10).map(float)), min_size=1, max_size=25))
def test_pareto_matches_brute_force(points):
    assert pareto_front(points) == brute_force_front(points)


def test_pareto_examples():
    assert pareto_front([(0.5, 3.0)]) == [True]
    assert pareto_front([(0.9, 2.0), (0.5, 4.0)]) == [True, False]


def test_sweep_single_and_validation(tmp_path):
    base = dict(model="heat2r", mode="surrogate", strategy="uniform", max_executions=10,
                max_refinements=2, repetitions=2)
    table = sweep([ExperimentConfig(structure="arx", orders=(2, 2, 1), **base)], tmp_path)
    assert len(table) == 1 and table[0].pareto
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 2
    with pytest.raises(ConfigError):
        sweep([ExperimentConfig(structure="arx", orders=(2, 2, 1), **base),
               ExperimentConfig(structure="arx", orders=(2, 2, 1), **dict(base, repetitions=3))])


# ------------------------------------------------------------------- cli


def test_cli_exit_codes(toy_models, tmp_path, capsys):
    assert main(["falsify", "--model", "heat2r"]) == 1
    assert main(["falsify", "--model", "nope", "--strategy", "uniform"]) == 1
    assert main(["falsify", "--model", "heat2r", "--strategy", "uniform",
                 "--stl", "G[5,3] (room1 > 0)"]) == 1
    assert main(["bogus"]) == 1
    assert main(["falsify", "--model", "crash", "--strategy", "uniform",
                 "--out", str(tmp_path / "c")]) == 2
    assert main(["falsify", "--model", "always", "--strategy", "uniform",
                 "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert "failing input" in out


def test_cli_report(toy_models, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) != 0
    assert "no runs" in capsys.readouterr().err
    assert main(["aristeo", "--model", "always", "--strategy", "uniform", "--structure", "arx",
                 "--orders", "1,1,1", "--max", "5", "--max-ref", "2", "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "failing_input.json" in out and "effectiveness=1.000" in out


def test_cli_campaign_and_replay(tmp_path, capsys):
    out = tmp_path / "camp"
    assert main(["campaign", "--model", "satlite", "--strategy", "hillclimb", "--max", "8",
                 "--reps", "3", "--seed", "4", "--out", str(out)]) == 0
    assert len(read_rows(out / "rows.csv")) == 3
    assert main(["replay", "--out", str(out), "--seed", "5"]) == 0
    assert "reproduced" in capsys.readouterr().out


def test_killed_campaign_leaves_parseable_rows(tmp_path):
    out = tmp_path / "killed"
    proc = subprocess.Popen(
        [sys.executable, "-m", "surrofal.cli", "campaign", "--model", "heat2r", "--strategy", "uniform",
         "--max", "3", "--reps", "500", "--out", str(out)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    rows_path = out / "rows.csv"
    deadline = time.time() + 120
    while time.time() < deadline:
        if rows_path.exists() and rows_path.read_text().count("\n") >= 4:
            break
        time.sleep(0.05)
    proc.send_signal(signal.SIGKILL)
    proc.wait()
    rows = read_rows(rows_path)
    assert len(rows) >= 3
    assert [r["seed"] for r in rows] == list(range(len(rows)))
