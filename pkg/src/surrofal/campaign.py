"""Experiment configs, seeded campaigns, structure sweeps and reporting.

A campaign directory looks like::

    out/
      config.json          the resolved experiment config
      rows.csv             one line per repetition, appended as runs finish
      runs/seed_<n>/       report.json, a history CSV, failing_input.json
"""
from __future__ import annotations

import csv
import json
import math
import os
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .benchmarks import get_benchmark
from .models import CostWrapper, ExecutableModel
from .search import FalsificationConfig, falsify, strategy_from_dict
from .signals import InputProfile
from .stl import Formula, parse_stl
from .surrogate import SurrogateConfig, run as run_surrogate
from .sysid import structure_from_spec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CampaignReport",
    "ROW_FIELDS",
    "normalize_time_units",
    "load_config",
    "shipped_config",
    "resolve",
    "run_one",
    "run_campaign",
    "read_rows",
    "summarize",
    "mean_iterations",
    "iteration_budget",
    "pareto_front",
    "sweep",
    "load_sweep",
    "replay",
]

ROW_FIELDS = ("seed", "mode", "outcome", "best_objective", "mut_executions", "iterations", "wall_ms")
MODES = ("baseline", "surrogate")


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


_UNITS = {"ms": 1e-3, "s": 1.0, "min": 60.0, "h": 3600.0, "d": 86400.0}
_UNIT_NUM = re.compile(r"(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)\s*(ms|min|s|h|d)\b")


def normalize_time_units(stl: str) -> str:
    """Rewrite unit-suffixed interval bounds to seconds: ``G[0,24h]`` -> ``G[0,86400]``."""

    def bracket(m: re.Match) -> str:
        inner = _UNIT_NUM.sub(lambda u: _fmt(float(u.group(1)) * _UNITS[u.group(2)]), m.group(1))
        return f"[{inner}]"

    return re.sub(r"\[([^\]]*)\]", bracket, stl)


def _fmt(x: float) -> str:
    return str(int(x)) if x == int(x) else repr(x)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    mode: str = "baseline"
    strategy: dict | None = None
    stl: str | None = None
    structure: str | None = None
    orders: tuple[int, ...] | None = None
    max_executions: int | None = None
    max_refinements: int = 10
    repetitions: int = 1
    seed: int = 0
    profile: dict | None = None
    cost_factor: int = 1
    full_scale: bool = False
    label: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.max_executions is not None and self.max_executions < 1:
            raise ConfigError("max_executions must be at least 1")
        if self.max_refinements < 1:
            raise ConfigError("max_refinements must be at least 1")
        if self.cost_factor < 1:
            raise ConfigError("cost_factor must be at least 1")
        if self.orders is not None:
            object.__setattr__(self, "orders", tuple(int(o) for o in self.orders))
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", {"name": self.strategy})

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.mode == "surrogate":
            return f"{self.model}-{self.structure}{'_'.join(map(str, self.orders or ()))}"
        return f"{self.model}-baseline"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["orders"] = None if self.orders is None else list(self.orders)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "model" not in d:
            raise ConfigError("config needs a 'model'")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def shipped_config(name: str) -> Path:
    path = resources.files("surrofal") / "configs" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no shipped config named {name!r}")
    return Path(str(path))


def _read_json(path) -> dict:
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = shipped_config(str(path))
    try:
        with open(p) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Read a JSON experiment config (a path or the name of a shipped config)."""
    return ExperimentConfig.from_dict(_read_json(path))


@dataclass(frozen=True)
class Resolved:
    model: ExecutableModel
    profile: InputProfile
    formula: Formula
    max_executions: int


def resolve(config: ExperimentConfig) -> Resolved:
    """Turn ids and texts into a runnable model, profile, formula and budget."""
    kwargs = {"full_scale": True} if config.full_scale else {}
    try:
        bench = get_benchmark(config.model, **kwargs)
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from None
    profile = bench.profile if config.profile is None else InputProfile.from_dict(config.profile)
    try:
        profile.check_inputs(bench.model.input_names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = normalize_time_units(config.stl or bench.requirement)
    try:
        formula = parse_stl(text, bench.model.output_names)
    except ValueError as exc:
        raise ConfigError(f"requirement {text!r}: {exc}") from None
    if config.strategy is None:
        raise ConfigError("a search strategy must be chosen explicitly (uniform, hillclimb, anneal)")
    try:
        strategy_from_dict(config.strategy)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"strategy: {exc}") from None
    if config.mode == "surrogate":
        if config.structure is None or config.orders is None:
            raise ConfigError("surrogate mode needs a structure and orders")
        try:
            structure_from_spec(config.structure, config.orders)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"structure: {exc}") from None
    model = bench.model if config.cost_factor == 1 else CostWrapper(bench.model, config.cost_factor)
    budget = config.max_executions or bench.max_executions
    return Resolved(model, profile, formula, budget)


# ------------------------------------------------------------------ runs


def _write_history(path: Path, values: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(values, 1):
            w.writerow([i, repr(v)])


def run_one(config: ExperimentConfig, seed: int, run_dir: Path | None = None) -> dict:
    """Run one repetition and return its row; artifacts go to ``run_dir`` if given."""
    res = resolve(config)
    strategy = strategy_from_dict(config.strategy)
    t0 = time.perf_counter()
    row = {"seed": seed, "mode": config.mode}
    artifacts: dict = {}
    try:
        if config.mode == "baseline":
            r = falsify(res.model, res.profile, res.formula,
                        FalsificationConfig(res.max_executions, strategy, seed))
            found, best = r.falsified, r.best_objective
            row.update(mut_executions=r.executions_used, iterations=r.executions_used)
            failing = r.best_input if found else None
            artifacts["history.csv"] = r.objective_history
            artifacts["report.json"] = {
                "falsified": r.falsified, "best_objective": _json_num(best),
                "executions_used": r.executions_used,
                "best_input": r.best_input.to_dict(),
            }
        else:
            structure = structure_from_spec(config.structure, config.orders)
            cfg = SurrogateConfig(structure, config.max_refinements,
                                  FalsificationConfig(res.max_executions, strategy, seed))
            r = run_surrogate(res.model, res.profile, res.formula, cfg, seed)
            found, best = r.found, r.best_objective
            row.update(mut_executions=r.mut_executions, iterations=len(r.iterations))
            failing = r.failing_input
            artifacts["iterations"] = r
            artifacts["report.json"] = r.to_dict()
            artifacts["surrogate.json"] = r.model.to_dict()
        if found:
            row["outcome"] = "boundary" if best == 0.0 else "violation_found"
        else:
            row["outcome"] = "budget_exhausted"
        row["best_objective"] = best
    except Exception as exc:  # recorded in-row; the campaign goes on
        failing = None
        row.update(outcome="error", best_objective=math.nan, mut_executions=0,
                   iterations=0)
        artifacts["error.txt"] = f"{type(exc).__name__}: {exc}\n"
    row["wall_ms"] = (time.perf_counter() - t0) * 1e3

    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        for name, payload in artifacts.items():
            if name == "history.csv":
                _write_history(run_dir / name, payload)
            elif name == "iterations":
                payload.write_iterations_csv(run_dir / "iterations.csv")
            elif name == "error.txt":
                (run_dir / name).write_text(payload)
            else:
                (run_dir / name).write_text(json.dumps(payload, indent=1, sort_keys=True))
        if failing is not None:
            (run_dir / "failing_input.json").write_text(failing.to_json())
    return row


def _json_num(x: float):
    return x if math.isfinite(x) else repr(x)


def _format_row(row: dict) -> list[str]:
    return [
        str(row["seed"]), row["mode"], row["outcome"], repr(float(row["best_objective"])),
        str(row["mut_executions"]), str(row["iterations"]), f"{row['wall_ms']:.3f}",
    ]


def _run_task(args):
    config, seed, run_dir = args
    return run_one(config, seed, run_dir)


@dataclass(frozen=True)
class CampaignReport:
    config: ExperimentConfig
    rows: tuple[dict, ...]
    out: Path | None = None

    @property
    def effectiveness(self) -> float:
        return sum(_found(r) for r in self.rows) / len(self.rows)

    @property
    def executions_to_violation(self) -> list[int]:
        return [int(r["mut_executions"]) for r in self.rows if _found(r)]

    @property
    def median_executions(self) -> float:
        """Median MUT executions over found runs (nan when nothing was found)."""
        xs = self.executions_to_violation
        return statistics.median(xs) if xs else math.nan

    @property
    def budget(self) -> int:
        return iteration_budget(self.config)

    @property
    def mean_iterations(self) -> float:
        """Mean iterations to a violation; unfound and failed runs count the full budget."""
        return mean_iterations(self.rows, self.budget)

    @property
    def errors(self) -> int:
        return sum(r["outcome"] == "error" for r in self.rows)


def _found(row: dict) -> bool:
    return row["outcome"] in ("violation_found", "boundary")


def iteration_budget(config: ExperimentConfig) -> int:
    if config.mode == "surrogate":
        return config.max_refinements
    return config.max_executions or get_benchmark(config.model).max_executions


def mean_iterations(rows: Sequence[dict], budget: int | None = None) -> float:
    if not rows:
        return math.nan
    if budget is None:
        return statistics.fmean(int(r["iterations"]) for r in rows)
    return statistics.fmean(int(r["iterations"]) if _found(r) else budget for r in rows)


def run_campaign(
    config: ExperimentConfig, out: str | Path | None = None, parallel: int = 1
) -> CampaignReport:
    """Repetition ``i`` uses seed ``config.seed + i``; rows are appended in seed order."""
    resolve(config)  # fail fast on config errors
    seeds = [config.seed + i for i in range(config.repetitions)]
    out = None if out is None else Path(out)
    rows_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True))
        rows_fh = open(out / "rows.csv", "w", newline="")
        writer = csv.writer(rows_fh)
        writer.writerow(ROW_FIELDS)
        rows_fh.flush()
    tasks = [(config, s, None if out is None else out / "runs" / f"seed_{s}") for s in seeds]
    rows = []

    def emit(row):
        rows.append(row)
        if rows_fh is not None:
            writer.writerow(_format_row(row))
            rows_fh.flush()
            os.fsync(rows_fh.fileno())

    try:
        if parallel > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                for row in pool.map(_run_task, tasks):
                    emit(row)
        else:
            for t in tasks:
                emit(_run_task(t))
    finally:
        if rows_fh is not None:
            rows_fh.close()
    return CampaignReport(config, tuple(rows), out)


def read_rows(path: str | Path) -> list[dict]:
    """Parse a rows.csv; a trailing partial line from an interrupted run is skipped."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if tuple(header) != ROW_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        for rec in reader:
            if len(rec) != len(ROW_FIELDS):
                continue
            try:
                rows.append({
                    "seed": int(rec[0]), "mode": rec[1], "outcome": rec[2],
                    "best_objective": float(rec[3]), "mut_executions": int(rec[4]),
                    "iterations": int(rec[5]), "wall_ms": float(rec[6]),
                })
            except ValueError:
                continue
    return rows


def summarize(rows: Sequence[dict], budget: int | None = None) -> dict:
    """Aggregate metrics; with ``budget``, runs without a violation count it as their iterations."""
    found = [r for r in rows if _found(r)]
    execs = [r["mut_executions"] for r in found]
    return {
        "runs": len(rows),
        "found": len(found),
        "boundary": sum(r["outcome"] == "boundary" for r in rows),
        "errors": sum(r["outcome"] == "error" for r in rows),
        "effectiveness": len(found) / len(rows) if rows else math.nan,
        "median_mut_executions": statistics.median(execs) if execs else math.nan,
        "mean_iterations": mean_iterations(rows, budget),
        "median_wall_ms": statistics.median(r["wall_ms"] for r in rows) if rows else math.nan,
    }


# ----------------------------------------------------------------- sweeps


def pareto_front(points: Sequence[tuple[float, float]]) -> list[bool]:
    """Non-dominated flags for ``(effectiveness, mean_iterations)`` pairs.

    Effectiveness is maximised and iterations minimised; equal points are
    all kept.
    """
    order = sorted(range(len(points)), key=lambda i: (-points[i][0], points[i][1]))
    flags = [False] * len(points)
    best_iter = math.inf
    k = 0
    while k < len(order):
        # points sharing the same effectiveness form one group
        eff = points[order[k]][0]
        group = [i for i in order[k:] if points[i][0] == eff]
        lowest = points[group[0]][1]
        for i in group:
            if points[i][1] == lowest and lowest < best_iter:
                flags[i] = True
        best_iter = min(best_iter, lowest)
        k += len(group)
    return flags


@dataclass(frozen=True)
class SweepRow:
    label: str
    structure: str
    orders: tuple[int, ...]
    effectiveness: float
    mean_iterations: float
    errors: int
    pareto: bool = False


def load_sweep(path) -> list[ExperimentConfig]:
    """A sweep file is ``{"base": {...}, "structures": {"arx": [[2,2,1], ...], ...}}``."""
    d = _read_json(path)
    try:
        base = dict(d["base"])
        ladders = d["structures"]
    except (KeyError, TypeError):
        raise ConfigError(f"{path}: a sweep needs 'base' and 'structures'") from None
    base["mode"] = "surrogate"
    configs = []
    for tag, ladder in ladders.items():
        for k, orders in enumerate(ladder, 1):
            cfg = dict(base, structure=tag, orders=list(orders), label=f"{tag}{k}")
            configs.append(ExperimentConfig.from_dict(cfg))
    return configs


def sweep(
    configs: Sequence[ExperimentConfig], out: str | Path | None = None, parallel: int = 1
) -> list[SweepRow]:
    if not configs:
        raise ConfigError("empty sweep")
    base = {k: v for k, v in configs[0].to_dict().items() if k not in ("structure", "orders", "label")}
    for c in configs[1:]:
        other = {k: v for k, v in c.to_dict().items() if k not in ("structure", "orders", "label")}
        if other != base:
            raise ConfigError("sweep configs may differ only in structure and orders")
    out = None if out is None else Path(out)
    table = []
    for c in configs:
        rep = run_campaign(c, None if out is None else out / c.name, parallel)
        table.append(SweepRow(c.name, c.structure or "", c.orders or (), rep.effectiveness,
                              rep.mean_iterations, rep.errors))
    flags = pareto_front([(r.effectiveness, r.mean_iterations) for r in table])
    table = [replace(r, pareto=f) for r, f in zip(table, flags)]
    if out is not None:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "structure", "orders", "effectiveness", "mean_iterations",
                        "errors", "pareto"])
            for r in table:
                w.writerow([r.label, r.structure, " ".join(map(str, r.orders)),
                            repr(r.effectiveness), repr(r.mean_iterations), r.errors,
                            int(r.pareto)])
    return table


# ----------------------------------------------------------------- replay


def replay(campaign_dir: str | Path, seed: int) -> tuple[dict, dict | None]:
    """Rerun one seed of a saved campaign; returns the new row and the recorded one."""
    campaign_dir = Path(campaign_dir)
    cfg_path = campaign_dir / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{campaign_dir} has no config.json")
    config = load_config(cfg_path)
    row = run_one(config, seed)
    recorded = None
    rows_path = campaign_dir / "rows.csv"
    if rows_path.exists():
        for r in read_rows(rows_path):
            if r["seed"] == seed:
                recorded = r
    return row, recorded


def same_row(a: dict, b: dict) -> bool:
    """Rows agree on everything except wall time (compared as written to CSV)."""
    return _format_row(a)[:-1] == _format_row(b)[:-1]
