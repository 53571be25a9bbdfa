"""Surrogate-assisted falsification: approximate, falsify the surrogate, validate, refine.

The model under test (MUT) is executed once to build the first surrogate
and once per iteration to validate the surrogate falsifier's candidate.
A candidate that fails to violate the requirement on the MUT is spurious;
its MUT trace is added to the training data and the surrogate is refitted
with the same structure.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .models import ExecutableModel
from .search import CandidateTest, FalsificationConfig, falsify, generate
from .signals import InputProfile, SignalSet
from .stl import Formula, test_objective
from .sysid import Structure, SurrogateModel, TrainingData, fit, one_step_mse, refine

__all__ = [
    "Outcome",
    "SurrogateConfig",
    "IterationLog",
    "SurrogateReport",
    "SurrogateRunError",
    "approximate",
    "check_on_mut",
    "run",
]


class Outcome(str, enum.Enum):
    VIOLATION_FOUND = "violation_found"
    BUDGET_EXHAUSTED = "budget_exhausted"


class SurrogateRunError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class SurrogateConfig:
    structure: Structure
    max_refinements: int = 10
    inner: FalsificationConfig = field(default_factory=FalsificationConfig)

    def __post_init__(self):
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be at least 1")


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    surrogate_falsified: bool
    surrogate_objective: float
    mut_objective: float
    train_mse: float
    # previous surrogate scored on the same (combined) data; nan on iteration 1
    prev_train_mse: float
    n_experiments: int
    inner_executions: int
    refined: bool

    def to_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "falsified": self.surrogate_falsified,
            "surrogate_obj": _num(self.surrogate_objective),
            "mut_obj": _num(self.mut_objective),
            "train_mse": _num(self.train_mse),
            "prev_train_mse": _num(self.prev_train_mse),
            "n_experiments": self.n_experiments,
            "inner_executions": self.inner_executions,
            "refined": self.refined,
        }


def _num(x: float):
    """JSON-safe float (inf and nan become strings)."""
    return x if math.isfinite(x) else repr(x)


@dataclass(frozen=True, eq=False)
class SurrogateReport:
    outcome: Outcome
    failing_input: CandidateTest | None
    mut_executions: int
    refinements: int
    iterations: tuple[IterationLog, ...]
    model: SurrogateModel
    data: TrainingData = field(repr=False)

    @property
    def found(self) -> bool:
        return self.outcome is Outcome.VIOLATION_FOUND

    @property
    def best_objective(self) -> float:
        return min(it.mut_objective for it in self.iterations)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "failing_input": None if self.failing_input is None else self.failing_input.to_dict(),
            "mut_executions": self.mut_executions,
            "refinements": self.refinements,
            "accounting": "mut_executions = 1 approximation run + 1 validation per iteration",
            "structure": self.model.structure.tag,
            "orders": list(self.model.structure.orders),
            "iterations": [it.to_dict() for it in self.iterations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def write_iterations_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "surrogate_obj", "mut_obj", "train_mse", "falsified"])
            for it in self.iterations:
                w.writerow([it.iteration, repr(it.surrogate_objective), repr(it.mut_objective),
                            repr(it.train_mse), int(it.surrogate_falsified)])


def approximate(
    mut: ExecutableModel,
    profile: InputProfile,
    structure: Structure,
    rng: np.random.Generator,
) -> tuple[SurrogateModel, TrainingData]:
    """Fit ``structure`` on a single MUT run for one random input."""
    profile.check_inputs(mut.input_names)
    candidate = generate(profile, rng)
    outputs = mut.execute(candidate.inputs)
    data = TrainingData.single(candidate.inputs, outputs)
    return fit(structure, data), data


def check_on_mut(
    mut: ExecutableModel, candidate: CandidateTest, formula: Formula
) -> tuple[float, SignalSet]:
    """One MUT execution: the objective and the trace refinement will consume."""
    outputs = mut.execute(candidate.inputs)
    return test_objective(formula, candidate.inputs, outputs), outputs


def run(
    mut: ExecutableModel,
    profile: InputProfile,
    formula: Formula,
    config: SurrogateConfig,
    rng: np.random.Generator | int = 0,
) -> SurrogateReport:
    """Approximation-refinement loop with at most ``1 + max_refinements`` MUT runs."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    structure = config.structure
    try:
        model, data = approximate(mut, profile, structure, rng)
    except Exception as exc:
        raise SurrogateRunError(f"approximation failed: {exc}", 0) from exc
    mut_runs = 1
    refinements = 0
    logs: list[IterationLog] = []
    spurious: tuple[SignalSet, SignalSet] | None = None

    for k in range(config.max_refinements):
        it = k + 1
        prev_mse = math.nan
        if spurious is not None:
            try:
                new_model, data = refine(structure, data, *spurious, previous=model)
            except Exception as exc:
                raise SurrogateRunError(f"refinement failed: {exc}", it) from exc
            prev_mse = one_step_mse(model, data)
            model = new_model
            refinements += 1
        inner_cfg = FalsificationConfig(
            config.inner.max_executions, config.inner.strategy, config.inner.seed + k
        )
        try:
            inner = falsify(model, profile, formula, inner_cfg)
        except Exception as exc:
            raise SurrogateRunError(f"surrogate falsification failed: {exc}", it) from exc
        candidate = inner.best_input
        try:
            mut_obj, outputs = check_on_mut(mut, candidate, formula)
        except Exception as exc:
            raise SurrogateRunError(
                f"{mut.id} failed on candidate {candidate.to_json()}: {exc}", it
            ) from exc
        mut_runs += 1
        logs.append(IterationLog(
            it, inner.falsified, inner.best_objective, mut_obj, model.training_mse,
            prev_mse, len(data), inner.executions_used, k > 0,
        ))
        if mut_obj <= 0:
            return SurrogateReport(
                Outcome.VIOLATION_FOUND, candidate, mut_runs, refinements, tuple(logs), model, data
            )
        spurious = (candidate.inputs, outputs)

    return SurrogateReport(
        Outcome.BUDGET_EXHAUSTED, None, mut_runs, refinements, tuple(logs), model, data
    )
