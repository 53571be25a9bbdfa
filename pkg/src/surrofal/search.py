"""Baseline falsification: candidate generation, search strategies, the main loop."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .models import ExecutableModel
from .signals import ControlPoints, InputProfile, SignalSet, generate_control_points, interpolate
from .stl import Formula, test_objective

__all__ = [
    "CandidateTest",
    "UniformRandom",
    "HillClimbRestart",
    "SimulatedAnnealing",
    "Strategy",
    "SearchState",
    "FalsificationConfig",
    "FalsificationResult",
    "FalsificationError",
    "generate",
    "perturb",
    "search_step",
    "falsify",
    "strategy_from_dict",
]


@dataclass(frozen=True, eq=False)
class CandidateTest:
    """Control points for every profile channel; the input signals are derived lazily."""

    profile: InputProfile
    points: tuple[ControlPoints, ...]

    def __post_init__(self):
        points = tuple(self.points)
        if len(points) != len(self.profile.channels):
            raise ValueError("one control-point set per profile channel is required")
        for spec, cp in zip(self.profile.channels, points):
            cp.check(spec, self.profile.domain)
        object.__setattr__(self, "points", points)

    @cached_property
    def inputs(self) -> SignalSet:
        d = self.profile.domain
        return SignalSet(tuple(
            interpolate(cp, spec.kind, d, spec.name, (spec.lo, spec.hi))
            for spec, cp in zip(self.profile.channels, self.points)
        ))

    def values(self) -> np.ndarray:
        """All control values, channel after channel."""
        return np.concatenate([cp.values for cp in self.points])

    def __eq__(self, other):
        if not isinstance(other, CandidateTest):
            return NotImplemented
        return self.profile == other.profile and self.points == other.points

    __hash__ = None

    def to_dict(self) -> dict:
        return {spec.name: cp.to_dict() for spec, cp in zip(self.profile.channels, self.points)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, profile: InputProfile, d: dict) -> "CandidateTest":
        return cls(profile, tuple(ControlPoints.from_dict(d[c.name]) for c in profile.channels))


def generate(profile: InputProfile, rng: np.random.Generator) -> CandidateTest:
    """Independent uniform draw of every channel's control points."""
    return CandidateTest(
        profile, tuple(generate_control_points(c, profile.domain, rng) for c in profile.channels)
    )


def perturb(
    candidate: CandidateTest, sigma_fraction: float, rng: np.random.Generator
) -> CandidateTest:
    """Gaussian move of each control value, sigma a fraction of the channel width, clipped."""
    points = []
    for spec, cp in zip(candidate.profile.channels, candidate.points):
        moved = cp.values + rng.normal(0.0, sigma_fraction * spec.width, size=len(cp))
        points.append(cp.with_values(np.clip(moved, spec.lo, spec.hi)))
    return CandidateTest(candidate.profile, tuple(points))


# -------------------------------------------------------------- strategies


@dataclass(frozen=True)
class UniformRandom:
    """Pure exploration: every candidate is a fresh uniform draw."""

    name = "uniform"

    def to_dict(self):
        return {"name": self.name}


@dataclass(frozen=True)
class HillClimbRestart:
    step_fraction: float = 0.1
    restart_after: int = 10

    name = "hillclimb"

    def __post_init__(self):
        if not 0 < self.step_fraction <= 1:
            raise ValueError("step_fraction must lie in (0, 1]")
        if self.restart_after < 1:
            raise ValueError("restart_after must be positive")

    def to_dict(self):
        return {"name": self.name, "step_fraction": self.step_fraction,
                "restart_after": self.restart_after}


@dataclass(frozen=True)
class SimulatedAnnealing:
    """Metropolis acceptance on objective differences normalised by the first objective."""

    initial_temperature: float = 1.0
    cooling_rate: float = 0.95
    proposal_sigma_fraction: float = 0.1

    name = "anneal"

    def __post_init__(self):
        if not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be positive")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if not 0 < self.proposal_sigma_fraction <= 1:
            raise ValueError("proposal_sigma_fraction must lie in (0, 1]")

    def to_dict(self):
        return {"name": self.name, "initial_temperature": self.initial_temperature,
                "cooling_rate": self.cooling_rate,
                "proposal_sigma_fraction": self.proposal_sigma_fraction}


Strategy = Union[UniformRandom, HillClimbRestart, SimulatedAnnealing]

_STRATEGIES = {s.name: s for s in (UniformRandom, HillClimbRestart, SimulatedAnnealing)}


def strategy_from_dict(d: dict | str) -> Strategy:
    if isinstance(d, str):
        d = {"name": d}
    d = dict(d)
    name = d.pop("name")
    try:
        return _STRATEGIES[name](**d)
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {sorted(_STRATEGIES)}") from None


@dataclass
class SearchState:
    """Mutable bookkeeping carried between search steps of one falsification run."""

    current: CandidateTest
    current_objective: float
    temperature: float = 1.0
    scale: float = 1.0
    failures: int = 0
    restart: bool = False

    @classmethod
    def start(cls, strategy: Strategy, candidate: CandidateTest, objective: float) -> "SearchState":
        state = cls(candidate, objective)
        if isinstance(strategy, SimulatedAnnealing):
            state.temperature = strategy.initial_temperature
            state.scale = abs(objective) if objective != 0 and math.isfinite(objective) else 1.0
        return state


def search_step(
    strategy: Strategy,
    profile: InputProfile,
    current: CandidateTest,
    current_objective: float,
    rng: np.random.Generator,
    state: SearchState | None = None,
) -> CandidateTest:
    """Propose the next candidate (acceptance is handled by :func:`accept`)."""
    if isinstance(strategy, UniformRandom):
        return generate(profile, rng)
    if isinstance(strategy, HillClimbRestart):
        if state is not None and state.restart:
            return generate(profile, rng)
        return perturb(current, strategy.step_fraction, rng)
    return perturb(current, strategy.proposal_sigma_fraction, rng)


def acceptance_probability(delta: float, temperature: float, scale: float = 1.0) -> float:
    """Metropolis rule on a minimised objective."""
    if delta <= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(-delta / (scale * temperature))


def accept(
    strategy: Strategy,
    state: SearchState,
    candidate: CandidateTest,
    objective: float,
    rng: np.random.Generator,
) -> None:
    if isinstance(strategy, UniformRandom):
        if objective < state.current_objective:
            state.current, state.current_objective = candidate, objective
        return
    if isinstance(strategy, HillClimbRestart):
        if state.restart or objective < state.current_objective:
            state.current, state.current_objective = candidate, objective
            state.failures = 0
            state.restart = False
        else:
            state.failures += 1
            state.restart = state.failures >= strategy.restart_after
        return
    p = acceptance_probability(objective - state.current_objective, state.temperature, state.scale)
    if p >= 1.0 or rng.random() < p:
        state.current, state.current_objective = candidate, objective
        state.temperature *= strategy.cooling_rate


# ------------------------------------------------------------------ driver


@dataclass(frozen=True)
class FalsificationConfig:
    max_executions: int = 100
    strategy: Strategy = field(default_factory=UniformRandom)
    seed: int = 0

    def __post_init__(self):
        if self.max_executions < 1:
            raise ValueError("max_executions must be at least 1")


@dataclass(frozen=True, eq=False)
class FalsificationResult:
    falsified: bool
    best_input: CandidateTest
    best_objective: float
    executions_used: int
    objective_history: tuple[float, ...]

    @property
    def boundary(self) -> bool:
        """Stopped on an objective of exactly zero (a satisfied-but-touching trace)."""
        return self.best_objective == 0.0


class FalsificationError(RuntimeError):
    def __init__(self, message: str, candidate: CandidateTest | None = None):
        if candidate is not None:
            message = f"{message}\ncandidate: {candidate.to_json()}"
        super().__init__(message)
        self.candidate = candidate


def falsify(
    model: ExecutableModel,
    profile: InputProfile,
    formula: Formula,
    config: FalsificationConfig,
) -> FalsificationResult:
    """Search for an input whose objective is <= 0 within ``max_executions`` model runs."""
    profile.check_inputs(model.input_names)
    rng = np.random.default_rng(config.seed)
    strategy = config.strategy
    history: list[float] = []
    state: SearchState | None = None
    best, best_obj = None, math.inf
    for _ in range(config.max_executions):
        if state is None:
            candidate = generate(profile, rng)
        else:
            candidate = search_step(
                strategy, profile, state.current, state.current_objective, rng, state
            )
        try:
            outputs = model.execute(candidate.inputs)
        except Exception as exc:
            raise FalsificationError(f"{model.id} failed: {exc}", candidate) from exc
        obj = test_objective(formula, candidate.inputs, outputs)
        history.append(obj)
        if best is None or obj < best_obj:
            best, best_obj = candidate, obj
        if obj <= 0:
            break
        if state is None:
            state = SearchState.start(strategy, candidate, obj)
        else:
            accept(strategy, state, candidate, obj, rng)
    return FalsificationResult(
        falsified=best_obj <= 0,
        best_input=best,
        best_objective=best_obj,
        executions_used=len(history),
        objective_history=tuple(history),
    )
