"""Executable models: the black-box interface, an RK4 ODE runner and helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .signals import InputProfile, SignalError, SignalSet, TimeDomain

__all__ = [
    "ExecutableModel",
    "ModelError",
    "DivergenceError",
    "OdeModel",
    "rk4_integrate",
    "CostWrapper",
    "FunctionModel",
    "passthrough",
]


class ModelError(RuntimeError):
    """A model failed to execute."""


class DivergenceError(ModelError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class ExecutableModel:
    """Anything that maps an input signal set to an output signal set.

    Subclasses set ``id``, ``input_names``, ``output_names`` and implement
    ``_run``.  ``execute`` checks the interface on both sides.
    """

    id: str
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    step: float | None

    def execute(self, inputs: SignalSet) -> SignalSet:
        if set(inputs.names) != set(self.input_names):
            raise SignalError(
                f"{self.id}: expected inputs {self.input_names}, got {inputs.names}"
            )
        if self.step is not None and not math.isclose(inputs.domain.step, self.step, rel_tol=1e-9):
            raise SignalError(f"{self.id}: expected step {self.step}, got {inputs.domain.step}")
        out = self._run(inputs)
        if out.domain != inputs.domain:
            raise ModelError(f"{self.id}: output domain differs from input domain")
        return out

    __call__ = execute

    def _run(self, inputs: SignalSet) -> SignalSet:
        raise NotImplementedError


@dataclass(frozen=True)
class FunctionModel(ExecutableModel):
    """Wrap a plain ``dict -> dict`` function of sampled arrays as a model."""

    id: str
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    fn: Callable[[dict], dict]
    step: float | None = None

    def _run(self, inputs: SignalSet) -> SignalSet:
        arrays = {n: inputs[n].values for n in self.input_names}
        out = self.fn(arrays)
        return SignalSet.from_arrays(inputs.domain, {n: out[n] for n in self.output_names})


def passthrough(names: Sequence[str] = ("u",), outputs: Sequence[str] | None = None) -> FunctionModel:
    """Model whose outputs copy its inputs (``y_i = u_i``)."""
    names = tuple(names)
    outputs = names if outputs is None else tuple(outputs)
    return FunctionModel(
        "passthrough", names, outputs, lambda d: {o: d[i] for o, i in zip(outputs, names)}
    )


@dataclass(frozen=True)
class OdeModel(ExecutableModel):
    """``x' = f(x, u, t, mode)``, ``y = h(x, u, mode)`` with an optional discrete mode.

    ``switch(x, u, mode)`` runs after every integrator step and returns the
    next mode; it is how hybrid behaviour (gears, thermostats) enters.
    ``x0`` may be a callable of the first input sample for models that start
    at an input-dependent equilibrium.
    """

    id: str
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    f: Callable
    h: Callable
    x0: Sequence[float] | Callable
    step: float | None = None
    substeps: int = 4
    switch: Callable | None = None
    mode0: object = 0

    def initial_state(self, u0: np.ndarray) -> np.ndarray:
        x0 = self.x0(u0) if callable(self.x0) else self.x0
        return np.array(x0, dtype=float)

    def _run(self, inputs: SignalSet) -> SignalSet:
        return rk4_integrate(self, inputs)


def rk4_integrate(model: OdeModel, inputs: SignalSet, substeps: int | None = None) -> SignalSet:
    """Classical RK4 with inputs held constant between samples.

    The output at sample ``k`` is ``h`` of the state at ``k * step`` and the
    input sample ``k``.
    """
    substeps = model.substeps if substeps is None else substeps
    domain = inputs.domain
    dt = domain.step / substeps
    U = inputs.matrix(model.input_names).T
    n = domain.n_samples
    f, h, switch = model.f, model.h, model.switch
    x = model.initial_state(U[0])
    mode = model.mode0
    Y = np.empty((n, len(model.output_names)))
    t = 0.0
    for k in range(n):
        u = U[k]
        Y[k] = h(x, u, mode)
        if k == n - 1:
            break
        for s in range(substeps):
            t = k * domain.step + s * dt
            k1 = f(x, u, t, mode)
            k2 = f(x + 0.5 * dt * k1, u, t + 0.5 * dt, mode)
            k3 = f(x + 0.5 * dt * k2, u, t + 0.5 * dt, mode)
            k4 = f(x + dt * k3, u, t + dt, mode)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if switch is not None:
                mode = switch(x, u, mode)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"{model.id}: state became non-finite at t={t + dt:g}", t + dt)
    return SignalSet.from_matrix(domain, model.output_names, Y.T)


@dataclass(frozen=True)
class CostWrapper(ExecutableModel):
    """Make a model ``factor`` times as expensive without changing its outputs.

    The inner model is simply executed ``factor`` times and the last trace
    returned, so the wrapped outputs are bit-identical to the inner ones.
    """

    inner: ExecutableModel
    factor: int = 10

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError("cost factor must be >= 1")

    @property
    def id(self):
        return f"{self.inner.id}@x{self.factor}"

    @property
    def input_names(self):
        return self.inner.input_names

    @property
    def output_names(self):
        return self.inner.output_names

    @property
    def step(self):
        return self.inner.step

    def _run(self, inputs: SignalSet) -> SignalSet:
        for _ in range(self.factor):
            out = self.inner.execute(inputs)
        return out
