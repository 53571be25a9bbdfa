"""Sampled signals, input profiles and control-point interpolation.

Every test input is encoded as a handful of control points per input
channel; interpolation turns them into a signal sampled on a fixed-rate
grid ``0, step, 2*step, ..., end_time``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "TimeDomain",
    "SampledSignal",
    "SignalSet",
    "Interp",
    "InterpolationKind",
    "TimePolicy",
    "InputChannelSpec",
    "InputProfile",
    "ControlPoints",
    "SignalError",
    "generate_control_points",
    "interpolate",
    "pchip_slopes",
    "resample",
    "write_csv",
    "read_csv",
]

_REL_TOL = 1e-9


class SignalError(ValueError):
    """Structural problem with a signal, profile or control-point set."""


def _steps_in(length: float, step: float) -> int:
    ratio = length / step
    k = round(ratio)
    if k <= 0 or abs(ratio - k) > _REL_TOL * max(1.0, abs(ratio)):
        raise SignalError(f"{length!r} is not an integer multiple of step {step!r}")
    return int(k)


@dataclass(frozen=True)
class TimeDomain:
    """The grid ``[0, end_time]`` sampled every ``step`` seconds."""

    end_time: float
    step: float

    def __post_init__(self):
        if not (self.end_time > 0 and self.step > 0):
            raise SignalError("end_time and step must be positive")
        if self.n_steps < 2:
            raise SignalError("a time domain needs at least two steps")

    @classmethod
    def from_steps(cls, step: float, n_steps: int) -> "TimeDomain":
        return cls(end_time=step * n_steps, step=step)

    @property
    def n_steps(self) -> int:
        """The number of steps ``l`` with ``end_time = l * step``."""
        return _steps_in(self.end_time, self.step)

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.step

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; ``t`` must be grid-aligned."""
        if t == 0:
            return 0
        return _steps_in(t, self.step)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampledSignal:
    domain: TimeDomain
    values: np.ndarray
    name: str

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.size != self.domain.n_samples:
            raise SignalError(
                f"signal {self.name!r}: expected {self.domain.n_samples} samples, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise SignalError(f"signal {self.name!r} has non-finite samples")
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, SampledSignal):
            return NotImplemented
        return (
            self.name == other.name
            and self.domain == other.domain
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SignalSet:
    """Ordered channels sharing one time domain."""

    signals: tuple[SampledSignal, ...]

    def __post_init__(self):
        signals = tuple(self.signals)
        if not signals:
            raise SignalError("a signal set needs at least one channel")
        names = [s.name for s in signals]
        if len(set(names)) != len(names):
            raise SignalError(f"duplicate channel names in {names}")
        if any(s.domain != signals[0].domain for s in signals):
            raise SignalError("all channels must share one time domain")
        object.__setattr__(self, "signals", signals)

    @classmethod
    def from_arrays(cls, domain: TimeDomain, arrays: dict[str, Sequence[float]]) -> "SignalSet":
        return cls(tuple(SampledSignal(domain, v, name) for name, v in arrays.items()))

    @classmethod
    def from_matrix(cls, domain: TimeDomain, names: Sequence[str], matrix) -> "SignalSet":
        """Build from a ``(channels, samples)`` array."""
        matrix = np.asarray(matrix, dtype=float)
        return cls(tuple(SampledSignal(domain, row, n) for n, row in zip(names, matrix)))

    @property
    def domain(self) -> TimeDomain:
        return self.signals[0].domain

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.signals)

    def __getitem__(self, name: str) -> SampledSignal:
        for s in self.signals:
            if s.name == name:
                return s
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return name in self.names

    def __iter__(self) -> Iterator[SampledSignal]:
        return iter(self.signals)

    def __len__(self) -> int:
        return len(self.signals)

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.names if names is None else names
        return np.vstack([self[n].values for n in names])

    def __eq__(self, other):
        if not isinstance(other, SignalSet):
            return NotImplemented
        return self.signals == other.signals

    __hash__ = None


class Interp(enum.Enum):
    CONSTANT = "const"
    PIECEWISE_CONSTANT = "pconst"
    LINEAR = "linear"
    PCHIP = "pchip"
    PULSE = "pulse"


@dataclass(frozen=True)
class InterpolationKind:
    """Interpolation family plus pulse-train parameters.

    For ``PULSE`` each control value is a level held from its control time
    to the next one.  With ``period=None`` the level is on for the first
    ``duty`` fraction of its segment; with a period the level toggles as a
    square wave of that period inside its segment.  Off-time takes ``low``.
    """

    kind: Interp
    period: float | None = None
    duty: float = 1.0
    low: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.duty <= 1.0:
            raise SignalError("duty cycle must lie in (0, 1]")
        if self.period is not None and self.period <= 0:
            raise SignalError("pulse period must be positive")

    @classmethod
    def parse(cls, text: str) -> "InterpolationKind":
        return cls(Interp(text))

    @property
    def min_points(self) -> int:
        return 1 if self.kind is Interp.CONSTANT else 2

    def accepts(self, n: int) -> bool:
        return n == 1 if self.kind is Interp.CONSTANT else n >= 2


class TimePolicy(enum.Enum):
    EQUALLY_SPACED = "equal"
    RANDOM = "random"


@dataclass(frozen=True)
class InputChannelSpec:
    name: str
    kind: InterpolationKind
    lo: float
    hi: float
    n: int
    policy: TimePolicy = TimePolicy.EQUALLY_SPACED

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", InterpolationKind.parse(self.kind))
        if not self.lo <= self.hi:
            raise SignalError(f"channel {self.name!r}: empty range [{self.lo}, {self.hi}]")
        if not self.kind.accepts(self.n):
            raise SignalError(
                f"channel {self.name!r}: {self.kind.kind.value} cannot take {self.n} control points"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "interp": self.kind.kind.value,
            "range": [self.lo, self.hi],
            "n": self.n,
            "times": self.policy.value,
        }
        if self.kind.kind is Interp.PULSE:
            d.update(period=self.kind.period, duty=self.kind.duty, low=self.kind.low)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InputChannelSpec":
        kind = InterpolationKind(
            Interp(d["interp"]),
            period=d.get("period"),
            duty=d.get("duty", 1.0),
            low=d.get("low", 0.0),
        )
        lo, hi = d["range"]
        return cls(
            d["name"], kind, float(lo), float(hi), int(d["n"]),
            TimePolicy(d.get("times", "equal")),
        )


@dataclass(frozen=True)
class InputProfile:
    channels: tuple[InputChannelSpec, ...]
    domain: TimeDomain

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        names = self.names
        if len(set(names)) != len(names):
            raise SignalError(f"duplicate channel names in profile: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def __getitem__(self, name: str) -> InputChannelSpec:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)

    def check_inputs(self, declared: Iterable[str]) -> None:
        declared = tuple(declared)
        if set(declared) != set(self.names):
            raise SignalError(f"profile channels {self.names} do not match model inputs {declared}")

    def to_dict(self) -> dict:
        return {
            "end_time": self.domain.end_time,
            "step": self.domain.step,
            "channels": [c.to_dict() for c in self.channels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputProfile":
        domain = TimeDomain(float(d["end_time"]), float(d["step"]))
        return cls(tuple(InputChannelSpec.from_dict(c) for c in d["channels"]), domain)


@dataclass(frozen=True, eq=False)
class ControlPoints:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times, values = _frozen(self.times), _frozen(self.values)
        if times.shape != values.shape or times.ndim != 1 or times.size == 0:
            raise SignalError("control times and values must be equal-length 1-D sequences")
        if times[0] != 0.0:
            raise SignalError("the first control point must sit at t=0")
        if np.any(np.diff(times) <= 0):
            raise SignalError("control times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, ControlPoints):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    __hash__ = None

    def with_values(self, values) -> "ControlPoints":
        return ControlPoints(self.times, values)

    def check(self, spec: InputChannelSpec, domain: TimeDomain) -> None:
        """Validate against the owning channel (count, end time, range)."""
        if not spec.kind.accepts(len(self)):
            raise SignalError(f"channel {spec.name!r}: wrong control-point count {len(self)}")
        if len(self) > 1 and not math.isclose(self.times[-1], domain.end_time, rel_tol=_REL_TOL):
            raise SignalError(f"channel {spec.name!r}: last control time must equal end time")
        if np.any(self.values < spec.lo) or np.any(self.values > spec.hi):
            raise SignalError(f"channel {spec.name!r}: control value outside [{spec.lo}, {spec.hi}]")

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlPoints":
        return cls(np.asarray(d["times"], float), np.asarray(d["values"], float))


def generate_control_points(
    spec: InputChannelSpec, domain: TimeDomain, rng: np.random.Generator
) -> ControlPoints:
    """Draw control values uniformly over the channel range.

    Times are equally spaced or, under ``TimePolicy.RANDOM``, the interior
    times are uniform draws on ``(0, end_time)`` (sorted, duplicates redrawn).
    """
    values = rng.uniform(spec.lo, spec.hi, size=spec.n)
    if spec.n == 1:
        return ControlPoints(np.zeros(1), values)
    b = domain.end_time
    if spec.policy is TimePolicy.EQUALLY_SPACED:
        times = np.linspace(0.0, b, spec.n)
    else:
        while True:
            interior = np.sort(rng.uniform(0.0, b, size=spec.n - 2))
            times = np.concatenate(([0.0], interior, [b]))
            if np.all(np.diff(times) > 0):
                break
    return ControlPoints(times, values)


def pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson monotone slopes for cubic Hermite interpolation."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    h = np.diff(x)
    secant = np.diff(y) / h
    n = x.size
    m = np.empty(n)
    if n == 2:
        m[:] = secant[0]
        return m
    m[0] = secant[0]
    m[-1] = secant[-1]
    m[1:-1] = 0.5 * (secant[:-1] + secant[1:])
    # flat or extremal neighbourhoods get zero slope
    m[1:-1][secant[:-1] * secant[1:] <= 0] = 0.0
    for k in range(n - 1):
        if secant[k] == 0.0:
            m[k] = m[k + 1] = 0.0
            continue
        alpha = m[k] / secant[k]
        beta = m[k + 1] / secant[k]
        # endpoint or neighbouring slope pointing the wrong way
        if alpha < 0:
            m[k] = alpha = 0.0
        if beta < 0:
            m[k + 1] = beta = 0.0
        r = alpha * alpha + beta * beta
        if r > 9.0:
            tau = 3.0 / math.sqrt(r)
            m[k] = tau * alpha * secant[k]
            m[k + 1] = tau * beta * secant[k]
    return m


def _hermite(x, y, m, t):
    idx = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2)
    h = x[idx + 1] - x[idx]
    s = (t - x[idx]) / h
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y[idx] + h10 * h * m[idx] + h01 * y[idx + 1] + h11 * h * m[idx + 1]


def _hold(x, y, t):
    idx = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 1)
    return y[idx]


def _pulse(x, y, t, kind: InterpolationKind):
    idx = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 1)
    start = x[idx]
    seg = np.append(np.diff(x), np.inf)[idx]
    local = t - start
    if kind.period is None:
        on = local < kind.duty * seg
    else:
        on = np.mod(local, kind.period) < kind.duty * kind.period
    # a level is always on at its own control time
    on |= local == 0
    return np.where(on, y[idx], kind.low)


def interpolate(
    points: ControlPoints,
    kind: InterpolationKind,
    domain: TimeDomain,
    name: str = "u",
    bounds: tuple[float, float] | None = None,
) -> SampledSignal:
    if not kind.accepts(len(points)):
        raise SignalError(
            f"{kind.kind.value} interpolation cannot use {len(points)} control points"
        )
    t = domain.times
    x, y = points.times, points.values
    if kind.kind is Interp.CONSTANT:
        values = np.full(t.size, y[0])
    elif kind.kind is Interp.PIECEWISE_CONSTANT:
        values = _hold(x, y, t)
    elif kind.kind is Interp.LINEAR:
        values = np.interp(t, x, y)
    elif kind.kind is Interp.PCHIP:
        values = _hermite(x, y, pchip_slopes(x, y), t)
    else:
        values = _pulse(x, y, t, kind)
    if bounds is not None:
        values = np.clip(values, bounds[0], bounds[1])
    return SampledSignal(domain, values, name)


def resample(signal: SampledSignal, new_step: float) -> SampledSignal:
    """Linear resampling onto a new fixed step over the same horizon."""
    if not new_step > 0:
        raise SignalError("new step must be positive")
    b = signal.domain.end_time
    new_domain = TimeDomain(b, new_step)
    values = np.interp(new_domain.times, signal.domain.times, signal.values)
    values[0] = signal.values[0]
    values[-1] = signal.values[-1]
    return SampledSignal(new_domain, values, signal.name)


def write_csv(signals: SignalSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *signals.names])
        data = signals.matrix()
        for k, t in enumerate(signals.domain.times):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in data[:, k])])


def read_csv(path, step: float | None = None) -> SignalSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != "time":
        raise SignalError("first CSV column must be 'time'")
    times = body[:, 0]
    step = float(times[1] - times[0]) if step is None else step
    domain = TimeDomain(float(times[-1]), step)
    return SignalSet.from_matrix(domain, header[1:], body[:, 1:].T)
