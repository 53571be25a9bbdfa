"""Desk-scale analog benchmarks.

The dynamics are original to this package and small enough to simulate in
milliseconds.  The input profiles (interpolation, ranges, horizon) follow
common falsification test setups, so the search spaces have realistic shape.
Outputs are deviations that start at zero so
that linear surrogates with zero initial conditions line up with the model
at ``t = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import ExecutableModel, OdeModel
from .signals import InputChannelSpec, InputProfile, InterpolationKind, Interp, TimeDomain

__all__ = ["Benchmark", "BENCHMARKS", "get_benchmark", "satlite_full_scale_domain"]


@dataclass(frozen=True)
class Benchmark:
    id: str
    model: ExecutableModel
    profile: InputProfile
    requirement: str
    max_executions: int
    description: str = ""


def _spec(name, interp, lo, hi, n, **pulse):
    kind = InterpolationKind(Interp(interp), **pulse)
    return InputChannelSpec(name, kind, lo, hi, n)


# --------------------------------------------------------------- heat2r
# Two rooms, each with a hysteresis thermostat.  States are temperature
# deviations from a 20 degC setpoint; the mode packs both heater flags.

_H_OUT = 0.35      # loss to outside, 1/s
_H_WALL = 0.25     # coupling between rooms
_H_Q = (8.0, 7.5)  # heater power per room at scale 1, degC/s
_H_BAND = 0.4


def _heat_f(x, u, t, mode):
    t_out, power = u
    on1, on2 = mode & 1, (mode >> 1) & 1
    ext = _H_OUT * (t_out - 20.0)
    return np.array([
        ext - _H_OUT * x[0] + _H_WALL * (x[1] - x[0]) + power * _H_Q[0] * on1,
        ext - _H_OUT * x[1] + _H_WALL * (x[0] - x[1]) + power * _H_Q[1] * on2,
    ])


def _heat_switch(x, u, mode):
    out = mode
    for i in range(2):
        bit = 1 << i
        if x[i] < -_H_BAND:
            out |= bit
        elif x[i] > _H_BAND:
            out &= ~bit
    return out


def _heat2r() -> Benchmark:
    domain = TimeDomain(24.0, 0.04)
    model = OdeModel(
        "heat2r", ("t_out", "power"), ("room1", "room2"),
        f=_heat_f, h=lambda x, u, m: x.copy(), x0=(0.0, 0.0),
        step=domain.step, switch=_heat_switch, mode0=0b11,
    )
    profile = InputProfile(
        (_spec("t_out", "pchip", -2.0, 5.0, 4), _spec("power", "const", 0.8, 1.2, 1)),
        domain,
    )
    return Benchmark(
        "heat2r", model, profile, "G[0,24] (room1 > -1.6)", 100,
        "two-room switched heating; room 1 must not drop 1.6 degC below setpoint",
    )


# ------------------------------------------------------------- autotrans
# Point-mass vehicle with a four-speed gearbox.  Speed in mph, engine speed
# in rpm is proportional to vehicle speed in the engaged gear.

_AT_RATIO = (0.0, 4.0, 2.4, 1.6, 1.1)   # index 0 unused
_AT_RPM_PER_MPH = 45.0
_AT_UP = (0.0, 16.0, 34.0, 54.0)         # upshift speed at full throttle, per gear
_AT_DOWN = (0.0, 0.0, 10.0, 24.0, 40.0)


def _at_torque(throttle, rpm):
    shape = max(0.15, 1.0 - ((rpm - 3200.0) / 4200.0) ** 2)
    return 0.01 * throttle * 280.0 * shape


def _at_f(x, u, t, gear):
    v = max(x[0], 0.0)
    rpm = v * _AT_RPM_PER_MPH * _AT_RATIO[gear]
    drive = _at_torque(u[0], rpm) * _AT_RATIO[gear] * 0.011
    drag = 0.04 + 0.0002 * v * v
    acc = drive - drag if v > 0 or drive > drag else 0.0
    return np.array([acc])


def _at_switch(x, u, gear):
    v = x[0]
    scale = 0.45 + 0.55 * u[0] / 100.0
    if gear < 4 and v > _AT_UP[gear] * scale:
        return gear + 1
    if gear > 1 and v < _AT_DOWN[gear] * scale:
        return gear - 1
    return gear


def _at_h(x, u, gear):
    v = x[0]
    return np.array([v, v * _AT_RPM_PER_MPH * _AT_RATIO[gear]])


def _autotrans() -> Benchmark:
    domain = TimeDomain(30.0, 0.1)
    model = OdeModel(
        "autotrans", ("throttle",), ("speed", "rpm"),
        f=_at_f, h=_at_h, x0=(0.0,), step=domain.step, switch=_at_switch, mode0=1,
    )
    profile = InputProfile((_spec("throttle", "pconst", 0.0, 100.0, 7),), domain)
    return Benchmark(
        "autotrans", model, profile, "G[0,30] (speed < 76 & rpm < 3950)", 1000,
        "throttle-driven vehicle with gear switching; speed and engine-speed envelope",
    )


# --------------------------------------------------------------- fuelctl
# Manifold filling dynamics with a lagging air estimate in the fuel path and
# a PI trim on a lagged lambda sensor.  Output mu is the normalised air/fuel
# ratio error, zero at equilibrium.

_AF_LEAK = 3.0
_AF_TAU_P = 0.012     # manifold time constant scale
_AF_TAU_EST = 0.35
_AF_TAU_S = 0.1
_AF_KI = 0.8


def _af_pressure_eq(theta, omega):
    return (theta + _AF_LEAK) / (omega * 1e-3)


def _af_f(x, u, t, mode):
    omega, theta = u
    p, p_est, trim, lam = x
    inflow = theta + _AF_LEAK
    outflow = omega * 1e-3 * p
    mu = p / (p_est * (1.0 + trim)) - 1.0
    return np.array([
        (inflow - outflow) / (_AF_TAU_P * 100.0),
        (p - p_est) / _AF_TAU_EST,
        _AF_KI * lam,
        (mu - lam) / _AF_TAU_S,
    ])


def _af_h(x, u, mode):
    p, p_est, trim, _ = x
    return np.array([p / (p_est * (1.0 + trim)) - 1.0])


def _af_x0(u0):
    p = _af_pressure_eq(u0[1], u0[0])
    return (p, p, 0.0, 0.0)


def _fuelctl() -> Benchmark:
    domain = TimeDomain(50.0, 0.1)
    model = OdeModel(
        "fuelctl", ("engine_speed", "throttle"), ("mu",),
        f=_af_f, h=_af_h, x0=_af_x0, step=domain.step,
    )
    profile = InputProfile(
        (
            _spec("engine_speed", "const", 900.0, 1100.0, 1),
            _spec("throttle", "pulse", 0.0, 61.1, 10),
        ),
        domain,
    )
    return Benchmark(
        "fuelctl", model, profile, "G[0,50] (mu < 0.8 & mu > -0.8)", 100,
        "air/fuel ratio control under throttle pulses; normalised AFR error bound",
    )


# --------------------------------------------------------------- satlite
# Single-axis attitude loop disturbed by temperature-dependent torques on
# four components.  The gyro adds a quadratic drift above 40 degC.

_SAT_W = (0.30, 0.25, 0.25, 0.20)
_SAT_GAIN = 0.047
_SAT_OMEGA = 0.6
_SAT_ZETA = 0.35


def _sat_f(x, u, t, mode):
    theta, rate = x
    dist = _SAT_W[0] * u[0] + _SAT_W[1] * u[1] + _SAT_W[2] * u[2] + _SAT_W[3] * u[3]
    hot = u[1] - 40.0
    if hot > 0:
        dist += 0.02 * hot * hot
    acc = _SAT_OMEGA ** 2 * (_SAT_GAIN * dist - theta) - 2.0 * _SAT_ZETA * _SAT_OMEGA * rate
    return np.array([rate, acc])


def _satlite(full_scale: bool = False) -> Benchmark:
    domain = satlite_full_scale_domain() if full_scale else TimeDomain(160.0, 0.5)
    model = OdeModel(
        "satlite", ("magnetometer", "gyro", "reaction_wheel", "magnetorquer"), ("error",),
        f=_sat_f, h=lambda x, u, m: x[:1].copy(), x0=(0.0, 0.0), step=domain.step,
    )
    profile = InputProfile(
        (
            _spec("magnetometer", "pchip", -20.0, 50.0, 16),
            _spec("gyro", "pchip", -15.0, 50.0, 16),
            _spec("reaction_wheel", "pchip", -20.0, 50.0, 16),
            _spec("magnetorquer", "pchip", -20.0, 50.0, 16),
        ),
        domain,
    )
    horizon = domain.end_time
    return Benchmark(
        "satlite", model, profile, f"G[0,{horizon!r}] (error < 2)", 100,
        "satellite attitude analog; attitude error must stay below 2 degrees",
    )


def satlite_full_scale_domain() -> TimeDomain:
    """One day of satellite telemetry: 2 769 200 steps of 0.0312 s."""
    return TimeDomain.from_steps(0.0312, 2_769_200)


BENCHMARKS: dict[str, Callable[[], Benchmark]] = {
    "heat2r": _heat2r,
    "autotrans": _autotrans,
    "fuelctl": _fuelctl,
    "satlite": _satlite,
}


def get_benchmark(name: str, **kwargs) -> Benchmark:
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
    return factory(**kwargs)
