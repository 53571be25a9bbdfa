import warnings

import numpy as np
import pytest
from hypothesis import settings

from surrofal.models import FunctionModel
from surrofal.signals import InputChannelSpec, InputProfile, InterpolationKind, Interp, TimeDomain

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def arx_loop(u, a, b, nk=1):
    """Direct recursion y(t) = sum a_i y(t-i) + sum b_j u(t-nk-j+1); zero initial state."""
    y = np.zeros(len(u))
    for t in range(len(u)):
        acc = 0.0
        for i, ai in enumerate(a, 1):
            if t - i >= 0:
                acc += ai * y[t - i]
        for j, bj in enumerate(b):
            if t - nk - j >= 0:
                acc += bj * u[t - nk - j]
        y[t] = acc
    return y


def arx_mut(a=(0.5,), b=(1.0,), nk=1, step=0.1):
    return FunctionModel(
        "arx-mut", ("u",), ("y",), lambda d: {"y": arx_loop(d["u"], a, b, nk)}, step=step
    )


def constant_mut(value, step=None):
    return FunctionModel("const", ("u",), ("y",), lambda d: {"y": np.full(len(d["u"]), float(value))},
                         step=step)


def one_channel_profile(interp="linear", lo=-1.0, hi=1.0, n=6, end=10.0, step=0.1):
    kind = InterpolationKind(Interp(interp))
    return InputProfile((InputChannelSpec("u", kind, lo, hi, n),), TimeDomain(end, step))


@pytest.fixture(autouse=True)
def _quiet_unstable():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# acceptance verdict lines, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
