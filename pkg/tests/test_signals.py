import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surrofal.signals import (
    ControlPoints,
    InputChannelSpec,
    InputProfile,
    Interp,
    InterpolationKind,
    SampledSignal,
    SignalError,
    SignalSet,
    TimeDomain,
    TimePolicy,
    generate_control_points,
    interpolate,
    pchip_slopes,
    read_csv,
    resample,
    write_csv,
)


def kind(name, **kw):
    return InterpolationKind(Interp(name), **kw)


def test_time_domain_counts():
    d = TimeDomain(10.0, 1.0)
    assert d.n_steps == 10 and d.n_samples == 11
    assert np.array_equal(d.times, np.arange(11.0))


@pytest.mark.parametrize("end,step", [(10.0, 3.0), (-1.0, 1.0), (1.0, 0.0), (1.0, 1.0)])
def test_time_domain_rejects(end, step):
    with pytest.raises(SignalError):
        TimeDomain(end, step)


def test_full_scale_sample_count():
    from surrofal.benchmarks import satlite_full_scale_domain

    d = satlite_full_scale_domain()
    assert d.n_steps == 2_769_200
    assert d.step == 0.0312


def test_signal_rejects_nonfinite_and_length():
    d = TimeDomain(2.0, 1.0)
    with pytest.raises(SignalError):
        SampledSignal(d, [0.0, np.nan, 1.0], "x")
    with pytest.raises(SignalError):
        SampledSignal(d, [0.0, 1.0], "x")


def test_signal_set_invariants():
    d = TimeDomain(2.0, 1.0)
    a = SampledSignal(d, [0, 1, 2], "a")
    with pytest.raises(SignalError):
        SignalSet((a, SampledSignal(d, [0, 0, 0], "a")))
    with pytest.raises(SignalError):
        SignalSet((a, SampledSignal(TimeDomain(4.0, 2.0), [0, 0, 0], "b")))


def test_constant_channel_degenerate_range():
    spec = InputChannelSpec("u", kind("const"), 5.0, 5.0, 1)
    cp = generate_control_points(spec, TimeDomain(10.0, 1.0), np.random.default_rng(0))
    assert cp.times.tolist() == [0.0] and cp.values.tolist() == [5.0]


def test_pchip4_equal_spacing():
    spec = InputChannelSpec("u", kind("pchip"), -2.0, 5.0, 4)
    cp = generate_control_points(spec, TimeDomain(24.0, 0.04), np.random.default_rng(1))
    assert cp.times.tolist() == [0.0, 8.0, 16.0, 24.0]


def test_generation_is_deterministic():
    spec = InputChannelSpec("u", kind("linear"), 0, 1, 5, TimePolicy.RANDOM)
    d = TimeDomain(10.0, 0.5)
    assert generate_control_points(spec, d, np.random.default_rng(42)) == \
        generate_control_points(spec, d, np.random.default_rng(42))


def test_random_times_sorted_and_anchored():
    spec = InputChannelSpec("u", kind("linear"), 0, 1, 7, TimePolicy.RANDOM)
    d = TimeDomain(10.0, 0.5)
    cp = generate_control_points(spec, d, np.random.default_rng(3))
    assert cp.times[0] == 0.0 and cp.times[-1] == 10.0
    assert np.all(np.diff(cp.times) > 0)


def test_point_count_rules():
    with pytest.raises(SignalError):
        InputChannelSpec("u", kind("const"), 0, 1, 2)
    with pytest.raises(SignalError):
        InputChannelSpec("u", kind("pchip"), 0, 1, 1)
    with pytest.raises(SignalError):
        InputChannelSpec("u", kind("linear"), 1, 0, 3)
    with pytest.raises(SignalError):
        interpolate(ControlPoints([0.0], [1.0]), kind("linear"), TimeDomain(1.0, 0.5))


def test_constant_interpolation():
    s = interpolate(ControlPoints([0.0], [5.0]), kind("const"), TimeDomain(10.0, 1.0))
    assert s.values.size == 11 and np.all(s.values == 5.0)


def test_linear_interpolation_is_affine():
    s = interpolate(ControlPoints([0.0, 10.0], [0.0, 10.0]), kind("linear"), TimeDomain(10.0, 1.0))
    assert np.allclose(s.values, np.arange(11.0), atol=1e-12)


def test_pconst_takes_latest_point():
    cp = ControlPoints([0.0, 2.5, 5.0], [1.0, 2.0, 3.0])
    s = interpolate(cp, kind("pconst"), TimeDomain(5.0, 0.5))
    assert s.values.tolist() == [1.0] * 5 + [2.0] * 5 + [3.0]


def _dense_hermite_oracle(x, y, m, t):
    # evaluates the Hermite form segment by segment with explicit loops
    out = []
    for tt in t:
        k = max(i for i in range(len(x) - 1) if x[i] <= tt) if tt < x[-1] else len(x) - 2
        h = x[k + 1] - x[k]
        s = (tt - x[k]) / h
        out.append((2 * s**3 - 3 * s**2 + 1) * y[k] + (s**3 - 2 * s**2 + s) * h * m[k]
                   + (-2 * s**3 + 3 * s**2) * y[k + 1] + (s**3 - s**2) * h * m[k + 1])
    return np.array(out)


def test_pchip_plateau_is_flat():
    cp = ControlPoints([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.0, 0.0])
    d = TimeDomain(3.0, 0.01)
    s = interpolate(cp, kind("pchip"), d)
    m = pchip_slopes(cp.times, cp.values)
    assert m[1] == 0.0 and m[2] == 0.0
    oracle = _dense_hermite_oracle(cp.times, cp.values, m, d.times)
    assert np.allclose(s.values, oracle, atol=1e-12)
    plateau = (d.times >= 1.0 - 1e-12) & (d.times <= 2.0 + 1e-12)
    assert np.allclose(s.values[plateau], 1.0, atol=1e-12)


def test_pulse_levels_and_duty():
    cp = ControlPoints([0.0, 2.0, 4.0], [3.0, 5.0, 7.0])
    d = TimeDomain(4.0, 0.5)
    full = interpolate(cp, kind("pulse"), d)
    assert full.values.tolist() == [3.0] * 4 + [5.0] * 4 + [7.0]
    half = interpolate(cp, kind("pulse", duty=0.5), d)
    assert half.values.tolist() == [3.0, 3.0, 0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 7.0]
    wave = interpolate(cp, kind("pulse", period=1.0, duty=0.5, low=-1.0), d)
    assert wave.values[:4].tolist() == [3.0, -1.0, 3.0, -1.0]


def test_clipping_to_bounds():
    cp = ControlPoints([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.0, 1.0])
    s = interpolate(cp, kind("pchip"), TimeDomain(3.0, 0.01), bounds=(0.1, 0.9))
    assert s.values.min() >= 0.1 and s.values.max() <= 0.9


def test_resample_identity_and_ramp():
    d = TimeDomain(2.0, 0.1)
    ramp = SampledSignal(d, 3.0 * d.times, "r")
    assert resample(ramp, 0.1) == ramp
    fine = resample(ramp, 0.05)
    assert np.allclose(fine.values, 3.0 * fine.domain.times, atol=1e-12)
    assert fine.values[0] == ramp.values[0] and fine.values[-1] == ramp.values[-1]


def test_resample_sine_error_bound():
    d = TimeDomain(6.0, 0.1)
    s = SampledSignal(d, np.sin(d.times), "s")
    r = resample(s, 0.05)
    # linear interpolation error is at most step^2/8 * max|f''|
    assert np.max(np.abs(r.values - np.sin(r.domain.times))) <= 0.1**2 / 8 + 1e-12


def test_resample_rejects_nondivisible():
    s = SampledSignal(TimeDomain(1.0, 0.1), np.zeros(11), "z")
    with pytest.raises(SignalError):
        resample(s, 0.3)


def test_csv_roundtrip(tmp_path):
    d = TimeDomain(1.0, 0.1)
    sig = SignalSet.from_arrays(d, {"a": np.sin(d.times) / 3, "b": np.exp(d.times)})
    write_csv(sig, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "time,a,b"
    back = read_csv(tmp_path / "s.csv", step=0.1)
    assert back == sig


def test_profile_dict_roundtrip():
    p = InputProfile(
        (InputChannelSpec("a", kind("pchip"), -2, 5, 4),
         InputChannelSpec("b", kind("pulse", duty=0.5), 0, 61.1, 10)),
        TimeDomain(24.0, 0.04),
    )
    assert InputProfile.from_dict(p.to_dict()) == p


# ------------------------------------------------------------- properties

_interp = st.sampled_from(["pconst", "linear", "pchip", "pulse"])


@st.composite
def channel_case(draw):
    name = draw(_interp)
    n = draw(st.integers(2, 8))
    lo = draw(st.floats(-100, 100))
    hi = lo + draw(st.floats(0, 50))
    policy = draw(st.sampled_from(list(TimePolicy)))
    seed = draw(st.integers(0, 2**32 - 1))
    return InputChannelSpec("u", kind(name), lo, hi, n, policy), seed


@given(channel_case())
def test_generated_signals_stay_in_range(case):
    spec, seed = case
    d = TimeDomain(8.0, 0.05)
    cp = generate_control_points(spec, d, np.random.default_rng(seed))
    cp.check(spec, d)
    s = interpolate(cp, spec.kind, d, bounds=(spec.lo, spec.hi))
    assert s.values.min() >= spec.lo and s.values.max() <= spec.hi


@given(channel_case())
def test_signal_passes_through_control_points(case):
    spec, seed = case
    d = TimeDomain(8.0, 0.05)
    cp = generate_control_points(spec, d, np.random.default_rng(seed))
    s = interpolate(cp, spec.kind, d)
    for t, v in zip(cp.times, cp.values):
        k = t / d.step
        if abs(k - round(k)) < 1e-9:
            assert s.values[int(round(k))] == pytest.approx(v, abs=1e-9)
        elif spec.kind.kind in (Interp.LINEAR, Interp.PCHIP):
            # off-grid: within one linear step of the neighbouring samples
            lo_k = int(math.floor(k))
            near = s.values[lo_k : lo_k + 2]
            slack = np.abs(np.diff(s.values)).max() + 1e-9
            assert near.min() - slack <= v <= near.max() + slack


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10), st.integers(0, 10**6))
def test_pchip_preserves_monotonicity(vals, seed):
    v = np.sort(np.array(vals))
    cp = ControlPoints(np.linspace(0.0, 9.0, v.size), v)
    s = interpolate(cp, kind("pchip"), TimeDomain(9.0, 0.01))
    assert np.all(np.diff(s.values) >= -1e-9)
    assert s.values.min() >= v.min() - 1e-9 and s.values.max() <= v.max() + 1e-9


@given(channel_case())
def test_generation_is_pure(case):
    spec, seed = case
    d = TimeDomain(8.0, 0.05)
    a = generate_control_points(spec, d, np.random.default_rng(seed))
    b = generate_control_points(spec, d, np.random.default_rng(seed))
    assert a == b

