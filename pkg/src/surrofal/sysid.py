"""Discrete-time system identification for surrogate models.

Polynomial structures follow the sign convention

    arx:    y(t) = a_1 y(t-1) + ... + a_na y(t-na) + b_1 u(t-nk) + ... + b_nb u(t-nk-nb+1) + e(t)
    armax:  arx + c_1 e(t-1) + ... + c_nc e(t-nc)
    bj:     y(t) = B(q)/F(q) u(t) + C(q)/D(q) e(t)

with ``F = 1 + f_1 q^-1 + ...``, ``C = 1 + c_1 q^-1 + ...`` and
``D = 1 + d_1 q^-1 + ...``.  Multi-output data is handled with one
multi-input single-output submodel per output channel.  The state-space
structure is a MIMO ``x(t+1) = F x(t) + G u(t)``, ``y(t) = H x(t) + D u(t)``.

Fits minimise one-step-ahead prediction error; surrogates are *used* in
free-run simulation with the noise set to zero.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg
from scipy.signal import lfilter

from .models import DivergenceError, ExecutableModel
from .signals import SignalError, SignalSet, TimeDomain

__all__ = [
    "Arx",
    "Armax",
    "Bj",
    "StateSpace",
    "Structure",
    "structure_from_spec",
    "TrainingData",
    "SurrogateModel",
    "FitError",
    "SingularFitError",
    "InsufficientDataError",
    "UnstableModelWarning",
    "fit",
    "refine",
    "simulate",
    "mse",
    "one_step_mse",
    "prediction_errors",
    "arx_regressors",
    "RIDGE",
]

RIDGE = 1e-8
COND_LIMIT = 1e8
TOL = 1e-6
MAX_ITER = 50
DIVERGENCE_LIMIT = 1e12
FORMAT_VERSION = 1


class FitError(RuntimeError):
    pass


class SingularFitError(FitError):
    pass


class InsufficientDataError(FitError):
    pass


class UnstableModelWarning(UserWarning):
    pass


# -------------------------------------------------------------- structures


def _check_orders(*orders):
    if any(int(o) != o or o < 0 for o in orders):
        raise ValueError(f"orders must be non-negative integers, got {orders}")


@dataclass(frozen=True)
class Arx:
    na: int
    nb: int
    nk: int = 1

    tag = "arx"

    def __post_init__(self):
        _check_orders(self.na, self.nb, self.nk)
        if self.na == 0 and self.nb == 0:
            raise ValueError("arx needs na > 0 or nb > 0")

    @property
    def orders(self):
        return (self.na, self.nb, self.nk)

    def n_params(self, n_inputs: int) -> int:
        return self.na + n_inputs * self.nb

    @property
    def start(self) -> int:
        return max(self.na, self.nk + self.nb - 1, 0)


@dataclass(frozen=True)
class Armax:
    na: int
    nb: int
    nc: int
    nk: int = 1

    tag = "armax"

    def __post_init__(self):
        _check_orders(self.na, self.nb, self.nc, self.nk)
        if self.na == 0 and self.nb == 0:
            raise ValueError("armax needs na > 0 or nb > 0")

    @property
    def orders(self):
        return (self.na, self.nb, self.nc, self.nk)

    def n_params(self, n_inputs: int) -> int:
        return self.na + n_inputs * self.nb + self.nc

    @property
    def start(self) -> int:
        return max(self.na, self.nk + self.nb - 1, self.nc, 0)


@dataclass(frozen=True)
class Bj:
    nb: int
    nc: int
    nd: int
    nf: int
    nk: int = 1

    tag = "bj"

    def __post_init__(self):
        _check_orders(self.nb, self.nc, self.nd, self.nf, self.nk)
        if self.nb == 0:
            raise ValueError("bj needs nb > 0")

    @property
    def orders(self):
        return (self.nb, self.nc, self.nd, self.nf, self.nk)

    def n_params(self, n_inputs: int) -> int:
        return n_inputs * (self.nb + self.nf) + self.nc + self.nd

    @property
    def start(self) -> int:
        return max(self.nk + self.nb - 1, self.nf, self.nc, self.nd, 0)


@dataclass(frozen=True)
class StateSpace:
    n: int

    tag = "ss"

    def __post_init__(self):
        _check_orders(self.n)
        if self.n < 1:
            raise ValueError("state dimension must be at least 1")

    @property
    def orders(self):
        return (self.n,)

    def n_params(self, n_inputs: int, n_outputs: int = 1) -> int:
        n = self.n
        return n * n + n * n_inputs + n_outputs * n + n_outputs * n_inputs + n

    @property
    def start(self) -> int:
        return 0


Structure = Union[Arx, Armax, Bj, StateSpace]
_STRUCTURES = {s.tag: s for s in (Arx, Armax, Bj, StateSpace)}


def structure_from_spec(tag: str, orders: Sequence[int]) -> Structure:
    """``("bj", [2, 1, 1, 2, 1])`` -> ``Bj(nb=2, nc=1, nd=1, nf=2, nk=1)``."""
    try:
        cls = _STRUCTURES[tag]
    except KeyError:
        raise ValueError(f"unknown structure {tag!r}; choose from {sorted(_STRUCTURES)}") from None
    return cls(*[int(o) for o in orders])


# ----------------------------------------------------------- training data


@dataclass(frozen=True, eq=False)
class TrainingData:
    """Input/output experiments sampled at one common step."""

    experiments: tuple[tuple[SignalSet, SignalSet], ...]

    def __post_init__(self):
        exps = tuple((u, y) for u, y in self.experiments)
        if not exps:
            raise SignalError("training data needs at least one experiment")
        u0, y0 = exps[0]
        for u, y in exps:
            if u.domain != y.domain:
                raise SignalError("inputs and outputs of an experiment must share a time domain")
            if u.names != u0.names or y.names != y0.names:
                raise SignalError("channel sets differ between experiments")
            if not math.isclose(u.domain.step, u0.domain.step, rel_tol=1e-12):
                raise SignalError("all experiments must use the same sampling step")
        object.__setattr__(self, "experiments", exps)

    @classmethod
    def single(cls, inputs: SignalSet, outputs: SignalSet) -> "TrainingData":
        return cls(((inputs, outputs),))

    def append(self, inputs: SignalSet, outputs: SignalSet) -> "TrainingData":
        return TrainingData(self.experiments + ((inputs, outputs),))

    def __len__(self):
        return len(self.experiments)

    @property
    def input_names(self) -> tuple[str, ...]:
        return self.experiments[0][0].names

    @property
    def output_names(self) -> tuple[str, ...]:
        return self.experiments[0][1].names

    @property
    def step(self) -> float:
        return self.experiments[0][0].domain.step

    @property
    def n_samples(self) -> int:
        return sum(u.domain.n_samples for u, _ in self.experiments)

    def arrays(self):
        """Yield ``(U, Y)`` with shapes ``(inputs, samples)`` and ``(outputs, samples)``."""
        for u, y in self.experiments:
            yield u.matrix(), y.matrix()


# --------------------------------------------------------------- polynomials


def _bpoly(b: np.ndarray, nk: int) -> np.ndarray:
    return np.concatenate((np.zeros(nk), b)) if b.size else np.zeros(1)


def _monic(coefs: np.ndarray) -> np.ndarray:
    return np.concatenate(([1.0], coefs))


def _spectral_radius_poly(monic: np.ndarray) -> float:
    if monic.size <= 1:
        return 0.0
    return float(np.max(np.abs(np.roots(monic))))


def _lagged(x: np.ndarray, first_lag: int, count: int, start: int) -> np.ndarray:
    """Columns ``x(t - first_lag), ..., x(t - first_lag - count + 1)`` for ``t >= start``."""
    n = x.size
    cols = [x[start - lag : n - lag] for lag in range(first_lag, first_lag + count)]
    if not cols:
        return np.empty((n - start, 0))
    return np.column_stack(cols)


def arx_regressors(y: np.ndarray, U: np.ndarray, na: int, nb: int, nk: int, start: int):
    """Regressor matrix and target of one experiment (rows ``t = start .. N-1``)."""
    parts = [_lagged(y, 1, na, start)]
    for u in U:
        parts.append(_lagged(u, nk, nb, start))
    return np.hstack(parts), y[start:]


def _solve(Phi: np.ndarray, target: np.ndarray, ridge: float, label: str, notes: list) -> np.ndarray:
    p = Phi.shape[1]
    if p == 0:
        return np.zeros(0)
    rank = np.linalg.matrix_rank(Phi)
    if rank < p:
        if ridge <= 0:
            raise SingularFitError(f"{label}: regressor is rank deficient ({rank} < {p})")
        notes.append(f"{label}: rank-deficient regressor ({rank} < {p}), ridge-regularised")
    # ridge on the row-averaged normal equations, so duplicated rows leave the solution unchanged
    n_rows = Phi.shape[0]
    gram = (Phi.T @ Phi) / n_rows + ridge * np.eye(p)
    if np.linalg.cond(gram) <= COND_LIMIT:
        return scipy.linalg.solve(gram, (Phi.T @ target) / n_rows, assume_a="pos")
    aug = np.vstack((Phi, math.sqrt(max(ridge, 0.0) * n_rows) * np.eye(p)))
    rhs = np.concatenate((target, np.zeros(p)))
    return np.linalg.lstsq(aug, rhs, rcond=None)[0]


def _need_rows(structure, n_rows: int, n_params: int):
    if n_rows <= 10 * n_params:
        raise InsufficientDataError(
            f"{structure}: {n_rows} usable rows for {n_params} parameters (need > {10 * n_params})"
        )


# ------------------------------------------------------------------ model


@dataclass(frozen=True, eq=False)
class SurrogateModel(ExecutableModel):
    """A fitted structure with the same channel interface and step as its training data.

    ``coefficients`` holds one dict per output channel for polynomial
    structures (``a``, ``b``, ``c``, ``d``, ``f`` arrays) or a single dict of
    matrices ``F, G, H, D, x0`` for the state-space structure.
    """

    structure: Structure
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    step: float
    coefficients: tuple[dict, ...]
    notes: tuple[str, ...] = ()
    n_experiments: int = 1
    training_mse: float = math.nan

    @property
    def id(self):
        return f"surrogate[{self.structure.tag}{self.structure.orders}]"

    @property
    def spectral_radius(self) -> float:
        s = self.structure
        if isinstance(s, StateSpace):
            F = self.coefficients[0]["F"]
            return float(np.max(np.abs(np.linalg.eigvals(F))))
        radii = [0.0]
        for c in self.coefficients:
            if isinstance(s, Bj):
                radii += [_spectral_radius_poly(_monic(f)) for f in c["f"]]
            else:
                radii.append(_spectral_radius_poly(_monic(-c["a"])))
        return max(radii)

    @property
    def stable(self) -> bool:
        return self.spectral_radius < 1.0 + 1e-6

    def _run(self, inputs: SignalSet) -> SignalSet:
        return simulate(self, inputs)

    def to_dict(self) -> dict:
        coefs = [
            {k: np.asarray(v).tolist() for k, v in c.items()} for c in self.coefficients
        ]
        return {
            "format": "surrofal-surrogate",
            "version": FORMAT_VERSION,
            "structure": self.structure.tag,
            "orders": list(self.structure.orders),
            "inputs": list(self.input_names),
            "outputs": list(self.output_names),
            "step": self.step,
            "coefficients": coefs,
            "notes": list(self.notes),
            "n_experiments": self.n_experiments,
            "training_mse": self.training_mse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported surrogate file version {d.get('version')!r}")
        coefs = tuple({k: np.asarray(v, float) for k, v in c.items()} for c in d["coefficients"])
        return cls(
            structure_from_spec(d["structure"], d["orders"]),
            tuple(d["inputs"]), tuple(d["outputs"]), float(d["step"]), coefs,
            tuple(d.get("notes", ())), int(d.get("n_experiments", 1)),
            float(d.get("training_mse", math.nan)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -------------------------------------------------------------- simulation


def _check_divergence(Y: np.ndarray, step: float, label: str):
    bad = ~np.isfinite(Y) | (np.abs(Y) > DIVERGENCE_LIMIT)
    if bad.any():
        k = int(np.argmax(bad.any(axis=0)))
        raise DivergenceError(f"{label} diverged at step {k} (t={k * step:g})", k * step)


def _simulate_poly(model: SurrogateModel, U: np.ndarray) -> np.ndarray:
    s = model.structure
    out = np.zeros((len(model.output_names), U.shape[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        for i, c in enumerate(model.coefficients):
            for j, u in enumerate(U):
                b = _bpoly(c["b"][j], s.nk)
                den = _monic(c["f"][j]) if isinstance(s, Bj) else _monic(-c["a"])
                out[i] += lfilter(b, den, u)
    return out


def _simulate_ss(F, G, H, D, x0, U: np.ndarray) -> np.ndarray:
    n_t = U.shape[1]
    X = np.empty((F.shape[0], n_t))
    x = np.array(x0, dtype=float)
    GU = G @ U
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n_t):
            X[:, t] = x
            x = F @ x + GU[:, t]
    return H @ X + D @ U


def simulate(model: SurrogateModel, inputs: SignalSet) -> SignalSet:
    """Free-run simulation: zero noise, own past outputs, zero (or fitted) initial state."""
    U = inputs.matrix(model.input_names)
    if isinstance(model.structure, StateSpace):
        c = model.coefficients[0]
        Y = _simulate_ss(c["F"], c["G"], c["H"], c["D"], c["x0"], U)
    else:
        Y = _simulate_poly(model, U)
    _check_divergence(Y, inputs.domain.step, model.id)
    return SignalSet.from_matrix(inputs.domain, model.output_names, Y)


def mse(reference: SignalSet, predicted: SignalSet) -> float:
    """Mean squared difference over all channels and samples."""
    if reference.domain != predicted.domain:
        raise SignalError("mse: time domains differ")
    if set(reference.names) != set(predicted.names):
        raise SignalError("mse: channel sets differ")
    a = reference.matrix()
    b = predicted.matrix(reference.names)
    return float(np.mean((a - b) ** 2))


# ------------------------------------------------------ prediction errors


def _pe_poly(structure, coefs: dict, y: np.ndarray, U: np.ndarray) -> np.ndarray:
    """One-step prediction errors of one output over one whole experiment."""
    s = structure
    if isinstance(s, Bj):
        v = y.copy()
        for j, u in enumerate(U):
            v -= lfilter(_bpoly(coefs["b"][j], s.nk), _monic(coefs["f"][j]), u)
        return lfilter(_monic(coefs["d"]), _monic(coefs["c"]), v)
    a = _monic(-coefs["a"])
    cpoly = _monic(coefs["c"]) if isinstance(s, Armax) else np.ones(1)
    e = lfilter(a, cpoly, y)
    for j, u in enumerate(U):
        e -= lfilter(_bpoly(coefs["b"][j], s.nk), cpoly, u)
    return e


def prediction_errors(model: SurrogateModel, data: TrainingData) -> list[np.ndarray]:
    """Per experiment, ``(outputs, usable samples)`` one-step prediction errors.

    The state-space structure has no noise model, so its predictor is the
    simulation from the fitted initial state.
    """
    out = []
    start = model.structure.start
    with np.errstate(over="ignore", invalid="ignore"):
        for U, Y in data.arrays():
            if isinstance(model.structure, StateSpace):
                c = model.coefficients[0]
                E = Y - _simulate_ss(c["F"], c["G"], c["H"], c["D"], c["x0"], U)
            else:
                E = np.vstack([
                    _pe_poly(model.structure, c, Y[i], U)
                    for i, c in enumerate(model.coefficients)
                ])
            out.append(E[:, start:])
    return out


def one_step_mse(model: SurrogateModel, data: TrainingData) -> float:
    errs = np.hstack(prediction_errors(model, data))
    value = float(np.mean(errs ** 2))
    return value if math.isfinite(value) else math.inf


# ------------------------------------------------------------------ fitting


def _fit_arx_output(s, data: TrainingData, i: int, na: int, nb: int, nk: int, start: int,
                    ridge: float, notes: list):
    rows, targets = [], []
    for U, Y in data.arrays():
        Phi, tgt = arx_regressors(Y[i], U, na, nb, nk, start)
        rows.append(Phi)
        targets.append(tgt)
    Phi, tgt = np.vstack(rows), np.concatenate(targets)
    theta = _solve(Phi, tgt, ridge, f"{s} output {data.output_names[i]!r}", notes)
    m = len(data.input_names)
    return {"a": theta[:na], "b": theta[na:].reshape(m, nb)}


def _fit_arx(s: Arx, data: TrainingData, ridge: float, notes: list) -> list[dict]:
    return [
        _fit_arx_output(s, data, i, s.na, s.nb, s.nk, s.start, ridge, notes)
        for i in range(len(data.output_names))
    ]


def _fit_armax_output(s: Armax, data: TrainingData, i: int, ridge: float, notes: list) -> dict:
    m = len(data.input_names)
    coefs = _fit_arx_output(s, data, i, s.na, s.nb, s.nk, s.start, ridge, notes)
    coefs["c"] = np.zeros(s.nc)
    if s.nc == 0:
        return coefs
    arrays = list(data.arrays())
    theta = np.concatenate((coefs["a"], coefs["b"].ravel(), coefs["c"]))
    for _ in range(MAX_ITER):
        rows, targets = [], []
        for U, Y in arrays:
            e = _pe_poly(s, coefs, Y[i], U)
            if not np.all(np.isfinite(e)):
                break
            e[: s.start] = 0.0
            Phi, tgt = arx_regressors(Y[i], U, s.na, s.nb, s.nk, s.start)
            rows.append(np.hstack((Phi, _lagged(e, 1, s.nc, s.start))))
            targets.append(tgt)
        if len(rows) < len(arrays):
            break
        new = _solve(np.vstack(rows), np.concatenate(targets), ridge, f"{s}", notes)
        coefs = {"a": new[: s.na], "b": new[s.na : s.na + m * s.nb].reshape(m, s.nb),
                 "c": new[s.na + m * s.nb :]}
        # keep the noise filter invertible so prediction errors stay bounded
        if _spectral_radius_poly(_monic(coefs["c"])) >= 1.0:
            coefs["c"] = coefs["c"] * 0.95 / _spectral_radius_poly(_monic(coefs["c"]))
        change = np.max(np.abs(new - theta))
        theta = new
        if change < TOL:
            break
    return coefs


def _bj_unpack(theta: np.ndarray, s: Bj, m: int) -> dict:
    k = 0
    b = theta[k : k + m * s.nb].reshape(m, s.nb); k += m * s.nb
    f = theta[k : k + m * s.nf].reshape(m, s.nf); k += m * s.nf
    c = theta[k : k + s.nc]; k += s.nc
    d = theta[k : k + s.nd]
    return {"b": b, "f": f, "c": c, "d": d}


def _bj_pack(c: dict) -> np.ndarray:
    return np.concatenate((c["b"].ravel(), c["f"].ravel(), c["c"], c["d"]))


def _bj_admissible(c: dict) -> bool:
    polys = [_monic(f) for f in c["f"]] + [_monic(c["c"])]
    return all(_spectral_radius_poly(p) < 1.0 for p in polys)


def _bj_residual_jacobian(s: Bj, c: dict, arrays, i: int):
    """Prediction errors and their gradient w.r.t. the packed parameters."""
    start = s.start
    cpoly, dpoly = _monic(c["c"]), _monic(c["d"])
    eps_all, jac_all = [], []
    for U, Y in arrays:
        y = Y[i]
        cols = []
        w = []
        for j, u in enumerate(U):
            fpoly = _monic(c["f"][j])
            w.append(lfilter(_bpoly(c["b"][j], s.nk), fpoly, u))
        v = y - np.sum(w, axis=0)
        eps = lfilter(dpoly, cpoly, v)
        d_over_c = lambda x: lfilter(dpoly, cpoly, x)
        # d eps / d b_{j,k} = -(D/C) q^-(nk+k-1) u_j / F_j
        for j, u in enumerate(U):
            uf = d_over_c(lfilter([1.0], _monic(c["f"][j]), u))
            for k in range(s.nb):
                cols.append(-_shift(uf, s.nk + k))
        # d eps / d f_{j,k} = (D/C) q^-k w_j / F_j
        for j in range(len(U)):
            wf = d_over_c(lfilter([1.0], _monic(c["f"][j]), w[j]))
            for k in range(1, s.nf + 1):
                cols.append(_shift(wf, k))
        # d eps / d c_k = -q^-k eps / C ;  d eps / d d_k = q^-k v / C
        ec = lfilter([1.0], cpoly, eps)
        for k in range(1, s.nc + 1):
            cols.append(-_shift(ec, k))
        vc = lfilter([1.0], cpoly, v)
        for k in range(1, s.nd + 1):
            cols.append(_shift(vc, k))
        eps_all.append(eps[start:])
        jac_all.append(np.column_stack(cols)[start:])
    return np.concatenate(eps_all), np.vstack(jac_all)


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return x.copy()
    out = np.zeros_like(x)
    out[k:] = x[:-k]
    return out


def _bj_gauss_newton(s: Bj, c: dict, arrays, i: int, m: int):
    """Levenberg-damped Gauss-Newton on the prediction-error cost; never increases it."""
    theta = _bj_pack(c)
    with np.errstate(all="ignore"):
        eps, J = _bj_residual_jacobian(s, c, arrays, i)
    cost = float(np.mean(eps ** 2))
    if not math.isfinite(cost):
        return c, math.inf
    mu = 1e-3
    for _ in range(MAX_ITER):
        g = J.T @ eps
        A = J.T @ J
        scale = np.diag(A).copy()
        scale[scale <= 0] = 1.0
        improved = False
        for _ in range(12):
            try:
                # a poorly conditioned step is simply rejected below if it does not help
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                    delta = -scipy.linalg.solve(A + mu * np.diag(scale), g, assume_a="sym")
            except (np.linalg.LinAlgError, ValueError):
                mu *= 10.0
                continue
            trial = _bj_unpack(theta + delta, s, m)
            if _bj_admissible(trial):
                with np.errstate(all="ignore"):
                    e_new, J_new = _bj_residual_jacobian(s, trial, arrays, i)
                new_cost = float(np.mean(e_new ** 2))
                if math.isfinite(new_cost) and new_cost < cost:
                    theta, c, eps, J, cost = theta + delta, trial, e_new, J_new, new_cost
                    mu = max(mu * 0.3, 1e-12)
                    improved = True
                    break
            mu *= 10.0
        if not improved or np.max(np.abs(delta)) < TOL:
            break
    return c, cost


def _fit_bj_output(s: Bj, data: TrainingData, i: int, ridge: float, notes: list,
                   warm: dict | None) -> dict:
    m = len(data.input_names)
    arrays = list(data.arrays())
    arx = _fit_arx_output(s, data, i, s.nf, s.nb, s.nk, s.start, ridge, notes)
    f0 = -arx["a"]
    if _spectral_radius_poly(_monic(f0)) >= 1.0:
        f0 = np.zeros(s.nf)
        arx = _fit_arx_output(s, data, i, 0, s.nb, s.nk, s.start, ridge, notes)
    init = {"b": arx["b"], "f": np.tile(f0, (m, 1)), "c": np.zeros(s.nc), "d": np.zeros(s.nd)}
    best, best_cost = _bj_gauss_newton(s, init, arrays, i, m)
    if warm is not None and _bj_admissible(warm):
        c2, cost2 = _bj_gauss_newton(s, warm, arrays, i, m)
        if cost2 < best_cost:
            best, best_cost = c2, cost2
    return best


def _hankel(X: np.ndarray, rows: int) -> np.ndarray:
    """Block Hankel matrix with ``rows`` block rows from a ``(channels, samples)`` array."""
    ch, n = X.shape
    cols = n - rows + 1
    H = np.empty((ch * rows, cols))
    for r in range(rows):
        H[r * ch : (r + 1) * ch] = X[:, r : r + cols]
    return H


def _fit_ss(s: StateSpace, data: TrainingData, ridge: float, notes: list) -> dict:
    n = s.n
    m, p = len(data.input_names), len(data.output_names)
    i = 2 * n
    arrays = list(data.arrays())
    blocks = []
    for U, Y in arrays:
        if U.shape[1] - i + 1 < 1:
            raise InsufficientDataError(f"{s}: experiment too short for {i} block rows")
        blocks.append(np.vstack((_hankel(U, i), _hankel(Y, i))))
    Hk = np.hstack(blocks) / math.sqrt(sum(b.shape[1] for b in blocks))
    # LQ factorisation via QR of the transpose
    R = np.linalg.qr(Hk.T, mode="r")
    L = R.T
    L22 = L[m * i :, m * i :]
    Us, sv, _ = np.linalg.svd(L22, full_matrices=False)
    if sv.size < n or sv[n - 1] <= 1e-12 * max(sv[0], 1e-300):
        notes.append(f"{s}: data excite fewer than {n} state directions")
    Gamma = Us[:, :n] * np.sqrt(sv[:n])
    H = Gamma[:p]
    F = np.linalg.lstsq(Gamma[:-p], Gamma[p:], rcond=None)[0]

    # y is linear in (G, D, x0_e): regress on simulated basis responses
    n_exp = len(arrays)
    n_par = n * m + p * m + n * n_exp
    rows, targets = [], []
    for e, (U, Y) in enumerate(arrays):
        T = U.shape[1]
        S = np.zeros((n, n, m))
        resp_G = np.empty((T, p, n * m))
        Fk = np.eye(n)
        resp_x0 = np.empty((T, p, n))
        for t in range(T):
            resp_G[t] = np.einsum("pn,nrm->prm", H, S).reshape(p, n * m)
            resp_x0[t] = H @ Fk
            S = np.einsum("ab,brm->arm", F, S)
            S[np.arange(n), np.arange(n), :] += U[:, t]
            Fk = F @ Fk
        block = np.zeros((T, p, n_par))
        block[:, :, : n * m] = resp_G
        for q in range(p):
            block[:, q, n * m + q * m : n * m + (q + 1) * m] = U.T
        off = n * m + p * m + n * e
        block[:, :, off : off + n] = resp_x0
        rows.append(block.reshape(T * p, n_par))
        targets.append(Y.T.reshape(T * p))
    theta = _solve(np.vstack(rows), np.concatenate(targets), ridge, f"{s}", notes)
    G = theta[: n * m].reshape(n, m)
    D = theta[n * m : n * m + p * m].reshape(p, m)
    x0 = theta[n * m + p * m : n * m + p * m + n]
    return {"F": F, "G": G, "H": H, "D": D, "x0": x0}


def fit(
    structure: Structure,
    data: TrainingData,
    ridge: float = RIDGE,
    warm_start: SurrogateModel | None = None,
) -> SurrogateModel:
    """Identify ``structure`` from ``data``.

    ``warm_start`` (a previous model of the same structure) is used as an
    extra starting point for the iterative structures; the fit keeps
    whichever candidate has the lower one-step prediction error.
    """
    m, p = len(data.input_names), len(data.output_names)
    if isinstance(structure, StateSpace):
        n_params = structure.n_params(m, p)
    else:
        n_params = structure.n_params(m)
    usable = sum(u.domain.n_samples - structure.start for u, _ in data.experiments)
    _need_rows(structure, usable * (p if isinstance(structure, StateSpace) else 1), n_params)

    notes: list[str] = []
    if isinstance(structure, Arx):
        coefs = _fit_arx(structure, data, ridge, notes)
    elif isinstance(structure, Armax):
        coefs = [_fit_armax_output(structure, data, i, ridge, notes) for i in range(p)]
    elif isinstance(structure, Bj):
        warm = None
        if warm_start is not None and warm_start.structure == structure:
            warm = warm_start.coefficients
        coefs = [
            _fit_bj_output(structure, data, i, ridge, notes, None if warm is None else warm[i])
            for i in range(p)
        ]
    else:
        coefs = [_fit_ss(structure, data, ridge, notes)]

    model = SurrogateModel(
        structure, data.input_names, data.output_names, data.step, tuple(coefs),
        n_experiments=len(data),
    )
    cost = one_step_mse(model, data)
    if warm_start is not None and warm_start.structure == structure and not isinstance(structure, Arx):
        prev_cost = one_step_mse(warm_start, data)
        if prev_cost < cost:
            notes.append("kept previous coefficients: lower prediction error on the combined data")
            coefs, cost = list(warm_start.coefficients), prev_cost
    model = SurrogateModel(
        structure, data.input_names, data.output_names, data.step, tuple(coefs),
        notes=tuple(notes), n_experiments=len(data), training_mse=cost,
    )
    if not model.stable:
        msg = f"{model.id}: identified model is unstable (spectral radius {model.spectral_radius:.6g})"
        warnings.warn(msg, UnstableModelWarning, stacklevel=2)
        model = SurrogateModel(
            structure, data.input_names, data.output_names, data.step, tuple(coefs),
            notes=tuple(notes) + (msg,), n_experiments=len(data), training_mse=cost,
        )
    return model


def refine(
    structure: Structure,
    old_data: TrainingData,
    new_inputs: SignalSet,
    new_outputs: SignalSet,
    previous: SurrogateModel | None = None,
) -> tuple[SurrogateModel, TrainingData]:
    """Refit the same structure on the old experiments plus one new experiment."""
    if new_inputs.names != old_data.input_names or new_outputs.names != old_data.output_names:
        raise SignalError("new experiment channels differ from the training data")
    data = old_data.append(new_inputs, new_outputs)
    return fit(structure, data, warm_start=previous), data
