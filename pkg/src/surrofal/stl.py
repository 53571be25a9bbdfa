"""Signal temporal logic: formulas, a small parser and robustness monitoring.

Grammar (loosest binding first)::

    phi  := phi '->' phi                    (right associative)
          | phi '|' phi | phi '&' phi
          | phi 'U[' a ',' b ']' phi
          | '!' phi | 'G[' a ',' b ']' phi | 'F[' a ',' b ']' phi
          | '(' phi ')' | 'true' | 'false' | expr REL number
    expr := ['-'] term (('+'|'-') term)*
    term := number '*' name | name | number

Robustness is evaluated on the sample grid of the trace.  Interval bounds
are seconds and must land on the grid.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signals import SignalSet

__all__ = [
    "Formula",
    "Atom",
    "Const",
    "Not",
    "And",
    "Or",
    "Implies",
    "Globally",
    "Eventually",
    "Until",
    "StlSyntaxError",
    "HorizonError",
    "parse_stl",
    "robustness",
    "robustness_signal",
    "satisfied",
    "test_objective",
    "horizon",
]


class StlSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class HorizonError(ValueError):
    """The formula looks further ahead than the trace reaches."""


class Formula:
    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)


@dataclass(frozen=True)
class Atom(Formula):
    """``sum(coef * channel) + offset  REL  threshold``."""

    coefs: tuple[tuple[str, float], ...]
    offset: float
    rel: str
    threshold: float

    def __post_init__(self):
        if self.rel not in ("<", "<=", ">", ">="):
            raise ValueError(f"unknown relation {self.rel!r}")

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.coefs)

    def expr(self, trace: SignalSet) -> np.ndarray:
        out = np.full(trace.domain.n_samples, float(self.offset))
        for ch, c in self.coefs:
            out = out + c * trace[ch].values
        return out

    def __str__(self):
        terms = " + ".join(f"{c!r}*{ch}" for ch, c in self.coefs)
        if self.offset:
            terms = f"{terms} + {self.offset!r}" if terms else repr(self.offset)
        return f"({terms} {self.rel} {self.threshold!r})"


@dataclass(frozen=True)
class Const(Formula):
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def __str__(self):
        return f"!{self.arg}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} -> {self.right})"


def _check_interval(lo: float, hi: float):
    if not 0 <= lo <= hi:
        raise ValueError(f"malformed interval [{lo}, {hi}]")


@dataclass(frozen=True)
class Globally(Formula):
    lo: float
    hi: float
    arg: Formula

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def __str__(self):
        return f"G[{self.lo!r},{self.hi!r}] {self.arg}"


@dataclass(frozen=True)
class Eventually(Formula):
    lo: float
    hi: float
    arg: Formula

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def __str__(self):
        return f"F[{self.lo!r},{self.hi!r}] {self.arg}"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    lo: float
    hi: float
    right: Formula

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def __str__(self):
        return f"({self.left} U[{self.lo!r},{self.hi!r}] {self.right})"


def channels(phi: Formula) -> set[str]:
    if isinstance(phi, Atom):
        return set(phi.channels)
    if isinstance(phi, Const):
        return set()
    if isinstance(phi, (Not, Globally, Eventually)):
        return channels(phi.arg)
    return channels(phi.left) | channels(phi.right)


def horizon(phi: Formula) -> float:
    """How far past its evaluation time the formula reads the trace."""
    if isinstance(phi, (Atom, Const)):
        return 0.0
    if isinstance(phi, Not):
        return horizon(phi.arg)
    if isinstance(phi, (Globally, Eventually)):
        return phi.hi + horizon(phi.arg)
    if isinstance(phi, Until):
        return phi.hi + max(horizon(phi.left), horizon(phi.right))
    return max(horizon(phi.left), horizon(phi.right))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<op><=|>=|->|[<>!&|()\[\],*+\-])
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, output_channels: Sequence[str] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.known = None if output_channels is None else set(output_channels)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = text if text is not None else kind
            found = t.text or "end of input"
            raise StlSyntaxError(f"expected {want!r}, found {found!r}", t.pos)
        self.i += 1
        return t

    def peek(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "name") and self.tok.text in texts

    def parse(self) -> Formula:
        phi = self.implies()
        if self.tok.kind != "end":
            raise StlSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return phi

    def implies(self) -> Formula:
        left = self.disjunction()
        if self.peek("->"):
            self.take("->")
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.peek("|"):
            self.take("|")
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.until()
        while self.peek("&"):
            self.take("&")
            left = And(left, self.until())
        return left

    def until(self) -> Formula:
        left = self.unary()
        while self.peek("U"):
            self.take("U")
            lo, hi = self.interval()
            left = Until(left, lo, hi, self.unary())
        return left

    def interval(self) -> tuple[float, float]:
        start = self.take("[").pos
        lo = float(self.take(kind="num").text)
        self.take(",")
        hi = float(self.take(kind="num").text)
        self.take("]")
        if lo > hi:
            raise StlSyntaxError(f"malformed interval [{lo}, {hi}]: lower bound exceeds upper", start)
        return lo, hi

    def unary(self) -> Formula:
        if self.peek("!"):
            self.take("!")
            return Not(self.unary())
        if self.peek("G", "F") and self.toks[self.i + 1].text == "[":
            op = self.take().text
            lo, hi = self.interval()
            arg = self.unary()
            return Globally(lo, hi, arg) if op == "G" else Eventually(lo, hi, arg)
        if self.peek("("):
            self.take("(")
            phi = self.implies()
            self.take(")")
            return phi
        if self.peek("true", "false"):
            return Const(self.take().text == "true")
        return self.atom()

    def atom(self) -> Atom:
        coefs: dict[str, float] = {}
        offset = 0.0
        sign = 1.0
        if self.peek("-"):
            self.take("-")
            sign = -1.0
        while True:
            name, c = self.term()
            if name is None:
                offset += sign * c
            else:
                coefs[name] = coefs.get(name, 0.0) + sign * c
            if self.peek("+", "-"):
                sign = 1.0 if self.take().text == "+" else -1.0
                continue
            break
        t = self.tok
        if not (t.kind == "op" and t.text in ("<", "<=", ">", ">=")):
            raise StlSyntaxError(f"expected a relation, found {t.text or 'end of input'!r}", t.pos)
        rel = self.take().text
        neg = 1.0
        if self.peek("-"):
            self.take("-")
            neg = -1.0
        threshold = neg * float(self.take(kind="num").text)
        return Atom(tuple(coefs.items()), offset, rel, threshold)

    def term(self) -> tuple[str | None, float]:
        t = self.tok
        if t.kind == "num":
            c = float(self.take().text)
            if self.peek("*"):
                self.take("*")
                return self.channel(), c
            return None, c
        if t.kind == "name":
            return self.channel(), 1.0
        raise StlSyntaxError(f"expected a term, found {t.text or 'end of input'!r}", t.pos)

    def channel(self) -> str:
        t = self.take(kind="name")
        if self.known is not None and t.text not in self.known:
            raise StlSyntaxError(f"unknown channel {t.text!r}", t.pos)
        return t.text


def parse_stl(text: str, output_channels: Sequence[str] | None = None) -> Formula:
    """Parse a requirement; channel names are checked when ``output_channels`` is given."""
    return _Parser(text, output_channels).parse()


# ------------------------------------------------------------- robustness


def _steps(t: float, step: float) -> int:
    k = round(t / step)
    if abs(t / step - k) > 1e-9 * max(1.0, abs(t / step)):
        raise HorizonError(f"interval bound {t} is not aligned to the sample step {step}")
    return int(k)


def _rho(phi: Formula, trace: SignalSet) -> np.ndarray:
    """Robustness at every sample index where it is defined (a prefix of the grid)."""
    step = trace.domain.step
    if isinstance(phi, Atom):
        e = phi.expr(trace)
        return phi.threshold - e if phi.rel in ("<", "<=") else e - phi.threshold
    if isinstance(phi, Const):
        return np.full(trace.domain.n_samples, math.inf if phi.value else -math.inf)
    if isinstance(phi, Not):
        return -_rho(phi.arg, trace)
    if isinstance(phi, (And, Or, Implies)):
        left = _rho(phi.left, trace)
        right = _rho(phi.right, trace)
        if isinstance(phi, Implies):
            left = -left
        n = min(left.size, right.size)
        op = np.minimum if isinstance(phi, And) else np.maximum
        return op(left[:n], right[:n])
    if isinstance(phi, (Globally, Eventually)):
        a, b = _steps(phi.lo, step), _steps(phi.hi, step)
        sub = _rho(phi.arg, trace)
        if sub.size <= b:
            return sub[:0]
        windows = sliding_window_view(sub[a:], b - a + 1)
        return windows.min(axis=1) if isinstance(phi, Globally) else windows.max(axis=1)
    if isinstance(phi, Until):
        a, b = _steps(phi.lo, step), _steps(phi.hi, step)
        left = _rho(phi.left, trace)
        right = _rho(phi.right, trace)
        n = min(left.size, right.size) - b
        out = np.empty(max(n, 0))
        for k in range(n):
            held = np.minimum.accumulate(left[k : k + b + 1])
            out[k] = np.max(np.minimum(right[k + a : k + b + 1], held[a:]))
        return out
    raise TypeError(f"not a formula: {phi!r}")


def robustness_signal(phi: Formula, trace: SignalSet) -> np.ndarray:
    return _rho(phi, trace)


def robustness(phi: Formula, trace: SignalSet, t0: float = 0.0) -> float:
    """Quantitative satisfaction of ``phi`` by ``trace`` at time ``t0``."""
    missing = channels(phi) - set(trace.names)
    if missing:
        raise KeyError(f"trace lacks channels {sorted(missing)}")
    k0 = _steps(t0, trace.domain.step)
    rho = _rho(phi, trace)
    if k0 >= rho.size:
        raise HorizonError(
            f"formula horizon {horizon(phi)} from t0={t0} exceeds trace end {trace.domain.end_time}"
        )
    return float(rho[k0])


def satisfied(phi: Formula, trace: SignalSet, t0: float = 0.0) -> bool:
    """Boolean semantics on the sample grid, evaluated directly from the definitions.

    Strict relations are strict here, so a robustness of exactly zero may
    disagree with the boolean verdict.
    """
    step = trace.domain.step
    k0 = _steps(t0, step)
    cache: dict = {}
    memo: dict = {}

    def holds(f: Formula, k: int) -> bool:
        key = (id(f), k)
        if key not in memo:
            memo[key] = _holds(f, k)
        return memo[key]

    def _holds(f: Formula, k: int) -> bool:
        if isinstance(f, Const):
            return f.value
        if isinstance(f, Atom):
            key = id(f)
            if key not in cache:
                cache[key] = f.expr(trace)
            v = cache[key][k]
            return {
                "<": v < f.threshold,
                "<=": v <= f.threshold,
                ">": v > f.threshold,
                ">=": v >= f.threshold,
            }[f.rel]
        if isinstance(f, Not):
            return not holds(f.arg, k)
        if isinstance(f, And):
            return holds(f.left, k) and holds(f.right, k)
        if isinstance(f, Or):
            return holds(f.left, k) or holds(f.right, k)
        if isinstance(f, Implies):
            return (not holds(f.left, k)) or holds(f.right, k)
        a, b = _steps(f.lo, step), _steps(f.hi, step)
        if isinstance(f, Globally):
            return all(holds(f.arg, j) for j in range(k + a, k + b + 1))
        if isinstance(f, Eventually):
            return any(holds(f.arg, j) for j in range(k + a, k + b + 1))
        for j in range(k + a, k + b + 1):
            if holds(f.right, j) and all(holds(f.left, i) for i in range(k, j + 1)):
                return True
        return False

    if k0 + _steps(horizon(phi), step) > trace.domain.n_steps:
        raise HorizonError("formula horizon exceeds the trace")
    return holds(phi, k0)


def test_objective(phi: Formula, inputs: SignalSet | None, outputs: SignalSet) -> float:
    """Falsification objective: negative means the requirement is violated."""
    return robustness(phi, outputs, 0.0)


# keep pytest from collecting the objective as a test
test_objective.__test__ = False
