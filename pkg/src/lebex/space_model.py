"""Probability models and random variables in atomic and quantile form.

Two representations are supported:

* ``AtomicRV`` -- values aligned with the atoms of an ``AtomicModel``;
  arithmetic is exact when the model is in rational mode.
* ``QuantileRV`` -- a law described through its quantile function.  Internally
  the variable is read in the *upper* coordinate ``s = 1 - t`` and evaluated
  at ``log s``; ``X(s) = q_X(1 - s)`` is nonincreasing in ``s`` and large
  values live near ``s = 0``.  Working in ``log s`` keeps events of
  probability ``e^{-10^4}`` representable.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .quadrature import QuadResult, integrate

Number = Union[int, float, Fraction]

RATIONAL = "rational"
FLOAT = "float"

_PROB_TOL = 1e-12
_DENSITY_TOL = 1e-9
_MONOTONE_GRID = 1024


class RepresentationError(TypeError):
    """Raised when an operation receives a representation it cannot handle."""


class UnboundedError(ValueError):
    """Raised when a bounded variable is required but the input is unbounded."""


def parse_number(x: Any, mode: str = FLOAT) -> Number:
    """Coerce JSON-ish input into the arithmetic of ``mode``.

    Strings such as ``"1/3"`` are read as fractions.  In rational mode floats
    are converted through their decimal repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, str):
        x = Fraction(x.strip())
    if mode == RATIONAL:
        if isinstance(x, (float, np.floating)):
            return Fraction(repr(float(x)))
        return Fraction(x)
    return float(x)


def _as_array(values: Iterable[Number], mode: str) -> np.ndarray:
    values = list(values)
    if mode == RATIONAL:
        arr = np.empty(len(values), dtype=object)
        for i, v in enumerate(values):
            arr[i] = parse_number(v, RATIONAL)
        return arr
    return np.asarray([float(v) for v in values], dtype=float)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomicModel:
    """A finite probability space given by labelled atoms.

    ``depth`` is set for truncations of a countable space: atoms ``1..depth``
    carry their exact weights and one extra atom stands for the residual set
    ``{depth+1, depth+2, ...}`` with certified weight ``residual``.
    """

    labels: tuple
    probs: np.ndarray
    mode: str = FLOAT
    depth: int | None = None
    residual: Number = 0

    def __post_init__(self) -> None:
        if self.mode not in (RATIONAL, FLOAT):
            raise ValueError(f"unknown arithmetic mode {self.mode!r}")
        probs = _as_array(self.probs, self.mode)
        if len(self.labels) != len(probs):
            raise ValueError("labels and probabilities differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("atom labels must be unique")
        if len(probs) == 0:
            raise ValueError("a model needs at least one atom")
        if any(not p > 0 for p in probs):
            raise ValueError("every atom must carry positive probability")
        total = sum(probs) if self.mode == RATIONAL else float(np.sum(probs))
        if self.mode == RATIONAL and total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if self.mode == FLOAT and abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1 within {_PROB_TOL}")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", _freeze(probs))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def countable(self) -> bool:
        return self.depth is not None

    def index(self, label: Any) -> int:
        return self.labels.index(label)

    def float_probs(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def same_as(self, other: "AtomicModel") -> bool:
        if self is other:
            return True
        return self.labels == other.labels and bool(np.all(self.probs == other.probs))

    @classmethod
    def from_probs(cls, probs: Sequence[Number], labels: Sequence[Any] | None = None, mode: str = FLOAT) -> "AtomicModel":
        labels = tuple(range(len(probs))) if labels is None else tuple(labels)
        return cls(labels, np.asarray(list(probs), dtype=object), mode)

    @classmethod
    def uniform(cls, n: int, mode: str = FLOAT) -> "AtomicModel":
        p = Fraction(1, n) if mode == RATIONAL else 1.0 / n
        probs = [p] * n
        if mode == FLOAT:
            probs[-1] = 1.0 - (n - 1) * (1.0 / n)
        return cls.from_probs(probs, mode=mode)

    @classmethod
    def geometric(cls, depth: int = 128, mode: str = RATIONAL) -> "AtomicModel":
        """Truncation of ``P({k}) = 2^{-k}`` on the positive integers.

        Atoms ``1..depth`` are exact; the label ``"tail"`` carries the
        residual weight ``2^{-depth}``.
        """
        if depth < 1:
            raise ValueError("depth must be at least 1")
        if mode == RATIONAL:
            probs = [Fraction(1, 2**k) for k in range(1, depth + 1)]
            residual: Number = Fraction(1, 2**depth)
        else:
            probs = [2.0**-k for k in range(1, depth + 1)]
            residual = 2.0**-depth
        labels = tuple(range(1, depth + 1)) + ("tail",)
        return cls(labels, np.asarray(probs + [residual], dtype=object), mode, depth=depth, residual=residual)

    def to_json(self) -> dict:
        if self.countable and self.labels[-1] == "tail":
            return {"kind": "geometric", "depth": self.depth, "mode": self.mode}
        return {
            "atoms": [{"label": lab, "prob": _num_json(p)} for lab, p in zip(self.labels, self.probs)],
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, data: dict) -> "AtomicModel":
        mode = data.get("mode", FLOAT)
        if data.get("kind") == "geometric":
            return cls.geometric(int(data.get("depth", 128)), mode)
        if "uniform" in data:
            return cls.uniform(int(data["uniform"]), mode)
        atoms = data["atoms"]
        labels = [a.get("label", i) for i, a in enumerate(atoms)]
        probs = [parse_number(a["prob"], mode) for a in atoms]
        return cls.from_probs(probs, labels, mode)


def _num_json(x: Number) -> Any:
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    return float(x)


# ---------------------------------------------------------------------------
# Pointwise operators
# ---------------------------------------------------------------------------


class Op(ABC):
    """A pointwise map applied to a random variable."""

    monotone = True

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def to_json(self) -> dict: ...


@dataclass(frozen=True)
class Scale(Op):
    alpha: Number

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("scale factor must be nonnegative")

    def apply(self, x):
        return x * self.alpha

    def to_json(self):
        return {"op": "scale", "alpha": _num_json(self.alpha)}


@dataclass(frozen=True)
class Shift(Op):
    c: Number

    def apply(self, x):
        return x + self.c

    def to_json(self):
        return {"op": "shift", "c": _num_json(self.c)}


@dataclass(frozen=True)
class Clamp(Op):
    """``(x v lo) ^ hi``."""

    lo: Number
    hi: Number

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"clamp levels out of order: {self.lo} > {self.hi}")

    def apply(self, x):
        x = np.asarray(x)
        if x.dtype == object:
            out = np.where(x < self.lo, self.lo, x)
            return np.where(out > self.hi, self.hi, out)
        return np.clip(x, float(self.lo), float(self.hi))

    def to_json(self):
        return {"op": "clamp", "lo": _num_json(self.lo), "hi": _num_json(self.hi)}


@dataclass(frozen=True)
class TailCut(Op):
    """``x * 1{x > N}`` for nonnegative input."""

    N: Number

    def apply(self, x):
        x = np.asarray(x)
        zero = 0 if x.dtype == object else 0.0
        return np.where(x > self.N, x, zero)

    def to_json(self):
        return {"op": "tail", "N": _num_json(self.N)}


@dataclass(frozen=True)
class Mask(Op):
    """``x * 1{lo <= x <= hi}`` with ``lo <= 0 <= hi``."""

    lo: Number
    hi: Number
    monotone = False

    def __post_init__(self) -> None:
        if not self.lo <= 0 <= self.hi:
            raise ValueError("mask band must contain 0")

    def apply(self, x):
        x = np.asarray(x)
        zero = 0 if x.dtype == object else 0.0
        keep = (x >= self.lo) & (x <= self.hi)
        return np.where(keep, x, zero)

    def to_json(self):
        return {"op": "mask", "lo": _num_json(self.lo), "hi": _num_json(self.hi)}


@dataclass(frozen=True)
class Abs(Op):
    monotone = False

    def apply(self, x):
        x = np.asarray(x)
        if x.dtype == object:
            return np.asarray([abs(v) for v in x], dtype=object)
        return np.abs(x)

    def to_json(self):
        return {"op": "abs"}


def op_from_json(d: dict, mode: str = FLOAT) -> Op:
    kind = d["op"]
    num = lambda k: parse_number(d[k], mode)  # noqa: E731
    if kind == "scale":
        return Scale(num("alpha"))
    if kind == "shift":
        return Shift(num("c"))
    if kind == "clamp":
        return Clamp(num("lo"), num("hi"))
    if kind == "tail":
        return TailCut(num("N"))
    if kind == "mask":
        return Mask(num("lo"), num("hi"))
    if kind == "abs":
        return Abs()
    raise ValueError(f"unknown op {kind!r}")


# ---------------------------------------------------------------------------
# Atomic variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineSequence:
    """Rule ``k -> slope*k + intercept`` defining a variable on a countable model."""

    slope: Number
    intercept: Number = 0

    def __call__(self, k):
        return self.slope * k + self.intercept


@dataclass(frozen=True, eq=False)
class AtomicRV:
    """Values aligned with the atoms of ``model``.

    On a countable truncation ``sequence`` and ``ops`` keep the exact rule
    ``X(k) = ops(sequence(k))`` for every ``k``; the residual atom holds the
    representative value ``X(depth + 1)``.
    """

    model: AtomicModel
    values: np.ndarray
    sequence: AffineSequence | None = None
    ops: tuple = ()

    def __post_init__(self) -> None:
        vals = _as_array(self.values, self.model.mode)
        if len(vals) != self.model.n:
            raise ValueError(f"{len(vals)} values for a model with {self.model.n} atoms")
        if self.model.mode == FLOAT and not np.all(np.isfinite(vals)):
            raise ValueError("atomic values must be finite")
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "ops", tuple(self.ops))

    @classmethod
    def from_sequence(cls, model: AtomicModel, slope: Number = 1, intercept: Number = 0) -> "AtomicRV":
        if not model.countable:
            raise ValueError("sequence variables need a countable model")
        seq = AffineSequence(parse_number(slope, model.mode), parse_number(intercept, model.mode))
        vals = [seq(k) for k in range(1, model.depth + 2)]
        return cls(model, vals, seq)

    @classmethod
    def constant(cls, model: AtomicModel, c: Number) -> "AtomicRV":
        return cls(model, [c] * model.n)

    def value_at(self, k: int) -> Number:
        """Exact value on atom ``k`` of the underlying countable space."""
        if self.sequence is None:
            raise ValueError("variable has no countable rule")
        v = np.asarray([self.sequence(k)], dtype=object if self.model.mode == RATIONAL else float)
        for op in self.ops:
            v = op.apply(v)
        return v[0]

    def _apply(self, op: Op) -> "AtomicRV":
        seq_ops = self.ops + (op,) if self.sequence is not None else ()
        return AtomicRV(self.model, op.apply(np.asarray(self.values)), self.sequence, seq_ops)

    def _num(self, x: Number) -> Number:
        return parse_number(x, self.model.mode)

    def scale(self, alpha: Number) -> "AtomicRV":
        return self._apply(Scale(self._num(alpha)))

    def shift(self, c: Number) -> "AtomicRV":
        return self._apply(Shift(self._num(c)))

    def clamp(self, lo: Number, hi: Number) -> "AtomicRV":
        return self._apply(Clamp(self._num(lo), self._num(hi)))

    def truncate_tail(self, N: Number) -> "AtomicRV":
        if not self.nonnegative:
            raise ValueError("truncate_tail expects a nonnegative variable; pass |X|")
        return self._apply(TailCut(self._num(N)))

    def mask(self, lo: Number, hi: Number) -> "AtomicRV":
        return self._apply(Mask(self._num(lo), self._num(hi)))

    def abs(self) -> "AtomicRV":
        return self._apply(Abs())

    def plus(self, other: "AtomicRV") -> "AtomicRV":
        if not self.model.same_as(other.model):
            raise ValueError("variables live on different models")
        return AtomicRV(self.model, np.asarray(self.values) + np.asarray(other.values))

    def with_values(self, values) -> "AtomicRV":
        return AtomicRV(self.model, values)

    @property
    def lower(self) -> Number:
        return min(self.values)

    @property
    def upper_bound(self) -> Number:
        return max(self.values)

    @property
    def nonnegative(self) -> bool:
        return self.lower >= 0

    @property
    def bounded(self) -> bool:
        return self.sequence is None or self._sequence_bounded()

    def _sequence_bounded(self) -> bool:
        # An affine rule is bounded iff it is constant or a later op caps it.
        if self.sequence.slope == 0:
            return True
        for op in self.ops:
            if isinstance(op, Scale) and op.alpha == 0:
                return True
            if isinstance(op, (Clamp, Mask)):
                return True
        return False

    def float_values(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def to_json(self) -> dict:
        if self.sequence is not None:
            return {
                "kind": "sequence",
                "slope": _num_json(self.sequence.slope),
                "intercept": _num_json(self.sequence.intercept),
                "ops": [op.to_json() for op in self.ops],
            }
        return {"kind": "atomic", "values": [_num_json(v) for v in self.values]}


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityRV:
    """Nonnegative weights on the atoms of ``model``.

    With ``probability=True`` the weights are a Radon-Nikodym density and must
    integrate to one (exactly in rational mode, within 1e-9 in float mode).
    """

    model: AtomicModel
    values: np.ndarray
    probability: bool = True

    def __post_init__(self) -> None:
        vals = _as_array(self.values, self.model.mode)
        if len(vals) != self.model.n:
            raise ValueError(f"{len(vals)} density values for a model with {self.model.n} atoms")
        if any(v < 0 for v in vals):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "values", _freeze(vals))
        if self.probability and not self.is_normalized():
            raise ValueError(f"density integrates to {self.mass()}, not 1")

    def mass(self) -> Number:
        if self.model.mode == RATIONAL:
            return sum(p * z for p, z in zip(self.model.probs, self.values))
        return float(self.model.float_probs() @ self.float_values())

    def is_normalized(self) -> bool:
        m = self.mass()
        if self.model.mode == RATIONAL:
            return m == 1
        return abs(m - 1.0) <= _DENSITY_TOL

    def float_values(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @classmethod
    def ones(cls, model: AtomicModel) -> "DensityRV":
        return cls(model, [1] * model.n)

    @classmethod
    def from_measure(cls, model: AtomicModel, q: Sequence[Number]) -> "DensityRV":
        """Density of the measure with atom masses ``q`` against ``model``."""
        vals = [parse_number(qi, model.mode) / p for qi, p in zip(q, model.probs)]
        return cls(model, vals)

    def to_json(self) -> dict:
        return {"values": [_num_json(v) for v in self.values], "probability": self.probability}


@dataclass(frozen=True, eq=False)
class QuantileDensity:
    """A density on the uniform coordinate of the quantile representation.

    ``fn`` maps ``log s`` to the density value.  Pairing with a ``QuantileRV``
    places the two on the same coordinate, so ``E[XZ] = int_0^1 X(s) Z(s) ds``;
    this is the comonotone coupling relevant for law-invariant functionals.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    breaks: tuple = ()
    label: str = ""

    def __call__(self, log_s: np.ndarray) -> np.ndarray:
        return self.fn(log_s)


# ---------------------------------------------------------------------------
# Quantile families
# ---------------------------------------------------------------------------


class QuantileFamily(ABC):
    """Base law of a quantile variable.

    Subclasses provide ``upper`` (the value ``q(1-s)`` at ``log s``), the
    log-survival function, the essential bounds and the asymptotic slope
    ``kappa = lim q(1-s) / (-log s)`` as ``s -> 0``.
    """

    tag: str = ""

    @abstractmethod
    def upper(self, log_s: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def log_survival(self, x: float) -> float: ...

    @property
    @abstractmethod
    def lower(self) -> float: ...

    @property
    @abstractmethod
    def upper_bound(self) -> float: ...

    @property
    def tail_slope(self) -> float:
        return 0.0 if math.isfinite(self.upper_bound) else math.inf

    def breaks(self) -> tuple:
        return ()

    @abstractmethod
    def params(self) -> dict: ...

    def _check_monotone(self) -> None:
        t = (np.arange(_MONOTONE_GRID) + 0.5) / _MONOTONE_GRID
        q = self.upper(np.log1p(-t))
        if np.any(np.diff(q) < -1e-12 * (1 + np.abs(q[1:]))):
            raise ValueError(f"{self.tag} quantile is not nondecreasing")


@dataclass(frozen=True)
class Exponential(QuantileFamily):
    rate: float = 1.0
    tag = "exponential"

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        self._check_monotone()

    def upper(self, log_s):
        return -np.asarray(log_s, dtype=float) / self.rate

    def log_survival(self, x):
        return 0.0 if x < 0 else -self.rate * x

    @property
    def lower(self):
        return 0.0

    @property
    def upper_bound(self):
        return math.inf

    @property
    def tail_slope(self):
        return 1.0 / self.rate

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class Pareto(QuantileFamily):
    """``q(t) = (1-t)^{-1/a} - 1``; finite mean iff ``a > 1``."""

    a: float = 2.0
    tag = "pareto"

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError("Pareto index must be positive")
        self._check_monotone()

    def upper(self, log_s):
        with np.errstate(over="ignore"):
            return np.expm1(-np.asarray(log_s, dtype=float) / self.a)

    def log_survival(self, x):
        return 0.0 if x < 0 else -self.a * math.log1p(x)

    @property
    def lower(self):
        return 0.0

    @property
    def upper_bound(self):
        return math.inf

    def params(self):
        return {"a": self.a}


@dataclass(frozen=True)
class Constant(QuantileFamily):
    c: float = 0.0
    tag = "constant"

    def upper(self, log_s):
        return np.full(np.shape(log_s), float(self.c))

    def log_survival(self, x):
        return 0.0 if x < self.c else -math.inf

    @property
    def lower(self):
        return float(self.c)

    @property
    def upper_bound(self):
        return float(self.c)

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class PiecewiseLinear(QuantileFamily):
    """Quantile interpolating ``(t_i, q_i)`` linearly; ``t`` spans ``[0, 1]``."""

    knots: tuple
    values: tuple
    tag = "piecewise-linear"

    def __post_init__(self) -> None:
        t = np.asarray(self.knots, dtype=float)
        q = np.asarray(self.values, dtype=float)
        if t.shape != q.shape or t.size < 2:
            raise ValueError("need at least two matching knots and values")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("knots must increase from 0 to 1")
        if np.any(np.diff(q) < 0) or not np.all(np.isfinite(q)):
            raise ValueError("quantile values must be finite and nondecreasing")
        object.__setattr__(self, "knots", tuple(t))
        object.__setattr__(self, "values", tuple(q))
        self._check_monotone()

    def upper(self, log_s):
        t = -np.expm1(np.asarray(log_s, dtype=float))
        return np.interp(t, self.knots, self.values)

    def log_survival(self, x):
        q = np.asarray(self.values)
        t = np.asarray(self.knots)
        if x < q[0]:
            return 0.0
        if x >= q[-1]:
            return -math.inf
        j = int(np.searchsorted(q, x, side="right"))
        # x in [q[j-1], q[j]) with q[j] > x
        lo_t, hi_t, lo_q, hi_q = t[j - 1], t[j], q[j - 1], q[j]
        frac = (x - lo_q) / (hi_q - lo_q)
        surv = 1.0 - (lo_t + frac * (hi_t - lo_t))
        return math.log(surv) if surv > 0 else -math.inf

    @property
    def lower(self):
        return self.values[0]

    @property
    def upper_bound(self):
        return self.values[-1]

    def breaks(self):
        return tuple(math.log1p(-t) for t in self.knots[1:-1])

    def params(self):
        return {"knots": list(self.knots), "values": list(self.values)}


@dataclass(frozen=True)
class Table(QuantileFamily):
    """Step quantile of a finite law: distinct ascending ``values`` with ``probs``.

    ``q(t) = values[i]`` for ``t`` in ``[cum[i-1], cum[i])``, the right inverse
    ``inf{x : F(x) > t}`` of the CDF.  ``cum`` keeps the exact cumulative
    weights when the source model is rational.
    """

    values: tuple
    probs: tuple
    tag = "table"

    def __post_init__(self) -> None:
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("table needs matching nonempty values and probabilities")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("table values must be strictly increasing")
        if any(not p > 0 for p in self.probs):
            raise ValueError("table probabilities must be positive")
        cum = []
        acc = 0
        for p in self.probs:
            acc = acc + p
            cum.append(acc)
        object.__setattr__(self, "_cum", tuple(cum))
        object.__setattr__(self, "_fvals", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "_fcum", np.asarray(cum, dtype=float))
        self._check_monotone()

    @property
    def cum(self) -> tuple:
        return self._cum

    def upper(self, log_s):
        t = -np.expm1(np.asarray(log_s, dtype=float))
        idx = np.searchsorted(self._fcum[:-1], t, side="right")
        return self._fvals[idx]

    def log_survival(self, x):
        mass = float(sum(p for v, p in zip(self.values, self.probs) if v > x))
        return math.log(mass) if mass > 0 else -math.inf

    @property
    def lower(self):
        return float(self.values[0])

    @property
    def upper_bound(self):
        return float(self.values[-1])

    def breaks(self):
        out = []
        for c in self._fcum[:-1]:
            if 0.0 < c < 1.0:
                out.append(math.log1p(-c))
        return tuple(out)

    def params(self):
        return {"values": [_num_json(v) for v in self.values], "probs": [_num_json(p) for p in self.probs]}


@dataclass(frozen=True, eq=False)
class Comonotone(QuantileFamily):
    """Sum of quantile variables under the common coupling ``X_i = q_i(U)``.

    The parts are nondecreasing in ``U``, so the quantile of the sum is the
    sum of the quantiles and the kinks are the union of the parts' kinks.
    """

    parts: tuple
    tag = "comonotone"

    def __post_init__(self) -> None:
        if len(self.parts) < 1 or not all(isinstance(X, QuantileRV) for X in self.parts):
            raise ValueError("comonotone sum needs quantile variables")

    def upper(self, log_s):
        log_s = np.asarray(log_s, dtype=float)
        with np.errstate(invalid="ignore"):
            return sum((X.upper(log_s) for X in self.parts), np.zeros(log_s.shape))

    def log_survival(self, x):
        f = lambda ls: float(self.upper(np.asarray([ls]))[0]) - x  # noqa: E731
        if f(0.0) > 0 or self.lower > x:
            return 0.0
        if self.upper_bound <= x:
            return -math.inf
        if f(_SURVIVAL_FLOOR) <= 0:
            return -math.inf
        # largest log s with q(1 - s) > x; Brent brackets the jump of a step quantile as well
        return float(brentq(f, _SURVIVAL_FLOOR, 0.0, xtol=1e-13, rtol=4 * np.finfo(float).eps))

    @property
    def lower(self):
        return float(sum(X.lower for X in self.parts))

    @property
    def upper_bound(self):
        return float(sum(X.upper_bound for X in self.parts))

    @property
    def tail_slope(self):
        return float(sum(X.tail_slope for X in self.parts))

    def breaks(self):
        return tuple(sorted({b for X in self.parts for b in X.breaks()}))

    def params(self):
        return {"parts": [X.to_json() for X in self.parts]}


_SURVIVAL_FLOOR = -1e6


FAMILIES = {
    "exponential": lambda d: Exponential(float(d.get("rate", 1.0))),
    "pareto": lambda d: Pareto(float(d["a"])),
    "constant": lambda d: Constant(float(d.get("c", 0.0))),
    "piecewise-linear": lambda d: PiecewiseLinear(tuple(d["knots"]), tuple(d["values"])),
    "table": lambda d: Table(tuple(parse_number(v) for v in d["values"]), tuple(parse_number(p) for p in d["probs"])),
    "comonotone": lambda d: Comonotone(tuple(rv_from_json(p) for p in d["parts"])),
}


# ---------------------------------------------------------------------------
# Quantile variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Level:
    lower: float
    upper: float
    slope: float


@dataclass(frozen=True, eq=False)
class QuantileRV:
    """A variable given by a base quantile family and a pipeline of ops.

    Monotone ops act on values directly.  ``Mask`` is not monotone; it is
    realized as a reparametrization of the uniform coordinate that moves the
    masked-out mass into a block of zeros.
    """

    family: QuantileFamily
    stages: tuple = ()
    _levels: tuple = field(default=(), repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        levels = [_Level(float(self.family.lower), float(self.family.upper_bound), float(self.family.tail_slope))]
        for st in self.stages:
            levels.append(_next_level(levels[-1], st))
        object.__setattr__(self, "_levels", tuple(levels))

    # -- evaluation ---------------------------------------------------------

    def upper(self, log_s) -> np.ndarray:
        """Value ``q(1-s)`` at ``log s``."""
        return self._eval(len(self.stages), np.asarray(log_s, dtype=float))

    def quantile(self, t) -> np.ndarray:
        return self.upper(np.log1p(-np.asarray(t, dtype=float)))

    def log_survival(self, v: float) -> float:
        """``log P(X > v)``."""
        return self._log_surv(len(self.stages), float(v))

    def _eval(self, k: int, log_s: np.ndarray) -> np.ndarray:
        if k == 0:
            return self.family.upper(log_s)
        st = self.stages[k - 1]
        if isinstance(st, Mask):
            return self._eval_mask(k, st, log_s)
        return st.apply(self._eval(k - 1, log_s))

    def _eval_mask(self, k: int, st: Mask, log_s: np.ndarray) -> np.ndarray:
        ls_hi = self._log_surv(k - 1, float(st.hi))
        ls_0 = self._log_surv(k - 1, 0.0)
        s_lo = math.exp(self._log_surv(k - 1, float(st.lo))) if st.lo < 0 else math.exp(ls_0)
        s_0 = math.exp(ls_0)
        s_hi = math.exp(ls_hi)
        len_pos = max(s_0 - s_hi, 0.0)
        len_neg = max(s_lo - s_0, 0.0)
        out = np.zeros(log_s.shape)
        with np.errstate(divide="ignore"):
            pos = log_s < _safe_log(len_pos)
            neg = np.exp(log_s) >= 1.0 - len_neg if len_neg > 0 else np.zeros(log_s.shape, dtype=bool)
        neg &= ~pos
        if pos.any():
            mapped = np.logaddexp(log_s[pos], ls_hi) if s_hi > 0 else log_s[pos]
            out[pos] = self._eval(k - 1, np.minimum(mapped, 0.0))
        if neg.any():
            s_in = np.exp(log_s[neg]) - (1.0 - s_lo)
            with np.errstate(divide="ignore"):
                out[neg] = self._eval(k - 1, np.log(np.clip(s_in, 1e-300, 1.0)))
        return out

    def _log_surv(self, k: int, v: float) -> float:
        if k == 0:
            return float(self.family.log_survival(v))
        st = self.stages[k - 1]
        prev = lambda x: self._log_surv(k - 1, x)  # noqa: E731
        if isinstance(st, Scale):
            a = float(st.alpha)
            if a == 0.0:
                return 0.0 if v < 0 else -math.inf
            return prev(v / a)
        if isinstance(st, Shift):
            return prev(v - float(st.c))
        if isinstance(st, Clamp):
            if v < float(st.lo):
                return 0.0
            if v >= float(st.hi):
                return -math.inf
            return prev(v)
        if isinstance(st, TailCut):
            if v < 0:
                return 0.0
            return prev(max(v, float(st.N)))
        if isinstance(st, Mask):
            lo, hi = float(st.lo), float(st.hi)
            if v >= hi:
                return -math.inf
            if v >= 0:
                a, b = prev(v), prev(hi)
                if a == -math.inf:
                    return -math.inf
                diff = -math.expm1(b - a) if b > -math.inf else 1.0
                return a + math.log(diff) if diff > 0 else -math.inf
            if v < lo:
                return 0.0
            val = 1.0 - math.exp(prev(lo)) + math.exp(prev(v))
            return math.log(min(val, 1.0)) if val > 0 else -math.inf
        raise RepresentationError(f"unsupported stage {st!r}")

    # -- structure ----------------------------------------------------------

    def breaks(self) -> tuple:
        """Sorted ``log s`` coordinates where the value function has kinks or jumps."""
        pts = set(self.family.breaks())
        for k, st in enumerate(self.stages, start=1):
            if isinstance(st, (Clamp, TailCut)):
                levels = [st.lo, st.hi] if isinstance(st, Clamp) else [st.N]
                for lev in levels:
                    ls = self._log_surv(k - 1, float(lev))
                    if -math.inf < ls < 0.0:
                        pts.add(ls)
            elif isinstance(st, Mask):
                pts = self._mask_breaks(k, st, pts)
        return tuple(sorted(p for p in pts if -math.inf < p < 0.0))

    def _mask_breaks(self, k: int, st: Mask, pts: set) -> set:
        ls_hi = self._log_surv(k - 1, float(st.hi))
        s_hi = math.exp(ls_hi)
        s_0 = math.exp(self._log_surv(k - 1, 0.0))
        s_lo = math.exp(self._log_surv(k - 1, float(st.lo))) if st.lo < 0 else s_0
        out = set()
        for b in pts:
            s = math.exp(b)
            if s_hi < s < s_0:
                out.add(b + math.log1p(-math.exp(ls_hi - b)) if s_hi > 0 else b)
            elif s_0 < s < s_lo:
                out.add(math.log(s + 1.0 - s_lo))
        for edge in (s_0 - s_hi, 1.0 - (s_lo - s_0)):
            if 0.0 < edge < 1.0:
                out.add(math.log(edge))
        return out

    @property
    def lower(self) -> float:
        return self._levels[-1].lower

    @property
    def upper_bound(self) -> float:
        return self._levels[-1].upper

    @property
    def tail_slope(self) -> float:
        return self._levels[-1].slope

    @property
    def nonnegative(self) -> bool:
        return self.lower >= 0.0

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.upper_bound) and math.isfinite(self.lower)

    # -- ops ------------------------------------------------------------------

    def _with(self, st) -> "QuantileRV":
        return QuantileRV(self.family, self.stages + (st,))

    def scale(self, alpha: float) -> "QuantileRV":
        return self._with(Scale(float(alpha)))

    def shift(self, c: float) -> "QuantileRV":
        return self._with(Shift(float(c)))

    def clamp(self, lo: float, hi: float) -> "QuantileRV":
        return self._with(Clamp(float(lo), float(hi)))

    def truncate_tail(self, N: float) -> "QuantileRV":
        if not self.nonnegative:
            raise ValueError("truncate_tail expects a nonnegative variable; pass |X|")
        return self._with(TailCut(float(N)))

    def mask(self, lo: float, hi: float) -> "QuantileRV":
        return self._with(Mask(float(lo), float(hi)))

    def plus(self, other: "QuantileRV") -> "QuantileRV":
        """Comonotone sum ``q_X(U) + q_Y(U)``."""
        if not isinstance(other, QuantileRV):
            raise RepresentationError("quantile variables add only to quantile variables")
        return QuantileRV(Comonotone((self, other)))

    def abs(self) -> "QuantileRV":
        if self.nonnegative:
            return self
        raise RepresentationError("|X| of a signed quantile variable is not available; use atomic form")

    def to_json(self) -> dict:
        return {
            "kind": "quantile",
            "family": self.family.tag,
            **self.family.params(),
            "ops": [st.to_json() for st in self.stages],
        }


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _next_level(lev: _Level, st: Op) -> _Level:
    lo, hi, k = lev.lower, lev.upper, lev.slope
    if isinstance(st, Scale):
        a = float(st.alpha)
        return _Level(a * lo, a * hi if a > 0 else 0.0, a * k if a > 0 else 0.0)
    if isinstance(st, Shift):
        c = float(st.c)
        return _Level(lo + c, hi + c, k)
    if isinstance(st, Clamp):
        a, b = float(st.lo), float(st.hi)
        return _Level(min(max(lo, a), b), min(max(hi, a), b), k if math.isinf(b) else 0.0)
    if isinstance(st, TailCut):
        N = float(st.N)
        if lo < 0:
            raise ValueError("truncate_tail expects a nonnegative variable; pass |X|")
        return _Level(0.0 if lo <= N else lo, hi if hi > N else 0.0, k)
    if isinstance(st, Mask):
        a, b = float(st.lo), float(st.hi)
        return _Level(min(0.0, max(lo, a)), max(0.0, min(hi, b)), k if math.isinf(b) else 0.0)
    raise RepresentationError(f"op {st!r} is not supported on quantile variables")


RandomVariable = Union[AtomicRV, QuantileRV]


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def quantile_of_atomic(X: AtomicRV) -> QuantileRV:
    """Step quantile ``q_X(t) = inf{x : P(X <= x) > t}`` of an atomic variable."""
    masses: dict = {}
    for v, p in zip(X.values, X.model.probs):
        masses[v] = masses.get(v, 0) + p
    vals = tuple(sorted(masses))
    probs = tuple(masses[v] for v in vals)
    if len(vals) == 1:
        return QuantileRV(Constant(float(vals[0])))
    return QuantileRV(Table(vals, probs))


def truncate_tail(X: RandomVariable, N: Number) -> RandomVariable:
    """``X * 1{X > N}`` for nonnegative ``X``."""
    return X.truncate_tail(N)


def clamp(X: RandomVariable, m: Number, n: Number) -> RandomVariable:
    """``(X v m) ^ n``."""
    return X.clamp(m, n)


def expectation(X: RandomVariable, Z: DensityRV | QuantileDensity | None = None) -> Number:
    """``E[XZ]`` with ``Z = 1`` by default; ``+inf`` when the integral diverges."""
    if isinstance(X, AtomicRV):
        return _atomic_expectation(X, Z)
    res = expectation_result(X, Z)
    return res.value


def _atomic_expectation(X: AtomicRV, Z: DensityRV | None) -> Number:
    p = X.model.probs
    if Z is not None:
        if not isinstance(Z, DensityRV):
            raise RepresentationError("atomic variables pair with atomic densities")
        if not Z.model.same_as(X.model):
            raise ValueError("density and variable are aligned with different models")
    if X.model.mode == RATIONAL:
        if Z is None:
            return sum(pi * xi for pi, xi in zip(p, X.values))
        return sum(pi * xi * zi for pi, xi, zi in zip(p, X.values, Z.values))
    w = X.model.float_probs() if Z is None else X.model.float_probs() * Z.float_values()
    return float(w @ X.float_values())


def expectation_result(X: QuantileRV, Z: QuantileDensity | None = None) -> QuadResult:
    """Quadrature of ``int_0^1 X(s) Z(s) ds`` with its status."""
    if isinstance(Z, DensityRV):
        raise RepresentationError("quantile variables pair with quantile densities")
    if Z is None:
        h = X.upper
        breaks = X.breaks()
    else:
        h = lambda ls: X.upper(ls) * Z(ls)  # noqa: E731
        breaks = tuple(sorted(set(X.breaks()) | set(Z.breaks)))
    return integrate_upper(h, breaks, X)


def integrate_upper(h: Callable[[np.ndarray], np.ndarray], breaks: Sequence[float], X: QuantileRV | None = None) -> QuadResult:
    """Integrate ``h(log s)`` over ``s in (0, 1)``.

    Dyadic refinement is applied toward ``s = 0`` always and toward ``s = 1``
    when ``X`` is unbounded below.
    """
    pts = [math.exp(b) for b in breaks if b > -700.0]
    right = X is not None and not math.isfinite(X.lower)

    def f(s):
        with np.errstate(divide="ignore"):
            return h(np.log(s))

    return integrate(f, 0.0, 1.0, points=pts, singular_left=True, singular_right=right)


def discretize(X: QuantileRV, depth: int = 60, body: int = 64) -> AtomicRV:
    """Cell-mean discretization of a quantile variable on an atomic model.

    Cells are ``(2^{-k-1}, 2^{-k}]`` for ``k < depth`` in the upper tail, a
    uniform grid of ``body`` cells for ``s`` in ``(1/2, 1)``, a final cell
    ``(0, 2^{-depth}]`` and splits at the variable's breakpoints.  The atoms
    are ordered from the largest value to the smallest.
    """
    edges = {0.0, 1.0}
    edges.update(2.0**-k for k in range(1, depth + 1))
    edges.update(0.5 + 0.5 * j / body for j in range(1, body))
    edges.update(math.exp(b) for b in X.breaks() if b > -700.0)
    e = sorted(edges)
    means = []
    widths = []
    for a, b in zip(e[:-1], e[1:]):
        r = integrate(lambda s: X.upper(np.log(s)), a, b, singular_left=(a == 0.0))
        if not r.converged:
            raise UnboundedError("quantile variable is not integrable; cannot discretize")
        means.append(r.value / (b - a))
        widths.append(b - a)
    widths[-1] = 1.0 - sum(widths[:-1])
    model = AtomicModel.from_probs(widths)
    return AtomicRV(model, means)


def rv_from_json(data: dict, model: AtomicModel | None = None) -> RandomVariable:
    """Build a variable from ``{"kind": "atomic" | "sequence" | "quantile", ...}``."""
    if "rv" in data:
        data = data["rv"]
    kind = data.get("kind")
    if kind == "quantile":
        fam_tag = data["family"]
        if fam_tag not in FAMILIES:
            raise ValueError(f"unknown quantile family {fam_tag!r}")
        X = QuantileRV(FAMILIES[fam_tag](data))
        for d in data.get("ops", []):
            st = op_from_json(d)
            X = X._with(st) if not isinstance(st, Abs) else X.abs()
        return X
    if model is None:
        raise ValueError(f"{kind} variables need a model")
    if kind == "sequence":
        X = AtomicRV.from_sequence(model, parse_number(data.get("slope", 1), model.mode), parse_number(data.get("intercept", 0), model.mode))
    elif kind == "atomic":
        X = AtomicRV(model, [parse_number(v, model.mode) for v in data["values"]])
    else:
        raise ValueError(f"unknown variable kind {kind!r}")
    for d in data.get("ops", []):
        X = X._apply(op_from_json(d, model.mode))
    return X
