"""Distortion measures on (0, 1] and the AV@R kernels they integrate.

A measure is a finite mixture of point masses and uniform blocks.  Blocks are
stored through ``log a`` and ``log b`` so that blocks such as
``(e^{-n}, e^{-n+1}]`` stay well conditioned for ``n`` in the thousands.

For a measure ``mu`` the functional is ``phi_mu(X) = int v_t(X) mu(dt)``
with ``v_t(X) = (1/t) int_0^t X(s) ds``.  On atomic variables the same number
is the Choquet sum ``sum_i x_(i) (g(c_i) - g(c_{i-1}))`` for the capacity
``g(s) = int min(s, t)/t mu(dt)`` evaluated at cumulative weights ``c_i`` of
the values sorted from the largest down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .quadrature import QuadResult, integrate
from .space_model import QuantileRV

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class PointMass:
    """Mass ``weight`` at level ``t``; contributes ``weight * v_t``."""

    t: Union[float, Fraction]
    weight: Union[float, Fraction] = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.t <= 1:
            raise ValueError("point mass level must lie in (0, 1]")

    def capacity(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.minimum(s, float(self.t)) / float(self.t)

    def capacity_exact(self, s):
        return min(s, self.t) / self.t

    def spectral(self, log_s: np.ndarray) -> np.ndarray:
        return np.where(log_s < math.log(float(self.t)), 1.0 / float(self.t), 0.0)

    def breaks(self) -> tuple:
        return (math.log(float(self.t)),) if self.t < 1 else ()

    def to_json(self) -> dict:
        return {"kind": "point", "t": float(self.t), "weight": float(self.weight)}


@dataclass(frozen=True)
class UniformBlock:
    """Uniform law on ``(a, b]`` with ``a = e^{log_a}``, ``b = e^{log_b}``."""

    log_a: float
    log_b: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.log_a < self.log_b <= 0.0:
            raise ValueError("block needs log_a < log_b <= 0")

    @property
    def log_r(self) -> float:
        return self.log_b - self.log_a

    def capacity(self, s) -> np.ndarray:
        """``int min(s, t)/t`` against the uniform law on ``(a, b]``."""
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        with np.errstate(divide="ignore"):
            ls = np.log(s)
        rm1 = math.expm1(self.log_r)
        below = ls <= self.log_a
        mid = (ls > self.log_a) & (ls < self.log_b)
        ratio = np.exp(np.minimum(ls - self.log_a, self.log_r))
        out = np.where(below, ratio * self.log_r / rm1, out)
        mid_val = (ratio * (self.log_b - ls) + ratio - 1.0) / rm1
        out = np.where(mid, mid_val, out)
        return out

    def spectral(self, log_s: np.ndarray) -> np.ndarray:
        """Density ``int_{(max(a,s), b]} dt / t`` divided by ``b - a``."""
        a_part = np.maximum(log_s, self.log_a)
        width = math.exp(self.log_b) * -math.expm1(-self.log_r)
        return np.where(log_s < self.log_b, (self.log_b - a_part) / width, 0.0)

    def breaks(self) -> tuple:
        return tuple(b for b in (self.log_a, self.log_b) if b < 0.0)

    def to_json(self) -> dict:
        return {"kind": "block", "log_a": self.log_a, "log_b": self.log_b, "weight": float(self.weight)}


Component = Union[PointMass, UniformBlock]


@dataclass(frozen=True)
class DistortionMeasure:
    """Probability measure on (0, 1] as a mixture of components."""

    components: tuple

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise ValueError("measure needs at least one component")
        if any(c.weight < 0 for c in comps):
            raise ValueError("component weights must be nonnegative")
        total = sum(c.weight for c in comps)
        if abs(float(total) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"measure has total mass {total}, not 1")
        object.__setattr__(self, "components", tuple(c for c in comps if c.weight > 0))

    @classmethod
    def point(cls, t) -> "DistortionMeasure":
        return cls((PointMass(t, 1),))

    def capacity(self, s) -> np.ndarray:
        return sum(float(c.weight) * c.capacity(s) for c in self.components)

    def capacity_exact(self, s):
        """Exact capacity when every component is a rational point mass."""
        if all(isinstance(c, PointMass) and isinstance(c.t, Fraction) for c in self.components):
            return sum(Fraction(c.weight) * c.capacity_exact(s) for c in self.components)
        return None

    def spectral(self, log_s: np.ndarray) -> np.ndarray:
        return sum(float(c.weight) * c.spectral(log_s) for c in self.components)

    def breaks(self) -> tuple:
        out: set = set()
        for c in self.components:
            out.update(c.breaks())
        return tuple(sorted(out))

    def to_json(self) -> dict:
        return {"components": [c.to_json() for c in self.components]}

    @classmethod
    def from_json(cls, data: dict) -> "DistortionMeasure":
        comps = []
        for d in data["components"]:
            if d["kind"] == "point":
                comps.append(PointMass(float(d["t"]), float(d.get("weight", 1.0))))
            elif d["kind"] == "block":
                if "a" in d:
                    comps.append(UniformBlock(math.log(float(d["a"])), math.log(float(d["b"])), float(d.get("weight", 1.0))))
                else:
                    comps.append(UniformBlock(float(d["log_a"]), float(d["log_b"]), float(d.get("weight", 1.0))))
            else:
                raise ValueError(f"unknown measure component {d['kind']!r}")
        return cls(tuple(comps))


# ---------------------------------------------------------------------------
# Atomic evaluation
# ---------------------------------------------------------------------------


def sorted_desc(values: Sequence, probs: Sequence) -> tuple[list, list]:
    order = sorted(range(len(values)), key=lambda i: values[i], reverse=True)
    return [values[i] for i in order], [probs[i] for i in order]


def avar_atomic(level, values: Sequence, probs: Sequence):
    """``v_level`` of a finite law by filling mass ``level`` from the top.

    Exact for ``Fraction`` input.
    """
    xs, ps = sorted_desc(list(values), list(probs))
    remaining = level
    acc = 0
    for x, p in zip(xs, ps):
        take = p if p < remaining else remaining
        acc = acc + x * take
        remaining = remaining - take
        if remaining <= 0:
            break
    return acc / level


def distortion_atomic(mu: DistortionMeasure, values: Sequence, probs: Sequence):
    xs, ps = sorted_desc(list(values), list(probs))
    cum = []
    acc = 0
    for p in ps:
        acc = acc + p
        cum.append(acc)
    exact = [mu.capacity_exact(c) for c in cum]
    if all(e is not None for e in exact):
        prev = 0
        out = 0
        for x, g in zip(xs, exact):
            out += x * (g - prev)
            prev = g
        return out
    g = mu.capacity(np.asarray(cum, dtype=float))
    g[-1] = 1.0
    dg = np.diff(np.concatenate([[0.0], g]))
    return float(np.asarray(xs, dtype=float) @ dg)


def comonotone_density(mu: DistortionMeasure, values: Sequence, probs: Sequence) -> np.ndarray:
    """Density of the core vertex matched to the decreasing order of ``values``."""
    order = sorted(range(len(values)), key=lambda i: values[i], reverse=True)
    p = np.asarray([float(probs[i]) for i in order])
    cum = np.cumsum(p)
    g = mu.capacity(cum)
    g[-1] = 1.0
    dg = np.diff(np.concatenate([[0.0], g]))
    z = np.empty(len(values))
    z[order] = dg / p
    return z


# ---------------------------------------------------------------------------
# Quantile evaluation
# ---------------------------------------------------------------------------


def upper_average(X: QuantileRV, log_a: float) -> QuadResult:
    """``v_a(X) = int_0^1 X(a x) dx`` for ``a = e^{log_a}``."""
    pts = [math.exp(b - log_a) for b in X.breaks() if b < log_a and b - log_a > -700.0]

    def f(x):
        with np.errstate(divide="ignore"):
            return X.upper(log_a + np.log(x))

    return integrate(f, 0.0, 1.0, points=pts, singular_left=True)


def block_value(X: QuantileRV, block: UniformBlock) -> QuadResult:
    """``int v_t(X) dt / (b - a)`` over ``(a, b]``.

    Uses ``(1/(r-1)) [log r * v_a + int_1^r X(a y) log(r/y) dy]`` with
    ``r = b/a``; for wide blocks the second integral is taken in ``x = s/b``.
    """
    va = upper_average(X, block.log_a)
    if not va.converged:
        return va
    L = block.log_r
    rm1 = math.expm1(L)
    if L <= math.log(16.0):
        r = math.exp(L)
        pts = [math.exp(b - block.log_a) for b in X.breaks() if block.log_a < b < block.log_b]

        def f(y):
            return X.upper(block.log_a + np.log(y)) * (L - np.log(y))

        inner = integrate(f, 1.0, r, points=pts)
        inner_val = inner.value
    else:
        lo = math.exp(-L)
        pts = [math.exp(b - block.log_b) for b in X.breaks() if block.log_a < b < block.log_b]
        pts += [2.0**-k for k in range(1, int(L / math.log(2.0)) + 1)]

        def f(x):
            return X.upper(block.log_b + np.log(x)) * (-np.log(x))

        inner = integrate(f, lo, 1.0, points=pts)
        inner_val = math.exp(L) * inner.value
    if not inner.converged:
        return inner
    val = (L * va.value + inner_val) / rm1
    err = (L * va.error + inner.error * (math.exp(L) if L > math.log(16.0) else 1.0)) / rm1
    return QuadResult(val, err, "converged")


def component_value(X: QuantileRV, comp: Component) -> QuadResult:
    if isinstance(comp, PointMass):
        return upper_average(X, math.log(float(comp.t)))
    return block_value(X, comp)


def distortion_quantile(mu: DistortionMeasure, X: QuantileRV) -> QuadResult:
    total = 0.0
    err = 0.0
    for c in mu.components:
        r = component_value(X, c)
        if not r.converged:
            return QuadResult(r.value, r.error, r.status)
        total += float(c.weight) * r.value
        err += float(c.weight) * r.error
    return QuadResult(total, err, "converged")
