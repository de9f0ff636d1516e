"""Loss functions for shortfall risk and Young functions for modulars.

Both come from a small registry of closed forms plus piecewise-linear tables.
Every object carries its convex conjugate; where no closed form exists the
conjugate is computed numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

Vec = Callable[[np.ndarray], np.ndarray]

_GRID_Y = np.geomspace(1e-3, 1e6, 200)


def _xlogx(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)


def numeric_conjugate(f: Callable[[float], float], y: float, lo: float = -1e3, hi: float = 1e3) -> float:
    """``sup_x (x*y - f(x))`` over ``[lo, hi]``; the box bounds the search."""
    res = minimize_scalar(lambda x: f(x) - x * y, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(-res.fun)


@dataclass(frozen=True)
class LossFunction:
    """Convex increasing ``l`` with ``l(0) > inf l``.

    ``x0`` is a point with ``l(x0) < l(0)``; it feeds the analytic bracket for
    the multiplier in the shortfall conjugate.
    """

    name: str
    l: Vec
    dl: Vec
    conj: Vec | None
    x0: float
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        l0 = float(self.l(np.asarray(0.0)))
        if not float(self.l(np.asarray(self.x0))) < l0:
            raise ValueError("need l(x0) < l(0)")
        xs = np.linspace(-20, 20, 401)
        v = np.asarray(self.l(xs), dtype=float)
        if np.any(np.diff(v) < -1e-12):
            raise ValueError(f"loss {self.name!r} is not increasing")
        if np.any(v[2:] - 2 * v[1:-1] + v[:-2] < -1e-9 * (1 + np.abs(v[1:-1]))):
            raise ValueError(f"loss {self.name!r} is not convex")
        neg = self.conjugate(np.asarray([-1.0, -0.5]))
        if np.any(np.isfinite(neg)):
            raise ValueError("conjugate must be +inf on negative arguments")
        ratio = self.conjugate(_GRID_Y[-20:]) / _GRID_Y[-20:]
        finite = ratio[np.isfinite(ratio)]
        if finite.size >= 2 and np.any(np.diff(finite) < -1e-9):
            raise ValueError("l*(y)/y must grow without bound")

    @property
    def l0(self) -> float:
        return float(self.l(np.asarray(0.0)))

    def conjugate(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.conj is not None:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return np.asarray(self.conj(y), dtype=float)
        flat = [numeric_conjugate(lambda x: float(self.l(np.asarray(x))), float(t)) if t >= 0 else math.inf for t in y.ravel()]
        return np.asarray(flat).reshape(y.shape)

    def lambda_lower(self, c: float) -> float:
        """Lower end of the multiplier bracket: ``(l(0) - l(x0)) / (c + 1 - x0)``."""
        return (self.l0 - float(self.l(np.asarray(self.x0)))) / (c + 1.0 - self.x0)

    def lambda_upper(self, c: float) -> float:
        """``sup{y : (l(0) + l*(y)) / y <= c + 1}`` by doubling and bisection."""
        g = lambda y: (self.l0 + float(self.conjugate(np.asarray(y)))) / y  # noqa: E731
        ys = np.geomspace(1e-6, 1e8, 300)
        vals = (self.l0 + self.conjugate(ys)) / ys
        ok = np.flatnonzero(vals <= c + 1.0)
        if ok.size == 0:
            return float(ys[int(np.nanargmin(vals))])
        j = ok[-1]
        if j == len(ys) - 1:
            return float(ys[-1])
        lo, hi = math.log(ys[j]), math.log(ys[j + 1])
        h = lambda u: g(math.exp(u)) - (c + 1.0)  # noqa: E731
        if not math.isfinite(h(hi)):
            return float(ys[j])
        return float(math.exp(brentq(h, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)))

    def to_json(self) -> dict:
        return {"name": self.name, **self.params}


def _exp_loss() -> LossFunction:
    return LossFunction("exp", np.exp, np.exp, lambda y: np.where(y >= 0, _xlogx(y) - y, np.inf), -1.0)


def _quadratic_linear() -> LossFunction:
    return LossFunction(
        "quadratic_linear",
        lambda x: np.maximum(x, 0.0) ** 2 + x,
        lambda x: 2.0 * np.maximum(x, 0.0) + 1.0,
        lambda y: np.where(y >= 1.0, (y - 1.0) ** 2 / 4.0, np.inf),
        -1.0,
    )


def _power(p: float) -> LossFunction:
    if not p > 1:
        raise ValueError("power loss needs p > 1")
    q = p / (p - 1.0)
    return LossFunction(
        "power",
        lambda x: np.maximum(x, 0.0) ** p / p + x,
        lambda x: np.maximum(x, 0.0) ** (p - 1.0) + 1.0,
        lambda y: np.where(y >= 1.0, np.abs(y - 1.0) ** q / q, np.inf),
        -1.0,
        {"p": p},
    )


def _linexp() -> LossFunction:
    return LossFunction(
        "linexp",
        lambda x: np.exp(x) + x,
        lambda x: np.exp(x) + 1.0,
        lambda y: np.where(y >= 1.0, _xlogx(y - 1.0) - (y - 1.0), np.inf),
        -1.0,
    )


def _pwl_convex(xs: np.ndarray, vs: np.ndarray) -> tuple[Vec, Vec, Vec, np.ndarray]:
    slopes = np.diff(vs) / np.diff(xs)
    if np.any(np.diff(slopes) < -1e-12):
        raise ValueError("table is not convex")
    s_left, s_right = slopes[0], slopes[-1]

    def f(x):
        x = np.asarray(x, dtype=float)
        mid = np.interp(x, xs, vs)
        return np.where(x < xs[0], vs[0] + s_left * (x - xs[0]), np.where(x > xs[-1], vs[-1] + s_right * (x - xs[-1]), mid))

    def df(x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[j]

    def conj(y):
        y = np.asarray(y, dtype=float)
        best = np.max(np.outer(y.ravel(), xs) - vs[None, :], axis=1).reshape(y.shape)
        inside = (y >= s_left - 1e-12) & (y <= s_right + 1e-12)
        return np.where(inside, best, np.inf)

    return f, df, conj, slopes


def loss_table(xs, vs) -> LossFunction:
    """Piecewise-linear convex increasing loss through ``(xs, vs)``, extended linearly."""
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(vs, dtype=float)
    f, df, conj, slopes = _pwl_convex(xs, vs)
    if slopes[0] <= 0:
        raise ValueError("table loss needs a positive left slope so that l(0) > inf l")
    x0 = min(float(xs[0]), -1.0)
    return LossFunction("table", f, df, conj, x0, {"xs": xs.tolist(), "vs": vs.tolist()})


LOSSES: dict[str, Callable[..., LossFunction]] = {
    "exp": _exp_loss,
    "quadratic_linear": _quadratic_linear,
    "power": _power,
    "linexp": _linexp,
    "table": loss_table,
}


def loss_from_json(data) -> LossFunction:
    if isinstance(data, str):
        data = {"name": data}
    name = data["name"]
    if name == "power":
        return _power(float(data.get("p", 2.0)))
    if name == "table":
        return loss_table(data["xs"], data["vs"])
    if name not in LOSSES:
        raise ValueError(f"unknown loss {name!r}")
    return LOSSES[name]()


@dataclass(frozen=True)
class YoungFunction:
    """Even convex ``Phi`` with ``Phi(0) = 0``, given on ``[0, inf)``."""

    name: str
    phi: Vec
    dphi: Vec
    conj: Vec
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if abs(float(self.phi(np.asarray(0.0)))) > 1e-12:
            raise ValueError("Young function must vanish at 0")
        xs = np.linspace(0.0, 30.0, 301)
        v = np.asarray(self.phi(xs), dtype=float)
        if np.any(v < -1e-12) or np.any(np.diff(v) < -1e-12):
            raise ValueError(f"Young function {self.name!r} must be nonnegative and nondecreasing on [0, inf)")
        if not v[-1] > v[0]:
            raise ValueError("Young function must be unbounded")

    def __call__(self, x) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.asarray(self.phi(np.abs(np.asarray(x, dtype=float))), dtype=float)

    def derivative(self, x) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.asarray(self.dphi(np.maximum(np.asarray(x, dtype=float), 0.0)), dtype=float)

    def conjugate(self, z) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(self.conj(z), dtype=float)

    def to_json(self) -> dict:
        return {"name": self.name, **self.params}


def _young_exp() -> YoungFunction:
    return YoungFunction(
        "exp",
        np.expm1,
        np.exp,
        lambda z: np.where(z >= 1.0, _xlogx(z) - z + 1.0, 0.0),
    )


def _young_power(p: float) -> YoungFunction:
    if not p > 1:
        raise ValueError("power Young function needs p > 1")
    q = p / (p - 1.0)
    return YoungFunction("power", lambda x: x**p / p, lambda x: x ** (p - 1.0), lambda z: z**q / q, {"p": p})


def young_table(xs, vs) -> YoungFunction:
    """Piecewise-linear Young function through ``(xs, vs)`` on ``[0, inf)`` with ``xs[0] = 0``."""
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if xs[0] != 0.0 or vs[0] != 0.0:
        raise ValueError("table must start at (0, 0)")
    f, df, conj, slopes = _pwl_convex(xs, vs)
    if slopes[0] < 0:
        raise ValueError("Young table must be nondecreasing")
    return YoungFunction(
        "table",
        f,
        df,
        lambda z: np.where(z <= slopes[-1] + 1e-12, np.max(np.outer(np.ravel(z), xs) - vs[None, :], axis=1).reshape(np.shape(z)), np.inf),
        {"xs": xs.tolist(), "vs": vs.tolist()},
    )


def young_from_loss(loss: LossFunction) -> YoungFunction:
    """``Phi_l(x) = l(|x|) - l(0)``.

    Its conjugate on ``z >= 0`` is ``l*(z) + l(0)`` when ``z >= l'(0)`` and 0
    otherwise, since the maximizer of ``xz - l(x)`` over ``x >= 0`` sits at
    zero exactly when ``z <= l'(0)``.
    """
    l0 = loss.l0
    d0 = float(loss.dl(np.asarray(0.0)))
    return YoungFunction(
        f"loss:{loss.name}",
        lambda x: loss.l(x) - l0,
        loss.dl,
        lambda z: np.where(z >= d0, loss.conjugate(z) + l0, 0.0),
        {"loss": loss.to_json()},
    )


def young_from_json(data) -> YoungFunction:
    if isinstance(data, str):
        data = {"name": data}
    name = data["name"]
    if name == "exp":
        return _young_exp()
    if name == "power":
        return _young_power(float(data.get("p", 2.0)))
    if name == "table":
        return young_table(data["xs"], data["vs"])
    if name == "loss":
        return young_from_loss(loss_from_json(data["loss"]))
    raise ValueError(f"unknown Young function {name!r}")
