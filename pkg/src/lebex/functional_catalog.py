"""Monotone convex functionals on bounded variables, their conjugates and dual samplers.

Every spec is an immutable object exposing

* ``evaluate(X)``          -- ``phi_0(X)`` for bounded ``X`` (atomic or quantile),
* ``conjugate_info(Z)``    -- ``phi_0^*(Z)`` with a tag saying whether the value
  is exact or a one-sided bound,
* ``hat_direct(X)``        -- a truncation-free evaluation of the extension on
  nonnegative unbounded ``X`` where one exists (monotone convergence),
* ``maximizer(X)``         -- a closed-form dual candidate for ``X``,
* ``propose(...)``         -- variant-aware proposals for level-set sampling.

Specs are normalized so that ``phi_0(0) = 0``; the shift applied at
construction is kept in ``shift``.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import brentq, linprog, minimize, minimize_scalar

from .distortion import (
    DistortionMeasure,
    UniformBlock,
    avar_atomic,
    comonotone_density,
    distortion_atomic,
    distortion_quantile,
    upper_average,
)
from .losses import LossFunction, YoungFunction, loss_from_json, young_from_json
from .quadrature import QuadResult
from .space_model import (
    FLOAT,
    Abs,
    Clamp,
    Mask,
    Scale,
    Shift,
    TailCut,
    RATIONAL,
    AtomicModel,
    AtomicRV,
    DensityRV,
    QuantileDensity,
    QuantileRV,
    RepresentationError,
    UnboundedError,
    expectation,
    expectation_result,
    integrate_upper,
    parse_number,
)

CONJ_EXACT = "exact"
CONJ_LOWER = "lower"
CONJ_UPPER = "upper"

DENSITY_TOL = 1e-9
FALLBACK_BOX = 1e3
ROOT_XTOL = 1e-12
KUSUOKA_NMAX = 10_000


@dataclass(frozen=True)
class ConjugateValue:
    """Value of ``phi_0^*(Z)``; ``bound`` tells which side is certain."""

    value: float
    bound: str = CONJ_EXACT
    boundary_hit: bool = False


@dataclass(frozen=True)
class DirectValue:
    """A truncation-free value of the extension, with quadrature status."""

    value: Any
    status: str
    est_error: float = 0.0
    certifying: bool = False
    note: str = ""


@dataclass(frozen=True)
class Candidate:
    """A dual candidate ``Z`` for ``X`` with ``E[XZ]`` and ``phi_0^*(Z)``."""

    Z: Any
    pairing: Any
    penalty: Any
    label: str = ""

    @property
    def value(self):
        return self.pairing - self.penalty


def _is_atomic(X) -> bool:
    return isinstance(X, AtomicRV)


def _float(x) -> float:
    return float(x)


def _density_info(Z: DensityRV) -> tuple[np.ndarray, np.ndarray]:
    return Z.model.float_probs(), Z.float_values()


def _normalized(Z: DensityRV) -> bool:
    if Z.model.mode == RATIONAL and all(isinstance(v, Fraction) for v in Z.values):
        return sum(p * z for p, z in zip(Z.model.probs, Z.values)) == 1
    p, z = _density_info(Z)
    return abs(float(p @ z) - 1.0) <= DENSITY_TOL


def _check_model(X: AtomicRV, model: AtomicModel) -> None:
    if not X.model.same_as(model):
        raise ValueError("variable lives on a different model than the functional")


# ---------------------------------------------------------------------------
# Base class
# ---------------------------------------------------------------------------


class FunctionalSpec(ABC):
    """A normalized monotone convex functional on bounded variables."""

    variant: str = ""
    cash_invariant: bool = True
    coherent: bool = False
    law_invariant: bool = True
    model: AtomicModel | None = None
    shift: Any = 0

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, X) -> Any:
        """``phi_0(X)`` for bounded ``X``."""
        if not X.bounded:
            raise UnboundedError("evaluate needs a bounded variable; use the extension engine")
        if _is_atomic(X):
            if self.model is not None:
                _check_model(X, self.model)
            return self._atomic(X) - self.shift
        if not self.law_invariant:
            raise RepresentationError(f"{self.variant} needs atomic variables on its own model")
        res = self._quantile(X)
        if isinstance(res, QuadResult):
            return res.value - self.shift if res.status != "diverging" else math.inf
        return res - self.shift

    @abstractmethod
    def _atomic(self, X: AtomicRV) -> Any: ...

    def _quantile(self, X: QuantileRV):
        raise RepresentationError(f"{self.variant} has no quantile evaluation")

    def hat_direct(self, X) -> DirectValue | None:
        """Truncation-free value of the extension at nonnegative ``X`` if available."""
        return None

    # -- duality --------------------------------------------------------------

    def conjugate(self, Z) -> float:
        return self.conjugate_info(Z).value

    def conjugate_info(self, Z) -> ConjugateValue:
        if isinstance(Z, QuantileDensity):
            return self._conjugate_quantile(Z)
        if any(v < 0 for v in Z.values):
            return ConjugateValue(math.inf)
        if self.model is not None and not Z.model.same_as(self.model):
            raise ValueError("density lives on a different model than the functional")
        if self.cash_invariant and not _normalized(Z):
            return ConjugateValue(math.inf)
        cv = self._conjugate(Z)
        if self.shift:
            return ConjugateValue(cv.value + float(self.shift), cv.bound, cv.boundary_hit)
        return cv

    def _conjugate(self, Z: DensityRV) -> ConjugateValue:
        return generic_conjugate(self, Z)

    def _conjugate_quantile(self, Z: QuantileDensity) -> ConjugateValue:
        raise RepresentationError(f"{self.variant} has no conjugate on quantile densities")

    def maximizer(self, X) -> Candidate | None:
        """Closed-form dual candidate attaining (or approaching) ``phi(X)``."""
        return None

    def level_maximizer(self, Y: AtomicRV, c: float) -> DensityRV | None:
        """Density maximizing ``E[YZ]`` over ``phi^*(Z) <= c`` when known in closed form."""
        return None

    def anchors(self, model: AtomicModel) -> list[DensityRV]:
        """Densities with zero penalty used as seeds for the sampler."""
        return [DensityRV.ones(model)]

    def propose(self, model: AtomicModel, c: float, rng: np.random.Generator) -> DensityRV | None:
        """One random density expected to satisfy ``phi^*(Z) <= c``."""
        return _shrunk_proposal(self, model, c, rng)

    def sample_model(self, model: AtomicModel | None) -> AtomicModel:
        if self.model is not None:
            return self.model
        if model is None:
            raise ValueError(f"{self.variant} needs an explicit model for sampling")
        return model

    def describe(self) -> dict:
        return {
            "variant": self.variant,
            "cash_invariant": self.cash_invariant,
            "coherent": self.coherent,
            "law_invariant": self.law_invariant,
            "shift": _jsonable(self.shift),
        }

    @abstractmethod
    def to_json(self) -> dict: ...


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    return float(x)


# ---------------------------------------------------------------------------
# Entropic
# ---------------------------------------------------------------------------


class Entropic(FunctionalSpec):
    """``log E[e^X]``; conjugate is the relative entropy."""

    variant = "entropic"

    def _atomic(self, X):
        x = X.float_values()
        p = X.model.float_probs()
        m = float(np.max(x))
        return m + math.log(float(p @ np.exp(x - m)))

    def _quantile(self, X):
        return self._log_mgf(X, float(X.upper_bound))

    def _log_mgf(self, X: QuantileRV, m: float) -> QuadResult:
        r = integrate_upper(lambda ls: np.exp(X.upper(ls) - m), X.breaks(), X)
        if r.status == "diverging":
            return QuadResult(math.inf, math.inf, "diverging")
        if not r.value > 0:
            return QuadResult(-math.inf, math.inf, "inconclusive")
        return QuadResult(m + math.log(r.value), r.error / r.value, r.status)

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        r = self._log_mgf(X, 0.0)
        return DirectValue(r.value, r.status, r.error)

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)
        return ConjugateValue(float(p @ h))

    def _conjugate_quantile(self, Z):
        mass = integrate_upper(lambda ls: Z(ls), Z.breaks)
        if abs(mass.value - 1.0) > 1e-8:
            return ConjugateValue(math.inf)
        r = integrate_upper(lambda ls: _xlogx(Z(ls)), Z.breaks)
        if r.status == "diverging":
            return ConjugateValue(math.inf)
        return ConjugateValue(r.value, CONJ_EXACT if r.converged else CONJ_LOWER)

    def maximizer(self, X):
        if _is_atomic(X):
            x = X.float_values()
            p = X.model.float_probs()
            w = np.exp(x - np.max(x))
            z = w / float(p @ w)
            Z = DensityRV(X.model, z)
            return Candidate(Z, expectation(X.with_values(x), Z), self.conjugate(Z), "gibbs")
        m = float(X.upper(np.asarray(math.log(0.5))))
        norm = integrate_upper(lambda ls: np.exp(X.upper(ls) - m), X.breaks(), X)
        if not norm.converged:
            return None
        Z = QuantileDensity(lambda ls: np.exp(X.upper(ls) - m) / norm.value, X.breaks(), "gibbs")
        pairing = expectation_result(X, Z)
        pen = self._conjugate_quantile(Z)
        if not pairing.converged:
            return None
        return Candidate(Z, pairing.value, pen.value, "gibbs")

    def level_maximizer(self, Y, c):
        y = Y.float_values()
        p = Y.model.float_probs()
        return _tilt_to_level(Y.model, y, p, c)

    def propose(self, model, c, rng):
        y = rng.standard_normal(model.n)
        return _tilt_to_level(model, y, model.float_probs(), c * rng.uniform())

    def to_json(self):
        return {"variant": "entropic"}


def _xlogx(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)


def _tilt(y: np.ndarray, p: np.ndarray, theta: float) -> np.ndarray:
    w = np.exp(theta * (y - np.max(y)))
    return w / float(p @ w)


def _tilt_to_level(model: AtomicModel, y: np.ndarray, p: np.ndarray, c: float) -> DensityRV:
    """Gibbs tilt ``e^{theta Y} / E[e^{theta Y}]`` with relative entropy ``c``, or as close as possible."""
    H = lambda th: float(p @ _xlogx(_tilt(y, p, th)))  # noqa: E731
    if c <= 0 or np.ptp(y) == 0:
        return DensityRV(model, np.ones(model.n))
    hi = 1.0
    while H(hi) < c and hi < 1e6:
        hi *= 2.0
    if H(hi) <= c:
        z = _tilt(y, p, hi)
    else:
        th = brentq(lambda t: H(t) - c, 0.0, hi, xtol=1e-14)
        z = _tilt(y, p, th)
        while H(th) > c and th > 0:
            th *= 1 - 1e-9
            z = _tilt(y, p, th)
    return DensityRV(model, z)


# ---------------------------------------------------------------------------
# Average value at risk
# ---------------------------------------------------------------------------


class AVaR(FunctionalSpec):
    """Average value at risk ``v_lambda(X) = (1/lambda) int_0^lambda q_X(1-t) dt``."""

    variant = "avar"
    coherent = True

    def __init__(self, level) -> None:
        if not 0 < level <= 1:
            raise ValueError("AVaR level must lie in (0, 1]")
        self.level = level

    def _atomic(self, X):
        lam = self.level
        if X.model.mode == RATIONAL:
            lam = parse_number(lam, RATIONAL)
        else:
            lam = float(lam)
        return avar_atomic(lam, list(X.values), list(X.model.probs))

    def _quantile(self, X):
        return upper_average(X, math.log(float(self.level)))

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        r = upper_average(X, math.log(float(self.level)))
        return DirectValue(r.value, r.status, r.error)

    def _conjugate(self, Z):
        cap = 1 / parse_number(self.level, Z.model.mode) if Z.model.mode == RATIONAL else 1.0 / float(self.level)
        slack = 0 if Z.model.mode == RATIONAL else 1e-9 * cap
        if max(Z.values) > cap + slack:
            return ConjugateValue(math.inf)
        return ConjugateValue(0.0)

    def _conjugate_quantile(self, Z):
        grid = np.concatenate([-np.geomspace(1e-12, 700.0, 2000), np.asarray(Z.breaks)])
        vals = Z(grid)
        if np.any(vals < 0) or np.max(vals) > (1.0 + 1e-9) / float(self.level):
            return ConjugateValue(math.inf)
        mass = integrate_upper(lambda ls: Z(ls), Z.breaks)
        if abs(mass.value - 1.0) > 1e-8:
            return ConjugateValue(math.inf)
        return ConjugateValue(0.0, CONJ_LOWER)

    def maximizer(self, X):
        if _is_atomic(X):
            Z = DensityRV(X.model, self._upper_fill(X))
            return Candidate(Z, expectation(X, Z), 0, "upper-quantile fill")
        lam = float(self.level)
        llam = math.log(lam)
        Z = QuantileDensity(lambda ls: np.where(ls < llam, 1.0 / lam, 0.0), (llam,) if lam < 1 else (), "upper-quantile fill")
        r = expectation_result(X, Z)
        if r.status == "diverging":
            return None
        return Candidate(Z, r.value, 0.0, "upper-quantile fill")

    def _upper_fill(self, X: AtomicRV) -> list:
        exact = X.model.mode == RATIONAL
        lam = parse_number(self.level, RATIONAL) if exact else float(self.level)
        order = sorted(range(X.model.n), key=lambda i: X.values[i], reverse=True)
        z = [0] * X.model.n
        remaining = lam
        for i in order:
            p = X.model.probs[i]
            take = p if p < remaining else remaining
            z[i] = take / (p * lam)
            remaining = remaining - take
            if remaining <= 0:
                break
        return z if exact else [float(v) for v in z]

    def level_maximizer(self, Y, c):
        return DensityRV(Y.model, self._upper_fill(Y))

    def propose(self, model, c, rng):
        p = model.float_probs()
        cap = 1.0 / float(self.level)
        w = rng.dirichlet(np.full(model.n, 0.5))
        d = w / p
        t = 1.0 if d.max() <= cap else (cap - 1.0) / (d.max() - 1.0)
        z = 1.0 + t * rng.uniform() * (d - 1.0)
        return DensityRV(model, z / float(p @ z))

    def to_json(self):
        return {"variant": "avar", "level": _jsonable(self.level)}


# ---------------------------------------------------------------------------
# Concave distortions
# ---------------------------------------------------------------------------


_ENUM_LIMIT = 16


def _core_excess(capacity: Callable[[np.ndarray], np.ndarray], p: np.ndarray, q: np.ndarray) -> float:
    """``max_A [Q(A) - g(P(A))]``; exhaustive for small models, comonotone chain otherwise."""
    n = len(p)
    if n <= _ENUM_LIMIT:
        masks = np.arange(1, 2**n)
        bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
        PA = bits @ p
        QA = bits @ q
        return float(np.max(QA - capacity(np.minimum(PA, 1.0))))
    z = q / p
    order = np.argsort(-z, kind="stable")
    PA = np.cumsum(p[order])
    QA = np.cumsum(q[order])
    return float(np.max(QA - capacity(np.minimum(PA, 1.0))))


class Distortion(FunctionalSpec):
    """Concave distortion ``phi_mu(X) = int v_t(X) mu(dt)``."""

    variant = "distortion"
    coherent = True

    def __init__(self, measure: DistortionMeasure) -> None:
        self.measure = measure

    def _atomic(self, X):
        return distortion_atomic(self.measure, list(X.values), list(X.model.probs))

    def _quantile(self, X):
        return distortion_quantile(self.measure, X)

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        r = distortion_quantile(self.measure, X)
        return DirectValue(r.value, r.status, r.error)

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        excess = _core_excess(self.measure.capacity, p, p * z)
        if excess <= 1e-12:
            return ConjugateValue(0.0)
        if len(p) <= _ENUM_LIMIT:
            return ConjugateValue(math.inf)
        return generic_conjugate(self, Z)

    def maximizer(self, X):
        if _is_atomic(X):
            z = comonotone_density(self.measure, list(X.float_values()), list(X.model.float_probs()))
            Z = DensityRV(X.model, z)
            return Candidate(Z, expectation(X.with_values(X.float_values()), Z), 0.0, "comonotone")
        mu = self.measure
        Z = QuantileDensity(mu.spectral, mu.breaks(), "spectral weight")
        r = expectation_result(X, Z)
        if r.status == "diverging":
            return None
        return Candidate(Z, r.value, 0.0, "spectral weight")

    def level_maximizer(self, Y, c):
        z = comonotone_density(self.measure, list(Y.float_values()), list(Y.model.float_probs()))
        return DensityRV(Y.model, z)

    def propose(self, model, c, rng):
        return _comonotone_mix(model, [self.measure], rng)

    def to_json(self):
        return {"variant": "distortion", "measure": self.measure.to_json()}


def _comonotone_mix(model: AtomicModel, measures: Sequence[DistortionMeasure], rng) -> DensityRV:
    p = model.float_probs()
    k = int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(k))
    z = np.zeros(model.n)
    for wi in w:
        mu = measures[int(rng.integers(len(measures)))]
        x = rng.standard_normal(model.n)
        z += wi * comonotone_density(mu, list(x), list(p))
    return DensityRV(model, z / float(p @ z))


# ---------------------------------------------------------------------------
# Kusuoka suprema
# ---------------------------------------------------------------------------


class KusuokaFamily(ABC):
    """Indexed family ``(mu_n, beta_n)``; ``size`` may be infinite."""

    size: float = math.inf

    @abstractmethod
    def measure(self, n: int) -> DistortionMeasure: ...

    def penalty(self, n: int) -> float:
        return 0.0

    def indices(self, n_max: int = KUSUOKA_NMAX) -> list[int]:
        if math.isfinite(self.size):
            return list(range(1, int(self.size) + 1))
        dense = list(range(1, 65))
        geo = np.unique(np.geomspace(64, n_max, 40).astype(int))
        return sorted(set(dense) | {int(g) for g in geo} | {n_max})

    def limit(self, X) -> QuadResult | None:
        """``lim_n (phi_{mu_n}(X) - beta_n)`` when known in closed form."""
        return None

    @abstractmethod
    def to_json(self) -> dict: ...


@dataclass(frozen=True)
class FiniteKusuokaFamily(KusuokaFamily):
    measures: tuple
    penalties: tuple = ()

    def __post_init__(self) -> None:
        pen = tuple(self.penalties) or (0.0,) * len(self.measures)
        if len(pen) != len(self.measures) or not self.measures:
            raise ValueError("need one penalty per measure")
        if any(b < 0 for b in pen):
            raise ValueError("penalties must be nonnegative")
        object.__setattr__(self, "penalties", pen)

    @property
    def size(self):
        return len(self.measures)

    def measure(self, n):
        return self.measures[n - 1]

    def penalty(self, n):
        return float(self.penalties[n - 1])

    def to_json(self):
        return {"measures": [m.to_json() for m in self.measures], "penalties": list(self.penalties)}


class SpikeBlockFamily(KusuokaFamily):
    """``mu_1`` uniform on ``(e^{-1}, 1]``; for ``n >= 2`` a ``1 - 1/n`` share
    of that block plus a ``1/n`` share of the uniform law on
    ``(e^{-n}, e^{-n+1}]``.  All penalties vanish.

    As ``n -> infinity`` the spike term tends to the asymptotic slope
    ``kappa = lim X(s) / (-log s)`` of the variable, which gives the
    closed-form limit ``phi_{mu_1}(X) + kappa``.
    """

    size = math.inf
    body = UniformBlock(-1.0, 0.0)

    def measure(self, n):
        if n == 1:
            return DistortionMeasure((self.body,))
        w = 1.0 / n
        return DistortionMeasure((UniformBlock(-1.0, 0.0, 1.0 - w), UniformBlock(-float(n), -float(n) + 1.0, w)))

    def limit(self, X):
        if _is_atomic(X):
            return QuadResult(distortion_atomic(self.measure(1), list(X.values), list(X.model.probs)), 0.0, "converged")
        body = distortion_quantile(self.measure(1), X)
        if not body.converged:
            return body
        return QuadResult(body.value + X.tail_slope, body.error, "converged")

    def to_json(self):
        return {"family": "spike-block"}


class KusuokaSup(FunctionalSpec):
    """``sup_n (phi_{mu_n}(X) - beta_n)`` over a family of distortions."""

    variant = "kusuoka"

    def __init__(self, family: KusuokaFamily, n_max: int = KUSUOKA_NMAX) -> None:
        self.family = family
        self.n_max = n_max
        self._idx = family.indices(n_max)
        pens = [family.penalty(n) for n in self._idx]
        if math.isfinite(family.size) and any(p < 0 for p in pens):
            raise ValueError("penalties must be nonnegative")
        self.shift = -min(pens) if pens else 0.0
        self.coherent = all(p == 0 for p in pens)

    def _terms(self, X) -> list[tuple[int, QuadResult]]:
        out = []
        for n in self._idx:
            mu = self.family.measure(n)
            if _is_atomic(X):
                v = distortion_atomic(mu, list(X.values), list(X.model.probs))
                out.append((n, QuadResult(float(v) - self.family.penalty(n), 0.0, "converged")))
            else:
                r = distortion_quantile(mu, X)
                out.append((n, QuadResult(r.value - self.family.penalty(n), r.error, r.status)))
        return out

    def sup_detail(self, X) -> tuple[DirectValue, int | None]:
        """Supremum over the index grid and the closed-form limit, with the best index."""
        terms = self._terms(X)
        bad = [r for _, r in terms if not r.converged]
        if any(r.status == "diverging" for r in bad):
            return DirectValue(math.inf, "diverging", math.inf), None
        best_n, best = max(terms, key=lambda t: t[1].value)
        value = best.value
        err = best.error
        status = "converged" if not bad else "inconclusive"
        note = f"best index {best_n}"
        lim = self.family.limit(X) if not math.isfinite(self.family.size) else None
        if lim is not None:
            if lim.status == "diverging" or not math.isfinite(lim.value):
                return DirectValue(math.inf, "diverging", math.inf, note="limit diverges"), None
            if not lim.converged:
                status = "inconclusive"
            if lim.value > value:
                value = lim.value
                best_n = None
                note = "limit n -> infinity"
            # distance between the last grid index and the limit bounds what the grid may miss
            err = max(err, lim.error) + abs(terms[-1][1].value - lim.value)
        return DirectValue(value, status, err, note=note), best_n

    def _atomic(self, X):
        return self.sup_detail(X)[0].value

    def _quantile(self, X):
        d = self.sup_detail(X)[0]
        return QuadResult(d.value, d.est_error, d.status)

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        d, _ = self.sup_detail(X)
        return DirectValue(d.value - self.shift if math.isfinite(d.value) else d.value, d.status, d.est_error, note=d.note)

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        best = math.inf
        for n in self._idx:
            if self.family.penalty(n) >= best:
                continue
            if _core_excess(self.family.measure(n).capacity, p, p * z) <= 1e-12:
                best = self.family.penalty(n)
        if best < math.inf:
            return ConjugateValue(best, CONJ_EXACT if self.coherent else CONJ_UPPER)
        return generic_conjugate(self, Z)

    def maximizer(self, X):
        d, n = self.sup_detail(X)
        if n is None:
            terms = self._terms(X)
            n = max(terms, key=lambda t: t[1].value)[0]
        mu = self.family.measure(n)
        beta = self.family.penalty(n) + self.shift
        if _is_atomic(X):
            z = comonotone_density(mu, list(X.float_values()), list(X.model.float_probs()))
            Z = DensityRV(X.model, z)
            return Candidate(Z, expectation(X.with_values(X.float_values()), Z), beta, f"comonotone n={n}")
        Z = QuantileDensity(mu.spectral, mu.breaks(), f"spectral weight n={n}")
        r = expectation_result(X, Z)
        if r.status == "diverging":
            return None
        return Candidate(Z, r.value, beta, f"spectral weight n={n}")

    def propose(self, model, c, rng):
        ok = [n for n in self._idx if self.family.penalty(n) + self.shift <= c]
        if not ok:
            return None
        chosen = [self.family.measure(ok[int(rng.integers(len(ok)))]) for _ in range(3)]
        return _comonotone_mix(model, chosen, rng)

    def to_json(self):
        return {"variant": "kusuoka", **self.family.to_json(), "n_max": self.n_max}


# ---------------------------------------------------------------------------
# Shortfall risk
# ---------------------------------------------------------------------------


def _root_decreasing(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Root of a nonincreasing ``f`` in ``[lo, hi]`` with ``f(lo) >= 0 >= f(hi)``."""
    flo, fhi = f(lo), f(hi)
    if flo <= 0:
        return lo
    if fhi >= 0:
        return hi
    # f is continuous, so Brent's bracketing keeps the sign-change guarantee of bisection
    return float(brentq(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=400))


def shortfall_penalty(
    loss: LossFunction,
    expect: Callable[[Callable[[np.ndarray], np.ndarray]], float],
    atoms: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """``inf_{lambda > 0} (1/lambda) (l(0) + E[l^*(lambda Z)])``.

    ``expect(h)`` must return ``E[h(Z)]``.  A coarse log-grid locates the
    minimum, the analytic bracket ``[lambda_lower(c), lambda_upper(c)]``
    confines it, and a golden-section search in ``log lambda`` finishes;
    the bracket is widened tenfold at most five times if the minimum sits on
    an edge.  The objective is a perspective, hence quasi-convex in
    ``log lambda``.  ``atoms = (z, weights)`` lets the grids run vectorized
    when ``Z`` is atomic.
    """
    l0 = loss.l0

    def obj(log_lam: float) -> float:
        lam = math.exp(log_lam)
        v = expect(lambda z: loss.conjugate(lam * z))
        return (l0 + v) / lam if math.isfinite(v) else math.inf

    def on_grid(gs: np.ndarray) -> np.ndarray:
        if atoms is None:
            return np.asarray([obj(g) for g in gs])
        z, w = atoms
        lam = np.exp(gs)
        v = loss.conjugate(lam[:, None] * z[None, :]) @ w
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(v), (l0 + v) / lam, np.inf)

    grid = np.linspace(math.log(1e-8), math.log(1e8), 161)
    vals = on_grid(grid)
    if not np.any(np.isfinite(vals)):
        return math.inf
    c0 = float(np.nanmin(vals[np.isfinite(vals)]))
    lo = math.log(max(loss.lambda_lower(max(c0, 0.0)), 1e-300))
    hi = math.log(loss.lambda_upper(max(c0, 0.0)))
    if hi <= lo:
        lo, hi = lo - 1.0, lo + 1.0
    best = c0
    for _ in range(6):
        inner = np.linspace(lo, hi, 41)
        iv = on_grid(inner)
        if not np.any(np.isfinite(iv)):
            break
        j = int(np.nanargmin(np.where(np.isfinite(iv), iv, np.nan)))
        best = min(best, float(iv[j]))
        if 0 < j < len(inner) - 1:
            res = minimize_scalar(obj, bracket=(inner[j - 1], inner[j], inner[j + 1]), method="golden", tol=1e-8)
            best = min(best, float(res.fun))
            break
        width = hi - lo
        lo, hi = (lo - math.log(10.0), hi) if j == 0 else (lo, hi + math.log(10.0))
        if width > 200:
            break
    return max(best, 0.0) if best > -1e-12 else best


class Shortfall(FunctionalSpec):
    """Shortfall risk ``inf{x : E[l(X - x)] <= l(0)}``."""

    variant = "shortfall"

    def __init__(self, loss: LossFunction) -> None:
        self.loss = loss

    def _atomic(self, X):
        x = X.float_values()
        p = X.model.float_probs()
        l0 = self.loss.l0
        f = lambda t: float(p @ self.loss.l(x - t)) - l0  # noqa: E731
        return _root_decreasing(f, float(x.min()), float(x.max()))

    def _expect_quantile(self, X: QuantileRV, t: float) -> QuadResult:
        return integrate_upper(lambda ls: self.loss.l(X.upper(ls) - t), X.breaks(), X)

    def _quantile(self, X):
        l0 = self.loss.l0
        f = lambda t: self._expect_quantile(X, t).value - l0  # noqa: E731
        return _root_decreasing(f, float(X.lower), float(X.upper_bound))

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        l0 = self.loss.l0
        lo = float(X.lower)
        hi = max(1.0, lo + 1.0)
        diverging_run = 0
        while True:
            r = self._expect_quantile(X, hi)
            if r.status == "converged" and r.value <= l0:
                break
            diverging_run = diverging_run + 1 if r.status == "diverging" else 0
            if diverging_run >= 8 or hi > 2.0**60:
                status = "diverging" if r.status == "diverging" else "inconclusive"
                return DirectValue(math.inf if status == "diverging" else hi, status, math.inf)
            hi *= 2.0
        f = lambda t: self._expect_quantile(X, t).value - l0  # noqa: E731
        root = _root_decreasing(f, lo, hi)
        return DirectValue(root, "converged", ROOT_XTOL, certifying=True)

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        return ConjugateValue(shortfall_penalty(self.loss, lambda h: float(p @ h(z)), (z, p)))

    def _conjugate_quantile(self, Z):
        def expect(h):
            r = integrate_upper(lambda ls: h(Z(ls)), Z.breaks)
            return r.value if r.status != "diverging" else math.inf

        return ConjugateValue(shortfall_penalty(self.loss, expect))

    def maximizer(self, X):
        if _is_atomic(X):
            x = X.float_values()
            p = X.model.float_probs()
            t = self._atomic(X)
            w = self.loss.dl(x - t)
            Z = DensityRV(X.model, w / float(p @ w))
            return Candidate(Z, float((p * Z.float_values()) @ x), self.conjugate(Z), "first-order condition")
        t = self._quantile(X)
        norm = integrate_upper(lambda ls: self.loss.dl(X.upper(ls) - t), X.breaks(), X)
        if not norm.converged:
            return None
        Z = QuantileDensity(lambda ls: self.loss.dl(X.upper(ls) - t) / norm.value, X.breaks(), "first-order condition")
        pairing = expectation_result(X, Z)
        if not pairing.converged:
            return None
        return Candidate(Z, pairing.value, self._conjugate_quantile(Z).value, "first-order condition")

    def to_json(self):
        return {"variant": "shortfall", "loss": self.loss.to_json()}


class RobustShortfall(FunctionalSpec):
    """``inf{x : max_P E_P[l(X - x)] <= l(0)}`` over a finite family of densities."""

    variant = "robust_shortfall"
    law_invariant = False

    def __init__(self, loss: LossFunction, family: Sequence[DensityRV]) -> None:
        family = list(family)
        if not family:
            raise ValueError("robust shortfall needs a nonempty family")
        self.model = family[0].model
        for P in family:
            if not P.model.same_as(self.model):
                raise ValueError("all densities must share one model")
            if not P.probability:
                raise ValueError("family members must be probability densities")
        self.loss = loss
        self.family = tuple(family)
        self._P = np.asarray([P.float_values() for P in family])

    def _atomic(self, X):
        x = X.float_values()
        p = self.model.float_probs()
        W = self._P * p[None, :]
        l0 = self.loss.l0
        pos = W > 0

        def f(t):
            # sum only over atoms charged by each density, so 0 * inf never arises
            with np.errstate(over="ignore", invalid="ignore"):
                lx = self.loss.l(x - t)
                return float(np.max(np.where(pos, W * lx[None, :], 0.0).sum(axis=1))) - l0

        return _root_decreasing(f, float(x.min()), float(x.max()))

    def _penalty_for(self, w: np.ndarray, z: np.ndarray, p: np.ndarray) -> float:
        dens = w @ self._P
        if np.any((dens <= 0) & (z > 0)):
            return math.inf
        pos = dens > 0
        ratio = np.where(pos, z / np.where(pos, dens, 1.0), 0.0)
        weights = p * dens

        def expect(h):
            vals = h(ratio)
            return float(weights[pos] @ vals[pos])

        return shortfall_penalty(self.loss, expect, (ratio[pos], weights[pos]))

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        m = len(self.family)
        if m == 1:
            return ConjugateValue(self._penalty_for(np.ones(1), z, p))
        best = min(self._penalty_for(np.eye(m)[j], z, p) for j in range(m))
        start = np.full(m, 1.0 / m)
        f0 = self._penalty_for(start, z, p)
        best = min(best, f0)
        if math.isfinite(f0) and m == 2:
            # the penalty is jointly convex in (Z, P), so convex along the segment
            res = minimize_scalar(
                lambda a: min(self._penalty_for(np.asarray([a, 1.0 - a]), z, p), 1e6),
                bounds=(0.0, 1.0),
                method="bounded",
                options={"xatol": 1e-8},
            )
            a = float(np.clip(res.x, 0.0, 1.0))
            best = min(best, self._penalty_for(np.asarray([a, 1.0 - a]), z, p))
        elif math.isfinite(f0):
            res = minimize(
                lambda w: min(self._penalty_for(np.clip(w, 0, None) / max(np.clip(w, 0, None).sum(), 1e-300), z, p), 1e6),
                start,
                method="SLSQP",
                bounds=[(0.0, 1.0)] * m,
                constraints=[{"type": "eq", "fun": lambda w: np.sum(w) - 1.0}],
                options={"ftol": 1e-12, "maxiter": 200},
            )
            if res.success or np.isfinite(res.fun):
                w = np.clip(res.x, 0, None)
                best = min(best, self._penalty_for(w / w.sum(), z, p))
        return ConjugateValue(best, CONJ_UPPER)

    def maximizer(self, X):
        x = X.float_values()
        p = self.model.float_probs()
        t = self._atomic(X)
        W = self._P * p[None, :]
        with np.errstate(over="ignore", invalid="ignore"):
            lx = self.loss.l(x - t)
            j = int(np.argmax(np.where(W > 0, W * lx[None, :], 0.0).sum(axis=1)))
        w = self._P[j] * self.loss.dl(x - t)
        Z = DensityRV(self.model, w / float(p @ w))
        return Candidate(Z, float((p * Z.float_values()) @ x), self.conjugate(Z), "first-order condition")

    def anchors(self, model):
        return list(self.family)

    def to_json(self):
        return {
            "variant": "robust_shortfall",
            "loss": self.loss.to_json(),
            "family": [P.to_json()["values"] for P in self.family],
        }


# ---------------------------------------------------------------------------
# Modulars
# ---------------------------------------------------------------------------


DEEP_LOG_SURVIVAL = -700.0


def _deep_tail_split(X: QuantileRV) -> tuple[QuantileRV, QuantileRV] | None:
    """``(a Y, a Y 1{Y <= N})`` for ``X = a Y 1{Y > N}`` whose cut lies below representable survival levels.

    Quadrature in ``s`` cannot see mass at ``s < e^{-700}``, so such tails
    are evaluated through their complement.
    """
    st = X.stages
    k = max((i for i, op in enumerate(st) if isinstance(op, TailCut)), default=None)
    if k is None or not all(isinstance(op, Scale) for op in st[k + 1 :]):
        return None
    base = QuantileRV(X.family, st[:k])
    if not base._log_surv(k, float(st[k].N)) < DEEP_LOG_SURVIVAL:
        return None
    whole = QuantileRV(X.family, st[:k] + st[k + 1 :])
    body = QuantileRV(X.family, st[:k] + (Mask(0.0, float(st[k].N)),) + st[k + 1 :])
    return whole, body


class Modular(FunctionalSpec):
    """``rho_Phi(X) = E[Phi(X^+)]`` for a Young function ``Phi``."""

    variant = "modular"
    cash_invariant = False

    def __init__(self, young: YoungFunction) -> None:
        self.young = young

    def _atomic(self, X):
        x = np.maximum(X.float_values(), 0.0)
        return float(X.model.float_probs() @ self.young(x))

    def _quantile(self, X):
        return integrate_upper(lambda ls: self.young(np.maximum(X.upper(ls), 0.0)), X.breaks(), X)

    def hat_direct(self, X):
        if _is_atomic(X):
            return None
        split = _deep_tail_split(X)
        if split is not None:
            # rho(Y 1{Y > N}) = rho(Y) - rho(Y 1{Y <= N}) since Phi(0) = 0
            whole, body = (self._quantile(V) for V in split)
            if whole.status == "diverging":
                return DirectValue(math.inf, "diverging", math.inf, note="complement of a deep tail cut")
            if not (whole.converged and body.converged):
                return DirectValue(whole.value, "inconclusive", math.inf)
            return DirectValue(max(whole.value - body.value, 0.0), "converged", whole.error + body.error, note="complement of a deep tail cut")
        r = self._quantile(X)
        return DirectValue(r.value, r.status, r.error)

    def _conjugate(self, Z):
        p, z = _density_info(Z)
        return ConjugateValue(float(p @ self.young.conjugate(z)))

    def _conjugate_quantile(self, Z):
        r = integrate_upper(lambda ls: self.young.conjugate(Z(ls)), Z.breaks)
        if r.status == "diverging":
            return ConjugateValue(math.inf)
        return ConjugateValue(r.value, CONJ_EXACT if r.converged else CONJ_LOWER)

    def maximizer(self, X):
        if _is_atomic(X):
            x = X.float_values()
            Z = DensityRV(X.model, np.where(x > 0, self.young.derivative(x), 0.0), probability=False)
            return Candidate(Z, expectation(X.with_values(x), Z), self.conjugate(Z), "subgradient")
        Z = QuantileDensity(lambda ls: self.young.derivative(np.maximum(X.upper(ls), 0.0)), X.breaks(), "subgradient")
        pairing = expectation_result(X, Z)
        pen = self._conjugate_quantile(Z)
        if not pairing.converged or not math.isfinite(pen.value):
            return None
        return Candidate(Z, pairing.value, pen.value, "subgradient")

    def level_maximizer(self, Y, c):
        y = np.maximum(Y.float_values(), 0.0)
        p = Y.model.float_probs()
        if not np.any(y > 0):
            return None
        pen = lambda th: float(p @ self.young.conjugate(self.young.derivative(th * y)))  # noqa: E731
        hi = 1.0
        while pen(hi) < c and hi < 1e6:
            hi *= 2.0
        th = hi if pen(hi) <= c else brentq(lambda t: pen(t) - c, 0.0, hi, xtol=1e-14)
        while pen(th) > c and th > 0:
            th *= 1 - 1e-9
        z = np.where(y > 0, self.young.derivative(th * y), 0.0)
        return DensityRV(Y.model, z, probability=False)

    def anchors(self, model):
        one = DensityRV(model, np.ones(model.n), probability=False)
        zero = DensityRV(model, np.zeros(model.n), probability=False)
        return [one, zero] if self.conjugate(one) == 0 else [zero]

    def propose(self, model, c, rng):
        p = model.float_probs()
        d = rng.dirichlet(np.full(model.n, 0.5)) / p
        target = c * rng.uniform()
        pen = lambda t: float(p @ self.young.conjugate(t * d))  # noqa: E731
        hi = 1.0
        while pen(hi) <= target and hi < 1e6:
            hi *= 2.0
        t = hi if pen(hi) <= target else brentq(lambda s: pen(s) - target, 0.0, hi, xtol=1e-14)
        while pen(t) > target and t > 0:
            t *= 1 - 1e-9
        return DensityRV(model, t * d, probability=False)

    def to_json(self):
        return {"variant": "modular", "young": self.young.to_json()}


# ---------------------------------------------------------------------------
# Suprema of expectations
# ---------------------------------------------------------------------------


class SupMeasures(FunctionalSpec):
    """``sup_n (E_{Q_n}[X] - beta_n)`` over a finite family of densities."""

    variant = "sup_measures"
    law_invariant = False

    def __init__(self, densities: Sequence[DensityRV], penalties: Sequence | None = None) -> None:
        densities = list(densities)
        if not densities:
            raise ValueError("need at least one density")
        self.model = densities[0].model
        if any(not d.model.same_as(self.model) for d in densities):
            raise ValueError("all densities must share one model")
        pen = list(penalties) if penalties is not None else [0] * len(densities)
        if len(pen) != len(densities) or any(b < 0 for b in pen):
            raise ValueError("need one nonnegative penalty per density")
        base = min(pen)
        self.densities = tuple(densities)
        self.penalties = tuple(b - base for b in pen)
        self.coherent = all(b == 0 for b in self.penalties)
        self._Z = np.asarray([d.float_values() for d in densities])

    def terms(self, X: AtomicRV) -> list:
        exact = self.model.mode == RATIONAL
        out = []
        for Z, b in zip(self.densities, self.penalties):
            out.append(expectation(X, Z) - (b if exact else float(b)))
        return out

    def _atomic(self, X):
        return max(self.terms(X))

    def _conjugate(self, Z):
        for Zn, b in zip(self.densities, self.penalties):
            if self.model.mode == RATIONAL and all(a == c for a, c in zip(Zn.values, Z.values)):
                return ConjugateValue(float(b))
        z = Z.float_values()
        m = len(self.densities)
        res = linprog(
            c=np.asarray(self.penalties, dtype=float),
            A_eq=np.vstack([self._Z.T, np.ones((1, m))]),
            b_eq=np.concatenate([z, [1.0]]),
            bounds=[(0, None)] * m,
            method="highs",
        )
        if res.status != 0:
            return ConjugateValue(math.inf)
        resid = np.abs(res.x @ self._Z - z).max()
        if resid > 1e-9 * max(1.0, float(np.abs(z).max())):
            return ConjugateValue(math.inf)
        return ConjugateValue(float(res.fun))

    def maximizer(self, X):
        vals = self.terms(X)
        j = max(range(len(vals)), key=lambda i: vals[i])
        Z = self.densities[j]
        return Candidate(Z, expectation(X, Z), self.penalties[j], f"family member {j + 1}")

    def anchors(self, model):
        return [d for d, b in zip(self.densities, self.penalties) if b == 0]

    def propose(self, model, c, rng):
        ok = [j for j, b in enumerate(self.penalties) if float(b) <= c]
        k = int(rng.integers(1, min(len(ok), 6) + 1))
        pick = rng.choice(ok, size=k, replace=False)
        w = rng.dirichlet(np.ones(k))
        if self.model.mode == RATIONAL:
            # exact mixture weights keep the mixture exactly normalized
            wq = [Fraction(float(x)).limit_denominator(10**6) for x in w[:-1]]
            wq.append(Fraction(1) - sum(wq))
            if wq[-1] < 0:
                return None
            z = sum(wj * self.densities[j].values for wj, j in zip(wq, pick))
            if sum(wj * self.penalties[j] for wj, j in zip(wq, pick)) > c:
                return None
            return DensityRV(self.model, z)
        z = w @ self._Z[pick]
        budget = float(w @ np.asarray([float(self.penalties[j]) for j in pick]))
        if budget > c:
            return None
        return DensityRV(self.model, z / float(self.model.float_probs() @ z))

    def to_json(self):
        return {
            "variant": "sup_measures",
            "densities": [d.to_json()["values"] for d in self.densities],
            "penalties": [_jsonable(b) for b in self.penalties],
        }


class SpikeFamily(SupMeasures):
    """Densities of ``Q_1 = delta_1`` and ``Q_n = (1 - 1/n) delta_1 + (1/n) delta_n``
    on the geometric model ``P({k}) = 2^{-k}``.

    On a truncation of depth ``D`` the members ``n <= D`` are exact and the
    member ``D + 1`` places its ``1/(D+1)`` share on the residual atom.
    Variables with an affine countable rule get an exact evaluation over all
    ``n`` through ``closed_form``.
    """

    variant = "sup_measures"

    def __init__(self, model: AtomicModel) -> None:
        if not model.countable:
            raise ValueError("spike family needs a countable (geometric) model")
        D = model.depth
        dens = []
        for n in range(1, D + 2):
            q = [0] * model.n
            if n == 1:
                q[0] = 1
            else:
                w = Fraction(1, n) if model.mode == RATIONAL else 1.0 / n
                q[0] = 1 - w
                q[n - 1] = q[n - 1] + w
            dens.append(DensityRV.from_measure(model, q))
        super().__init__(dens)

    def density(self, n: int) -> DensityRV:
        return self.densities[n - 1]

    def propose(self, model, c, rng):
        if self.model.mode != RATIONAL:
            return super().propose(model, c, rng)
        # sparse exact mixture: every Q_n charges atom 1 and atom n only
        m = len(self.densities)
        k = int(rng.integers(1, min(m, 6) + 1))
        pick = [int(j) + 1 for j in rng.choice(m, size=k, replace=False)]
        w = rng.dirichlet(np.ones(k))
        wq = [Fraction(float(x)).limit_denominator(10**6) for x in w[:-1]]
        wq.append(Fraction(1) - sum(wq))
        if wq[-1] < 0:
            return None
        q = [Fraction(0)] * self.model.n
        for wn, n in zip(wq, pick):
            share = wn / n
            q[0] += wn - share
            q[n - 1] += share
        return DensityRV(self.model, [qi / p for qi, p in zip(q, self.model.probs)])

    def _conjugate(self, Z):
        # q = sum_n w_n Q_n gives w_n = n q_n for n >= 2 and w_1 = 1 - sum_{n>=2} n q_n,
        # so q lies in the convex hull iff sum_{n>=2} n q_n <= 1
        if not Z.model.same_as(self.model):
            return ConjugateValue(math.inf)
        if self.model.mode == RATIONAL and all(isinstance(v, Fraction) for v in Z.values):
            q = [p * z for p, z in zip(self.model.probs, Z.values)]
            if sum(q) != 1:
                return ConjugateValue(math.inf)
            load = sum(n * qn for n, qn in enumerate(q[1:], start=2))
            return ConjugateValue(0.0 if load <= 1 else math.inf)
        q = self.model.float_probs() * Z.float_values()
        if abs(q.sum() - 1.0) > DENSITY_TOL:
            return ConjugateValue(math.inf)
        load = float(np.arange(2, len(q) + 1) @ q[1:])
        return ConjugateValue(0.0 if load <= 1.0 + DENSITY_TOL else math.inf)

    def spike_expectation(self, X: AtomicRV, n: int):
        """``E_{Q_n}[X]`` for any ``n``, using the countable rule beyond the depth."""
        if n <= self.model.depth:
            return expectation(X, self.densities[n - 1])
        w = Fraction(1, n) if self.model.mode == RATIONAL else 1.0 / n
        return (1 - w) * X.value_at(1) + w * X.value_at(n)

    def closed_form(self, X: AtomicRV) -> tuple[Any, bool, int | None]:
        """``sup_n E_{Q_n}[X]`` over all of the positive integers.

        Returns ``(value, attained, argmax)``.  The term is
        ``h(n) = (1 - 1/n) X(1) + X(n)/n``.  Between two kinks of the rule
        ``X(n) = a n + b`` and ``h(n) = X(1) + a + (b - X(1))/n`` is monotone,
        so only the indices next to a kink are evaluated; beyond the last kink
        the supremum is ``max(h(K+1), X(1) + a)``.
        """
        if X.sequence is None:
            raise ValueError("closed form needs a variable with a countable rule")
        kinks = _kink_indices(X)
        K = max([1] + [math.floor(k) for k in kinks]) + 2
        x1 = X.value_at(1)
        w = (lambda n: Fraction(1, n)) if self.model.mode == RATIONAL else (lambda n: 1.0 / n)
        h = lambda n: (1 - w(n)) * x1 + w(n) * X.value_at(n)  # noqa: E731
        cand = {1, 2, K + 1}
        for k in kinks:
            base = math.floor(k)
            cand.update(n for n in range(base - 1, base + 3) if 1 <= n <= K + 1)
        head = [(n, h(n)) for n in sorted(cand)]
        a = X.value_at(K + 2) - X.value_at(K + 1)
        b = X.value_at(K + 1) - a * (K + 1)
        limit = x1 + a
        n_best, v_best = max(head, key=lambda t: t[1])
        if b - x1 < 0 and limit > v_best:
            # terms increase toward the limit and never reach it
            return limit, False, None
        if v_best >= limit:
            return v_best, True, n_best
        return limit, False, None

    def to_json(self):
        return {"variant": "sup_measures", "family": "spike", "depth": self.model.depth, "mode": self.model.mode}


def _kink_indices(X: AtomicRV) -> list[float]:
    """Real indices ``k`` at which the countable rule of ``X`` may fail to be affine."""
    seq = X.sequence
    if seq.slope == 0:
        return []
    levels: list = []
    maps: list = []
    for op in X.ops:
        for lev in _op_kinks(op):
            levels.extend(_pull_back(lev, maps))
        maps.append(op)
    return [float((lev - seq.intercept) / seq.slope) for lev in levels]


def _op_kinks(op) -> list:
    if isinstance(op, Clamp):
        return [op.lo, op.hi]
    if isinstance(op, TailCut):
        return [op.N]
    if isinstance(op, Mask):
        return [op.lo, op.hi, 0]
    if isinstance(op, Abs):
        return [0]
    return []


def _pull_back(level, maps: list) -> list:
    """Base values whose image through ``maps`` can equal ``level`` (a superset)."""
    cands = [level]
    for op in reversed(maps):
        nxt = []
        for v in cands:
            if isinstance(op, Scale):
                if op.alpha != 0:
                    nxt.append(v / op.alpha)
            elif isinstance(op, Shift):
                nxt.append(v - op.c)
            elif isinstance(op, Abs):
                nxt.extend([v, -v])
            else:
                nxt.append(v)
        cands = nxt
    return cands


# ---------------------------------------------------------------------------
# Positive linear functionals
# ---------------------------------------------------------------------------


class PositiveLinear(FunctionalSpec):
    """``E[X nu]`` for a nonnegative weight ``nu``."""

    variant = "positive_linear"
    coherent = True
    law_invariant = False

    def __init__(self, nu: DensityRV) -> None:
        self.nu = nu
        self.model = nu.model
        self.cash_invariant = nu.is_normalized()

    @classmethod
    def conditional(cls, model: AtomicModel, event: Sequence[int]) -> "PositiveLinear":
        """``E[X 1_A] / P(A)`` for the atoms with indices in ``event``."""
        event = set(event)
        pa = sum(model.probs[i] for i in event)
        vals = [(1 / pa if model.mode == RATIONAL else 1.0 / float(pa)) if i in event else 0 for i in range(model.n)]
        return cls(DensityRV(model, vals))

    def _atomic(self, X):
        return expectation(X, self.nu)

    def _conjugate(self, Z):
        if self.model.mode == RATIONAL and all(isinstance(v, Fraction) for v in Z.values):
            same = all(a == b for a, b in zip(Z.values, self.nu.values))
        else:
            same = bool(np.allclose(Z.float_values(), self.nu.float_values(), rtol=0, atol=1e-12))
        return ConjugateValue(0.0 if same else math.inf)

    def conjugate_info(self, Z):
        if isinstance(Z, DensityRV) and not Z.probability and any(v < 0 for v in Z.values):
            return ConjugateValue(math.inf)
        return self._conjugate(Z)

    def maximizer(self, X):
        return Candidate(self.nu, expectation(X, self.nu), 0, "weight")

    def anchors(self, model):
        return [self.nu]

    def propose(self, model, c, rng):
        return self.nu

    def to_json(self):
        return {"variant": "positive_linear", "density": self.nu.to_json()["values"]}


# ---------------------------------------------------------------------------
# Generic conjugate and sampling
# ---------------------------------------------------------------------------


def generic_conjugate(spec: FunctionalSpec, Z: DensityRV, box: float = FALLBACK_BOX, sweeps: int = 30) -> ConjugateValue:
    """Lower bound for ``sup_X (E[XZ] - phi(X))`` over ``X`` in ``[-box, box]^n``.

    Coordinate ascent with a bounded scalar search per atom.  The value is a
    lower bound by construction; ``boundary_hit`` reports whether the search
    ran into the box.
    """
    model = Z.model
    p = model.float_probs()
    z = Z.float_values()
    x = np.zeros(model.n)

    def obj(v: np.ndarray) -> float:
        X = AtomicRV(model, v)
        return float(p @ (v * z)) - float(spec._atomic(X) - spec.shift)

    best = obj(x)
    for _ in range(sweeps):
        before = best
        for i in range(model.n):
            def f1(t, i=i):
                v = x.copy()
                v[i] = t
                return -obj(v)

            res = minimize_scalar(f1, bounds=(-box, box), method="bounded", options={"xatol": 1e-9})
            if -res.fun > best:
                x[i] = res.x
                best = -res.fun
        if best - before <= 1e-12 * (1 + abs(best)):
            break
    hit = bool(np.any(np.abs(x) >= box * (1 - 1e-6)))
    return ConjugateValue(max(best, 0.0) if spec.cash_invariant else best, CONJ_LOWER, hit)


def _shrunk_proposal(spec: FunctionalSpec, model: AtomicModel, c: float, rng) -> DensityRV | None:
    """Move from a zero-penalty anchor toward a random density and stop inside the level set."""
    anchors = spec.anchors(model)
    p = model.float_probs()
    base = anchors[int(rng.integers(len(anchors)))].float_values()
    d = rng.dirichlet(np.full(model.n, 0.5)) / p
    target = c * rng.uniform()

    def at(t: float) -> np.ndarray:
        z = (1 - t) * base + t * d
        return z / float(p @ z)

    def pen(t: float) -> float:
        return spec.conjugate_info(DensityRV(model, at(t))).value

    if pen(1.0) <= target:
        return DensityRV(model, at(1.0))
    lo, hi = 0.0, 1.0
    for _ in range(14):
        mid = (lo + hi) / 2.0
        if pen(mid) <= target:
            lo = mid
        else:
            hi = mid
    return DensityRV(model, at(lo))


def dual_level_sample(
    spec: FunctionalSpec,
    c: float,
    k: int,
    seed: int,
    model: AtomicModel | None = None,
    budget: int = 2000,
) -> list[DensityRV]:
    """``k`` densities with ``phi^*(Z) <= c``, verified by ``conjugate``.

    Only densities whose conjugate is exact or an upper bound count as
    verified.  Deterministic for a fixed ``seed``.
    """
    if c < 0:
        raise ValueError("level must be nonnegative")
    model = spec.sample_model(model)
    rng = np.random.default_rng(seed)
    out: list[DensityRV] = []

    def accept(Z: DensityRV | None) -> bool:
        if Z is None:
            return False
        cv = spec.conjugate_info(Z)
        return cv.bound in (CONJ_EXACT, CONJ_UPPER) and cv.value <= c + 1e-9

    one = DensityRV(model, np.ones(model.n), probability=spec.cash_invariant)
    if k > 0 and accept(one):
        out.append(one)
    tries = 0
    while len(out) < k and tries < budget:
        tries += 1
        Z = spec.propose(model, c, rng)
        if accept(Z):
            out.append(Z)
    if len(out) < k:
        warnings.warn(f"dual_level_sample produced {len(out)} of {k} densities", RuntimeWarning, stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# Named operations and descriptors
# ---------------------------------------------------------------------------


def eval_bounded(spec: FunctionalSpec, X) -> Any:
    """``phi_0(X)`` for a bounded variable."""
    return spec.evaluate(X)


def avar(level, qX: QuantileRV) -> float:
    """``(1/lambda) int_0^lambda q_X(1-t) dt``; ``+inf`` when the integral diverges."""
    if not 0 < level <= 1:
        raise ValueError("AVaR level must lie in (0, 1]")
    r = upper_average(qX, math.log(float(level)))
    return r.value if r.status != "diverging" else math.inf


def shortfall_eval(loss: LossFunction, X) -> float:
    return Shortfall(loss).evaluate(X)


def robust_shortfall_eval(loss: LossFunction, family: Sequence[DensityRV], X: AtomicRV) -> float:
    return RobustShortfall(loss, family).evaluate(X)


def conjugate(spec: FunctionalSpec, Z) -> float:
    return spec.conjugate(Z)


def spec_from_json(data: dict, model: AtomicModel | None = None) -> FunctionalSpec:
    """Build a spec from ``{"variant": ..., params}``."""
    v = data.get("variant")
    mode = model.mode if model is not None else FLOAT

    def dens(rows, probability=True):
        if model is None:
            raise ValueError(f"{v} needs a model")
        return [DensityRV(model, [parse_number(x, mode) for x in r], probability) for r in rows]

    if v == "entropic":
        return Entropic()
    if v == "avar":
        return AVaR(parse_number(data.get("level", 1), mode if mode == RATIONAL else FLOAT))
    if v == "distortion":
        return Distortion(DistortionMeasure.from_json(data["measure"]))
    if v == "kusuoka":
        fam = data.get("family", "spike-block")
        n_max = int(data.get("n_max", KUSUOKA_NMAX))
        if fam in ("ex6.5", "spike-block"):
            return KusuokaSup(SpikeBlockFamily(), n_max)
        measures = tuple(DistortionMeasure.from_json(m) for m in data["measures"])
        return KusuokaSup(FiniteKusuokaFamily(measures, tuple(data.get("penalties", ()))), n_max)
    if v == "shortfall":
        return Shortfall(loss_from_json(data.get("loss", "exp")))
    if v == "robust_shortfall":
        return RobustShortfall(loss_from_json(data.get("loss", "exp")), dens(data["family"]))
    if v == "modular":
        return Modular(young_from_json(data.get("young", "exp")))
    if v == "sup_measures":
        if data.get("family") in ("spike", "ex3.3"):
            if model is None or not model.countable:
                raise ValueError("the spike family needs a geometric model")
            return SpikeFamily(model)
        return SupMeasures(dens(data["densities"]), [parse_number(b, mode) for b in data.get("penalties", [0] * len(data["densities"]))])
    if v == "positive_linear":
        return PositiveLinear(dens([data["density"]], probability=False)[0])
    if v == "conditional":
        if model is None:
            raise ValueError("conditional expectation needs a model")
        return PositiveLinear.conditional(model, data["event"])
    raise ValueError(f"unknown functional variant {v!r}")
