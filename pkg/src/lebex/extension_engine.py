"""The maximum Lebesgue extension on unbounded variables and the structures built on it.

``phi_hat`` is evaluated by one of four routes, tried in order:

* ``closed-form`` -- exact formulas (the spike family on sequence variables),
* ``bounded``     -- a single evaluation when the variable is bounded,
* ``direct``      -- a truncation-free integral from the catalog, valid by
  monotone convergence for variables bounded below,
* ``ladder``      -- ``phi_0(X ^ n)`` along ``n = 2^0, ..., 2^20`` with a
  three-way verdict.

``route="ladder"`` forces the last one so that the two numerical routes can
be checked against each other.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .functional_catalog import (
    FunctionalSpec,
    SpikeFamily,
    dual_level_sample,
)
from .space_model import (
    AtomicModel,
    AtomicRV,
    DensityRV,
    RATIONAL,
    expectation,
    expectation_result,
)

CONVERGED = "converged"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"

LADDER = tuple(2.0**k for k in range(21))
LADDER_TOL = 1e-9
DIVERGENCE_CAP = 1e12
GROWTH_RUN = 6
GROWTH_RATIO = 1.25

EPS_TAIL = 1e-6
DELTA_AWAY = 1e-3
PLATEAU_TOL = 1e-3

TENDS_TO_ZERO = "tends-to-zero"
BOUNDED_AWAY = "bounded-away"
TAIL_DIVERGES = "diverges"
TAIL_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class LimitResult:
    """A truncation limit with its evidence."""

    value: Any
    status: str
    ladder: tuple = ()
    est_error: float = 0.0
    route: str = "ladder"
    certifying: bool = False
    note: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def finite(self) -> bool:
        return self.status == CONVERGED and math.isfinite(float(self.value))

    def to_json(self) -> dict:
        return {
            "value": _num(self.value),
            "status": self.status,
            "est_error": _num(self.est_error),
            "route": self.route,
            "certifying": self.certifying,
            "note": self.note,
            "ladder": [[_num(a), _num(b)] for a, b in self.ladder],
        }


def _num(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# Ladders
# ---------------------------------------------------------------------------


def ladder_limit(levels: Sequence[float], values: Sequence[Any], tol: float = LADDER_TOL) -> tuple[Any, str, float]:
    """Three-way verdict on a sequence of partial values.

    Converged when two consecutive deltas fall below ``max(tol, tol*|v|)``;
    diverging when a value passes the cap or the slope per unit of level
    grows by ``GROWTH_RATIO`` over ``GROWTH_RUN`` consecutive rungs;
    inconclusive otherwise.  Slopes keep linear growth, which every coherent
    functional shows below the upper quantiles, out of the divergence rule.
    """
    levels = [float(t) for t in levels]
    vals = list(values)
    deltas: list[float] = []
    slopes: list[float] = []
    for k, v in enumerate(vals):
        fv = float(v)
        if not math.isfinite(fv) or fv > DIVERGENCE_CAP:
            return (math.inf if fv > 0 or not math.isfinite(fv) else -math.inf), DIVERGING, math.inf
        if k == 0:
            continue
        d = abs(fv - float(vals[k - 1]))
        deltas.append(d)
        step = levels[k] - levels[k - 1] if k < len(levels) else 1.0
        slopes.append(d / step if step > 0 else math.inf)
        scale = max(tol, tol * abs(fv))
        if len(deltas) >= 2 and deltas[-1] < scale and deltas[-2] < scale:
            return v, CONVERGED, deltas[-1]
        if len(deltas) >= GROWTH_RUN:
            run = slopes[-GROWTH_RUN:]
            if all(b > GROWTH_RATIO * a for a, b in zip(run, run[1:])) and deltas[-1] > scale:
                return math.inf, DIVERGING, math.inf
    return (vals[-1] if vals else math.nan), INCONCLUSIVE, (deltas[-1] if deltas else math.inf)


def _truncation_note(X) -> str:
    if isinstance(X, AtomicRV) and X.model.countable:
        return f"countable model truncated at depth {X.model.depth}"
    return ""


def _spike_closed_form(spec: SpikeFamily, X: AtomicRV) -> LimitResult:
    value, attained, arg = spec.closed_form(X)
    note = f"attained at n={arg}" if attained else "supremum approached as n -> infinity, not attained"
    return LimitResult(value, CONVERGED, (), 0, "closed-form", certifying=True, note=note)


def hat_eval_nonneg(spec: FunctionalSpec, X, route: str = "auto") -> LimitResult:
    """``phi_hat(X) = lim_n phi_0(X ^ n)`` for ``X >= 0``."""
    if not X.nonnegative:
        raise ValueError("hat_eval_nonneg expects a nonnegative variable")
    return _hat_upper(spec, X, route)


def _hat_upper(spec: FunctionalSpec, X, route: str) -> LimitResult:
    """Upward truncation limit for a variable bounded below."""
    if route not in ("auto", "ladder", "direct"):
        raise ValueError(f"unknown route {route!r}")
    if route == "auto" and isinstance(spec, SpikeFamily) and isinstance(X, AtomicRV) and X.sequence is not None:
        return _spike_closed_form(spec, X)
    if X.bounded:
        v = spec.evaluate(X)
        return LimitResult(v, CONVERGED, ((_num(X.upper_bound), v),), 0.0, "bounded", certifying=isinstance(v, Fraction))
    if route in ("auto", "direct"):
        d = spec.hat_direct(X)
        if d is not None:
            return LimitResult(d.value, d.status, (), d.est_error, "direct", d.certifying, d.note)
        if route == "direct":
            raise ValueError(f"{spec.variant} has no direct route for this variable")
    return _ladder_lower_bounded(spec, X)


def _ladder_lower_bounded(spec: FunctionalSpec, X) -> LimitResult:
    lo = X.lower
    rungs = []
    for n in LADDER:
        if n < float(lo):
            continue
        v = spec.evaluate(X.clamp(lo, n))
        rungs.append((n, v))
        value, status, err = ladder_limit([r[0] for r in rungs], [r[1] for r in rungs])
        if status != INCONCLUSIVE:
            return LimitResult(value, status, tuple(rungs), err, "ladder", note=_truncation_note(X))
    value, status, err = ladder_limit([r[0] for r in rungs], [r[1] for r in rungs])
    return LimitResult(value, status, tuple(rungs), err, "ladder", note=_truncation_note(X))


@dataclass(frozen=True)
class DoubleLimit:
    """``phi_hat`` through both iteration orders of the double truncation."""

    value: Any
    status: str
    upper_first: LimitResult
    lower_first: LimitResult
    disagree: bool
    note: str = ""

    def to_json(self) -> dict:
        return {
            "value": _num(self.value),
            "status": self.status,
            "disagree": self.disagree,
            "upper_first": self.upper_first.to_json(),
            "lower_first": self.lower_first.to_json(),
            "note": self.note,
        }


DOUBLE_LADDER = tuple(2.0**k for k in range(0, 21, 2))


def _lower_bounded(X) -> bool:
    if isinstance(X, AtomicRV):
        return X.bounded or X.nonnegative or _sequence_lower_bounded(X)
    return math.isfinite(float(X.lower))


def _sequence_lower_bounded(X: AtomicRV) -> bool:
    seq = X.sequence
    if seq is None:
        return True
    probe = [X.value_at(k) for k in (1, 2, 4, 8, 16, 32)]
    return all(b >= a for a, b in zip(probe, probe[1:]))


def hat_eval(spec: FunctionalSpec, X, route: str = "auto", tol: float = 1e-6) -> DoubleLimit:
    """``lim_m lim_n phi_0((X v -m) ^ n)`` and the reversed order.

    A disagreement beyond ``tol`` between the orders is flagged; it
    certifies that ``X`` lies outside the Lebesgue domain.
    """
    if X.bounded:
        r = _hat_upper(spec, X, route)
        return DoubleLimit(r.value, r.status, r, r, False, "bounded")
    if _lower_bounded(X):
        r = _hat_upper(spec, X, route)
        return DoubleLimit(r.value, r.status, r, r, False, "bounded below: the lower truncation is inactive")
    levels = DOUBLE_LADDER
    grid = [[spec.evaluate(X.clamp(-m, n)) for n in levels] for m in levels]
    # upper first: n -> inf at each m, then m -> inf
    rows = [ladder_limit(levels, row) for row in grid]
    a = _outer(levels, rows)
    cols = [ladder_limit(levels, [grid[i][j] for i in range(len(levels))]) for j in range(len(levels))]
    b = _outer(levels, cols)
    dis = _disagree(a, b, tol)
    status = a.status if a.status == b.status else INCONCLUSIVE
    value = a.value if not dis else math.nan
    return DoubleLimit(value, status, a, b, dis, "double ladder")


def _outer(levels, inner: list) -> LimitResult:
    if any(s == DIVERGING for _, s, _ in inner):
        vals = [v for v, s, _ in inner]
        if all(s == DIVERGING for _, s, _ in inner):
            return LimitResult(vals[0], DIVERGING, tuple(zip(levels, vals)), math.inf, "ladder")
    vals = [v for v, _, _ in inner]
    worst = INCONCLUSIVE if any(s == INCONCLUSIVE for _, s, _ in inner) else CONVERGED
    value, status, err = ladder_limit(levels, vals)
    if status == CONVERGED and worst != CONVERGED:
        status = INCONCLUSIVE
    return LimitResult(value, status, tuple(zip(levels, vals)), err, "ladder")


def _disagree(a: LimitResult, b: LimitResult, tol: float) -> bool:
    if a.status == DIVERGING and b.status == DIVERGING:
        return False
    if a.status == CONVERGED and b.status == CONVERGED:
        return abs(float(a.value) - float(b.value)) > tol * max(1.0, abs(float(a.value)))
    if {a.status, b.status} == {CONVERGED, DIVERGING}:
        return True
    return False


# ---------------------------------------------------------------------------
# Tails
# ---------------------------------------------------------------------------


def tail_variable(X, alpha, N):
    """``alpha |X| 1{|X| > N}``."""
    ax = X if X.nonnegative else X.abs()
    return ax.truncate_tail(N).scale(alpha)


def tail_functional(spec: FunctionalSpec, X, alpha, N, route: str = "auto") -> LimitResult:
    """``phi_hat(alpha |X| 1{|X| > N})``."""
    if not alpha > 0 or N < 0:
        raise ValueError("need alpha > 0 and N >= 0")
    return hat_eval_nonneg(spec, tail_variable(X, alpha, N), route)


@dataclass(frozen=True)
class TailProfile:
    """``phi_hat(alpha |X| 1{|X| > N})`` on an ``(alpha, N)`` grid with per-alpha verdicts."""

    alphas: tuple
    Ns: tuple
    entries: tuple  # (alpha, N, LimitResult)
    verdicts: dict
    thresholds: dict = field(default_factory=dict)

    def row(self, alpha) -> list[LimitResult]:
        return [r for a, _, r in self.entries if a == alpha]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "N", "value", "status", "est_error"])
        for a, n, r in self.entries:
            w.writerow([_num(a), _num(n), _num(r.value), r.status, _num(r.est_error)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "alphas": [_num(a) for a in self.alphas],
            "Ns": [_num(n) for n in self.Ns],
            "entries": [{"alpha": _num(a), "N": _num(n), **r.to_json()} for a, n, r in self.entries],
            "verdicts": {str(_num(a)): v for a, v in self.verdicts.items()},
            "thresholds": self.thresholds,
        }


def tail_verdict(values: Sequence[LimitResult], eps_tail: float = EPS_TAIL, delta_away: float = DELTA_AWAY, plateau_tol: float = PLATEAU_TOL) -> str:
    """Verdict on ``N -> phi_hat(alpha |X| 1{|X|>N})`` from its values on an increasing grid."""
    if any(r.status == DIVERGING for r in values):
        return TAIL_DIVERGES
    if any(r.status != CONVERGED for r in values[-2:]):
        return TAIL_INCONCLUSIVE
    v = [float(r.value) for r in values]
    last = v[-1]
    prev = v[-2] if len(v) >= 2 else math.inf
    if last <= eps_tail and (last < prev or last == 0.0):
        return TENDS_TO_ZERO
    if len(v) >= 2 and last >= delta_away and prev >= delta_away and abs(prev - last) <= plateau_tol * abs(last):
        return BOUNDED_AWAY
    return TAIL_INCONCLUSIVE


DEFAULT_ALPHAS = tuple(2.0**k for k in range(-3, 7))
DEFAULT_NS = tuple(2.0**k for k in range(0, 21, 2))


def tail_profile(
    spec: FunctionalSpec,
    X,
    alphas: Sequence = DEFAULT_ALPHAS,
    Ns: Sequence = DEFAULT_NS,
    eps_tail: float = EPS_TAIL,
    delta_away: float = DELTA_AWAY,
    plateau_tol: float = PLATEAU_TOL,
) -> TailProfile:
    """Tail grid; coherent specs evaluate once per ``N`` and scale by ``alpha``."""
    alphas = tuple(alphas)
    Ns = tuple(Ns)
    if not alphas or not Ns or list(alphas) != sorted(alphas) or list(Ns) != sorted(Ns):
        raise ValueError("alpha and N grids must be nonempty and increasing")
    entries = []
    if spec.coherent:
        base = {N: tail_functional(spec, X, 1, N) for N in Ns}
        for a in alphas:
            for N in Ns:
                r = base[N]
                entries.append((a, N, _scaled(r, a)))
    else:
        for a in alphas:
            for N in Ns:
                entries.append((a, N, tail_functional(spec, X, a, N)))
    verdicts = {}
    for a in alphas:
        row = [r for aa, _, r in entries if aa == a]
        verdicts[a] = tail_verdict(row, eps_tail, delta_away, plateau_tol)
    th = {"eps_tail": eps_tail, "delta_away": delta_away, "plateau_tol": plateau_tol}
    return TailProfile(alphas, Ns, tuple(entries), verdicts, th)


def _scaled(r: LimitResult, a) -> LimitResult:
    if r.status == DIVERGING:
        return r
    if isinstance(r.value, Fraction) and isinstance(a, (int, Fraction)):
        v = r.value * a
    else:
        v = float(r.value) * float(a)
    return LimitResult(v, r.status, r.ladder, float(r.est_error) * float(a), r.route, r.certifying, r.note)


# ---------------------------------------------------------------------------
# Gauge norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugeResult:
    value: float
    status: str
    steps: int
    note: str = ""


def _is_zero(X) -> bool:
    if isinstance(X, AtomicRV):
        return all(v == 0 for v in X.values) and (X.sequence is None or X.bounded)
    return X.bounded and float(X.lower) == 0.0 and float(X.upper_bound) == 0.0


def gauge_norm_result(spec: FunctionalSpec, X, rtol: float = 1e-8, route: str = "auto") -> GaugeResult:
    """``inf{lambda > 0 : phi_hat(|X|/lambda) <= 1}`` by bracketing and log-space bisection."""
    if _is_zero(X):
        return GaugeResult(0.0, CONVERGED, 0)
    ax = X if X.nonnegative else X.abs()
    steps = 0
    saw_inconclusive = False

    def ok(lam: float) -> bool:
        nonlocal steps, saw_inconclusive
        steps += 1
        r = hat_eval_nonneg(spec, ax.scale(1.0 / lam) if not isinstance(ax, AtomicRV) else ax.scale(_inv(lam, ax)), route)
        if r.status == INCONCLUSIVE:
            saw_inconclusive = True
        return r.status == CONVERGED and float(r.value) <= 1.0

    lo, hi = 2.0**-20, 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 2.0**40:
            status = INCONCLUSIVE if saw_inconclusive else DIVERGING
            return GaugeResult(math.inf, status, steps, "no admissible lambda up to 2^40")
    while ok(lo):
        hi = lo
        lo /= 2.0
        if lo < 2.0**-60:
            return GaugeResult(0.0, CONVERGED, steps, "admissible down to 2^-60")
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol / 4:
        mid = (llo + lhi) / 2.0
        if ok(math.exp(mid)):
            lhi = mid
        else:
            llo = mid
    return GaugeResult(math.exp(lhi), CONVERGED, steps, "inconclusive rungs treated as inadmissible" if saw_inconclusive else "")


def _inv(lam: float, X: AtomicRV):
    if X.model.mode == RATIONAL:
        return Fraction(1.0 / lam)
    return 1.0 / lam


def gauge_norm(spec: FunctionalSpec, X, rtol: float = 1e-8) -> float:
    return gauge_norm_result(spec, X, rtol).value


# ---------------------------------------------------------------------------
# Young gap, embedding
# ---------------------------------------------------------------------------


def pairing(X, Z) -> float:
    """``E[X Z]`` for an atomic pair or a quantile pair (comonotone)."""
    if isinstance(X, AtomicRV):
        return float(expectation(X, Z))
    r = expectation_result(X, Z)
    return r.value if r.status != DIVERGING else math.inf


def young_gap(spec: FunctionalSpec, X, Z, alpha=1) -> float:
    """``phi_hat(alpha|X|) + phi_0^*(Z) - E[alpha |X| Z]``."""
    ax = X if X.nonnegative else X.abs()
    ax = ax.scale(alpha)
    conj = spec.conjugate(Z)
    if not math.isfinite(conj):
        return math.inf
    h = hat_eval_nonneg(spec, ax)
    if h.status == DIVERGING:
        return math.inf
    return float(h.value) + conj - pairing(ax, Z)


def embedding_check(spec: FunctionalSpec, X, Z, slack: float = 1e-8, norm: float | None = None) -> bool:
    """``E[|X| Z] <= (1 + phi_0^*(Z)) ||X||`` within ``slack``."""
    ax = X if X.nonnegative else X.abs()
    nrm = gauge_norm(spec, X) if norm is None else norm
    lhs = pairing(ax, Z)
    rhs = (1.0 + spec.conjugate(Z)) * nrm
    if math.isinf(rhs) and rhs > 0:
        return True
    return lhs <= rhs + slack * max(1.0, abs(rhs))


# ---------------------------------------------------------------------------
# Maximal support
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportReport:
    Zhat: DensityRV | None
    support: tuple
    sensitive: bool
    witnesses: dict
    complete: bool
    used: int
    note: str = ""

    def to_json(self) -> dict:
        return {
            "support": [int(i) for i in self.support],
            "sensitive": self.sensitive,
            "complete": self.complete,
            "used": self.used,
            "Zhat": None if self.Zhat is None else self.Zhat.to_json()["values"],
            "witnesses": {str(k): {str(e): _num(v) for e, v in w.items()} for k, w in self.witnesses.items()},
            "note": self.note,
        }


WITNESS_EPS = (1, 10, 100)


def maximal_support(spec: FunctionalSpec, model: AtomicModel, samples: int = 32, seed: int = 0) -> SupportReport:
    """A dual density with the largest support seen among level-1 samples.

    Samples from ``{phi^* <= 1}`` are added with weights ``2^{-j}`` whenever
    they charge a new atom; the weights are renormalized so that the result
    stays in the level set by convexity.  Per-atom witnesses report
    ``phi_0(eps 1_atom)`` for ``eps`` in ``WITNESS_EPS``.
    """
    model = spec.sample_model(model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        Zs = dual_level_sample(spec, 1.0, samples, seed, model)
    stalled = any(issubclass(w.category, RuntimeWarning) for w in caught)
    n = model.n
    covered = np.zeros(n, dtype=bool)
    chosen: list[DensityRV] = []
    for Z in Zs:
        pos = Z.float_values() > 0
        if np.any(pos & ~covered):
            chosen.append(Z)
            covered |= pos
        if covered.all():
            break
    witnesses = {}
    for i in range(n):
        w = {}
        for eps in WITNESS_EPS:
            vals = [0] * n
            vals[i] = eps
            w[eps] = spec.evaluate(AtomicRV(model, vals))
        witnesses[i] = w
    if not chosen:
        return SupportReport(None, (), False, witnesses, False, 0, "sampler returned no densities")
    weights = [Fraction(1, 2 ** (j + 1)) for j in range(len(chosen))]
    total = sum(weights)
    exact = model.mode == RATIONAL and all(all(isinstance(v, Fraction) for v in Z.values) for Z in chosen)
    if exact:
        vals = [sum(wj / total * Z.values[i] for wj, Z in zip(weights, chosen)) for i in range(n)]
    else:
        vals = sum(float(wj / total) * Z.float_values() for wj, Z in zip(weights, chosen))
    Zhat = DensityRV(model, vals, probability=chosen[0].probability)
    support = tuple(int(i) for i in np.flatnonzero(covered))
    sensitive = bool(covered.all())
    note = "sampler stalled; support is a lower bound" if stalled and not sensitive else ""
    return SupportReport(Zhat, support, sensitive, witnesses, sensitive or not stalled, len(chosen), note)
