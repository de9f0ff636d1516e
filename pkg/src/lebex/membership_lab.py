"""Classification into the Orlicz triple and the diagnostic harness for the equivalence theorems.

Every result carries an evidence grade:

* ``certifying`` -- produced by a closed-form path or by a structural fact
  (bounded variables, finite models),
* ``numerical``  -- quadrature or ladder verdicts,
* ``sampled``    -- sampled dual densities; a failing witness is still a
  valid one-sided certificate,
* ``none``       -- no definite answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .extension_engine import (
    BOUNDED_AWAY,
    CONVERGED,
    DEFAULT_ALPHAS,
    DEFAULT_NS,
    DIVERGING,
    INCONCLUSIVE,
    TAIL_DIVERGES,
    TENDS_TO_ZERO,
    LimitResult,
    _num,
    hat_eval,
    hat_eval_nonneg,
    ladder_limit,
    tail_functional,
    tail_profile,
    TailProfile,
)
from .functional_catalog import (
    CONJ_EXACT,
    CONJ_UPPER,
    Candidate,
    FunctionalSpec,
    SpikeFamily,
    dual_level_sample,
)
from .space_model import (
    AtomicModel,
    AtomicRV,
    QuantileRV,
    RATIONAL,
    discretize,
    expectation,
)

SCHEMA_VERSION = "1.0"

IN_MU = "In_Mu"
IN_M_NOT_MU = "In_M_not_Mu"
IN_L_NOT_M = "In_L_not_M"
NOT_IN_L = "Not_in_L"
VERDICT_INCONCLUSIVE = "Inconclusive"
VERDICT_CLASSES = (IN_MU, IN_M_NOT_MU, IN_L_NOT_M, NOT_IN_L, VERDICT_INCONCLUSIVE)

CERTIFYING = "certifying"
NUMERICAL = "numerical"
SAMPLED = "sampled"
NO_GRADE = "none"

PROBE_TOL = 1e-6
ATTAIN_TOL = 1e-6
DUALITY_SLACK = 1e-9
UI_EPS = 1e-6
UI_DELTA = 1e-3
UI_PLATEAU = 0.9


@dataclass(frozen=True)
class MembershipVerdict:
    cls: str
    certifying: bool
    finiteness: tuple  # (alpha, LimitResult)
    profile: TailProfile | None = None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "class": self.cls,
            "certifying": self.certifying,
            "finiteness": [{"alpha": _num(a), **r.to_json()} for a, r in self.finiteness],
            "profile": None if self.profile is None else self.profile.to_json(),
            "note": self.note,
        }


def _scaled_abs(X, alpha):
    ax = X if X.nonnegative else X.abs()
    return ax.scale(alpha)


def _rational_alpha(X, alpha):
    if isinstance(X, AtomicRV) and X.model.mode == RATIONAL:
        return Fraction(alpha)
    return alpha


def finiteness_ladder(spec: FunctionalSpec, X, alphas: Sequence = DEFAULT_ALPHAS) -> tuple:
    """``phi_hat(alpha |X|)`` for each ``alpha``; coherent specs scale one evaluation."""
    out = []
    if spec.coherent:
        base = hat_eval_nonneg(spec, _scaled_abs(X, _rational_alpha(X, 1)))
        for a in alphas:
            if base.status == DIVERGING:
                out.append((a, base))
            else:
                a_ = _rational_alpha(X, a)
                v = base.value * a_ if isinstance(base.value, Fraction) and isinstance(a_, Fraction) else float(base.value) * float(a)
                out.append((a, LimitResult(v, base.status, base.ladder, float(base.est_error) * float(a), base.route, base.certifying, base.note)))
        return tuple(out)
    for a in alphas:
        out.append((a, hat_eval_nonneg(spec, _scaled_abs(X, _rational_alpha(X, a)))))
    return tuple(out)


def classify(spec: FunctionalSpec, X, alphas: Sequence = DEFAULT_ALPHAS, Ns: Sequence = DEFAULT_NS) -> MembershipVerdict:
    """Assign ``X`` to ``M_u``, ``M \\ M_u``, ``L \\ M``, the complement of ``L``, or Inconclusive."""
    if X.bounded:
        return MembershipVerdict(IN_MU, True, (), None, "bounded variables lie in M_u")
    fin = finiteness_ladder(spec, X, alphas)
    status = [r.status for _, r in fin]
    cert_fin = all(r.certifying for _, r in fin)
    if all(s == DIVERGING for s in status):
        return MembershipVerdict(NOT_IN_L, False, fin, None, "diverges at every tested alpha")
    if DIVERGING in status:
        first_div = status.index(DIVERGING)
        conv_before = any(s == CONVERGED for s in status[:first_div])
        monotone = all(s == DIVERGING for s in status[first_div:])
        if conv_before and monotone:
            return MembershipVerdict(IN_L_NOT_M, False, fin, None, "finite for small alpha, divergent for large alpha")
        return MembershipVerdict(VERDICT_INCONCLUSIVE, False, fin, None, "finiteness pattern is not monotone in alpha")
    if INCONCLUSIVE in status:
        return MembershipVerdict(VERDICT_INCONCLUSIVE, False, fin, None, "finiteness ladder inconclusive")
    prof = tail_profile(spec, X, alphas, Ns)
    verdicts = list(prof.verdicts.values())
    cert_tail = all(r.certifying for _, _, r in prof.entries)
    if all(v == TENDS_TO_ZERO for v in verdicts):
        return MembershipVerdict(IN_MU, cert_fin and cert_tail, fin, prof, "tails tend to zero at every alpha")
    if any(v == BOUNDED_AWAY for v in verdicts):
        return MembershipVerdict(IN_M_NOT_MU, cert_fin and cert_tail, fin, prof, "tails bounded away from zero")
    if any(v == TAIL_DIVERGES for v in verdicts):
        return MembershipVerdict(VERDICT_INCONCLUSIVE, False, fin, prof, "finite value but divergent tail; evidence inconsistent")
    return MembershipVerdict(VERDICT_INCONCLUSIVE, False, fin, prof, "tail verdicts inconclusive")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticReport:
    """Evidence for one ``(spec, X)`` pair; fragments are filled by the individual checks."""

    label: str = ""
    ui_curve: list = field(default_factory=list)
    ui: dict = field(default_factory=dict)
    attainment: dict = field(default_factory=dict)
    lebesgue_probes: list = field(default_factory=list)
    conditions: dict = field(default_factory=dict)
    consistency: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "label": self.label,
            "ui_curve": [[_num(p), _num(v)] for p, v in self.ui_curve],
            "ui": _jsonify(self.ui),
            "attainment": _jsonify(self.attainment),
            "lebesgue_probes": [_jsonify(p) for p in self.lebesgue_probes],
            "conditions": _jsonify(self.conditions),
            "consistency": _jsonify(self.consistency),
        }


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, float, Fraction, np.floating, np.integer)):
        return _num(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    return str(obj)


def _atomic_view(X) -> AtomicRV:
    return X if isinstance(X, AtomicRV) else discretize(X)


def _verified(spec: FunctionalSpec, Z, c: float) -> bool:
    cv = spec.conjugate_info(Z)
    return cv.bound in (CONJ_EXACT, CONJ_UPPER) and cv.value <= c + 1e-9


def _events(X: AtomicRV, max_events: int = 24) -> list[tuple[str, np.ndarray]]:
    """Tail sets ``{|X| > N}`` and smallest-atom unions, ordered by decreasing probability."""
    n = X.model.n
    p = X.model.float_probs()
    ax = np.abs(X.float_values())
    out = []
    levels = np.unique(ax)[:-1]
    if levels.size > max_events:
        levels = levels[np.linspace(0, levels.size - 1, max_events).astype(int)]
    for lev in levels:
        out.append((f"|X|>{lev:.6g}", ax > lev))
    order = np.argsort(p, kind="stable")
    steps = sorted(set(np.unique(np.geomspace(1, max(n - 1, 1), min(max_events, max(n - 1, 1))).astype(int))))
    for k in steps:
        mask = np.zeros(n, dtype=bool)
        mask[order[:k]] = True
        out.append((f"smallest {k} atoms", mask))
    uniq = {}
    for name, m in out:
        key = m.tobytes()
        if m.any() and not m.all() and key not in uniq:
            uniq[key] = (name, m)
    events = list(uniq.values())
    events.sort(key=lambda e: -float(p[e[1]].sum()))
    return events


def ui_diagnostic(spec: FunctionalSpec, X, c: float = 1.0, budget: int = 64, seed: int = 0) -> DiagnosticReport:
    """``sup_Z E[|X| Z 1_A]`` over ``phi^*(Z) <= c`` along events with ``P(A) -> 0``.

    Candidates are sampled densities, the zero-penalty anchors and, where the
    spec has one, the maximizer of ``E[|X| 1_A Z]`` on the level set.  A
    plateau of the curve at a positive level witnesses failure of uniform
    integrability; decay below ``UI_EPS`` is evidence for it.
    """
    report = DiagnosticReport()
    Xa = _atomic_view(X)
    model = Xa.model
    if isinstance(spec, SpikeFamily) or spec.model is not None:
        model = spec.model
    ax = np.abs(Xa.float_values())
    cands = [Z for Z in dual_level_sample(spec, c, budget, seed, model)] if budget > 0 else []
    cands += [Z for Z in spec.anchors(model) if _verified(spec, Z, c)]
    p = model.float_probs()
    curve = []
    for name, mask in _events(Xa):
        Y = AtomicRV(model, np.where(mask, ax, 0.0))
        local = list(cands)
        lm = spec.level_maximizer(Y, c) if np.any(Y.float_values() > 0) else None
        if lm is not None and _verified(spec, lm, c):
            local.append(lm)
        best = max((float(p @ (Y.float_values() * Z.float_values())) for Z in local), default=0.0)
        curve.append((float(p[mask].sum()), best))
    report.ui_curve = curve
    report.ui = _ui_verdict(X, model, curve, c)
    return report


def _ui_verdict(X, model: AtomicModel, curve: list, c: float) -> dict:
    if X.bounded and isinstance(X, AtomicRV) and not model.countable:
        return {"uniformly_integrable": True, "grade": CERTIFYING, "reason": "bounded variable on a finite model"}
    if X.bounded:
        return {"uniformly_integrable": True, "grade": CERTIFYING, "reason": "bounded variables lie in M_u"}
    if not curve:
        return {"uniformly_integrable": None, "grade": NO_GRADE, "reason": "no events"}
    vals = [v for _, v in curve]
    last = vals[-1]
    mid = vals[len(vals) // 2]
    if last <= UI_EPS:
        return {"uniformly_integrable": True, "grade": SAMPLED, "reason": f"curve decays to {last:.3g}"}
    if last >= UI_DELTA and last >= UI_PLATEAU * mid:
        return {"uniformly_integrable": False, "grade": SAMPLED, "reason": f"curve floor {last:.6g} at P(A)={curve[-1][0]:.3g}", "floor": last}
    return {"uniformly_integrable": None, "grade": NO_GRADE, "reason": f"curve at {last:.3g} without a plateau"}


def _candidates(spec: FunctionalSpec, X, budget: int, seed: int) -> list[Candidate]:
    out = []
    m = spec.maximizer(X)
    if m is not None:
        out.append(m)
    if isinstance(X, AtomicRV) and budget > 0:
        model = spec.sample_model(X.model)
        for c in (0.0, 0.1, 1.0):
            for Z in dual_level_sample(spec, c, budget, seed, model):
                cv = spec.conjugate_info(Z)
                if cv.bound in (CONJ_EXACT, CONJ_UPPER) and math.isfinite(cv.value):
                    out.append(Candidate(Z, expectation(X, Z), cv.value, f"sampled c={c}"))
    return out


def attainment_check(spec: FunctionalSpec, X, budget: int = 32, seed: int = 0, hat: LimitResult | None = None) -> DiagnosticReport:
    """Best dual value ``E[XZ] - phi^*(Z)`` over closed-form and sampled candidates against ``phi_hat(X)``."""
    report = DiagnosticReport()
    h = hat if hat is not None else _hat(spec, X)
    cands = _candidates(spec, X, budget, seed)
    best = None
    for cand in cands:
        v = cand.value
        if best is None or v > best.value:
            best = cand
    frag = {"hat": h.value, "hat_status": h.status, "hat_route": h.route, "candidates": len(cands)}
    if best is None or not h.finite:
        frag.update({"best": None if best is None else best.value, "attained": None, "weak_duality": True, "grade": NO_GRADE})
        report.attainment = frag
        return report
    bv = best.value
    hv = h.value
    gap = hv - bv
    weak = float(bv) <= float(hv) + DUALITY_SLACK
    attained = float(gap) <= ATTAIN_TOL
    grade = CERTIFYING if h.certifying and isinstance(gap, Fraction) else NUMERICAL
    frag.update(
        {
            "best": bv,
            "gap": gap,
            "maximizer": best.label,
            "attained": attained,
            "weak_duality": weak,
            "grade": grade,
            "closed_form_attained": _closed_form_attained(h),
        }
    )
    report.attainment = frag
    return report


def _closed_form_attained(h: LimitResult):
    if h.route != "closed-form":
        return None
    return h.note.startswith("attained")


def _hat(spec: FunctionalSpec, X) -> LimitResult:
    if X.nonnegative:
        return hat_eval_nonneg(spec, X)
    d = hat_eval(spec, X)
    return LimitResult(d.value, d.status, (), 0.0, d.upper_first.route, d.upper_first.certifying, d.note)


PROBE_LEVELS = tuple(2.0**k for k in range(0, 21, 2))


def lebesgue_probe(
    spec: FunctionalSpec,
    X,
    probes: Sequence[str] = ("truncation", "clamp", "tail", "mask"),
    alphas: Sequence = (1,),
) -> DiagnosticReport:
    """Dominated, a.s. convergent probe sequences and their limits against the target."""
    report = DiagnosticReport()
    target = _hat(spec, X)
    out = []
    for kind in probes:
        if kind == "truncation":
            vals = [_hat(spec, X.mask(-n, n)) for n in PROBE_LEVELS]
            out.append(_probe_record("X 1{|X|<=n}", vals, target, PROBE_LEVELS))
        elif kind == "clamp":
            vals = [_hat(spec, X.clamp(-n, n)) for n in PROBE_LEVELS]
            out.append(_probe_record("(X v -n) ^ n", vals, target, PROBE_LEVELS))
        elif kind == "tail":
            for a in alphas:
                a_ = _rational_alpha(X, a)
                vals = [tail_functional(spec, X, a_, n) for n in PROBE_LEVELS]
                zero = LimitResult(0, CONVERGED, route="bounded", certifying=True)
                out.append(_probe_record(f"{a} |X| 1{{|X|>n}}", vals, zero, PROBE_LEVELS))
        elif kind == "mask":
            # On a finite model P(A_n) -> 0 forces A_n to be eventually empty; countable
            # models are covered by the tail probe, whose events {|X| > n} shrink to null sets.
            if not isinstance(X, AtomicRV) or X.model.countable:
                continue
            order = np.argsort(X.model.float_probs(), kind="stable")
            n = X.model.n
            levels = list(range(n - 1, -1, -1))
            zero = 0 if X.model.mode == RATIONAL else 0.0
            vals = []
            for k in levels:
                m = np.zeros(n, dtype=bool)
                m[order[:k]] = True
                vals.append(_hat(spec, AtomicRV(X.model, np.where(m, np.asarray(X.values), zero))))
            zero_t = LimitResult(0, CONVERGED, route="bounded", certifying=True)
            out.append(_probe_record("X 1_{A_n}, A_n shrinking to the empty set", vals, zero_t, levels, eventual=True))
        else:
            raise ValueError(f"unknown probe {kind!r}")
    report.lebesgue_probes = out
    return report


def _probe_record(tag: str, vals: list[LimitResult], target: LimitResult, levels, eventual: bool = False) -> dict:
    """Compare the limit of a probe sequence with ``target``.

    ``eventual`` marks sequences whose last member is the limit itself, so the
    last value is compared and no plateau is read off the earlier members.
    """
    if any(r.status == DIVERGING for r in vals):
        passed = target.status == DIVERGING and all(r.status == DIVERGING for r in vals[-2:])
        return {"probe": tag, "limit": math.inf, "target": target.value, "pass": passed, "status": DIVERGING, "grade": NUMERICAL, "values": [_num(r.value) for r in vals]}
    if any(r.status != CONVERGED for r in vals) or target.status != CONVERGED:
        return {"probe": tag, "limit": vals[-1].value, "target": target.value, "pass": None, "status": INCONCLUSIVE, "grade": NO_GRADE, "values": [_num(r.value) for r in vals]}
    if eventual:
        lim, status = vals[-1].value, CONVERGED
    else:
        lim, status, err = ladder_limit(levels, [r.value for r in vals], tol=PROBE_TOL / 10)
    if status != CONVERGED:
        lim = vals[-1].value
        status = "plateau" if abs(float(vals[-1].value) - float(vals[-2].value)) <= PROBE_TOL else INCONCLUSIVE
    diff = abs(float(lim) - float(target.value))
    passed = diff <= PROBE_TOL if status in (CONVERGED, "plateau") else None
    cert = all(r.certifying for r in vals) and target.certifying
    return {
        "probe": tag,
        "limit": lim,
        "target": target.value,
        "pass": passed,
        "status": status,
        "grade": CERTIFYING if cert and passed is not None else (NUMERICAL if passed is not None else NO_GRADE),
        "values": [_num(r.value) for r in vals],
    }


# ---------------------------------------------------------------------------
# JST harness
# ---------------------------------------------------------------------------

CONDITIONS = ("lebesgue", "ui", "attainment", "max_representation")
MEMBER_SCALES = (Fraction(1, 2), 1, 2, 4, 8)


@dataclass(frozen=True)
class SuiteItem:
    spec: FunctionalSpec
    X: Any
    label: str = ""


def _condition_lebesgue(spec, X) -> dict:
    # tails probed at the member scales, matching the attainment proxies
    probes = lebesgue_probe(spec, X, alphas=MEMBER_SCALES).lebesgue_probes
    definite = [p for p in probes if p["pass"] is not None]
    if X.bounded:
        ok = all(p["pass"] for p in definite)
        return {"pass": ok, "grade": CERTIFYING if ok else NUMERICAL, "probes": probes}
    if any(p["pass"] is False for p in definite):
        cert = any(p["pass"] is False and p["grade"] == CERTIFYING for p in definite)
        return {"pass": False, "grade": CERTIFYING if cert else NUMERICAL, "probes": probes}
    if definite and len(definite) == len(probes):
        return {"pass": True, "grade": NUMERICAL, "probes": probes}
    return {"pass": None, "grade": NO_GRADE, "probes": probes}


def _condition_ui(spec, X, c: float, budget: int, seed: int) -> dict:
    rep = ui_diagnostic(spec, X, c, budget, seed)
    ui = dict(rep.ui)
    return {"pass": ui.get("uniformly_integrable"), "grade": ui.get("grade", NO_GRADE), "reason": ui.get("reason", ""), "curve": rep.ui_curve}


def _members(X) -> list:
    ax = X if X.nonnegative else X.abs()
    out = []
    for s in MEMBER_SCALES:
        out.append((s, ax.scale(_rational_alpha(X, s))))
    return out


def _condition_attainment(spec, X, budget: int, seed: int, closed_only: bool) -> dict:
    """Finite, attained supremum for every scaled member ``s |X|``.

    With ``closed_only`` only the closed-form maximizer counts and the value
    it must reach is computed by the ladder route where that is available.
    """
    rows = []
    for s, Y in _members(X):
        if closed_only:
            h = _hat_second_route(spec, Y)
            rep = attainment_check(spec, Y, 0, seed, hat=h)
        else:
            rep = attainment_check(spec, Y, budget, seed)
        a = dict(rep.attainment)
        a["scale"] = s
        rows.append(a)
        if a.get("hat_status") == DIVERGING:
            return {"pass": False, "grade": NUMERICAL, "reason": f"phi_hat diverges at scale {s}", "rows": rows}
        cf = a.get("closed_form_attained")
        if cf is False:
            return {"pass": False, "grade": CERTIFYING, "reason": f"closed form: supremum not attained at scale {s}", "rows": rows}
        if a.get("attained") is None:
            return {"pass": None, "grade": NO_GRADE, "reason": f"no finite comparison at scale {s}", "rows": rows}
        if not a["attained"]:
            return {"pass": None, "grade": NO_GRADE, "reason": f"no candidate reaches phi_hat at scale {s}", "rows": rows}
    cert = all(r.get("grade") == CERTIFYING for r in rows)
    return {"pass": True, "grade": CERTIFYING if cert else NUMERICAL, "rows": rows}


def _hat_second_route(spec: FunctionalSpec, Y) -> LimitResult:
    """``phi_hat`` through the ladder when the variable is unbounded and not on a closed-form path."""
    if Y.bounded or (isinstance(spec, SpikeFamily) and isinstance(Y, AtomicRV) and Y.sequence is not None):
        return hat_eval_nonneg(spec, Y)
    r = hat_eval_nonneg(spec, Y, route="ladder")
    if r.status == INCONCLUSIVE:
        return hat_eval_nonneg(spec, Y)
    return r


def jst_crosscheck(spec: FunctionalSpec | None, suite: Sequence, c: float = 1.0, budget: int = 32, seed: int = 0) -> dict:
    """Evaluate the four condition proxies per instance and the agreement matrix.

    ``suite`` holds variables (paired with ``spec``) or ``SuiteItem`` entries.
    Two definite results on one instance that disagree are reported as an
    inconsistency; nothing is reconciled.
    """
    items = []
    for k, it in enumerate(suite):
        if isinstance(it, SuiteItem):
            items.append(it)
        elif isinstance(it, tuple):
            items.append(SuiteItem(*it))
        else:
            if spec is None:
                raise ValueError("suite entries need a spec")
            items.append(SuiteItem(spec, it, f"instance {k}"))
    reports = []
    for it in items:
        rep = DiagnosticReport(label=it.label)
        conds = {
            "lebesgue": _condition_lebesgue(it.spec, it.X),
            "ui": _condition_ui(it.spec, it.X, c, budget, seed),
            "attainment": _condition_attainment(it.spec, it.X, budget, seed, closed_only=False),
            "max_representation": _condition_attainment(it.spec, it.X, budget, seed, closed_only=True),
        }
        rep.conditions = conds
        definite = {k: v["pass"] for k, v in conds.items() if v["pass"] is not None}
        cert = {k: v["pass"] for k, v in conds.items() if v["pass"] is not None and v["grade"] == CERTIFYING}
        rep.consistency = {
            "consistent": len(set(definite.values())) <= 1,
            "certifying_consistent": len(set(cert.values())) <= 1,
            "definite": definite,
        }
        reports.append(rep)
    matrix = _agreement(reports)
    return {
        "schema_version": SCHEMA_VERSION,
        "instances": reports,
        "matrix": matrix,
        "consistent": all(r.consistency["consistent"] for r in reports),
        "certifying_consistent": all(r.consistency["certifying_consistent"] for r in reports),
    }


def _agreement(reports: list[DiagnosticReport]) -> dict:
    """For each pair of conditions: instances where both are definite, and how many agree."""
    out = {}
    for a in CONDITIONS:
        for b in CONDITIONS:
            both = agree = 0
            for r in reports:
                pa = r.conditions[a]["pass"]
                pb = r.conditions[b]["pass"]
                if pa is None or pb is None:
                    continue
                both += 1
                agree += pa == pb
            out[f"{a}|{b}"] = {"both_definite": both, "agree": agree}
    return out


def truncation_interchange_check(spec: FunctionalSpec, X, tol: float = 1e-6) -> "InterchangeReport":
    """Both orders of the double truncation and the single truncation ``X 1{|X| <= n}`` agree."""
    d = hat_eval(spec, X, tol=tol)
    single_vals = [_hat(spec, X.mask(-n, n)) for n in PROBE_LEVELS]
    if any(r.status == DIVERGING for r in single_vals):
        single = LimitResult(math.inf, DIVERGING)
    else:
        v, s, e = ladder_limit(PROBE_LEVELS, [r.value for r in single_vals])
        single = LimitResult(v, s, tuple(zip(PROBE_LEVELS, [r.value for r in single_vals])), e)
    finite = d.status == CONVERGED and single.status == CONVERGED and not d.disagree
    agree = finite and abs(float(d.value) - float(single.value)) <= tol * max(1.0, abs(float(d.value)))
    if d.disagree:
        reason = "iteration orders disagree"
    elif not finite:
        reason = f"limits not finite (double: {d.status}, single: {single.status}); interchange not certified"
    elif not agree:
        reason = f"single truncation limit {single.value} differs from {d.value}"
    else:
        reason = ""
    return InterchangeReport(agree, d, single, reason)


@dataclass(frozen=True)
class InterchangeReport:
    ok: bool
    double: Any
    single: LimitResult
    discrepancy: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "double": self.double.to_json(), "single": self.single.to_json(), "discrepancy": self.discrepancy}


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def jst_suite() -> list[SuiteItem]:
    """Twelve instances: bounded, AV@R over light and heavy tails, the spike family, supercritical modulars."""
    from .distortion import DistortionMeasure
    from .functional_catalog import AVaR, Distortion, Entropic, Modular
    from .losses import young_from_json
    from .space_model import Exponential, Pareto, clamp

    u8 = AtomicModel.uniform(8)
    rng = np.random.default_rng(20240601)
    geo = AtomicModel.geometric(24, RATIONAL)
    spike = SpikeFamily(geo)
    seq = AtomicRV.from_sequence(geo)
    expo = QuantileRV(Exponential(1.0))
    mod = Modular(young_from_json("exp"))
    return [
        SuiteItem(AVaR(0.5), AtomicRV(u8, rng.normal(size=8)), "bounded atomic / AVaR(0.5)"),
        SuiteItem(Entropic(), AtomicRV(u8, rng.normal(size=8)), "bounded atomic / entropic"),
        SuiteItem(Distortion(DistortionMeasure.point(0.25)), clamp(expo, 0, 5), "bounded quantile / distortion"),
        SuiteItem(spike, seq.clamp(0, 5), "bounded sequence / spike family"),
        SuiteItem(AVaR(0.5), expo, "exp(1) / AVaR(0.5)"),
        SuiteItem(AVaR(0.1), expo.scale(3.0), "3 exp(1) / AVaR(0.1)"),
        SuiteItem(AVaR(0.25), QuantileRV(Pareto(3.0)), "Pareto(3) / AVaR(0.25)"),
        SuiteItem(AVaR(0.5), QuantileRV(Pareto(2.5)), "Pareto(2.5) / AVaR(0.5)"),
        SuiteItem(spike, seq, "X(k) = k / spike family"),
        SuiteItem(spike, AtomicRV.from_sequence(geo, 2, 1), "X(k) = 2k + 1 / spike family"),
        SuiteItem(mod, expo.scale(0.25), "exp(1)/4 / modular exp"),
        SuiteItem(mod, expo.scale(0.5), "exp(1)/2 / modular exp"),
    ]
