"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints one ``PASS``/``FAIL`` line outside pytest's capture, and
asserts the same condition it prints.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
import property_suites
from conftest import suite_outcomes
from lebex.extension_engine import DIVERGING, hat_eval_nonneg, tail_functional
from lebex.functional_catalog import KUSUOKA_NMAX, AVaR, Entropic, KusuokaSup, Modular, Shortfall, SpikeBlockFamily, SpikeFamily, avar, shortfall_eval
from lebex.losses import loss_from_json, young_from_json
from lebex.membership_lab import (
    DUALITY_SLACK,
    IN_L_NOT_M,
    IN_M_NOT_MU,
    attainment_check,
    classify,
    jst_crosscheck,
    jst_suite,
    lebesgue_probe,
)
from lebex.space_model import RATIONAL, AtomicModel, AtomicRV, Exponential, QuantileRV

EXPO = QuantileRV(Exponential(1.0))


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")

    return emit


def test_criterion_1_sequence_space_counterexample(report):
    t0 = time.perf_counter()
    geo = AtomicModel.geometric(64, RATIONAL)
    fam = SpikeFamily(geo)
    X = AtomicRV.from_sequence(geo)
    bad = []
    for n in (2, 5, 100):
        got = fam.spike_expectation(X, n)
        want = oracles.spike_mean(n, [X.value_at(k) for k in range(1, n + 1)])
        if not got == want == 2 - Fraction(1, n):
            bad.append(f"E_Q{n}[X]={got}")
    alphas = (Fraction(1, 2), 1, 3)
    for a in alphas:
        r = hat_eval_nonneg(fam, X.scale(a))
        if not (r.value == 2 * a and r.certifying):
            bad.append(f"hat({a}X)={r.value}")
        for N in range(1, 21):
            t = tail_functional(fam, X, a, N)
            if t.value != a:
                bad.append(f"tail({a},{N})={t.value}")
    v = classify(fam, X)
    if v.cls != IN_M_NOT_MU:
        bad.append(f"class {v.cls}")
    att = attainment_check(fam, X, budget=16, seed=0).attainment
    n_max = geo.depth + 1
    if not (isinstance(att["gap"], Fraction) and att["gap"] >= Fraction(1, n_max)):
        bad.append(f"attainment gap {att['gap']}")
    dt = time.perf_counter() - t0
    if dt >= 1.0:
        bad.append(f"runtime {dt:.2f}s")
    ok = not bad
    report("1", ok, f"exact values, class {v.cls}, gap {att['gap']} >= 1/{n_max}, {dt:.2f}s" if ok else "; ".join(bad))
    assert ok, bad


def test_criterion_2_exponential_law_counterexample(report):
    t0 = time.perf_counter()
    parts = []
    avar_err = max(abs(avar(lam, EXPO) - (1.0 - math.log(lam))) for lam in (0.01, 0.1, 0.5, 1.0))
    parts.append(("avar", avar_err <= 1e-6, f"AVaR max err {avar_err:.2g}"))
    spec = KusuokaSup(SpikeBlockFamily(), KUSUOKA_NMAX)
    assert spec.n_max <= 10**4
    h = hat_eval_nonneg(spec, EXPO)
    hat_err = abs(float(h.value) - oracles.EX65_HAT)
    parts.append(("hat", hat_err <= 1e-4, f"hat err {hat_err:.2g}"))
    tail_err = {}
    for N in range(1, 11):
        want = 1.0 + oracles.E_RATIO * (math.exp(-N) - math.exp(-N) * math.log(math.exp(-N)))
        tail_err[N] = abs(float(tail_functional(spec, EXPO, 1, N).value) - want)
    off = [N for N, e in tail_err.items() if e > 1e-4]
    parts.append(("tail", not off, f"tail max err {max(tail_err.values()):.3g}" + (f" at N in {off}" if off else "")))
    v = classify(spec, EXPO)
    parts.append(("classify", v.cls == IN_M_NOT_MU, f"class {v.cls}"))
    dt = time.perf_counter() - t0
    parts.append(("runtime", dt < 30.0, f"{dt:.1f}s"))
    ok = all(p[1] for p in parts)
    report("2", ok, "; ".join(f"{'ok' if p[1] else 'FAILED'} {p[2]}" for p in parts))
    assert ok, [p[2] for p in parts if not p[1]]


def test_criterion_3_shortfall_entropic_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240603)
    loss = loss_from_json("exp")
    gaps = []
    for _ in range(50):
        n = int(rng.integers(1, 65))
        m = AtomicModel.from_probs(list(rng.dirichlet(np.ones(n))))
        X = AtomicRV(m, rng.normal(scale=2.0, size=n))
        gaps.append(abs(shortfall_eval(loss, X) - Entropic().evaluate(X)))
    dt = time.perf_counter() - t0
    ok = max(gaps) <= 1e-6 and dt < 5.0
    report("3", ok, f"max gap {max(gaps):.2g} over 50 variables, {dt:.2f}s")
    assert ok


def test_criterion_4_modular_counterexample(report):
    mod = Modular(young_from_json("exp"))
    X = EXPO.scale(2.0)  # E[e^{aX}] = inf for a >= 1/2
    rec = lebesgue_probe(mod, X, probes=("tail",), alphas=(1,)).lebesgue_probes[0]
    probe_ok = rec["status"] == DIVERGING and rec["pass"] is False and rec["target"] == 0 and all(v == "inf" for v in rec["values"])
    v = classify(mod, X)
    ok = probe_ok and v.cls == IN_L_NOT_M
    report("4", ok, f"tail probe {rec['status']} against target {rec['target']} (pass={rec['pass']}), class {v.cls}")
    assert ok


def test_criterion_5_property_suites(report):
    outs = suite_outcomes()
    total = sum(o.seconds for o in outs.values())
    short = {k: o.trials for k, o in outs.items() if o.trials < property_suites.TRIALS}
    viol = {k: len(o.violations) for k, o in outs.items() if o.violations}
    ok = not short and not viol and total < 60.0 and len(outs) == 12
    report("5", ok, f"{len(outs)} suites, min trials {min(o.trials for o in outs.values())}, violations {viol or 0}, {total:.1f}s total")
    assert ok, (short, viol, total)


def test_criterion_6_jst_agreement(report):
    suite = jst_suite()
    res = jst_crosscheck(None, suite)
    bad = [r.label for r in res["instances"] if not (r.consistency["consistent"] and r.consistency["certifying_consistent"])]
    ok = len(suite) == 12 and res["consistent"] and res["certifying_consistent"]
    report("6", ok, f"{len(suite)} instances, consistent={res['consistent']}, certifying consistent={res['certifying_consistent']}" + (f", inconsistent: {bad}" if bad else ""))
    assert ok, bad


def _duality_items():
    items = [(it.spec, it.X, it.label) for it in jst_suite()]
    geo = AtomicModel.geometric(64, RATIONAL)
    items.append((SpikeFamily(geo), AtomicRV.from_sequence(geo), "spike family, depth 64"))
    items.append((KusuokaSup(SpikeBlockFamily()), EXPO, "spike-block Kusuoka / exp(1)"))
    rng = np.random.default_rng(11)
    specs = (Entropic(), AVaR(0.3), Shortfall(loss_from_json("quadratic_linear")), Modular(young_from_json("exp")))
    for k in range(40):
        n = int(rng.integers(2, 12))
        m = AtomicModel.from_probs(list(rng.dirichlet(np.ones(n))))
        items.append((specs[k % len(specs)], AtomicRV(m, rng.normal(scale=2.0, size=n)), f"random bounded {k}"))
    return items


def test_criterion_7_weak_duality(report):
    worst, where, checked = 0.0, "", 0
    for spec, X, label in _duality_items():
        a = attainment_check(spec, X, budget=16, seed=0).attainment
        if a.get("best") is None or not math.isfinite(float(a["hat"])):
            continue
        checked += 1
        excess = float(a["best"]) - float(a["hat"]) - DUALITY_SLACK
        if excess > worst:
            worst, where = excess, label
    ok = worst <= 0.0 and checked > 0
    report("7", ok, f"{checked} instances, max excess of best over phi_hat + 1e-9: {worst:.2g}" + (f" at {where}" if where else ""))
    assert ok
