from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from lebex.extension_engine import CONVERGED, DIVERGING, hat_eval_nonneg
from lebex.functional_catalog import AVaR, Entropic, KusuokaSup, Modular, RobustShortfall, Shortfall, SpikeBlockFamily, SpikeFamily
from lebex.losses import loss_from_json, young_from_json
from lebex.membership_lab import (
    CERTIFYING,
    CONDITIONS,
    IN_L_NOT_M,
    IN_M_NOT_MU,
    IN_MU,
    NOT_IN_L,
    SuiteItem,
    attainment_check,
    classify,
    jst_crosscheck,
    jst_suite,
    lebesgue_probe,
    truncation_interchange_check,
    ui_diagnostic,
)
from lebex.space_model import RATIONAL, AtomicModel, AtomicRV, DensityRV, Exponential, Pareto, QuantileRV, clamp

GEO = AtomicModel.geometric(24, RATIONAL)
SEQ = AtomicRV.from_sequence(GEO)
SPIKE = SpikeFamily(GEO)
EXPO = QuantileRV(Exponential(1.0))
MOD = Modular(young_from_json("exp"))


class TestClassify:
    def test_bounded(self):
        X = AtomicRV(AtomicModel.uniform(3), [-1.0, 0.0, 4.0])
        v = classify(Entropic(), X)
        assert v.cls == IN_MU and v.certifying

    def test_spike_sequence(self):
        v = classify(SPIKE, SEQ)
        assert v.cls == IN_M_NOT_MU and v.certifying

    def test_modular_supercritical(self):
        # E[e^{a X}] is finite iff a < 1, so 2 exp(1) is finite only for alpha < 1/2
        assert math.isfinite(oracles.exp_mgf(0.25 * 2.0)) and math.isinf(oracles.exp_mgf(1.0 * 2.0))
        v = classify(MOD, EXPO.scale(2.0))
        assert v.cls == IN_L_NOT_M and not v.certifying
        finite = [a for a, r in v.finiteness if r.status == CONVERGED]
        diverging = [a for a, r in v.finiteness if r.status == DIVERGING]
        assert max(finite) < 0.5 <= min(diverging)

    def test_ex65(self):
        v = classify(KusuokaSup(SpikeBlockFamily()), EXPO)
        assert v.cls == IN_M_NOT_MU

    def test_avar_exponential(self):
        assert classify(AVaR(0.5), EXPO).cls == IN_MU

    def test_not_in_l(self):
        # Pareto(1) has no mean, so every AVaR diverges
        v = classify(AVaR(0.5), QuantileRV(Pareto(1.0)))
        assert v.cls == NOT_IN_L

    def test_in_mu_evidence(self):
        v = classify(AVaR(0.3), QuantileRV(Pareto(3.0)))
        assert v.cls == IN_MU
        assert set(v.profile.verdicts.values()) == {"tends-to-zero"}

    def test_json(self):
        d = classify(SPIKE, SEQ).to_json()
        assert d["class"] == IN_M_NOT_MU and d["certifying"] is True
        assert {"alpha", "value", "status"} <= set(d["finiteness"][0])


class TestUIDiagnostic:
    def test_bounded(self):
        X = AtomicRV(AtomicModel.uniform(4), [1.0, 2.0, 3.0, 4.0])
        rep = ui_diagnostic(Entropic(), X, c=1.0, budget=16)
        assert rep.ui["uniformly_integrable"] is True

    def test_spike_floor(self):
        rep = ui_diagnostic(SPIKE, SEQ, c=0.0, budget=64)
        assert rep.ui["uniformly_integrable"] is False
        # E_{Q_n}[X 1{X > N}] = 1 for n > N, up to the residual atom of the truncation
        assert rep.ui["floor"] >= 1.0 - 2.0**-20
        assert all(v >= 1.0 - 2.0**-20 for _, v in rep.ui_curve)

    def test_avar_exponential(self):
        X = EXPO
        rep = ui_diagnostic(AVaR(0.5), X, c=0.0, budget=32)
        assert rep.ui["uniformly_integrable"] is True
        # cap bound: sup_Z E[|X| Z 1_A] <= (1/lambda) E[|X| 1_A]
        for pa, v in rep.ui_curve:
            N = -math.log(pa) if pa > 0 else math.inf
            assert v <= 2.0 * oracles.exp_tail_mean(N) + 1e-6

    def test_curve_probabilities_shrink(self):
        rep = ui_diagnostic(AVaR(0.5), EXPO, c=0.0, budget=8)
        ps = [p for p, _ in rep.ui_curve]
        assert ps == sorted(ps, reverse=True) and ps[-1] < 1e-6


class TestAttainment:
    def test_entropic_gibbs(self):
        X = AtomicRV(AtomicModel.uniform(5), [0.0, 1.0, -2.0, 3.0, 0.5])
        a = attainment_check(Entropic(), X, budget=8).attainment
        assert a["attained"] and abs(a["gap"]) <= 1e-8
        assert a["maximizer"] == "gibbs"

    def test_avar_two_atoms(self):
        X = AtomicRV(AtomicModel.uniform(2, RATIONAL), [1, 3])
        a = attainment_check(AVaR(Fraction(3, 4)), X, budget=0).attainment
        assert a["best"] == a["hat"] == Fraction(7, 3)
        assert a["gap"] == 0 and a["grade"] == CERTIFYING

    def test_spike_not_attained(self):
        a = attainment_check(SPIKE, SEQ, budget=32).attainment
        assert a["hat"] == 2
        assert a["closed_form_attained"] is False
        assert a["weak_duality"]
        # every sampled mixture sum w_n Q_n pays at least min_n 1/n on the top member it uses
        assert a["gap"] >= Fraction(1, GEO.depth + 1)

    def test_weak_duality_on_suite(self):
        for it in jst_suite():
            a = attainment_check(it.spec, it.X, budget=8).attainment
            if a["best"] is not None and math.isfinite(float(a["hat"])):
                assert float(a["best"]) <= float(a["hat"]) + 1e-9, it.label


class TestLebesgueProbe:
    def test_bounded(self):
        X = AtomicRV(AtomicModel.uniform(4), [-1.0, 2.0, 0.5, 3.0])
        for spec in (Entropic(), AVaR(0.25), Shortfall(loss_from_json("quadratic_linear"))):
            probes = lebesgue_probe(spec, X).lebesgue_probes
            assert probes and all(p["pass"] for p in probes)

    def test_modular_tail_probe_fails(self):
        rec = lebesgue_probe(MOD, EXPO.scale(2.0), probes=("tail",)).lebesgue_probes[0]
        assert rec["status"] == DIVERGING and rec["pass"] is False
        assert rec["target"] == 0
        assert all(v == "inf" for v in rec["values"])

    def test_avar_truncation_passes(self):
        rec = lebesgue_probe(AVaR(0.5), EXPO, probes=("truncation",)).lebesgue_probes[0]
        assert rec["pass"] is True
        assert float(rec["target"]) == pytest.approx(1.0 + math.log(2.0), abs=1e-8)

    def test_unknown_probe(self):
        with pytest.raises(ValueError):
            lebesgue_probe(Entropic(), EXPO, probes=("wiggle",))


class TestJST:
    def test_bounded_suite_all_pass(self):
        rng = np.random.default_rng(0)
        m = AtomicModel.uniform(6)
        suite = [AtomicRV(m, rng.normal(size=6)) for _ in range(3)]
        r = jst_crosscheck(AVaR(0.5), suite, budget=8)
        for rep in r["instances"]:
            assert all(rep.conditions[c]["pass"] is True for c in CONDITIONS)
        assert r["consistent"]

    def test_spike_fails_consistently(self):
        r = jst_crosscheck(None, [SuiteItem(SPIKE, SEQ, "spike")], budget=16)
        conds = r["instances"][0].conditions
        assert all(conds[c]["pass"] is False for c in CONDITIONS)

    def test_avar_heavy_tails_pass(self):
        suite = [SuiteItem(AVaR(0.5), EXPO), SuiteItem(AVaR(0.25), QuantileRV(Pareto(3.0)))]
        r = jst_crosscheck(None, suite, budget=8)
        for rep in r["instances"]:
            assert all(rep.conditions[c]["pass"] is True for c in CONDITIONS)

    def test_agreement_matrix_is_symmetric(self):
        r = jst_crosscheck(None, jst_suite()[:6], budget=8)
        m = r["matrix"]
        for a in CONDITIONS:
            for b in CONDITIONS:
                assert m[f"{a}|{b}"] == m[f"{b}|{a}"]
            assert m[f"{a}|{a}"]["agree"] == m[f"{a}|{a}"]["both_definite"]

    def test_needs_spec_for_bare_variables(self):
        with pytest.raises(ValueError):
            jst_crosscheck(None, [EXPO])


class TestInterchange:
    def test_nonnegative(self):
        assert truncation_interchange_check(AVaR(0.5), EXPO)

    def test_in_mu_atomic(self):
        X = AtomicRV(AtomicModel.uniform(4), [-3.0, 1.0, 0.5, 2.0])
        assert classify(Entropic(), X).cls == IN_MU
        assert truncation_interchange_check(Entropic(), X)

    def test_signed_modular_counterexample(self):
        # 2 exp(1) - 1 takes both signs and E[Phi(X^+)] = inf, so no finite limit exists to interchange
        X = EXPO.scale(2.0).shift(-1.0)
        assert not X.nonnegative
        rep = truncation_interchange_check(MOD, X)
        assert not rep
        assert "not finite" in rep.discrepancy
        assert rep.single.status == DIVERGING


class TestRobustHeart:
    def test_sandwich(self):
        # the robust value sits between the single-member values and the worst-case member bound
        loss = loss_from_json("quadratic_linear")
        m = AtomicModel.uniform(4)
        fam = [DensityRV(m, np.ones(4)), DensityRV(m, [0.4, 0.4, 1.0, 2.2])]
        rng = np.random.default_rng(3)
        for _ in range(50):
            X = AtomicRV(m, rng.normal(scale=2, size=4))
            r = RobustShortfall(loss, fam).evaluate(X)
            singles = [RobustShortfall(loss, [P]).evaluate(X) for P in fam]
            assert max(singles) - 1e-9 <= r <= float(X.float_values().max()) + 1e-9

    def test_bounded_hat(self):
        loss = loss_from_json("exp")
        m = AtomicModel.uniform(3)
        spec = RobustShortfall(loss, [DensityRV(m, np.ones(3))])
        X = AtomicRV(m, [0.0, 1.0, 2.0])
        assert hat_eval_nonneg(spec, X).value == pytest.approx(Entropic().evaluate(X), abs=1e-8)
        assert classify(spec, X).cls == IN_MU


def test_bounded_verdict_json_roundtrip():
    v = classify(AVaR(0.5), clamp(EXPO, 0, 3))
    assert v.to_json()["class"] == IN_MU
