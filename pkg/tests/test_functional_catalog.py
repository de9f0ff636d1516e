from __future__ import annotations

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

import oracles
from strategies import float_law, pair_on, rngs
from lebex.distortion import DistortionMeasure
from lebex.functional_catalog import (
    AVaR,
    Distortion,
    Entropic,
    Modular,
    PositiveLinear,
    RobustShortfall,
    Shortfall,
    SpikeFamily,
    avar,
    conjugate,
    dual_level_sample,
    spec_from_json,
)
from lebex.losses import loss_from_json, young_from_json
from lebex.space_model import RATIONAL, AtomicModel, AtomicRV, DensityRV, Exponential, QuantileRV, clamp, expectation


def _const(model, c):
    return AtomicRV(model, [c] * model.n)


class TestEntropic:
    def test_zero_and_constants(self):
        m = AtomicModel.uniform(3)
        assert Entropic().evaluate(_const(m, 0.0)) == pytest.approx(0.0, abs=1e-15)
        for c in (-2.0, 0.5, 7.0):
            assert Entropic().evaluate(_const(m, c)) == pytest.approx(c, abs=1e-12)

    def test_two_atoms(self):
        X = AtomicRV(AtomicModel.uniform(2), [0.0, math.log(3.0)])
        assert Entropic().evaluate(X) == pytest.approx(oracles.LOG2, abs=1e-12)

    def test_conjugate_unit_density(self):
        m = AtomicModel.uniform(4)
        assert conjugate(Entropic(), DensityRV(m, np.ones(4))) == pytest.approx(0.0, abs=1e-15)

    def test_conjugate_is_relative_entropy(self):
        m = AtomicModel.uniform(2)
        got = conjugate(Entropic(), DensityRV(m, [2.0, 0.0]))
        assert got == pytest.approx(oracles.entropy([0.5, 0.5], [2.0, 0.0]), abs=1e-12)
        assert got == pytest.approx(oracles.LOG2, abs=1e-12)


class TestAVaR:
    def test_constant(self):
        m = AtomicModel.uniform(5)
        for lam in (0.1, 0.5, 1.0):
            assert AVaR(lam).evaluate(_const(m, 3.0)) == pytest.approx(3.0, abs=1e-12)

    def test_exponential_full_level(self):
        assert avar(1.0, QuantileRV(Exponential(1.0))) == pytest.approx(1.0, abs=1e-8)

    def test_exponential_clamped(self):
        X = clamp(QuantileRV(Exponential(1.0)), 0, 1e3)
        assert AVaR(0.5).evaluate(X) == pytest.approx(1.0 - math.log(0.5), abs=1e-4)

    def test_two_atoms_exact(self):
        X = AtomicRV(AtomicModel.uniform(2, RATIONAL), [1, 3])
        got = AVaR(Fraction(3, 4)).evaluate(X)
        want = oracles.avar_discrete([1, 3], [Fraction(1, 2)] * 2, Fraction(3, 4))
        assert got == want == Fraction(7, 3)

    def test_conjugate(self):
        m = AtomicModel.uniform(4)
        assert conjugate(AVaR(0.5), DensityRV(m, np.ones(4))) == 0.0
        assert conjugate(AVaR(0.5), DensityRV(m, [1.5, 1.5, 0.5, 0.5])) == 0.0
        assert math.isinf(conjugate(AVaR(0.5), DensityRV(m, [2.5, 0.5, 0.5, 0.5])))

    def test_level_out_of_range(self):
        with pytest.raises(ValueError):
            AVaR(0.0)
        with pytest.raises(ValueError):
            avar(1.5, QuantileRV(Exponential(1.0)))

    @settings(max_examples=300)
    @given(rngs)
    def test_matches_quantile_integral(self, rng):
        X = float_law(rng)
        lam = float(rng.uniform(0.05, 1.0))
        want = oracles.avar_discrete(list(X.float_values()), list(X.model.float_probs()), lam)
        assert AVaR(lam).evaluate(X) == pytest.approx(want, rel=1e-10, abs=1e-10)


class TestShortfall:
    def test_constant(self):
        m = AtomicModel.uniform(3)
        for name in ("exp", "quadratic_linear"):
            assert Shortfall(loss_from_json(name)).evaluate(_const(m, 2.0)) == pytest.approx(2.0, abs=1e-9)

    def test_exponential_loss_two_atoms(self):
        X = AtomicRV(AtomicModel.uniform(2), [0.0, math.log(3.0)])
        assert Shortfall(loss_from_json("exp")).evaluate(X) == pytest.approx(oracles.LOG2, abs=1e-8)

    def test_quadratic_linear_two_atoms(self):
        loss = loss_from_json("quadratic_linear")
        X = AtomicRV(AtomicModel.from_probs([0.3, 0.7]), [-1.0, 2.0])
        ql = lambda x: np.maximum(x, 0.0) ** 2 + x  # noqa: E731
        want = oracles.grid_root(lambda t: 0.3 * ql(-1.0 - t) + 0.7 * ql(2.0 - t), -1.0, 2.0)
        assert Shortfall(loss).evaluate(X) == pytest.approx(want, abs=1e-6)

    def test_unknown_loss(self):
        with pytest.raises(ValueError):
            loss_from_json("cubic")

    @settings(max_examples=300)
    @given(rngs)
    def test_exponential_loss_is_entropic(self, rng):
        X = float_law(rng, scale=2.0)
        assert Shortfall(loss_from_json("exp")).evaluate(X) == pytest.approx(Entropic().evaluate(X), abs=1e-8)


class TestRobustShortfall:
    def test_singleton_family_is_shortfall(self):
        loss = loss_from_json("quadratic_linear")
        m = AtomicModel.uniform(4)
        X = AtomicRV(m, [-1.0, 0.5, 2.0, 3.0])
        R = RobustShortfall(loss, [DensityRV(m, np.ones(4))])
        assert R.evaluate(X) == pytest.approx(Shortfall(loss).evaluate(X), abs=1e-9)

    def test_constant(self):
        m = AtomicModel.uniform(3)
        fam = [DensityRV(m, np.ones(3)), DensityRV(m, [2.0, 0.5, 0.5])]
        assert RobustShortfall(loss_from_json("exp"), fam).evaluate(_const(m, -1.5)) == pytest.approx(-1.5, abs=1e-9)

    def test_two_member_family(self):
        loss = loss_from_json("quadratic_linear")
        m = AtomicModel.uniform(3)
        fam = [[1.0, 1.0, 1.0], [0.3, 0.6, 2.1]]
        X = AtomicRV(m, [-2.0, 1.0, 4.0])
        R = RobustShortfall(loss, [DensityRV(m, P) for P in fam])
        want = oracles.robust_shortfall_grid(lambda x: loss.l(x), fam, X.float_values(), m.float_probs())
        assert R.evaluate(X) == pytest.approx(want, abs=1e-6)

    def test_family_dominates_members(self):
        loss = loss_from_json("exp")
        m = AtomicModel.uniform(3)
        fam = [DensityRV(m, np.ones(3)), DensityRV(m, [0.3, 0.6, 2.1])]
        X = AtomicRV(m, [-2.0, 1.0, 4.0])
        r = RobustShortfall(loss, fam).evaluate(X)
        for P in fam:
            assert r >= RobustShortfall(loss, [P]).evaluate(X) - 1e-9

    def test_rejects_empty_and_subprobability(self):
        m = AtomicModel.uniform(2)
        with pytest.raises(ValueError):
            RobustShortfall(loss_from_json("exp"), [])
        with pytest.raises(ValueError):
            RobustShortfall(loss_from_json("exp"), [DensityRV(m, [0.5, 0.5], probability=False)])


class TestSpikeFamily:
    @pytest.mark.parametrize("n", [1, 2, 5, 16])
    def test_clamped_identity(self, n):
        g = AtomicModel.geometric(24, RATIONAL)
        X = AtomicRV.from_sequence(g).clamp(0, n)
        assert SpikeFamily(g).evaluate(X) == 2 - Fraction(1, n)

    def test_member_expectation(self):
        g = AtomicModel.geometric(12, RATIONAL)
        X = AtomicRV.from_sequence(g)
        fam = SpikeFamily(g)
        for n in (1, 3, 12, 40):
            assert fam.spike_expectation(X, n) == 2 - Fraction(1, n)

    def test_closed_form_not_attained(self):
        g = AtomicModel.geometric(12, RATIONAL)
        value, attained, argmax = SpikeFamily(g).closed_form(AtomicRV.from_sequence(g))
        assert value == 2 and not attained and argmax is None

    def test_needs_countable_model(self):
        with pytest.raises(ValueError):
            SpikeFamily(AtomicModel.uniform(4, RATIONAL))

    def test_dual_level_sample_in_hull(self):
        g = AtomicModel.geometric(10, RATIONAL)
        fam = SpikeFamily(g)
        Zs = dual_level_sample(fam, 0.0, 5, seed=3)
        assert len(Zs) == 5
        for Z in Zs:
            q = [p * z for p, z in zip(g.probs, Z.values)]
            assert sum(q) == 1
            w = oracles.spike_hull_weights(q)
            assert all(x >= 0 for x in w) and sum(w) == 1
            assert conjugate(fam, Z) == 0.0

    def test_conjugate_outside_hull(self):
        g = AtomicModel.geometric(6, RATIONAL)
        q = [Fraction(0)] * g.n
        q[0], q[2] = Fraction(1, 2), Fraction(1, 2)  # 3 * 1/2 > 1
        Z = DensityRV.from_measure(g, q)
        assert math.isinf(conjugate(SpikeFamily(g), Z))


class TestPositiveLinear:
    def test_conditional_expectation(self):
        m = AtomicModel.uniform(4, RATIONAL)
        spec = PositiveLinear.conditional(m, [1, 2])
        X = AtomicRV(m, [10, 1, 3, -7])
        assert spec.evaluate(X) == 2

    def test_not_cash_invariant_off_event(self):
        m = AtomicModel.uniform(4, RATIONAL)
        spec = PositiveLinear.conditional(m, [0])
        assert spec.evaluate(_const(m, 5)) == 5


class TestModular:
    def test_zero(self):
        m = AtomicModel.uniform(3)
        assert Modular(young_from_json("exp")).evaluate(_const(m, 0.0)) == pytest.approx(0.0, abs=1e-15)

    def test_monotone_in_absolute_value(self):
        m = AtomicModel.uniform(2)
        spec = Modular(young_from_json({"name": "power", "p": 2.0}))
        assert spec.evaluate(AtomicRV(m, [1.0, 2.0])) <= spec.evaluate(AtomicRV(m, [1.0, 3.0]))


class TestDualLevelSample:
    def test_contains_unit_density(self):
        m = AtomicModel.uniform(4)
        Zs = dual_level_sample(Entropic(), 0.5, 6, seed=0, model=m)
        assert np.allclose(Zs[0].float_values(), 1.0)
        assert len(Zs) == 6

    def test_avar_level_set(self):
        m = AtomicModel.uniform(4)
        Zs = dual_level_sample(AVaR(0.5), 0.0, 8, seed=1, model=m)
        assert len(Zs) == 8
        for Z in Zs:
            z = Z.float_values()
            assert np.all(z <= 2.0 + 1e-12) and np.all(z >= -1e-15)
            assert float(m.float_probs() @ z) == pytest.approx(1.0, abs=1e-9)

    def test_entropic_level_verified(self):
        m = AtomicModel.uniform(5)
        for Z in dual_level_sample(Entropic(), 0.3, 10, seed=2, model=m):
            assert conjugate(Entropic(), Z) <= 0.3 + 1e-9

    def test_deterministic(self):
        m = AtomicModel.uniform(5)
        a = dual_level_sample(Entropic(), 0.3, 6, seed=9, model=m)
        b = dual_level_sample(Entropic(), 0.3, 6, seed=9, model=m)
        assert all(np.array_equal(x.float_values(), y.float_values()) for x, y in zip(a, b))

    def test_negative_level(self):
        with pytest.raises(ValueError):
            dual_level_sample(Entropic(), -1.0, 3, seed=0, model=AtomicModel.uniform(2))

    def test_shortfall_sample_is_verified(self):
        m = AtomicModel.uniform(3)
        spec = Shortfall(loss_from_json("quadratic_linear"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            Zs = dual_level_sample(spec, 0.2, 3, seed=0, model=m)
        for Z in Zs:
            assert spec.conjugate_info(Z).value <= 0.2 + 1e-9


class TestFatou:
    """``X_n = X - u / 2^n`` increases to ``X``; cash-invariant monotone specs close the gap at rate ``max u / 2^n``."""

    SPECS = (Entropic(), AVaR(0.3), Distortion(DistortionMeasure.point(0.4)), Shortfall(loss_from_json("exp")))

    @settings(max_examples=250)
    @given(rngs)
    def test_increasing_limit(self, rng):
        X = float_law(rng, max_atoms=8, scale=2.0)
        u = rng.exponential(size=X.model.n)
        spec = self.SPECS[int(rng.integers(len(self.SPECS)))]
        target = spec.evaluate(X)
        prev = -math.inf
        for n in range(0, 12, 2):
            v = spec.evaluate(X.with_values(X.float_values() - u / 2**n))
            assert v >= prev - 1e-9
            assert target - v <= u.max() / 2**n + 1e-9
            prev = v


class TestSubadditivePairs:
    @settings(max_examples=250)
    @given(rngs)
    def test_avar_subadditive(self, rng):
        m = AtomicModel.from_probs(list(np.full(6, 1 / 6)))
        X, Y = pair_on(rng, m)
        S = X.with_values(X.float_values() + Y.float_values())
        spec = AVaR(float(rng.uniform(0.05, 1)))
        assert spec.evaluate(S) <= spec.evaluate(X) + spec.evaluate(Y) + 1e-9


class TestDescriptors:
    def test_roundtrip(self):
        m = AtomicModel.uniform(3)
        for spec in (Entropic(), AVaR(0.25), Shortfall(loss_from_json("quadratic_linear")), Modular(young_from_json("exp"))):
            again = spec_from_json(spec.to_json(), m)
            X = AtomicRV(m, [-1.0, 0.5, 2.0])
            assert again.evaluate(X) == pytest.approx(spec.evaluate(X), abs=1e-12)

    def test_expectation_pairing(self):
        m = AtomicModel.uniform(2, RATIONAL)
        Z = DensityRV(m, [Fraction(3, 2), Fraction(1, 2)])
        assert expectation(AtomicRV(m, [2, 4]), Z) == Fraction(5, 2)
